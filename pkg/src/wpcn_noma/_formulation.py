"""Unit-scaled problem data shared by the max-sum and max-min solvers.

Energies are expressed as ``eps = E / e_ref`` with ``e_ref = max(gamma)``, and received
powers are divided by the noise power, so ``q = g * e_ref / noise`` is the SNR per unit
``eps`` and every quantity the solvers touch is of order one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import NetworkInstance
from .throughput import Allocation, Scheme, decoding_orders

LN2 = np.log(2.0)


@dataclass(frozen=True, eq=False)
class Scaled:
    inst: NetworkInstance
    e_ref: float
    q: np.ndarray  # (K, T)
    beta: np.ndarray  # (K, T)
    s_th: np.ndarray  # (K,)

    @classmethod
    def of(cls, inst: NetworkInstance) -> "Scaled":
        e_ref = float(np.max(inst.gamma))
        return cls(inst, e_ref, inst.g * e_ref / inst.noise_power, inst.gamma / e_ref,
                   np.asarray(inst.s_th, dtype=float))

    @property
    def k(self):
        return self.inst.k

    @property
    def t(self):
        return self.inst.t

    def alloc(self, tau, eps) -> Allocation:
        return Allocation(np.asarray(tau, dtype=float), np.asarray(eps, dtype=float) * self.e_ref)

    def unscale(self, alloc: Allocation):
        return np.asarray(alloc.tau0, dtype=float), np.asarray(alloc.e, dtype=float) / self.e_ref


def interference_sets(k: int, t: int, scheme: Scheme, order=None) -> np.ndarray:
    """Boolean (K, T, K): entry [i, s, j] is True when user j interferes with i in slot s."""
    mask = np.zeros((k, t, k), dtype=bool)
    if Scheme(scheme) is Scheme.LCD:
        mask[:] = ~np.eye(k, dtype=bool)[:, None, :]
        return mask
    for s in range(t):
        row = order[s]
        for pos, i in enumerate(row):
            mask[i, s, row[pos + 1:]] = True
    return mask


def orders_for(inst: NetworkInstance, scheme: Scheme, order=None):
    if Scheme(scheme) is Scheme.LCD:
        return None
    if order is None:
        return decoding_orders(inst)
    order = np.asarray(order)
    if order.ndim == 1:
        order = np.broadcast_to(order, (inst.t, inst.k))
    return np.ascontiguousarray(order, dtype=np.int64)


def causality_rows(sc: Scaled):
    """Rows over x = [tau (T), eps (K*T)]: cum eps - cum beta*tau <= 0, row-normalized."""
    k, t = sc.k, sc.t
    a = np.zeros((k * t, t + k * t))
    for i in range(k):
        for s in range(t):
            r = i * t + s
            scale = float(np.sum(sc.beta[i, : s + 1]))
            a[r, t + i * t: t + i * t + s + 1] = 1.0 / scale
            a[r, : s + 1] = -sc.beta[i, : s + 1] / scale
    return a, np.zeros(k * t)


def threshold_rows(sc: Scaled, mask: np.ndarray):
    """Rows over x = [tau, eps]: -q_i eps_i / S_i + sum_interf q_j eps_j - tau <= -1, S_i > 0 only."""
    k, t = sc.k, sc.t
    rows, rhs = [], []
    for i in range(k):
        if sc.s_th[i] <= 0:
            continue
        for s in range(t):
            row = np.zeros(t + k * t)
            row[s] = -1.0
            for j in np.flatnonzero(mask[i, s]):
                row[t + j * t + s] = sc.q[j, s]
            row[t + i * t + s] = -sc.q[i, s] / sc.s_th[i]
            rows.append(row)
            rhs.append(-1.0)
    if not rows:
        return np.zeros((0, t + k * t)), np.zeros(0)
    return np.array(rows), np.array(rhs)


def box_rows(sc: Scaled, margin: float):
    k, t = sc.k, sc.t
    n = t + k * t
    eye = np.eye(n)
    a = np.vstack([-eye, eye[:t]])
    b = np.concatenate([-np.full(t, margin), np.zeros(k * t), np.full(t, 1.0 - margin)])
    return a, b


def joint_linear(sc: Scaled, mask, margin):
    parts = [causality_rows(sc), threshold_rows(sc, mask), box_rows(sc, margin)]
    return np.vstack([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def restrict_to_eps(a, b, tau, t):
    """Fix tau in rows over [tau, eps]; drop rows left with no eps coefficient."""
    b2 = b - a[:, :t] @ tau
    a2 = a[:, t:]
    keep = np.any(a2 != 0, axis=1)
    return a2[keep], b2[keep]


def restrict_to_tau(a, b, eps_flat, t):
    b2 = b - a[:, t:] @ eps_flat
    a2 = a[:, :t]
    keep = np.any(a2 != 0, axis=1)
    return a2[keep], b2[keep]


def max_margin_point(sc: Scaled, mask, margin, opts):
    """Deepest point of the joint linear feasible set, or None when it has no interior."""
    from .solver_core import ConvexProblem, solve_convex

    a, b = joint_linear(sc, mask, margin)
    norms = np.linalg.norm(a, axis=1)
    n = a.shape[1]
    a_aux = np.hstack([a, norms[:, None]])
    cap = np.zeros((1, n + 1))
    cap[0, n] = 1.0
    a_aux = np.vstack([a_aux, cap])
    b_aux = np.concatenate([b, [1.0]])

    def obj(z):
        g = np.zeros(n + 1)
        g[n] = -1.0
        return -z[n], g, np.zeros((n + 1, n + 1))

    t = sc.t
    z0 = np.zeros(n + 1)
    z0[:t] = 0.5
    z0[n] = -1.0 - float(np.max((a @ z0[:n] - b) / norms))
    res = solve_convex(ConvexProblem(n + 1, obj, a_aux, b_aux), z0, opts, gap_tol=1e-9)
    if res.status.value == "Infeasible" or res.x[n] <= 1e-9:
        return None
    return res.x[:t], res.x[t:n].reshape(sc.k, t)


# ------------------------------------------------------------- rate pieces (nats)

def slot_powers(sc: Scaled, eps):
    return sc.q * eps


def rate_terms(sc: Scaled, tau, eps, mask):
    """Per (i, t): (u, A, B) with rate = u * (ln(u + A) - ln(u + B)) in nats."""
    p = sc.q * eps
    interf = np.einsum("isj,js->is", mask, p)
    u = 1.0 - np.asarray(tau, dtype=float)
    return u, interf + p, interf


def rates_bits(sc: Scaled, tau, eps, mask):
    u, a, b = rate_terms(sc, tau, eps, mask)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = u[None, :] * (np.log(u[None, :] + a) - np.log(u[None, :] + b))
    return r / LN2
