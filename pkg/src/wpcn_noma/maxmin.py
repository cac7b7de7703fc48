"""Max-min throughput under LCD and SICD by feasible-iterate successive convex approximation."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._formulation import (LN2, Scaled, interference_sets, joint_linear, orders_for, rates_bits,
                           restrict_to_tau)
from .model import NetworkInstance
from .solver_core import DEFAULT_OPTIONS, ConvexProblem, SolverOptions, solve_convex
from .throughput import Scheme, Solution, Status, make_solution

log = logging.getLogger(__name__)

ZETA0 = 0.9
DELTA = 1e-3
SCA_ROUNDS = 300
OUTER_ROUNDS = 100
STATIONARY = 1e-6


@dataclass
class ScaIterate:
    y: np.ndarray  # [tau (T), eps (K*T), R] in scaled units, R in bits
    step: float = ZETA0
    n: int = 0
    min_user: tuple = (0, 0)
    history: list = field(default_factory=list)

    def advance(self, x_hat):
        self.y = self.y + self.step * (x_hat - self.y)
        self.n += 1
        self.step = self.step * (1.0 - DELTA * self.step)


def prox_surrogate(fn, y):
    """x -> grad fn(y).(x - y) + 0.5 ||x - y||^2, returned with its gradient and Hessian."""
    y = np.asarray(y, dtype=float)
    _, g = fn(y)
    g = np.asarray(g, dtype=float)

    def surrogate(x):
        d = np.asarray(x, dtype=float) - y
        return float(g @ d + 0.5 * d @ d), g + d, np.eye(y.size)

    return surrogate


def min_user(rates) -> tuple:
    """(user, slot) with the lowest rate; ties go to the lowest user, then the lowest slot."""
    r = np.asarray(rates)
    flat = int(np.argmin(r))  # row-major: lowest user index first, then slot
    return divmod(flat, r.shape[1])


# ------------------------------------------------------------ surrogate pieces

def _perspective(u, a):
    """h(u, a) = u ln(1 + a/u) with gradient and Hessian blocks (in u, a)."""
    ratio = np.log1p(a / u)
    val = u * ratio
    du = ratio - a / (u + a)
    da = u / (u + a)
    c = 1.0 / (u + a) ** 2
    return val, du, da, -c * a * a / u, c * a, -c * u


class _Layout:
    """Index bookkeeping for x = [tau (T), eps (K*T), R]."""

    def __init__(self, sc: Scaled, mask):
        self.k, self.t = sc.k, sc.t
        self.n = self.t + self.k * self.t + 1
        self.r = self.n - 1
        k, t = self.k, self.t
        # own[i, s] and interferers as coefficient rows over eps
        self.a_rows = np.zeros((k, t, self.n))
        self.b_rows = np.zeros((k, t, self.n))
        for i in range(k):
            for s in range(t):
                for j in np.flatnonzero(mask[i, s]):
                    self.b_rows[i, s, t + j * t + s] = sc.q[j, s]
                self.a_rows[i, s] = self.b_rows[i, s]
                self.a_rows[i, s, t + i * t + s] += sc.q[i, s]

    def split(self, x):
        return x[: self.t], x[self.t: self.r].reshape(self.k, self.t), x[self.r]


def _rate_constraints(lay: _Layout, y):
    """Convex g(x) <= 0 encoding R*ln2 <= u ln(1+A/u) - tangent of u ln(1+B/u) at y."""
    k, t, n = lay.k, lay.t, lay.n
    u0 = 1.0 - y[:t]
    b0 = lay.b_rows @ y  # (K, T)
    phi0, phi_u, phi_b, *_ = _perspective(np.broadcast_to(u0, (k, t)), np.maximum(b0, 0.0))
    phi0 = np.where(b0 > 0, phi0, 0.0)
    phi_u = np.where(b0 > 0, phi_u, 0.0)
    phi_b = np.where(b0 > 0, phi_b, 1.0)
    a_flat = lay.a_rows.reshape(k * t, n)
    b_flat = lay.b_rows.reshape(k * t, n)
    slot = np.tile(np.arange(t), k)

    def cons(x):
        u = 1.0 - x[:t]
        a = a_flat @ x
        b = b_flat @ x
        us = u[slot]
        if np.any(us <= 0) or np.any(a < 0):
            return np.full(k * t, math.inf), np.zeros((k * t, n))
        h, hu, ha, *_ = _perspective(us, np.maximum(a, 1e-300))
        h = np.where(a > 0, h, 0.0)
        tangent = (phi0.ravel() + phi_u.ravel() * (us - u0[slot])
                   + phi_b.ravel() * (b - b0.ravel()))
        vals = x[lay.r] * LN2 - h + tangent
        jac = np.zeros((k * t, n))
        jac[:, lay.r] = LN2
        jac -= ha[:, None] * a_flat
        jac += phi_b.ravel()[:, None] * b_flat
        d_u = -hu + phi_u.ravel()
        jac[np.arange(k * t), slot] -= d_u  # du/dtau = -1
        return vals, jac

    def cons_hess(x, w):
        u = 1.0 - x[:t]
        a = a_flat @ x
        us = u[slot]
        _, _, _, huu, hua, haa = _perspective(us, np.maximum(a, 1e-300))
        # g = -h + affine, so hess g = -hess h expressed in (tau, eps)
        hess = np.zeros((n, n))
        for m in range(k * t):
            if w[m] == 0.0 or a[m] <= 0:
                continue
            col = np.zeros(n)
            col[slot[m]] = -1.0  # d u
            row_a = a_flat[m]
            hess -= w[m] * (huu[m] * np.outer(col, col)
                            + hua[m] * (np.outer(col, row_a) + np.outer(row_a, col))
                            + haa[m] * np.outer(row_a, row_a))
        return hess

    return cons, cons_hess


def _subproblem(sc: Scaled, mask, lay: _Layout, y, free_tau, margin):
    """Surrogate program at y; with tau pinned the variables shrink to z = [eps, R]."""
    cons, cons_hess = _rate_constraints(lay, y)
    a, b = joint_linear(sc, mask, margin)
    a = np.hstack([a, np.zeros((a.shape[0], 1))])
    grad = np.zeros(lay.n)
    grad[lay.r] = -1.0
    objective = prox_surrogate(lambda x: (-x[lay.r], grad), y)
    if free_tau:
        return ConvexProblem(lay.n, objective, a, b, cons, cons_hess), (lambda z: z), y.copy()
    t = sc.t
    base = np.zeros(lay.n)
    base[:t] = y[:t]
    embed = np.eye(lay.n)[:, t:]  # x = base + embed @ z
    b2 = b - a @ base
    a2 = a @ embed
    keep = np.any(a2 != 0, axis=1)
    a2, b2 = a2[keep], b2[keep]
    lift = lambda z: base + embed @ z

    def obj(z):
        f, g, h = objective(lift(z))
        return f, embed.T @ g, embed.T @ h @ embed

    def c(z):
        v, j = cons(lift(z))
        return v, j @ embed

    def ch(z, w):
        return embed.T @ cons_hess(lift(z), w) @ embed

    return ConvexProblem(lay.n - t, obj, a2, b2, c, ch), lift, y[t:].copy()


def _sca(sc: Scaled, mask, tau, eps, opts, free_tau: bool, iterates=None):
    """Feasible-iterate SCA from a feasible (tau, eps). Returns (tau, eps, min-rate history, status).

    ``iterates`` collects every accepted (tau, eps) in physical units.
    """
    lay = _Layout(sc, mask)
    rates = rates_bits(sc, tau, eps, mask)
    it = ScaIterate(np.concatenate([tau, eps.ravel(), [float(rates.min())]]))
    it.history.append(float(rates.min()))
    status = Status.ITERATION_LIMIT
    for _ in range(SCA_ROUNDS):
        rates = rates_bits(sc, *lay.split(it.y)[:2], mask)
        it.min_user = min_user(rates)
        it.y[lay.r] = float(rates.min())
        y = it.y.copy()
        prob, lift, start = _subproblem(sc, mask, lay, y, free_tau, opts.interior_margin)
        start[-1] -= 1e-3 * max(1.0, abs(y[lay.r]))
        res = solve_convex(prob, start, opts, gap_tol=1e-10)
        if res.status is Status.INFEASIBLE:
            break
        x_hat = lift(res.x)
        x_hat[sc.t: lay.r] = np.maximum(x_hat[sc.t: lay.r], 0.0)
        move = float(np.linalg.norm(x_hat - y))
        candidate = y + it.step * (x_hat - y)
        new_min = float(rates_bits(sc, *lay.split(candidate)[:2], mask).min())
        if new_min < it.history[-1] - 1e-12:
            # the surrogate under-estimates every rate, so this only flags round-off
            status = Status.APPROXIMATE
            break
        it.advance(x_hat)
        it.history.append(new_min)
        if iterates is not None:
            t_i, e_i, _ = lay.split(it.y)
            iterates.append(sc.alloc(t_i.copy(), np.maximum(e_i, 0.0)))
        if move <= STATIONARY * max(1.0, float(np.linalg.norm(y))):
            status = Status.APPROXIMATE
            break
    tau, eps, _ = lay.split(it.y)
    return tau.copy(), np.maximum(eps, 0.0), it.history, status


# ------------------------------------------------------------------ sub-problems

def _mask(inst, scheme, order=None):
    order = orders_for(inst, scheme, order)
    return interference_sets(inst.k, inst.t, scheme, order), order


def _feasible(sc, mask, tau, eps, margin=0.0):
    a, b = joint_linear(sc, mask, margin)
    x = np.concatenate([tau, eps.ravel()])
    return bool(np.all(a @ x <= b + 1e-12))


def solve_maxmin_given_tau(inst: NetworkInstance, tau0, scheme=Scheme.LCD, start=None,
                           opts: SolverOptions = DEFAULT_OPTIONS, order=None, history=None,
                           iterates=None):
    """Energy allocation maximizing the minimum rate at fixed tau0.

    ``start`` is a feasible energy matrix (J). Returns (E, min_rate, status).
    ``history`` receives the min rate per SCA step, ``iterates`` the Allocation per step.
    """
    sc = Scaled.of(inst)
    mask, order = _mask(inst, scheme, order)
    tau = np.asarray(tau0, dtype=float).reshape(-1)
    if start is None:
        from .maxsum import _feasible_eps_for_tau
        if Scheme(scheme) is Scheme.LCD:
            eps = _feasible_eps_for_tau(sc, tau, opts)
        else:
            eps = _feasible_eps_sicd(sc, mask, tau, opts)
        if eps is None:
            return None, None, Status.INFEASIBLE
    else:
        eps = np.asarray(start, dtype=float) / sc.e_ref
    if not _feasible(sc, mask, tau, eps):
        return None, None, Status.INFEASIBLE
    _, eps, hist, status = _sca(sc, mask, tau, eps, opts, free_tau=False, iterates=iterates)
    if history is not None:
        history.extend(hist)
    return eps * sc.e_ref, hist[-1], status


def _feasible_eps_sicd(sc, mask, tau, opts):
    from .solver_core import _phase_one, _slacks, _strictly_feasible
    from ._formulation import restrict_to_eps

    a, b = joint_linear(sc, mask, opts.interior_margin)
    a2, b2 = restrict_to_eps(a, b, tau, sc.t)
    eps0 = 0.45 * sc.beta * tau[None, :]
    if np.all(a2 @ eps0.ravel() < b2):
        return eps0
    prob = ConvexProblem(a2.shape[1], lambda z: (0.0, np.zeros(z.size), np.zeros((z.size, z.size))),
                         a2, b2)
    z, _ = _phase_one(prob, eps0.ravel(), opts)
    lin, g, _ = _slacks(prob, z)
    if not _strictly_feasible(lin, g):
        return None
    return z.reshape(sc.k, sc.t)


def _tau_rates(sc: Scaled, mask, eps):
    """Per-(i, t) rate in nats as a function of tau with eps fixed: u ln((u+A)/(u+B))."""
    p = sc.q * eps
    b = np.einsum("isj,js->is", mask, p)
    a = b + p
    return a, b, p > 0


def solve_maxmin_given_E(inst: NetworkInstance, e, scheme=Scheme.LCD,
                         opts: SolverOptions = DEFAULT_OPTIONS, order=None, start_tau=None):
    """Harvesting durations maximizing the minimum rate for a fixed energy matrix.

    Returns (tau0, min_rate, status).
    """
    sc = Scaled.of(inst)
    mask, order = _mask(inst, scheme, order)
    eps = np.asarray(e, dtype=float) / sc.e_ref
    if np.any(eps < 0):
        raise ValueError("energies must be nonnegative")
    k, t = sc.k, sc.t
    a_l, b_l = joint_linear(sc, mask, opts.interior_margin)
    a2, b2 = restrict_to_tau(a_l, b_l, eps.ravel(), t)
    tau0 = np.full(t, 0.5) if start_tau is None else np.asarray(start_tau, dtype=float)
    aa, bb, active = _tau_rates(sc, mask, eps)
    if not np.all(active):
        # a silent user pins the minimum at zero
        if np.any(sc.s_th > 0):
            return None, None, Status.INFEASIBLE
        return tau0, 0.0, Status.OPTIMAL
    n = t + 1
    a2 = np.hstack([a2, np.zeros((a2.shape[0], 1))])
    slot = np.tile(np.arange(t), k)
    af, bf = aa.ravel(), bb.ravel()

    def cons(x):
        u = 1.0 - x[:t]
        us = u[slot]
        if np.any(us <= 0):
            return np.full(k * t, math.inf), np.zeros((k * t, n))
        la, lb = np.log(us + af), np.log(us + bf)
        val = us * (la - lb)
        d1 = (la - lb) + us * (1.0 / (us + af) - 1.0 / (us + bf))
        jac = np.zeros((k * t, n))
        jac[np.arange(k * t), slot] = d1  # d/dtau of -rate
        jac[:, t] = LN2
        return x[t] * LN2 - val, jac

    def cons_hess(x, w):
        us = (1.0 - x[:t])[slot]
        d2 = 2.0 * (1.0 / (us + af) - 1.0 / (us + bf)) + us * (1.0 / (us + bf) ** 2
                                                              - 1.0 / (us + af) ** 2)
        h = np.zeros((n, n))
        np.add.at(h, (slot, slot), -w * d2)
        return h

    def objective(x):
        g = np.zeros(n)
        g[t] = -1.0
        return -x[t], g, np.zeros((n, n))

    r0 = rates_bits(sc, tau0, eps, mask)
    x0 = np.append(tau0, float(r0.min()) - 1e-3)
    res = solve_convex(ConvexProblem(n, objective, a2, b2, cons, cons_hess), x0, opts,
                       gap_tol=1e-10)
    if res.status is Status.INFEASIBLE:
        return None, None, Status.INFEASIBLE
    tau = res.x[:t]
    return tau, float(rates_bits(sc, tau, eps, mask).min()), res.status


# ------------------------------------------------------------ max-min alternation

def solve_maxmin(inst: NetworkInstance, scheme=Scheme.LCD, opts: SolverOptions = DEFAULT_OPTIONS,
                 start=None, order=None, trace: bool = False) -> Solution:
    """Alternate the fixed-tau0 SCA step and the fixed-E convex step, then a joint SCA pass.

    Starts from the max-sum solution of the same decoder, so the result never has a
    lower minimum rate than it. ``trace`` keeps every SCA iterate in ``info["iterates"]``. With E fixed the harvesting times can only grow, so
    each round ends with an SCA pass over (tau0, E) together.
    """
    from .maxsum import solve_maxsum_lcd, solve_maxsum_sicd

    scheme = Scheme(scheme)
    sc = Scaled.of(inst)
    mask, order = _mask(inst, scheme, order)
    if start is None:
        base = solve_maxsum_lcd(inst, opts) if scheme is Scheme.LCD else solve_maxsum_sicd(inst, opts, concentrate=False)
        if not base.feasible:
            return Solution.infeasible(scheme, info={"reason": "no feasible point"})
        tau, eps = sc.unscale(base.alloc)
    else:
        tau, eps = (np.asarray(v, dtype=float) for v in start)
    eps = np.maximum(eps, 0.0)
    best = float(rates_bits(sc, tau, eps, mask).min())
    history = [best]
    sca_steps = 0
    iterates = [] if trace else None
    status = Status.ITERATION_LIMIT
    for _ in range(OUTER_ROUNDS):
        round_start = best
        _, eps_new, hist, _ = _sca(sc, mask, tau, eps, opts, free_tau=False, iterates=iterates)
        sca_steps += len(hist) - 1
        if hist[-1] >= best:
            eps, best = eps_new, hist[-1]
        history.append(best)
        tau_new, val, st = solve_maxmin_given_E(inst, eps * sc.e_ref, scheme, opts, order, tau)
        if st is not Status.INFEASIBLE and val >= best and _feasible(sc, mask, tau_new, eps):
            tau, best = tau_new, val
        history.append(best)
        tau_j, eps_j, hist, _ = _sca(sc, mask, tau, eps, opts, free_tau=True, iterates=iterates)
        sca_steps += len(hist) - 1
        if hist[-1] >= best:
            tau, eps, best = tau_j, eps_j, hist[-1]
        history.append(best)
        if best - round_start <= opts.tol_obj * max(1.0, abs(best)):
            status = Status.APPROXIMATE
            break
    return make_solution(inst, sc.alloc(tau, eps), scheme, best, status, order=order,
                         iterations=len(history) - 1, history=tuple(history),
                         info={"sca_steps": sca_steps, "iterates": iterates})
