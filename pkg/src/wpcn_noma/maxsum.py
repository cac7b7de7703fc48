"""Sum-throughput maximization under LCD (alternating GP / convex) and SICD (convex and dual)."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from . import _kernels
from ._formulation import (LN2, Scaled, causality_rows, interference_sets, joint_linear,
                           max_margin_point, orders_for, rates_bits, restrict_to_eps,
                           restrict_to_tau, threshold_rows)
from .model import NetworkInstance
from .solver_core import (DEFAULT_OPTIONS, ConvexProblem, GeometricProgram, Posynomial,
                          SolverOptions, check_feasible, solve_convex, solve_gp)
from .throughput import Allocation, Scheme, Solution, Status, make_solution, rates, sinr_lcd

log = logging.getLogger(__name__)

GP_ROUNDS = 50
OUTER_ROUNDS = 100
EPS_FLOOR = 1e-12


# ------------------------------------------------------------------ condensation

@dataclass(frozen=True, eq=False)
class CondensationState:
    x_bar: np.ndarray
    tau0: np.ndarray
    log_c: float
    y: np.ndarray

    @property
    def c(self) -> float:
        return math.exp(self.log_c) if self.log_c < 700 else math.inf

    def log_exact(self, x) -> float:
        """log of prod (1 + x) ** (1 - tau0)."""
        u = 1.0 - self.tau0
        return float(np.sum(u[None, :] * np.log1p(np.asarray(x, dtype=float))))

    def log_approx(self, x) -> float:
        u = 1.0 - self.tau0
        return self.log_c + float(np.sum(self.y * u[None, :] * np.log(np.asarray(x, dtype=float))))

    def exact(self, x) -> float:
        return math.exp(self.log_exact(x))

    def approx(self, x) -> float:
        return math.exp(self.log_approx(x))


def monomial_approx(x_bar, tau0) -> CondensationState:
    """Best local monomial under-estimator of prod (1 + x)^(1 - tau0), tangent at ``x_bar``."""
    x_bar = np.asarray(x_bar, dtype=float)
    if x_bar.ndim == 1:
        x_bar = x_bar[:, None]
    tau0 = np.asarray(tau0, dtype=float).reshape(-1)
    if np.any(x_bar <= 0):
        raise ValueError("x_bar must be strictly positive")
    if np.any(tau0 < 0) or np.any(tau0 >= 1):
        raise ValueError("tau0 must lie in [0, 1)")
    y = x_bar / (1.0 + x_bar)
    u = 1.0 - tau0
    log_c = float(np.sum(u[None, :] * (np.log1p(x_bar) - y * np.log(x_bar))))
    return CondensationState(x_bar, tau0, log_c, y)


# -------------------------------------------------------------------- helpers

def _sum_rate_lcd(sc: Scaled, tau, eps) -> float:
    mask = interference_sets(sc.k, sc.t, Scheme.LCD)
    return float(np.sum(rates_bits(sc, tau, eps, mask)))


def _lcd_sinr_scaled(sc: Scaled, tau, eps):
    u = 1.0 - np.asarray(tau)
    return _kernels.sinr_lcd(sc.q * eps, u)


def initial_point(inst: NetworkInstance, scheme=Scheme.LCD, opts: SolverOptions = DEFAULT_OPTIONS,
                  order=None):
    """Strictly feasible (tau0, eps) in scaled units, or None when the thresholds cannot be met."""
    sc = Scaled.of(inst)
    order = orders_for(inst, scheme, order)
    mask = interference_sets(sc.k, sc.t, scheme, order)
    tau = np.full(sc.t, 0.5)
    eps = 0.9 * sc.beta * 0.5
    a, b = joint_linear(sc, mask, opts.interior_margin)
    x = np.concatenate([tau, eps.ravel()])
    if np.all(a @ x < b):
        return tau, eps
    probe = max_margin_point(sc, mask, opts.interior_margin, opts)
    if probe is None:
        return None
    return probe


# ------------------------------------------------------------- LCD sum rate, tau fixed

def _lcd_gp(sc: Scaled, tau, weights) -> GeometricProgram:
    """Condensed GP over v = [eps (K*T), x (K*T)] with monomial objective prod x^-weights."""
    k, t = sc.k, sc.t
    n = 2 * k * t
    u = 1.0 - tau
    ie = lambda i, s: i * t + s
    ix = lambda i, s: k * t + i * t + s
    cons = []
    for i in range(k):
        for s in range(t):
            coef = [u[s] / sc.q[i, s]]
            e0 = np.zeros(n)
            e0[ix(i, s)] = 1.0
            e0[ie(i, s)] = -1.0
            exps = [e0]
            for j in range(k):
                if j == i:
                    continue
                ej = e0.copy()
                ej[ie(j, s)] += 1.0
                coef.append(sc.q[j, s] / sc.q[i, s])
                exps.append(ej)
            cons.append(Posynomial(coef, exps))
    for i in range(k):
        for s in range(t):
            budget = float(np.sum(sc.beta[i, : s + 1] * tau[: s + 1]))
            exps = np.zeros((s + 1, n))
            for m in range(s + 1):
                exps[m, ie(i, m)] = 1.0
            cons.append(Posynomial(np.full(s + 1, 1.0 / budget), exps))
            floor = np.zeros((1, n))
            floor[0, ie(i, s)] = -1.0
            cons.append(Posynomial([EPS_FLOOR * sc.beta[i, s]], floor))
            if sc.s_th[i] > 0:
                thr = np.zeros((1, n))
                thr[0, ix(i, s)] = -1.0
                cons.append(Posynomial([sc.s_th[i]], thr))
    obj = np.zeros((1, n))
    obj[0, k * t:] = -np.asarray(weights).ravel()
    return GeometricProgram(Posynomial([1.0], obj), cons)


def _gp_start(sc: Scaled, tau, eps, shrink=1e-6):
    eps = np.maximum(eps * (1.0 - shrink), 2.0 * EPS_FLOOR * sc.beta)
    x = _lcd_sinr_scaled(sc, tau, eps)
    lo = sc.s_th[:, None]
    x = np.where(x > lo, lo + (x - lo) * (1.0 - shrink), x)
    return np.concatenate([eps.ravel(), np.maximum(x, 1e-300).ravel()])


def solve_maxsum_lcd_given_tau(inst: NetworkInstance, tau0, start_alloc: Allocation | None = None,
                               opts: SolverOptions = DEFAULT_OPTIONS, history: list | None = None):
    """Energy allocation for fixed tau0 by successive monomial condensation.

    Returns (E, sinr, sum_rate, status); ``history`` collects the sum rate after every round.
    """
    sc = Scaled.of(inst)
    tau = np.clip(np.asarray(tau0, dtype=float), opts.interior_margin, 1.0 - opts.interior_margin)
    if start_alloc is None:
        probe = _feasible_eps_for_tau(sc, tau, opts)
        if probe is None:
            return None, None, None, Status.INFEASIBLE
        eps = probe
    else:
        eps = np.asarray(start_alloc.e, dtype=float) / sc.e_ref
    best = _sum_rate_lcd(sc, tau, eps)
    if history is not None:
        history.append(best)
    status = Status.APPROXIMATE
    for _ in range(GP_ROUNDS):
        x_bar = np.maximum(_lcd_sinr_scaled(sc, tau, eps), 1e-300)
        state = monomial_approx(x_bar, tau)
        gp = _lcd_gp(sc, tau, state.y * (1.0 - tau)[None, :])
        v, st, _ = solve_gp(gp, opts, start=_gp_start(sc, tau, eps), gap_tol=1e-7)
        if st is Status.INFEASIBLE:
            if history is not None and len(history) == 1:
                return None, None, None, Status.INFEASIBLE
            break
        cand = v[: sc.k * sc.t].reshape(sc.k, sc.t)
        val = _sum_rate_lcd(sc, tau, cand)
        if val < best:
            break
        gain = val - best
        eps, best = cand, val
        if history is not None:
            history.append(best)
        if gain <= opts.tol_obj * max(1.0, abs(best)):
            break
    e = eps * sc.e_ref
    x = sinr_lcd(inst, Allocation(tau, e))
    return e, x, best, status


def _feasible_eps_for_tau(sc: Scaled, tau, opts):
    mask = interference_sets(sc.k, sc.t, Scheme.LCD)
    a, b = joint_linear(sc, mask, opts.interior_margin)
    a2, b2 = restrict_to_eps(a, b, tau, sc.t)
    eps0 = 0.9 * sc.beta * tau[None, :] * 0.5
    if np.all(a2 @ eps0.ravel() < b2):
        return eps0
    from .solver_core import _phase_one, _slacks, _strictly_feasible

    prob = ConvexProblem(a2.shape[1], lambda z: (0.0, np.zeros(z.size), np.zeros((z.size, z.size))),
                         a2, b2)
    z, _ = _phase_one(prob, eps0.ravel(), opts)
    lin, g, _ = _slacks(prob, z)
    if not _strictly_feasible(lin, g):
        return None
    return z.reshape(sc.k, sc.t)


# --------------------------------------------------------------- LCD sum rate, E fixed

def _lcd_tau_objective(sc: Scaled, eps):
    """Negated LCD sum rate as a function of tau alone (eps fixed)."""
    p = sc.q * eps
    a_tot = p.sum(axis=0)  # (T,)
    b_int = a_tot[None, :] - p  # (K, T)
    active = p > 0

    def f(tau):
        u = 1.0 - tau
        if np.any(u <= 0):
            return math.inf, np.zeros_like(tau), np.zeros((tau.size, tau.size))
        ua = u + a_tot
        ub = u[None, :] + b_int
        lr = np.where(active, np.log(ua)[None, :] - np.log(ub), 0.0)
        val = float(np.sum(u[None, :] * lr))
        d1 = np.where(active, lr + u[None, :] * (1.0 / ua[None, :] - 1.0 / ub), 0.0)
        d2 = np.where(active, 2.0 * (1.0 / ua[None, :] - 1.0 / ub)
                      + u[None, :] * (1.0 / ub ** 2 - 1.0 / ua[None, :] ** 2), 0.0)
        grad_u = d1.sum(axis=0)
        hess_u = d2.sum(axis=0)
        # d/dtau = -d/du; second derivative unchanged
        return -val / LN2, grad_u / LN2, np.diag(-hess_u / LN2)

    return f


def solve_maxsum_lcd_given_E(inst: NetworkInstance, e, opts: SolverOptions = DEFAULT_OPTIONS,
                             start_tau=None):
    """Harvesting durations for a fixed energy matrix. Returns (tau0, sum_rate, status)."""
    sc = Scaled.of(inst)
    eps = np.asarray(e, dtype=float) / sc.e_ref
    if np.any(eps < 0):
        raise ValueError("energies must be nonnegative")
    mask = interference_sets(sc.k, sc.t, Scheme.LCD)
    a, b = joint_linear(sc, mask, opts.interior_margin)
    a2, b2 = restrict_to_tau(a, b, eps.ravel(), sc.t)
    tau0 = np.full(sc.t, 0.5) if start_tau is None else np.clip(
        np.asarray(start_tau, dtype=float), opts.interior_margin, 1 - opts.interior_margin)
    if not np.any(eps > 0):
        if np.all(sc.s_th == 0):
            return tau0, 0.0, Status.OPTIMAL
        return None, None, Status.INFEASIBLE
    res = solve_convex(ConvexProblem(sc.t, _lcd_tau_objective(sc, eps), a2, b2), tau0, opts,
                       gap_tol=1e-11)
    if res.status is Status.INFEASIBLE:
        return None, None, Status.INFEASIBLE
    tau = res.x
    return tau, _sum_rate_lcd(sc, tau, eps), res.status


# ------------------------------------------------------------ max-sum alternation

def _alternate(inst, sc: Scaled, tau, eps, opts):
    best = _sum_rate_lcd(sc, tau, eps)
    history = [best]
    inner_rounds = 0
    for _ in range(OUTER_ROUNDS):
        start_val = best
        inner: list = []
        e, _, val, st = solve_maxsum_lcd_given_tau(inst, tau, sc.alloc(tau, eps), opts, inner)
        inner_rounds += max(len(inner) - 1, 0)
        if st is not Status.INFEASIBLE and val >= best:
            eps, best = e / sc.e_ref, val
        history.append(best)
        tau_new, val, st = solve_maxsum_lcd_given_E(inst, eps * sc.e_ref, opts, start_tau=tau)
        if st is not Status.INFEASIBLE and val >= best:
            tau, best = tau_new, val
        history.append(best)
        if best - start_val <= opts.tol_obj * max(1.0, abs(best)):
            return tau, eps, history, inner_rounds, Status.APPROXIMATE
    return tau, eps, history, inner_rounds, Status.ITERATION_LIMIT


def solve_maxsum_lcd(inst: NetworkInstance, opts: SolverOptions = DEFAULT_OPTIONS,
                     start=None, warm_start: bool = True) -> Solution:
    """Alternate the condensed-GP energy step and the convex harvesting-time step.

    With E held fixed, energy causality only lets tau0 grow, so a run started at
    tau0 = 0.5 cannot reach short harvesting phases. With ``warm_start`` a second run
    starts from the best fixed-tau0 single pass and the better run is returned.
    """
    sc = Scaled.of(inst)
    starts = []
    if start is None:
        start = initial_point(inst, Scheme.LCD, opts)
    if start is not None:
        starts.append(("default", start))
    if warm_start:
        base = solve_tau_only_lcd(inst, opts)
        if base.feasible:
            starts.append(("tau_grid", sc.unscale(base.alloc)))
    if not starts:
        return Solution.infeasible(Scheme.LCD, info={"reason": "no strictly feasible point"})
    runs = []
    for label, (tau, eps) in starts:
        tau, eps, history, rounds, status = _alternate(inst, sc, np.asarray(tau, dtype=float),
                                                       np.asarray(eps, dtype=float), opts)
        runs.append((history[-1], label, tau, eps, history, rounds, status))
    best, label, tau, eps, history, rounds, status = max(runs, key=lambda r: r[0])
    return make_solution(inst, sc.alloc(tau, eps), Scheme.LCD, best, status,
                         iterations=len(history) - 1, history=tuple(history),
                         info={"gp_rounds": rounds, "start": label})


def solve_tau_only_lcd(inst: NetworkInstance, opts: SolverOptions = DEFAULT_OPTIONS,
                       grid=None) -> Solution:
    """Baseline: one condensation pass per common tau0 on a coarse grid; keeps the best."""
    grid = np.linspace(0.0, 1.0, 21) if grid is None else np.asarray(grid, dtype=float)
    best_sol = Solution.infeasible(Scheme.LCD)
    for value in grid:
        tau = np.clip(np.full(inst.t, value), opts.interior_margin, 1.0 - opts.interior_margin)
        e, _, val, st = solve_maxsum_lcd_given_tau(inst, tau, None, opts)
        if st is Status.INFEASIBLE:
            continue
        if best_sol.objective is None or val > best_sol.objective:
            best_sol = make_solution(inst, Allocation(tau, e), Scheme.LCD, val, Status.APPROXIMATE,
                                     info={"tau0": float(value)})
    return best_sol


# --------------------------------------------------------------------- SICD sum rate

def _sicd_sum_objective(sc: Scaled):
    """Negated SIC sum rate over x = [tau (T), eps (K*T)] with gradient and Hessian."""
    k, t = sc.k, sc.t
    q = sc.q
    n = t + k * t

    def f(x):
        tau = x[:t]
        eps = x[t:].reshape(k, t)
        u = 1.0 - tau
        s = np.sum(q * eps, axis=0)
        if np.any(u <= 0) or np.any(s < 0):
            return math.inf, np.zeros(n), np.zeros((n, n))
        val = float(np.sum(u * np.log1p(s / u)))
        du = np.log1p(s / u) - s / (u + s)
        ds = u / (u + s)
        grad = np.empty(n)
        grad[:t] = -du
        grad[t:] = (q * ds[None, :]).ravel()
        c = 1.0 / (u + s) ** 2
        h_uu = -c * s * s / u
        h_us = c * s
        h_ss = -c * u
        hess = np.zeros((n, n))
        for m in range(t):
            idx = t + np.arange(k) * t + m
            qm = q[:, m]
            hess[m, m] = h_uu[m]
            hess[m, idx] = -h_us[m] * qm
            hess[idx, m] = -h_us[m] * qm
            hess[np.ix_(idx, idx)] = h_ss[m] * np.outer(qm, qm)
        return -val / LN2, -grad / LN2, -hess / LN2

    return f


def sicd_sum_rate(sc: Scaled, tau, eps) -> float:
    u = 1.0 - np.asarray(tau)
    s = np.sum(sc.q * eps, axis=0)
    return float(np.sum(u * np.log1p(s / u)) / LN2)


def _concentrate(inst, sc: Scaled, tau, eps, a, b, order, opts):
    """Move to the vertex of the optimal face that puts the most throughput on one user.

    The sum rate only sees tau and the per-slot totals sum_i q eps, so any eps keeping
    those totals and the linear constraints is equally optimal. One LP per user.
    """
    k, t = sc.k, sc.t
    a2, b2 = restrict_to_eps(a, b, tau, t)
    a_eq = np.zeros((t, k * t))
    for s in range(t):
        a_eq[s, np.arange(k) * t + s] = sc.q[:, s]
    b_eq = a_eq @ eps.ravel()
    best, best_share = eps, -1.0
    for user in range(k):
        c = np.zeros(k * t)
        c[user * t: (user + 1) * t] = -sc.q[user]
        res = scipy.optimize.linprog(c, A_ub=a2, b_ub=b2, A_eq=a_eq, b_eq=b_eq,
                                     bounds=(0, None), method="highs")
        if res.status != 0:
            continue
        cand = np.maximum(res.x.reshape(k, t), 0.0)
        alloc = sc.alloc(tau, cand)
        if not check_feasible(inst, alloc, Scheme.SICD, opts, order).feasible:
            continue
        totals = rates(inst, alloc, Scheme.SICD, order)[1].sum(axis=1)
        share = totals[user] / max(totals.sum(), 1e-300)
        if share > best_share:
            best, best_share = cand, share
    return best


def solve_maxsum_sicd(inst: NetworkInstance, opts: SolverOptions = DEFAULT_OPTIONS,
                      order=None, concentrate: bool = True) -> Solution:
    """Jointly concave sum-rate program solved directly by the barrier method.

    The optimum is not unique in E. With ``concentrate`` the returned point is the one
    giving a single user the largest throughput share; otherwise it is the barrier's
    near-central point.
    """
    sc = Scaled.of(inst)
    order = orders_for(inst, Scheme.SICD, order)
    mask = interference_sets(sc.k, sc.t, Scheme.SICD, order)
    a, b = joint_linear(sc, mask, opts.interior_margin)
    tau = np.full(sc.t, 0.5)
    eps = 0.9 * sc.beta * 0.5
    x0 = np.concatenate([tau, eps.ravel()])
    res = solve_convex(ConvexProblem(x0.size, _sicd_sum_objective(sc), a, b), x0, opts,
                       gap_tol=1e-9)
    if res.status is Status.INFEASIBLE:
        return Solution.infeasible(Scheme.SICD, info={"reason": "thresholds unsatisfiable"})
    tau = res.x[: sc.t]
    eps = np.maximum(res.x[sc.t:].reshape(sc.k, sc.t), 0.0)
    if concentrate:
        value = sicd_sum_rate(sc, tau, eps)
        moved = _concentrate(inst, sc, tau, eps, a, b, order, opts)
        if sicd_sum_rate(sc, tau, moved) >= value - 1e-10 * max(1.0, value):
            eps = moved
    status = Status.OPTIMAL if res.status is Status.OPTIMAL else Status.ITERATION_LIMIT
    return make_solution(inst, sc.alloc(tau, eps), Scheme.SICD, sicd_sum_rate(sc, tau, eps),
                         status, order=order, iterations=res.newton_steps,
                         info={"gap": res.gap})


# ------------------------------------------------------------------------ dual

@dataclass(frozen=True, eq=False)
class DualPoint:
    """Causality multipliers ``lam`` and decoding multipliers ``mu``, both (K, T), in physical units."""

    lam: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        lam = np.array(self.lam, dtype=float)
        mu = np.array(self.mu, dtype=float)
        if lam.shape != mu.shape or lam.ndim != 2:
            raise ValueError("lam and mu must both be (K, T)")
        if np.any(lam < 0) or np.any(mu < 0):
            raise ValueError("dual variables must be nonnegative")
        lam.setflags(write=False)
        mu.setflags(write=False)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", mu)

    @classmethod
    def zeros(cls, k, t):
        return cls(np.zeros((k, t)), np.zeros((k, t)))


def dual_coefficients(inst: NetworkInstance, dual: DualPoint, t: int, order=None):
    """Per-slot (a, b): marginal energy price of each user and marginal value of harvesting time.

    Position in ``order`` (first decoded first) decides which users' thresholds a
    user's energy interferes with.
    """
    order = orders_for(inst, Scheme.SICD, order)[t]
    tail = np.sum(dual.lam[:, t:], axis=1)
    mu_s = dual.mu[:, t] * inst.s_th
    a = np.empty(inst.k)
    earlier = 0.0
    for i in order:
        a[i] = tail[i] + inst.g[i, t] * earlier - dual.mu[i, t] * inst.g[i, t]
        earlier += mu_s[i]
    b = inst.noise_power * float(np.sum(mu_s)) + float(np.sum(tail * inst.gamma[:, t]))
    return LN2 * a, LN2 * b


def dual_inner_solve(inst: NetworkInstance, dual: DualPoint, opts: SolverOptions = DEFAULT_OPTIONS,
                     order=None) -> Allocation:
    """Maximizer of the Lagrangian over the box for fixed multipliers.

    The Lagrangian is positively homogeneous in (1 - tau0, E) within each slot, so the
    maximizer sits at tau0 in {0, 1}. Rates enter only through the slot's total
    received power, so energy goes to the user with the best gain-to-price ratio,
    up to the level where its marginal rate meets its price. The slot transmits when
    that SNR reaches the root z* of f(z) = b. Nonpositive prices make it unbounded.
    """
    order_all = orders_for(inst, Scheme.SICD, order)
    k, t = inst.k, inst.t
    tau = np.ones(t)
    e = np.zeros((k, t))
    sigma2 = inst.noise_power
    for s in range(t):
        a, b = dual_coefficients(inst, dual, s, order_all)
        if b <= 0.0:
            continue
        z_star = float(_kernels.log_gap_root(np.array([b]), 1e-15)[0])
        if np.any(a <= 0.0):
            tau[s] = 0.0
            e[a <= 0.0, s] = math.inf
            continue
        g = inst.g[:, s]
        ratio = g / a
        # ties go to the last-decoded user, which sees no residual interference
        best = max(order_all[s], key=lambda i: (ratio[i], list(order_all[s]).index(i)))
        snr = ratio[best] / sigma2 - 1.0
        if snr > 0.0 and snr >= z_star:
            tau[s] = 0.0
            e[best, s] = snr * sigma2 / g[best]
    return Allocation(tau, e)


def _dual_maps(sc: Scaled, order):
    """Linear maps from z = [lam (K*T), mu (M), theta (T), rho (T)] to scaled a, b and c.

    mu is carried only for users with a positive threshold.
    """
    k, t = sc.k, sc.t
    mu_users = np.flatnonzero(sc.s_th > 0)
    mu_idx = {(i, s): j for j, (i, s) in enumerate((i, s) for i in mu_users for s in range(t))}
    n_lam, n_mu = k * t, len(mu_idx)
    n = n_lam + n_mu + 2 * t
    a_map = np.zeros((k, t, n))
    b_map = np.zeros((t, n))
    c_map = np.zeros((t, n))
    for s in range(t):
        earlier = np.zeros(n)
        for i in order[s]:
            a_map[i, s, [i * t + m for m in range(s, t)]] = 1.0
            a_map[i, s] += sc.q[i, s] * earlier
            if (i, s) in mu_idx:
                col = n_lam + mu_idx[(i, s)]
                a_map[i, s, col] -= sc.q[i, s]
                earlier[col] += sc.s_th[i]
                b_map[s, col] += sc.s_th[i]
                c_map[s, col] += sc.s_th[i]
            for m in range(s, t):
                b_map[s, i * t + m] += sc.beta[i, s]
    return a_map, b_map, c_map, mu_idx, n


def _psi(rho):
    return rho - 1.0 - np.log(rho)


def _dual_program(sc: Scaled, order):
    k, t = sc.k, sc.t
    a_map, b_map, c_map, mu_idx, n = _dual_maps(sc, order)
    n_mult = n - 2 * t
    th = slice(n_mult, n_mult + t)
    rh = slice(n_mult + t, n)
    rows, rhs = [], []
    nonneg = -np.eye(n)[:n_mult]
    rows.append(nonneg)
    rhs.append(np.zeros(n_mult))
    epi_b = b_map.copy()
    epi_b[:, th] -= np.eye(t)
    rows.append(epi_b)
    rhs.append(np.zeros(t))
    price = np.zeros((k * t, n))
    for i in range(k):
        for s in range(t):
            price[i * t + s] = -a_map[i, s] / sc.q[i, s]
            price[i * t + s, n_mult + t + s] += 1.0
    rows.append(price)
    rhs.append(np.zeros(k * t))
    cap = np.zeros((t, n))
    cap[:, rh] = np.eye(t)
    rows.append(cap)
    rhs.append(np.ones(t))
    a_ub, b_ub = np.vstack(rows), np.concatenate(rhs)

    cost = -c_map.sum(axis=0)
    cost[th] += 1.0

    def objective(z):
        return float(cost @ z), cost, np.zeros((n, n))

    def constraints(z):
        rho = z[rh]
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.where(rho > 0, _psi(np.where(rho > 0, rho, 1.0)) - z[th], math.inf)
        jac = np.zeros((t, n))
        jac[:, th] = -np.eye(t)
        jac[:, rh] = np.diag(1.0 - 1.0 / np.where(rho > 0, rho, 1.0))
        return vals, jac

    def constraints_hess(z, w):
        h = np.zeros((n, n))
        idx = np.arange(n_mult + t, n)
        h[idx, idx] = w / z[rh] ** 2
        return h

    prob = ConvexProblem(n, objective, a_ub, b_ub, constraints, constraints_hess)
    layout = {"a_map": a_map, "b_map": b_map, "c_map": c_map, "mu_idx": mu_idx, "n_mult": n_mult,
              "rows": [r.shape[0] for r in rows]}
    return prob, layout


def _dual_start(sc: Scaled, layout):
    k, t = sc.k, sc.t
    n_mult = layout["n_mult"]
    z = np.zeros(n_mult + 2 * t)
    z[: k * t] = 1.0
    for (i, s), j in layout["mu_idx"].items():
        z[k * t + j] = 0.1 / sc.q[i, s]
    a = layout["a_map"] @ z
    rho = 0.5 * np.minimum(1.0, np.min(a / sc.q, axis=0))
    z[n_mult + t:] = rho
    b = layout["b_map"] @ z
    z[n_mult: n_mult + t] = np.maximum(b, _psi(rho)) + 1.0
    return z


def _to_dual_point(sc: Scaled, z, layout) -> DualPoint:
    k, t = sc.k, sc.t
    lam = z[: k * t].reshape(k, t) / (LN2 * sc.e_ref)
    mu = np.zeros((k, t))
    for (i, s), j in layout["mu_idx"].items():
        mu[i, s] = z[k * t + j] / (LN2 * sc.inst.noise_power)
    return DualPoint(np.maximum(lam, 0.0), np.maximum(mu, 0.0))


def _scaled_dual_value(sc: Scaled, z, layout) -> float:
    """Dual function (bits) at the multiplier part of z."""
    t = sc.t
    a = layout["a_map"] @ z
    if np.any(a <= 0):
        return math.inf
    b = layout["b_map"] @ z
    c = layout["c_map"] @ z
    rho = np.minimum(1.0, np.min(a / sc.q, axis=0))
    return float(np.sum(np.maximum(b, _psi(rho)) - c)) / LN2


def _repair(sc: Scaled, tau, eps, mask, opts):
    """Euclidean projection onto the linear feasible set; the recovered primal is only near-feasible."""
    a, b = joint_linear(sc, mask, opts.interior_margin)
    x0 = np.concatenate([tau, eps.ravel()])
    if np.all(a @ x0 <= b):
        return tau, eps
    n = x0.size

    def obj(x):
        d = x - x0
        return 0.5 * float(d @ d), d, np.eye(n)

    res = solve_convex(ConvexProblem(n, obj, a, b), x0, opts, gap_tol=1e-14)
    if res.status is Status.INFEASIBLE:
        return None
    return res.x[: sc.t], np.maximum(res.x[sc.t:].reshape(sc.k, sc.t), 0.0)


def _subgradient(sc: Scaled, layout, order, opts, steps, c0=1.0):
    """Projected subgradient descent on the dual with c0/sqrt(k) steps and primal averaging."""
    k, t = sc.k, sc.t
    n_mult = layout["n_mult"]
    mask = interference_sets(k, t, Scheme.SICD, order)
    z = _dual_start(sc, layout)[: n_mult]
    pad = np.zeros(2 * t)
    tau_avg = np.zeros(t)
    eps_avg = np.zeros((k, t))
    best = math.inf
    best_z = z.copy()
    for it in range(1, steps + 1):
        zz = np.concatenate([z, pad])
        val = _scaled_dual_value(sc, zz, layout)
        if val < best:
            best, best_z = val, z.copy()
        dual = _to_dual_point(sc, zz, layout)
        alloc = dual_inner_solve(sc.inst, dual, opts, order)
        tau, eps = sc.unscale(alloc)
        if not np.all(np.isfinite(eps)):
            eps = np.where(np.isfinite(eps), eps, 0.0)
            tau = np.where(np.isfinite(tau), tau, 0.0)
        tau_avg += (tau - tau_avg) / it
        eps_avg += (eps - eps_avg) / it
        # gradient of the dual = constraint values of the inner maximizer
        slack_c = np.cumsum(sc.beta * tau[None, :], axis=1) - np.cumsum(eps, axis=1)
        grad = np.zeros(n_mult)
        for i in range(k):
            for s in range(t):
                grad[i * t + s] = slack_c[i, s]
        u = 1.0 - tau
        p = sc.q * eps
        interf = np.einsum("isj,js->is", mask, p)
        for (i, s), j in layout["mu_idx"].items():
            grad[k * t + j] = p[i, s] - sc.s_th[i] * (u[s] + interf[i, s])
        norm = float(np.linalg.norm(grad))
        if norm == 0.0:
            break
        z = np.maximum(z - c0 / math.sqrt(it) * grad / norm, 0.0)
    return tau_avg, eps_avg, np.concatenate([best_z, pad]), best


def solve_maxsum_sicd_dual(inst: NetworkInstance, opts: SolverOptions = DEFAULT_OPTIONS,
                           method: str = "barrier", order=None, subgradient_steps: int = 5000
                           ) -> Solution:
    """Sum-rate SIC optimum reached from the dual side.

    ``method="barrier"`` minimizes the dual (written as a smooth epigraph program) by
    interior point and reads the primal off the multipliers: the weight on
    theta_t >= b_t is tau0_t and the weight on rho_t <= a_it / q_it is q_it * eps_it.
    ``method="subgradient"`` runs projected subgradient steps with averaged primal
    iterates; it is slow and usually stops at IterationLimit.
    """
    sc = Scaled.of(inst)
    order = orders_for(inst, Scheme.SICD, order)
    mask = interference_sets(sc.k, sc.t, Scheme.SICD, order)
    if initial_point(inst, Scheme.SICD, opts, order) is None:
        return Solution.infeasible(Scheme.SICD, info={"reason": "no Slater point"})
    prob, layout = _dual_program(sc, order)
    k, t = sc.k, sc.t
    if method == "barrier":
        res = solve_convex(prob, _dual_start(sc, layout), opts, gap_tol=1e-9)
        if res.status is Status.INFEASIBLE:
            return Solution.infeasible(Scheme.SICD, info={"reason": "dual solve failed"})
        sizes = layout["rows"]
        off = sizes[0]
        w_b = res.lam_lin[off: off + t]
        off += t
        w_price = res.lam_lin[off: off + k * t].reshape(k, t)
        tau = np.clip(w_b, 0.0, 1.0)
        eps = w_price / sc.q
        z = res.x
        steps = res.newton_steps
    elif method == "subgradient":
        tau, eps, z, _ = _subgradient(sc, layout, order, opts, subgradient_steps)
        steps = subgradient_steps
    else:
        raise ValueError(f"unknown method {method!r}")
    fixed = _repair(sc, tau, eps, mask, opts)
    if fixed is None:
        return Solution.infeasible(Scheme.SICD, info={"reason": "primal recovery failed"})
    tau, eps = fixed
    primal = sicd_sum_rate(sc, tau, eps)
    dual_val = _scaled_dual_value(sc, z, layout)
    gap = (dual_val - primal) / max(1.0, abs(dual_val))
    status = Status.OPTIMAL if gap <= 1e-4 else Status.ITERATION_LIMIT
    return make_solution(inst, sc.alloc(tau, eps), Scheme.SICD, primal, status, order=order,
                         iterations=steps,
                         info={"dual_value": dual_val, "duality_gap": gap, "method": method,
                               "dual": _to_dual_point(sc, z, layout)})
