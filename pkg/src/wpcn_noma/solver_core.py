"""Log-barrier interior-point solver, GP front end, bisection and feasibility checks."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .model import NetworkInstance
from .throughput import Allocation, Scheme, Status, sinr_lcd, sinr_sicd

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverOptions:
    tol_obj: float = 1e-6
    tol_con: float = 1e-8
    max_iter: int = 500
    interior_margin: float = 1e-6

    def __post_init__(self):
        if self.tol_obj <= 0 or self.tol_con <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not 0.0 < self.interior_margin < 0.5:
            raise ValueError("interior_margin must lie in (0, 0.5)")


DEFAULT_OPTIONS = SolverOptions()


@dataclass
class ConvexProblem:
    """minimize f0(x) s.t. A x <= b and g(x) <= 0 (each g_i convex).

    ``objective(x)`` returns (value, gradient, hessian). ``constraints(x)`` returns
    (values, jacobian) and ``constraints_hess(x, w)`` returns sum_i w_i * hess g_i(x).
    Objective and constraints may return non-finite values outside their domain.
    """

    n: int
    objective: Callable
    a_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    constraints: Callable | None = None
    constraints_hess: Callable | None = None

    def __post_init__(self):
        if self.a_ub is not None:
            self.a_ub = np.atleast_2d(np.asarray(self.a_ub, dtype=float))
            self.b_ub = np.asarray(self.b_ub, dtype=float).reshape(-1)
            if self.a_ub.shape != (self.b_ub.size, self.n):
                raise ValueError("a_ub must be (m, n) with m == len(b_ub)")


@dataclass
class ConvexResult:
    x: np.ndarray
    status: Status
    objective: float
    newton_steps: int = 0
    gap: float = math.inf
    lam_lin: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lam_nl: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _slacks(prob: ConvexProblem, x):
    lin = prob.b_ub - prob.a_ub @ x if prob.a_ub is not None else np.zeros(0)
    if prob.constraints is not None:
        g, jac = prob.constraints(x)
        g = np.asarray(g, dtype=float)
    else:
        g, jac = np.zeros(0), np.zeros((0, prob.n))
    return lin, g, jac


def _strictly_feasible(lin, g) -> bool:
    return (bool(np.all(np.isfinite(lin))) and bool(np.all(np.isfinite(g)))
            and bool(np.all(lin > 0)) and bool(np.all(g < 0)))


def _barrier_value(prob, x, t):
    lin, g, _ = _slacks(prob, x)
    if not _strictly_feasible(lin, g):
        return math.inf
    f = prob.objective(x)[0]
    if not np.isfinite(f):
        return math.inf
    return t * f - float(np.sum(np.log(lin))) - float(np.sum(np.log(-g)))


def _newton_direction(h, grad):
    d = np.sqrt(np.maximum(np.abs(np.diag(h)), 1e-300))
    hs = h / d[:, None] / d[None, :]
    gs = grad / d
    try:
        c = scipy.linalg.cho_factor(hs + 1e-14 * np.eye(h.shape[0]), check_finite=False)
        step = -scipy.linalg.cho_solve(c, gs, check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        step = -np.linalg.lstsq(hs + 1e-10 * np.eye(h.shape[0]), gs, rcond=None)[0]
    return step / d


def _center(prob, x, t, budget, stop_below=None):
    """Newton centering at barrier weight ``t``. Returns (x, steps used, converged)."""
    steps = 0
    phi = _barrier_value(prob, x, t)
    best_dec, stalled = math.inf, 0
    while steps < budget:
        f, gf, hf = prob.objective(x)
        lin, g, jac = _slacks(prob, x)
        grad = t * np.asarray(gf, dtype=float)
        hess = t * np.asarray(hf, dtype=float)
        if lin.size:
            inv = 1.0 / lin
            grad = grad + prob.a_ub.T @ inv
            hess = hess + (prob.a_ub.T * inv ** 2) @ prob.a_ub
        if g.size:
            inv = 1.0 / (-g)
            grad = grad + jac.T @ inv
            hess = hess + (jac.T * inv ** 2) @ jac
            if prob.constraints_hess is not None:
                hess = hess + prob.constraints_hess(x, inv)
        dx = _newton_direction(hess, grad)
        decrement = -float(grad @ dx)
        steps += 1
        # the Newton decrement is affine invariant, so an absolute threshold is meaningful
        if not np.isfinite(decrement) or decrement <= 1e-10:
            return x, steps, np.isfinite(decrement)
        if decrement < 0.5 * best_dec or decrement > 1e-2:
            best_dec, stalled = min(best_dec, decrement), 0
        else:
            stalled += 1
            if stalled > 10:
                return x, steps, False  # round-off dominates the line search
        # near the centre the decrease can sit below the round-off of phi itself
        slack = 1e-13 * max(1.0, abs(phi)) if decrement < 1e-3 else 0.0
        s = 1.0
        new_phi = _barrier_value(prob, x + s * dx, t)
        while (not np.isfinite(new_phi) or new_phi > phi - 0.25 * s * decrement + slack) and s > 1e-14:
            s *= 0.5
            new_phi = _barrier_value(prob, x + s * dx, t)
        if not np.isfinite(new_phi) or new_phi > phi + slack:
            return x, steps, False
        x = x + s * dx
        phi = new_phi
        if stop_below is not None and prob.objective(x)[0] < stop_below:
            break
    return x, steps, False


def _n_constraints(prob, x):
    lin, g, _ = _slacks(prob, x)
    return lin.size + g.size


def _barrier(prob, x, opts, gap_tol, newton_budget, stop_below=None, bound_above=None):
    m = _n_constraints(prob, x)
    f0 = prob.objective(x)[0]
    if m == 0:
        x, steps, _ = _center(prob, x, 1.0, newton_budget)
        return x, steps, 0.0, 1.0
    t = max(m / max(abs(f0), 1.0), 1e-3)
    steps = 0
    mu = 20.0
    last_good = None
    while True:
        x_new, used, ok = _center(prob, x, t, max(1, newton_budget - steps), stop_below)
        steps += used
        if not ok and last_good is not None and stop_below is None:
            # keep the last well-centred point; its multipliers are the reliable ones
            x, t = last_good
            break
        x = x_new
        if ok:
            last_good = (x, t)
        gap = m / t
        if stop_below is not None and prob.objective(x)[0] < stop_below:
            break
        # a centred point bounds the optimum below by f - m/t
        if ok and bound_above is not None and prob.objective(x)[0] - gap > bound_above:
            break
        if gap <= gap_tol * max(1.0, abs(prob.objective(x)[0])) or steps >= newton_budget:
            break
        t *= mu
    return x, steps, m / t, t


def _phase_one(prob: ConvexProblem, x0, opts):
    """Find a strictly feasible point by minimizing the max constraint violation."""
    lin, g, _ = _slacks(prob, x0)
    if not (np.all(np.isfinite(lin)) and np.all(np.isfinite(g))):
        return None
    viol = np.concatenate([-lin, g])
    s0 = float(viol.max()) + 1.0 if viol.size else 1.0
    n = prob.n

    def obj(z):
        grad = np.zeros(n + 1)
        grad[n] = 1.0
        return z[n], grad, np.zeros((n + 1, n + 1))

    a_ub = b_ub = None
    rows = []
    if prob.a_ub is not None:
        rows.append(np.hstack([prob.a_ub, -np.ones((prob.a_ub.shape[0], 1))]))
        b_ub = [prob.b_ub]
    floor = np.zeros((1, n + 1))
    floor[0, n] = -1.0
    rows.append(floor)
    # box around x0 keeps the phase-I barrier bounded below
    radius = 100.0 * (1.0 + float(np.max(np.abs(x0), initial=0.0)))
    eye = np.hstack([np.eye(n), np.zeros((n, 1))])
    rows += [eye, -eye]
    a_ub = np.vstack(rows)
    b_ub = np.concatenate((b_ub or []) + [np.array([1.0]), x0 + radius, radius - x0])

    cons = cons_hess = None
    if prob.constraints is not None:
        def cons(z):
            val, jac = prob.constraints(z[:n])
            jac = np.hstack([np.asarray(jac, dtype=float), -np.ones((len(val), 1))])
            return np.asarray(val) - z[n], jac

        if prob.constraints_hess is not None:
            def cons_hess(z, w):
                h = np.zeros((n + 1, n + 1))
                h[:n, :n] = prob.constraints_hess(z[:n], w)
                return h

    aux = ConvexProblem(n + 1, obj, a_ub, b_ub, cons, cons_hess)
    z0 = np.append(x0, s0)
    z, _, _, _ = _barrier(aux, z0, opts, 1e-12, 20 * opts.max_iter, stop_below=-1e-7,
                          bound_above=opts.tol_con)
    return z[:n], float(z[n])


def _relaxed(prob: ConvexProblem, delta: float) -> ConvexProblem:
    cons = None
    if prob.constraints is not None:
        def cons(x):
            val, jac = prob.constraints(x)
            return np.asarray(val) - delta, jac
    b_ub = None if prob.b_ub is None else prob.b_ub + delta
    return ConvexProblem(prob.n, prob.objective, prob.a_ub, b_ub, cons, prob.constraints_hess)


def solve_convex(prob: ConvexProblem, start, opts: SolverOptions = DEFAULT_OPTIONS,
                 gap_tol: float | None = None) -> ConvexResult:
    """Barrier method from ``start``; runs a phase-I search when ``start`` is not strictly feasible."""
    x = np.asarray(start, dtype=float).copy()
    if x.shape != (prob.n,):
        raise ValueError(f"start must have shape ({prob.n},)")
    lin, g, _ = _slacks(prob, x)
    if not _strictly_feasible(lin, g):
        if not (np.all(np.isfinite(lin)) and np.all(np.isfinite(g))):
            return ConvexResult(x, Status.INFEASIBLE, math.nan)
        x, worst = _phase_one(prob, x, opts)
        lin, g, _ = _slacks(prob, x)
        if not _strictly_feasible(lin, g):
            if worst > opts.tol_con:
                return ConvexResult(np.asarray(start, dtype=float), Status.INFEASIBLE, math.nan)
            # feasible set without interior: solve a relaxation thinner than tol_con
            prob = _relaxed(prob, max(worst, 0.0) + 0.5 * opts.tol_con)
    gap_tol = opts.tol_con if gap_tol is None else gap_tol
    budget = max(opts.max_iter, 1)
    x, steps, gap, t = _barrier(prob, x, opts, gap_tol, budget)
    f = float(prob.objective(x)[0])
    lin, g, _ = _slacks(prob, x)
    # a tighter internal target may be missed after a round-off rollback; Optimal still
    # certifies the objective to tol_obj
    certified = max(gap_tol, opts.tol_obj) * max(1.0, abs(f))
    status = Status.OPTIMAL if gap <= certified else Status.ITERATION_LIMIT
    return ConvexResult(x, status, f, steps, gap, 1.0 / (t * lin) if lin.size else lin,
                        1.0 / (t * -g) if g.size else g)


# ------------------------------------------------------------------- geometric programs

@dataclass
class Posynomial:
    """sum_j coef[j] * prod_v x_v ** exps[j, v]."""

    coef: np.ndarray
    exps: np.ndarray

    def __post_init__(self):
        self.coef = np.asarray(self.coef, dtype=float).reshape(-1)
        self.exps = np.atleast_2d(np.asarray(self.exps, dtype=float))
        if self.exps.shape[0] != self.coef.size:
            raise ValueError("one exponent row per coefficient")
        if np.any(self.coef <= 0):
            raise ValueError("posynomial coefficients must be positive")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return float(np.sum(self.coef * np.prod(x[None, :] ** self.exps, axis=1)))

    @property
    def is_monomial(self) -> bool:
        return self.coef.size == 1


@dataclass
class GeometricProgram:
    """minimize objective(x) s.t. each constraint posynomial <= 1, x > 0."""

    objective: Posynomial
    constraints: list[Posynomial]

    @property
    def n(self) -> int:
        return self.objective.exps.shape[1]


class _LogSumExpBlock:
    """Stack of log-sum-exp functions sharing one exponent matrix."""

    def __init__(self, posys: list[Posynomial], n: int):
        self.m = len(posys)
        if self.m == 0:
            self.a = np.zeros((0, n))
            self.logc = np.zeros(0)
            self.group = np.zeros(0, dtype=np.int64)
            self.starts = np.zeros(0, dtype=np.int64)
            return
        self.a = np.vstack([p.exps for p in posys])
        self.logc = np.concatenate([np.log(p.coef) for p in posys])
        sizes = np.array([p.coef.size for p in posys])
        self.starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        self.group = np.repeat(np.arange(self.m), sizes)

    def values(self, y):
        # the barrier asks for values, Jacobian and Hessian at the same point in turn
        key = y.tobytes()
        if key == getattr(self, "_key", None):
            return self._last
        out = self._values(y)
        self._key, self._last = key, out
        return out

    def _values(self, y):
        z = self.a @ y + self.logc
        zmax = np.maximum.reduceat(z, self.starts)
        ez = np.exp(z - zmax[self.group])
        sums = np.add.reduceat(ez, self.starts)
        w = ez / sums[self.group]
        vals = zmax + np.log(sums)
        jac = np.add.reduceat(w[:, None] * self.a, self.starts, axis=0)
        return vals, jac, w

    def hess(self, y, mult):
        _, jac, w = self.values(y)
        tw = mult[self.group] * w
        return (self.a.T * tw) @ self.a - (jac.T * mult) @ jac


def solve_gp(gp: GeometricProgram, opts: SolverOptions = DEFAULT_OPTIONS, start=None,
             gap_tol: float | None = None):
    """Solve a GP through its log-transformed convex form. Returns (x, status, objective)."""
    n = gp.n
    obj_block = _LogSumExpBlock([gp.objective], n)
    lin_obj = gp.objective.is_monomial

    def objective(y):
        vals, jac, _ = obj_block.values(y)
        if lin_obj:
            return float(vals[0]), jac[0], np.zeros((n, n))
        return float(vals[0]), jac[0], obj_block.hess(y, np.ones(1))

    # monomial constraints are affine in log space
    mono = [p for p in gp.constraints if p.is_monomial]
    poly = [p for p in gp.constraints if not p.is_monomial]
    a_ub = b_ub = None
    if mono:
        a_ub = np.vstack([p.exps for p in mono])
        b_ub = -np.log(np.array([p.coef[0] for p in mono]))
    con_block = _LogSumExpBlock(poly, n)
    cons = cons_hess = None
    if poly:
        def cons(y):
            vals, jac, _ = con_block.values(y)
            return vals, jac

        def cons_hess(y, w):
            return con_block.hess(y, w)

    prob = ConvexProblem(n, objective, a_ub, b_ub, cons, cons_hess)
    y0 = np.zeros(n) if start is None else np.log(np.asarray(start, dtype=float))
    res = solve_convex(prob, y0, opts, gap_tol=gap_tol)
    if res.status is Status.INFEASIBLE:
        return None, Status.INFEASIBLE, None
    x = np.exp(res.x)
    return x, res.status, gp.objective(x)


# -------------------------------------------------------------------------- bisection

def log_gap(z):
    """ln(1 + z) - z / (1 + z): increasing on z >= 0 with value 0 at 0."""
    z = np.asarray(z, dtype=float)
    out = np.log1p(z) - z / (1.0 + z)
    return float(out) if out.ndim == 0 else out


def bisect_root(f: Callable[[float], float], b: float, opts: SolverOptions = DEFAULT_OPTIONS,
                max_iter: int = 2000) -> float:
    """Root of f(z) = b for increasing f with f(0) = 0; bracket grows from [0, 1]."""
    if b < 0:
        raise ValueError("target must be nonnegative")
    if b == 0:
        return 0.0
    lo, hi = 0.0, 1.0
    while f(hi) < b:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise ValueError("bracket growth overflowed; f may be bounded")
    mid = 0.5 * (lo + hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        val = f(mid)
        if abs(val - b) <= opts.tol_con or hi - lo <= 4e-16 * max(1.0, hi):
            break
        if val < b:
            lo = mid
        else:
            hi = mid
    return mid


# ------------------------------------------------------------------------ feasibility

@dataclass(frozen=True)
class FeasibilityReport:
    max_energy_violation: float  # J
    max_threshold_violation: float  # linear SINR
    max_box_violation: float
    feasible: bool
    scaled_energy_violation: float = 0.0
    scaled_threshold_violation: float = 0.0


def check_feasible(inst: NetworkInstance, alloc: Allocation, scheme=Scheme.SICD,
                   opts: SolverOptions = DEFAULT_OPTIONS, order=None) -> FeasibilityReport:
    """Worst violation of energy causality, decoding thresholds and box bounds."""
    tau0, e = alloc.tau0, alloc.e
    if e.shape != inst.g.shape:
        raise ValueError("allocation shape does not match instance")
    harvested = np.cumsum(inst.gamma * tau0[None, :], axis=1)
    used = np.cumsum(e, axis=1)
    energy = float(np.max(used - harvested))
    energy_scale = float(np.max(harvested, initial=0.0)) or float(np.max(inst.gamma))
    box = float(max(np.max(-tau0), np.max(tau0 - 1.0), np.max(-e) / energy_scale))
    u = 1.0 - tau0
    bad_slot = (u <= 0) & np.any(e > 0, axis=0)
    if np.any(bad_slot):
        x = np.zeros_like(e)
    elif Scheme(scheme) is Scheme.LCD:
        x = sinr_lcd(inst, Allocation(np.clip(tau0, 0, 1), np.maximum(e, 0)))
    else:
        x = sinr_sicd(inst, Allocation(np.clip(tau0, 0, 1), np.maximum(e, 0)), order)
    thr = float(np.max(inst.s_th[:, None] - x))
    scaled_thr = float(np.max((inst.s_th[:, None] - x) / np.maximum(inst.s_th[:, None], 1.0)))
    scaled_energy = energy / energy_scale
    feasible = (scaled_energy <= opts.tol_con and scaled_thr <= opts.tol_con
                and box <= opts.tol_con)
    return FeasibilityReport(max(energy, 0.0), max(thr, 0.0), max(box, 0.0), feasible,
                             max(scaled_energy, 0.0), max(scaled_thr, 0.0))
