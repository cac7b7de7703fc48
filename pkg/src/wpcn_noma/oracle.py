"""Brute-force and numerical checking tools: lattice search, finite differences, concavity probes."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import NetworkInstance
from .throughput import Allocation, Scheme, Solution, Status, decoding_orders, make_solution

MAX_POINTS = 10 ** 8


class Objective(str, enum.Enum):
    MAX_SUM = "MaxSum"
    MAX_MIN = "MaxMin"


@dataclass(frozen=True)
class GridSpec:
    """Lattice resolution. Energies are fractions of each user's still-unspent harvest.

    With ``refine`` a pass at ``coarse_step`` is followed by a pass at the fine steps
    over a window of ``window`` coarse cells around the best coarse point.
    """

    tau0_step: float = 1e-3
    e_step: float = 1e-3
    objective: Objective = Objective.MAX_SUM
    scheme: Scheme = Scheme.SICD
    refine: bool = True
    coarse_step: float = 1e-2
    window: int = 2

    def __post_init__(self):
        for name in ("tau0_step", "e_step", "coarse_step"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        object.__setattr__(self, "objective", Objective(self.objective))
        object.__setattr__(self, "scheme", Scheme(self.scheme))


def _axis(step, lo=0.0, hi=1.0):
    n = int(round((hi - lo) / step))
    pts = lo + step * np.arange(n + 1)
    pts[-1] = hi
    return np.unique(np.clip(pts, 0.0, 1.0))


def _pack(axes):
    counts = np.array([a.size for a in axes], dtype=np.int64)
    values = np.zeros((len(axes), int(counts.max())))
    for v, a in enumerate(axes):
        values[v, : a.size] = a
    return values, counts


def _guard(counts):
    total = 1
    for c in counts:
        total *= int(c)
        if total > MAX_POINTS:
            raise ValueError(f"grid has more than {MAX_POINTS:.0e} points; coarsen the steps")
    return total


def _run(inst: NetworkInstance, spec: GridSpec, axes):
    values, counts = _pack(axes)
    _guard(counts)
    scheme = 1 if spec.scheme is Scheme.SICD else 0
    objective = 0 if spec.objective is Objective.MAX_SUM else 1
    order = decoding_orders(inst).astype(np.int64)
    best, digits, n_ok = _kernels.grid_search(
        values, counts, inst.k, inst.t, np.ascontiguousarray(inst.gamma, dtype=float),
        np.ascontiguousarray(inst.g, dtype=float), float(inst.noise_power),
        np.ascontiguousarray(inst.s_th, dtype=float), scheme, order, objective)
    point = np.array([values[v, digits[v]] for v in range(len(axes))])
    return best, point, n_ok


def _allocation(inst: NetworkInstance, point) -> Allocation:
    t, k = inst.t, inst.k
    tau = point[:t]
    frac = point[t:].reshape(k, t)
    e = np.zeros((k, t))
    harvested = np.zeros(k)
    used = np.zeros(k)
    for s in range(t):
        harvested += inst.gamma[:, s] * tau[s]
        e[:, s] = frac[:, s] * np.maximum(harvested - used, 0.0)
        used += e[:, s]
    return Allocation(tau, e)


def grid_search(inst: NetworkInstance, spec: GridSpec = GridSpec()) -> Solution:
    """Exhaustive lattice optimum over tau0 and energy fractions."""
    nvar = inst.t + inst.k * inst.t
    steps = [spec.tau0_step] * inst.t + [spec.e_step] * (inst.k * inst.t)
    if spec.refine and spec.coarse_step > max(steps):
        coarse = [_axis(spec.coarse_step) for _ in range(nvar)]
        best, point, n_ok = _run(inst, spec, coarse)
        if n_ok == 0:
            return Solution.infeasible(spec.scheme, info={"points_feasible": 0})
        half = spec.window * spec.coarse_step
        fine = [_axis(st, max(0.0, c - half), min(1.0, c + half)) for st, c in zip(steps, point)]
        best_f, point_f, n_f = _run(inst, spec, fine)
        if n_f and best_f >= best:
            best, point = best_f, point_f
        passes = 2
    else:
        best, point, n_ok = _run(inst, spec, [_axis(st) for st in steps])
        if n_ok == 0:
            return Solution.infeasible(spec.scheme, info={"points_feasible": 0})
        passes = 1
    alloc = _allocation(inst, point)
    return make_solution(inst, alloc, spec.scheme, float(best), Status.APPROXIMATE,
                         info={"point": point, "passes": passes})


# --------------------------------------------------------------- differences

def _steps(x, eps):
    if eps is None:
        return 1e-6 * (1.0 + np.abs(x))
    return np.broadcast_to(np.asarray(eps, dtype=float), x.shape).copy()


def finite_diff_gradient(fn, point, eps=None) -> np.ndarray:
    """Central-difference gradient; default step 1e-6 * (1 + |x_i|)."""
    x = np.asarray(point, dtype=float)
    h = _steps(x, eps)
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h[i]
        grad[i] = (fn(x + e) - fn(x - e)) / (2.0 * h[i])
    return grad


def finite_diff_hessian(fn, point, eps=None) -> np.ndarray:
    x = np.asarray(point, dtype=float)
    h = _steps(x, eps) if eps is not None else 1e-4 * (1.0 + np.abs(x))
    n = x.size
    hess = np.empty((n, n))
    f0 = fn(x)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h[i]
        hess[i, i] = (fn(x + ei) - 2.0 * f0 + fn(x - ei)) / h[i] ** 2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h[j]
            v = (fn(x + ei + ej) - fn(x + ei - ej) - fn(x - ei + ej) + fn(x - ei - ej))
            hess[i, j] = hess[j, i] = v / (4.0 * h[i] * h[j])
    return hess


# ------------------------------------------------------------------- probes

@dataclass(frozen=True)
class ConcavityReport:
    trials: int
    max_violation: float  # max of (f(a) + f(b))/2 - f(midpoint), scaled by max(1, |f(mid)|)
    worst_pair: tuple | None = None
    max_hessian_eig: float | None = None  # scaled largest eigenvalue of FD Hessians
    tol: float = 1e-12  # round-off allowance for the midpoint test

    @property
    def concave(self) -> bool:
        return self.max_violation <= self.tol


def concavity_probe(fn, sampler, trials: int, rng=None, hessian_trials: int = 0) -> ConcavityReport:
    """Midpoint test on sampled pairs, optionally with finite-difference Hessian eigenvalues.

    ``sampler(rng)`` returns one point of the domain.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(rng)
    worst, pair = 0.0, None
    for _ in range(trials):
        a, b = np.asarray(sampler(rng)), np.asarray(sampler(rng))
        fm = fn(0.5 * (a + b))
        gap = 0.5 * (fn(a) + fn(b)) - fm
        gap /= max(1.0, abs(fm))
        if gap > worst:
            worst, pair = gap, (a, b)
    eig = None
    if hessian_trials:
        eig = -np.inf
        for _ in range(hessian_trials):
            x = np.asarray(sampler(rng))
            h = finite_diff_hessian(fn, x)
            scale = max(1.0, float(np.max(np.abs(h))))
            eig = max(eig, float(np.linalg.eigvalsh(0.5 * (h + h.T)).max()) / scale)
    return ConcavityReport(trials, worst, pair, eig)


def monotonicity_probe(fn, low: float, high: float, pairs: int, rng=None, log_scale=False) -> int:
    """Count sampled pairs x < y with fn(x) >= fn(y); ``fn`` must accept arrays.

    Zero means fn was strictly increasing on every sampled pair.
    """
    rng = np.random.default_rng(rng)
    if log_scale:
        draw = np.exp(rng.uniform(np.log(low), np.log(high), size=(2, pairs)))
    else:
        draw = rng.uniform(low, high, size=(2, pairs))
    x, y = np.sort(draw, axis=0)
    distinct = x < y
    return int(np.count_nonzero(distinct & ~(fn(x) < fn(y))))
