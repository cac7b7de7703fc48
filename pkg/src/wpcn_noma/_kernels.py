"""Hot loops, each with a numba version and a numpy twin.

The public names at the bottom resolve to one or the other via ``_accel.pick``.
Both variants are importable directly (``*_nb`` / ``*_np``) for tests and benchmarks.
"""
import math

import numpy as np

from ._accel import njit, pick

LN2 = math.log(2.0)


# --------------------------------------------------------------------------- SINR

@njit
def sinr_lcd_nb(p, noise_u):
    k, t = p.shape
    out = np.zeros((k, t))
    for s in range(t):
        total = 0.0
        for i in range(k):
            total += p[i, s]
        for i in range(k):
            if p[i, s] > 0.0:
                out[i, s] = p[i, s] / (noise_u[s] + total - p[i, s])
    return out


def sinr_lcd_np(p, noise_u):
    p = np.asarray(p, dtype=float)
    interf = p.sum(axis=0, keepdims=True) - p
    den = np.asarray(noise_u, dtype=float)[None, :] + interf
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(p > 0, p / np.where(den > 0, den, 1.0), 0.0)
    return out


@njit
def sinr_sicd_nb(p, noise_u, order):
    k, t = p.shape
    out = np.zeros((k, t))
    for s in range(t):
        residual = 0.0
        for pos in range(k - 1, -1, -1):
            i = order[s, pos]
            if p[i, s] > 0.0:
                out[i, s] = p[i, s] / (noise_u[s] + residual)
            residual += p[i, s]
    return out


def sinr_sicd_np(p, noise_u, order):
    p = np.asarray(p, dtype=float)
    k, t = p.shape
    cols = np.arange(t)[:, None]
    p_ord = p.T[cols, order]  # (T, K) in decoding order
    later = np.cumsum(p_ord[:, ::-1], axis=1)[:, ::-1] - p_ord
    den = np.asarray(noise_u, dtype=float)[:, None] + later
    with np.errstate(divide="ignore", invalid="ignore"):
        x_ord = np.where(p_ord > 0, p_ord / np.where(den > 0, den, 1.0), 0.0)
    out = np.zeros((t, k))
    out[cols, order] = x_ord
    return out.T.copy()


# ------------------------------------------------------------ root of f(z) = b

@njit
def log_gap_root_nb(b, tol):
    n = b.shape[0]
    out = np.zeros(n)
    for m in range(n):
        target = b[m]
        if target <= 0.0:
            continue
        hi = 1.0
        while math.log1p(hi) - hi / (1.0 + hi) < target:
            hi *= 2.0
        lo = 0.0
        for _ in range(400):
            mid = 0.5 * (lo + hi)
            if math.log1p(mid) - mid / (1.0 + mid) < target:
                lo = mid
            else:
                hi = mid
            if hi - lo <= tol * (1.0 + hi):
                break
        out[m] = 0.5 * (lo + hi)
    return out


def log_gap_root_np(b, tol):
    b = np.asarray(b, dtype=float)
    f = lambda z: np.log1p(z) - z / (1.0 + z)
    hi = np.ones_like(b)
    grow = f(hi) < b
    while np.any(grow):
        hi = np.where(grow, 2.0 * hi, hi)
        grow = f(hi) < b
    lo = np.zeros_like(b)
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        below = f(mid) < b
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= tol * (1.0 + hi)):
            break
    return np.where(b > 0, 0.5 * (lo + hi), 0.0)


# ------------------------------------------------------------------ grid search

@njit
def grid_search_nb(values, counts, k, t, gamma, g, noise, s_th, scheme, order, objective):
    """Exhaustive lattice scan.

    ``values`` is (V, nmax) with V = T + K*T: first T rows are tau0 per slot, then
    energy fractions of the user's still-unspent budget in (user, slot) order.
    Returns (best objective, best digit vector, feasible point count).
    """
    nvar = counts.shape[0]
    total = 1
    for v in range(nvar):
        total *= counts[v]
    digits = np.zeros(nvar, dtype=np.int64)
    best_digits = np.zeros(nvar, dtype=np.int64)
    best = -1.0
    found = False
    n_feasible = 0
    e = np.zeros((k, t))
    p = np.zeros(k)
    for _ in range(total):
        ok = True
        obj = 0.0 if objective == 0 else 1e300
        for i in range(k):
            harvested = 0.0
            used = 0.0
            for s in range(t):
                harvested += gamma[i, s] * values[s, digits[s]]
                frac = values[t + i * t + s, digits[t + i * t + s]]
                avail = harvested - used
                if avail < 0.0:
                    avail = 0.0
                e[i, s] = frac * avail
                used += e[i, s]
        for s in range(t):
            u = 1.0 - values[s, digits[s]]
            total_p = 0.0
            for i in range(k):
                p[i] = g[i, s] * e[i, s]
                total_p += p[i]
            residual = 0.0
            for pos in range(k - 1, -1, -1):
                i = order[s, pos] if scheme == 1 else pos
                if scheme == 1:
                    interf = residual
                else:
                    interf = total_p - p[i]
                x = 0.0
                if p[i] > 0.0 and u > 0.0:
                    x = p[i] / (noise * u + interf)
                residual += p[i]
                if x < s_th[i] * (1.0 - 1e-12):
                    ok = False
                    break
                r = u * math.log1p(x) / LN2 if u > 0.0 else 0.0
                if objective == 0:
                    obj += r
                elif r < obj:
                    obj = r
            if not ok:
                break
        if ok:
            n_feasible += 1
            if (not found) or obj > best:
                best = obj
                found = True
                for v in range(nvar):
                    best_digits[v] = digits[v]
        # advance mixed-radix counter
        for v in range(nvar - 1, -1, -1):
            digits[v] += 1
            if digits[v] < counts[v]:
                break
            digits[v] = 0
    return best, best_digits, n_feasible


def grid_search_np(values, counts, k, t, gamma, g, noise, s_th, scheme, order, objective,
                   chunk=1 << 16):
    nvar = counts.shape[0]
    total = int(np.prod(counts))
    radix = np.ones(nvar, dtype=np.int64)
    for v in range(nvar - 2, -1, -1):
        radix[v] = radix[v + 1] * counts[v + 1]
    best = -1.0
    best_idx = -1
    n_feasible = 0
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        digits = (idx[:, None] // radix[None, :]) % counts[None, :]
        vals = values[np.arange(nvar)[None, :], digits]  # (n, V)
        tau = vals[:, :t]
        frac = vals[:, t:].reshape(-1, k, t)
        e = np.zeros_like(frac)
        used = np.zeros((idx.size, k))
        harvested = np.zeros((idx.size, k))
        for s in range(t):
            harvested += gamma[None, :, s] * tau[:, s, None]
            e[:, :, s] = frac[:, :, s] * np.maximum(harvested - used, 0.0)
            used += e[:, :, s]
        u = 1.0 - tau
        p = g[None, :, :] * e
        if scheme == 1:
            cols = np.arange(t)[:, None]
            p_ord = np.transpose(p, (0, 2, 1))[:, cols, order]  # (n, T, K)
            later = np.cumsum(p_ord[:, :, ::-1], axis=2)[:, :, ::-1] - p_ord
            interf_ord = later
            interf = np.empty_like(p_ord)
            interf[:, cols, order] = interf_ord
            interf = np.transpose(interf, (0, 2, 1))
        else:
            interf = p.sum(axis=1, keepdims=True) - p
        den = noise * u[:, None, :] + interf
        with np.errstate(divide="ignore", invalid="ignore"):
            x = np.where((p > 0) & (u[:, None, :] > 0), p / np.where(den > 0, den, 1.0), 0.0)
        ok = np.all(x >= s_th[None, :, None] * (1.0 - 1e-12), axis=(1, 2))
        r = np.where(u[:, None, :] > 0, u[:, None, :] * np.log1p(x) / LN2, 0.0)
        obj = r.sum(axis=(1, 2)) if objective == 0 else r.min(axis=(1, 2))
        n_feasible += int(ok.sum())
        if np.any(ok):
            cand = np.where(ok, obj, -np.inf)
            j = int(np.argmax(cand))  # first maximum, matches the loop kernel
            if best_idx < 0 or cand[j] > best:
                best = float(cand[j])
                best_idx = int(idx[j])
    best_digits = np.zeros(nvar, dtype=np.int64)
    if best_idx >= 0:
        best_digits = (best_idx // radix) % counts
    return best, best_digits, n_feasible


sinr_lcd = pick(sinr_lcd_nb, sinr_lcd_np)
sinr_sicd = pick(sinr_sicd_nb, sinr_sicd_np)
log_gap_root = pick(log_gap_root_nb, log_gap_root_np)
grid_search = pick(grid_search_nb, grid_search_np)
