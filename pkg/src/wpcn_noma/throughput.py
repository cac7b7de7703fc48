"""SINRs, rates, the order-free SIC sum rate, decoding order and Jain's index."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import NetworkInstance

LOG2 = np.log(2.0)


class Scheme(str, enum.Enum):
    LCD = "LCD"
    SICD = "SICD"


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    APPROXIMATE = "Approximate"
    INFEASIBLE = "Infeasible"
    ITERATION_LIMIT = "IterationLimit"


@dataclass(frozen=True, eq=False)
class Allocation:
    tau0: np.ndarray  # (T,) harvesting fraction per slot
    e: np.ndarray  # (K, T) consumed energy, J

    def __post_init__(self):
        tau0 = np.array(self.tau0, dtype=float).reshape(-1)
        e = np.array(self.e, dtype=float)
        if e.ndim == 1:
            e = e[:, None]
        if e.ndim != 2 or e.shape[1] != tau0.shape[0]:
            raise ValueError("e must be (K, T) with T == len(tau0)")
        tau0.setflags(write=False)
        e.setflags(write=False)
        object.__setattr__(self, "tau0", tau0)
        object.__setattr__(self, "e", e)

    @classmethod
    def zeros(cls, k: int, t: int) -> "Allocation":
        return cls(np.zeros(t), np.zeros((k, t)))


@dataclass(frozen=True, eq=False)
class Solution:
    alloc: Allocation | None
    sinr: np.ndarray | None
    rates: np.ndarray | None  # (K, T) bits/slot/Hz
    objective: float | None
    status: Status
    scheme: Scheme | None = None
    iterations: int = 0
    history: tuple = ()
    info: dict | None = None

    @property
    def feasible(self) -> bool:
        return self.status is not Status.INFEASIBLE

    @property
    def sum_rate(self) -> float:
        return float(self.rates.sum()) if self.rates is not None else float("nan")

    @property
    def min_rate(self) -> float:
        return float(self.rates.min()) if self.rates is not None else float("nan")

    @property
    def user_totals(self) -> np.ndarray:
        return self.rates.sum(axis=1)

    @classmethod
    def infeasible(cls, scheme=None, info=None) -> "Solution":
        return cls(None, None, None, None, Status.INFEASIBLE, scheme=scheme, info=info)


def _check_shapes(inst: NetworkInstance, alloc: Allocation):
    if alloc.e.shape != inst.g.shape:
        raise ValueError(f"allocation shape {alloc.e.shape} does not match instance {inst.g.shape}")


def _transmit_time(inst, alloc):
    u = 1.0 - alloc.tau0
    if np.any((u <= 0) & np.any(alloc.e > 0, axis=0)):
        raise ValueError("positive energy in a slot with zero transmit time")
    return u


def sinr_lcd(inst: NetworkInstance, alloc: Allocation) -> np.ndarray:
    """SINR with every other user treated as noise."""
    _check_shapes(inst, alloc)
    u = _transmit_time(inst, alloc)
    p = inst.g * alloc.e
    return _kernels.sinr_lcd(p, inst.noise_power * u)


def _validate_order(order, k, t) -> np.ndarray:
    order = np.asarray(order)
    if order.ndim == 1:
        order = np.broadcast_to(order, (t, order.shape[0]))
    if order.shape != (t, k):
        raise ValueError(f"order must have shape (T, K) = {(t, k)}")
    ref = np.arange(k)
    for row in order:
        if not np.array_equal(np.sort(row), ref):
            raise ValueError(f"invalid permutation {row}")
    return np.ascontiguousarray(order, dtype=np.int64)


def sinr_sicd(inst: NetworkInstance, alloc: Allocation, order=None) -> np.ndarray:
    """SINR under successive cancellation; ``order[t]`` lists users first-decoded first.

    Defaults to strongest-first ordering per slot.
    """
    _check_shapes(inst, alloc)
    if order is None:
        order = decoding_orders(inst)
    order = _validate_order(order, inst.k, inst.t)
    u = _transmit_time(inst, alloc)
    p = inst.g * alloc.e
    return _kernels.sinr_sicd(p, inst.noise_power * u, order)


def user_rate(tau0_t, x):
    """(1 - tau0) * log2(1 + x)."""
    tau0_t = np.asarray(tau0_t, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(tau0_t < 0) or np.any(tau0_t > 1):
        raise ValueError("tau0 must lie in [0, 1]")
    if np.any(x < 0):
        raise ValueError("SINR must be nonnegative")
    out = (1.0 - tau0_t) * np.log2(1.0 + x)
    return float(out) if out.ndim == 0 else out


def rates(inst: NetworkInstance, alloc: Allocation, scheme: Scheme, order=None) -> tuple[np.ndarray, np.ndarray]:
    """(sinr, rates) matrices for the given decoder."""
    x = sinr_lcd(inst, alloc) if Scheme(scheme) is Scheme.LCD else sinr_sicd(inst, alloc, order)
    return x, (1.0 - alloc.tau0)[None, :] * np.log2(1.0 + x)


def sum_rate_sicd_closed(inst: NetworkInstance, alloc: Allocation, t: int) -> float:
    """Slot-``t`` SIC sum rate, independent of decoding order."""
    _check_shapes(inst, alloc)
    u = 1.0 - alloc.tau0[t]
    s = float(inst.g[:, t] @ alloc.e[:, t])
    if s == 0.0:
        return 0.0
    if u <= 0:
        raise ValueError("positive energy in a slot with zero transmit time")
    return u * np.log2(1.0 + s / (inst.noise_power * u))


def decoding_order(inst: NetworkInstance, t: int) -> np.ndarray:
    """Users by descending UL gain in slot ``t``; ties keep ascending index."""
    return np.argsort(-inst.g[:, t], kind="stable")


def decoding_orders(inst: NetworkInstance) -> np.ndarray:
    return np.stack([decoding_order(inst, t) for t in range(inst.t)])


def jain_index(throughputs) -> float:
    x = np.asarray(throughputs, dtype=float).reshape(-1)
    if np.any(x < 0):
        raise ValueError("throughputs must be nonnegative")
    denom = x.size * float(np.sum(x * x))
    if denom == 0.0:
        raise ValueError("Jain's index is undefined for an all-zero vector")
    return float(np.sum(x)) ** 2 / denom


def make_solution(inst, alloc, scheme, objective, status, order=None, **extra) -> Solution:
    x, r = rates(inst, alloc, scheme, order)
    return Solution(alloc, x, r, objective, Status(status), scheme=Scheme(scheme), **extra)
