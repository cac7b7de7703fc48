"""Network instances: node placement, channel gains and harvesting rates."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def dbm_to_watt(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


@dataclass(frozen=True)
class PhysicalConfig:
    """Physical-layer parameters. Defaults follow the reference simulation setup."""

    p_b: float = 3.0  # ER transmit power, W
    eta: float = 0.49  # harvesting efficiency
    noise_density: float = -155.0  # dBm/Hz
    bandwidth: float = 1e6  # Hz
    f_c: float = 915e6  # Hz
    g_r: float = 6.0  # receive antenna gain, dB
    cell_radius: float = 10.0  # m
    s_th_db: float | None = -10.0  # decoding threshold; None means no threshold
    min_distance: float = 1.0  # m, floor applied before evaluating path loss
    fading: bool = False  # per-slot Rayleigh power fading on top of path loss

    def __post_init__(self):
        if self.p_b <= 0:
            raise ValueError("p_b must be positive")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must lie in (0, 1]")
        if self.bandwidth <= 0 or self.f_c <= 0:
            raise ValueError("bandwidth and f_c must be positive")
        if self.cell_radius <= 0:
            raise ValueError("cell_radius must be positive")
        if self.min_distance <= 0:
            raise ValueError("min_distance must be positive")

    @property
    def noise_power(self) -> float:
        """Noise power over the whole band, in watts."""
        return float(dbm_to_watt(self.noise_density + 10.0 * math.log10(self.bandwidth)))

    @property
    def s_th_linear(self) -> float:
        return 0.0 if self.s_th_db is None else float(db_to_linear(self.s_th_db))

    def replace(self, **changes) -> "PhysicalConfig":
        return dataclasses.replace(self, **changes)


def _parse_scalar(text: str):
    low = text.strip().lower()
    if low in ("none", "off", "-inf"):
        return None
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no"):
        return False
    return float(text)


def parse_key_values(text: str, source: str = "<string>") -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment. Raises with line numbers."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ValueError(f"{source}:{lineno}: empty key or value")
        out[key] = value
    return out


PHYSICAL_KEYS = {f.name for f in dataclasses.fields(PhysicalConfig)}


def physical_from_mapping(values: dict[str, str], source: str = "<string>") -> PhysicalConfig:
    kwargs = {}
    for key, value in values.items():
        if key not in PHYSICAL_KEYS:
            continue
        try:
            parsed = _parse_scalar(value)
        except ValueError as exc:
            raise ValueError(f"{source}: bad value for {key}: {value!r}") from exc
        if key == "fading":
            parsed = bool(parsed)
        kwargs[key] = parsed
    return PhysicalConfig(**kwargs)


def load_physical_config(path) -> PhysicalConfig:
    """Read a PhysicalConfig from a key/value file; missing keys keep defaults."""
    path = Path(path)
    values = parse_key_values(path.read_text(), source=str(path))
    unknown = [k for k in values if k not in PHYSICAL_KEYS]
    if unknown:
        raise ValueError(f"{path}: unknown keys {unknown}")
    return physical_from_mapping(values, source=str(path))


def uplink_gain(d):
    """UL power gain ``1e-3 * d**-2``."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    out = 1e-3 * d ** -2.0
    return float(out) if out.ndim == 0 else out


def downlink_gain(d, f_c: float = 915e6, g_r: float = 6.0):
    """Free-space (Friis) DL power gain with receive antenna gain ``g_r`` in dB."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    if f_c <= 0:
        raise ValueError("f_c must be positive")
    out = 10.0 ** (g_r / 10.0) * (SPEED_OF_LIGHT / (4.0 * math.pi * f_c * d)) ** 2
    return float(out) if out.ndim == 0 else out


def harvest_rate(eta, h, p_b):
    """Harvested power per unit harvesting time, ``eta * h * p_b``."""
    eta_arr = np.asarray(eta, dtype=float)
    if np.any(eta_arr <= 0) or np.any(eta_arr > 1):
        raise ValueError("eta must lie in (0, 1]")
    if np.any(np.asarray(h) <= 0):
        raise ValueError("channel gain must be positive")
    if np.any(np.asarray(p_b) <= 0):
        raise ValueError("p_b must be positive")
    out = eta_arr * np.asarray(h, dtype=float) * np.asarray(p_b, dtype=float)
    return float(out) if out.ndim == 0 else out


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class NetworkInstance:
    """Fixed data of one optimization problem (K users, T slots)."""

    g: np.ndarray  # (K, T) UL power gains
    gamma: np.ndarray  # (K, T) harvested power per unit harvesting time, W
    noise_power: float
    s_th: np.ndarray  # (K,) linear SINR thresholds
    h: np.ndarray  # (K, T) DL power gains
    eta: np.ndarray  # (K,)
    p_b: float
    d_er_ap: float = 0.0
    positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        for name in ("g", "gamma", "h", "s_th", "eta", "positions"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.g.ndim != 2 or self.g.shape[0] < 1 or self.g.shape[1] < 1:
            raise ValueError("g must be a non-empty (K, T) matrix")
        if self.gamma.shape != self.g.shape or self.h.shape != self.g.shape:
            raise ValueError("g, gamma and h must share shape (K, T)")
        if self.s_th.shape != (self.k,) or self.eta.shape != (self.k,):
            raise ValueError("s_th and eta must have length K")
        if np.any(self.g <= 0) or np.any(self.gamma <= 0):
            raise ValueError("g and gamma must be strictly positive")
        if self.noise_power <= 0:
            raise ValueError("noise_power must be positive")
        if np.any(self.s_th < 0):
            raise ValueError("thresholds must be nonnegative")

    @property
    def k(self) -> int:
        return self.g.shape[0]

    @property
    def t(self) -> int:
        return self.g.shape[1]

    @classmethod
    def from_gains(cls, g, gamma, noise_power, s_th=0.0, d_er_ap=0.0, p_b=1.0, eta=1.0):
        """Build directly from gain matrices; ``h`` is backed out of ``gamma``."""
        g = np.atleast_2d(np.asarray(g, dtype=float))
        gamma = np.broadcast_to(np.asarray(gamma, dtype=float), g.shape)
        k = g.shape[0]
        eta = np.broadcast_to(np.asarray(eta, dtype=float), (k,))
        s_th = np.broadcast_to(np.asarray(s_th, dtype=float), (k,))
        h = gamma / (eta[:, None] * p_b)
        return cls(g=g, gamma=gamma, noise_power=float(noise_power), s_th=s_th, h=h,
                   eta=eta, p_b=float(p_b), d_er_ap=float(d_er_ap))

    def with_threshold(self, s_th) -> "NetworkInstance":
        s = np.broadcast_to(np.asarray(s_th, dtype=float), (self.k,))
        return dataclasses.replace(self, s_th=s)

    def replace(self, **changes) -> "NetworkInstance":
        return dataclasses.replace(self, **changes)

    def distances(self) -> tuple[np.ndarray, np.ndarray]:
        """(d_U-ER, d_U-AP) from stored positions; ER at origin, AP at (d_er_ap, 0)."""
        p = self.positions
        d_er = np.hypot(p[:, 0], p[:, 1])
        d_ap = np.hypot(p[:, 0] - self.d_er_ap, p[:, 1])
        return d_er, d_ap


def build_network(cfg: PhysicalConfig, k: int, t: int, d_er_ap: float, seed: int) -> NetworkInstance:
    """Place ``k`` users uniformly in the disc around the ER and derive all gains."""
    if k < 1 or t < 1:
        raise ValueError("k and t must be at least 1")
    if d_er_ap < 0:
        raise ValueError("d_er_ap must be nonnegative")
    if cfg.cell_radius <= 0:
        raise ValueError("cell_radius must be positive")
    rng = np.random.default_rng(seed)
    radius = cfg.cell_radius * np.sqrt(rng.random(k))
    angle = 2.0 * np.pi * rng.random(k)
    positions = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
    d_er = radius
    d_ap = np.hypot(positions[:, 0] - d_er_ap, positions[:, 1])

    h = downlink_gain(np.maximum(d_er, cfg.min_distance), cfg.f_c, cfg.g_r)
    g = uplink_gain(np.maximum(d_ap, cfg.min_distance))
    h = np.repeat(np.atleast_1d(h)[:, None], t, axis=1)
    g = np.repeat(np.atleast_1d(g)[:, None], t, axis=1)
    if cfg.fading:
        h = h * rng.exponential(1.0, size=(k, t))
        g = g * rng.exponential(1.0, size=(k, t))
    eta = np.full(k, cfg.eta)
    gamma = harvest_rate(eta[:, None], h, cfg.p_b)
    s_th = np.full(k, cfg.s_th_linear)
    return NetworkInstance(g=g, gamma=gamma, noise_power=cfg.noise_power, s_th=s_th, h=h,
                           eta=eta, p_b=cfg.p_b, d_er_ap=float(d_er_ap), positions=positions)
