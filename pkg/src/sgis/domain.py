"""Core value types: parameter spaces, settings, KPIs, sessions, policies, configs."""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field, fields
from typing import Optional, Sequence, Tuple

import numpy as np

KPI_NAMES: Tuple[str, ...] = ("rpm", "clicks", "iy", "revenue")


class ConstructionError(ValueError):
    """Raised when a value type is built from inconsistent inputs."""


@dataclass(frozen=True)
class ParameterSpace:
    """Box-bounded space of tunable parameters."""

    bounds: Tuple[Tuple[float, float], ...]
    names: Tuple[str, ...] = ()

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        names = tuple(self.names) if self.names else tuple(f"p{j}" for j in range(len(bounds)))
        if len(bounds) < 1:
            raise ConstructionError("a parameter space needs at least one dimension")
        if len(names) != len(bounds):
            raise ConstructionError(f"{len(names)} names for {len(bounds)} dimensions")
        for name, (lo, hi) in zip(names, bounds):
            if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
                raise ConstructionError(f"dimension {name!r} has invalid bounds ({lo}, {hi})")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "names", names)

    @property
    def dims(self) -> int:
        return len(self.bounds)

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.bounds])

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.bounds])

    def contains(self, values: Sequence[float]) -> bool:
        return len(values) == self.dims and all(
            lo <= v <= hi for v, (lo, hi) in zip(values, self.bounds)
        )


@dataclass(frozen=True, order=True)
class Setting:
    """A point of a :class:`ParameterSpace`. Build through :func:`make_setting`."""

    values: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def __len__(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.array(self.values, dtype=float)


def make_setting(space: ParameterSpace, values: Sequence[float]) -> Tuple[Setting, bool]:
    """Project ``values`` into ``space``.

    Returns the setting and whether any component had to be clipped.
    """
    values = [float(v) for v in values]
    if len(values) != space.dims:
        raise ConstructionError(
            f"setting has {len(values)} components, space has {space.dims} dimensions"
        )
    if not all(math.isfinite(v) for v in values):
        raise ConstructionError(f"setting components must be finite, got {values}")
    clipped = [min(max(v, lo), hi) for v, (lo, hi) in zip(values, space.bounds)]
    return Setting(tuple(clipped)), clipped != values


@dataclass(frozen=True)
class KpiVector:
    """Per-mille-per-session KPIs of one setting (or of one session)."""

    rpm: float
    clicks: float
    iy: float
    revenue: float
    n_sessions: int = 1

    def __post_init__(self):
        if self.n_sessions < 0:
            raise ConstructionError("n_sessions must be >= 0")
        for name in KPI_NAMES:
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ConstructionError(f"KPI {name} is not finite: {value}")
            object.__setattr__(self, name, float(value))

    def as_array(self) -> np.ndarray:
        return np.array([self.rpm, self.clicks, self.iy, self.revenue])

    @classmethod
    def from_array(cls, values: Sequence[float], n_sessions: int) -> "KpiVector":
        return cls(*(float(v) for v in values), n_sessions=int(n_sessions))

    def get(self, name: str) -> float:
        if name not in KPI_NAMES:
            raise KeyError(f"unknown KPI {name!r}; expected one of {KPI_NAMES}")
        return getattr(self, name)


@dataclass(frozen=True)
class KpiDelta:
    """Percent differences of a candidate's KPIs against a baseline."""

    d_rpm: float
    d_clicks: float
    d_iy: float
    d_revenue: float

    def get(self, name: str) -> float:
        if name not in KPI_NAMES:
            raise KeyError(f"unknown KPI {name!r}; expected one of {KPI_NAMES}")
        return getattr(self, "d_" + name)


def kpi_delta(candidate: KpiVector, baseline: KpiVector) -> KpiDelta:
    deltas = []
    for name in KPI_NAMES:
        base = baseline.get(name)
        if base == 0.0:
            raise ConstructionError(f"baseline KPI {name!r} is zero; percent delta undefined")
        deltas.append(100.0 * (candidate.get(name) - base) / base)
    return KpiDelta(*deltas)


@dataclass(frozen=True)
class CandidateAd:
    bid: float
    quality: float
    base_click_logit: float

    def __post_init__(self):
        if not self.bid >= 0:
            raise ConstructionError(f"bid must be >= 0, got {self.bid}")
        if not 0.0 <= self.quality <= 1.0:
            raise ConstructionError(f"quality must lie in [0, 1], got {self.quality}")


@dataclass(frozen=True)
class Session:
    session_id: int
    user_features: Tuple[float, ...]
    candidates: Tuple[CandidateAd, ...]

    def __post_init__(self):
        if not self.candidates:
            raise ConstructionError(f"session {self.session_id} has no candidates")
        object.__setattr__(self, "user_features", tuple(float(v) for v in self.user_features))
        object.__setattr__(self, "candidates", tuple(self.candidates))


@dataclass(frozen=True)
class RandomizationPolicy:
    """Independent per-dimension Gaussian randomization around ``center``."""

    center: Setting
    sigma: Tuple[float, ...]
    clip_to_bounds: bool = True

    def __post_init__(self):
        sigma = tuple(float(s) for s in self.sigma)
        if len(sigma) != len(self.center):
            raise ConstructionError(
                f"sigma has {len(sigma)} components, center has {len(self.center)}"
            )
        if not all(s > 0 and math.isfinite(s) for s in sigma):
            raise ConstructionError(f"every sigma component must be positive, got {sigma}")
        object.__setattr__(self, "sigma", sigma)

    def recentered(self, center: Setting) -> "RandomizationPolicy":
        return RandomizationPolicy(center, self.sigma, self.clip_to_bounds)


@dataclass(frozen=True)
class SgisConfig:
    """Hyperparameters of one search run.

    ``m``, ``c``, ``d``, ``k`` and ``u`` follow the usual SGIS naming: dimensions,
    coarse points per dimension, dense IS points per dimension, pool size and
    number of IS iterations. ``sigma`` is the per-dimension randomization scale
    used when collecting artificial sessions.
    """

    m: int = 3
    c: int = 15
    d: int = 25
    k: int = 5
    u: int = 1
    epsilon: float = 0.0
    cap: float = 10.0
    n_sessions: int = 2000
    n_artificial: int = 20000
    seed: int = 0
    sigma: Optional[Tuple[float, ...]] = None
    half_width_sigmas: float = 1.0
    grid_mode: str = "auto"
    normalize: str = "self"
    clip_to_bounds: bool = True
    max_grid: int = 10**6
    threads: Optional[int] = None

    def __post_init__(self):
        checks = [
            (self.m >= 1, "m >= 1"),
            (self.c >= 2, "c >= 2"),
            (self.d >= 2, "d >= 2"),
            (self.k >= 1, "k >= 1"),
            (self.u >= 0, "u >= 0"),
            (self.epsilon >= 0, "epsilon >= 0"),
            (self.cap > 0, "cap > 0"),
            (self.n_sessions >= 1, "n_sessions >= 1"),
            (self.n_artificial >= 1, "n_artificial >= 1"),
            (self.seed >= 0, "seed >= 0"),
            (self.half_width_sigmas > 0, "half_width_sigmas > 0"),
            (self.grid_mode in ("auto", "full-cartesian", "axis-sweeps"), "known grid_mode"),
            (self.normalize in ("plain", "self"), "normalize in {plain, self}"),
        ]
        for ok, rule in checks:
            if not ok:
                raise ConstructionError(f"invalid SgisConfig: requires {rule}")
        if self.sigma is not None:
            sigma = tuple(float(s) for s in self.sigma)
            if len(sigma) != self.m or not all(s > 0 for s in sigma):
                raise ConstructionError(f"sigma must hold {self.m} positive values, got {sigma}")
            object.__setattr__(self, "sigma", sigma)

    def resolved_grid_mode(self) -> str:
        if self.grid_mode != "auto":
            return self.grid_mode
        return "full-cartesian" if self.m <= 3 else "axis-sweeps"


_LEDGER_COUNTERS = (
    "replay_count",
    "is_reweigh_count",
    "settings_simulated",
    "settings_is_evaluated",
    "iterations",
)


@dataclass
class CostLedger:
    """Thread-safe, increment-only cost counters."""

    replay_count: int = 0
    is_reweigh_count: int = 0
    settings_simulated: int = 0
    settings_is_evaluated: int = 0
    iterations: int = 0
    _lock: threading.Lock = field(
        default_factory=threading.Lock, repr=False, compare=False
    )

    def add(self, **increments: int) -> None:
        for name, amount in increments.items():
            if name not in _LEDGER_COUNTERS:
                raise KeyError(f"unknown ledger counter {name!r}")
            if amount < 0:
                raise ValueError(f"ledger counters only grow; got {name}={amount}")
        with self._lock:
            for name, amount in increments.items():
                setattr(self, name, getattr(self, name) + int(amount))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if not f.name.startswith("_")}

    @classmethod
    def from_dict(cls, data: dict) -> "CostLedger":
        return cls(**{name: int(data[name]) for name in _LEDGER_COUNTERS})
