"""Importance-sampling estimates of KPIs at counterfactual settings."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, List, Optional, Sequence

import numpy as np

from .domain import (
    ConstructionError,
    CostLedger,
    KpiVector,
    ParameterSpace,
    RandomizationPolicy,
    Setting,
)

if TYPE_CHECKING:
    from .simulator import ArtificialDataset

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

#: upper bound on (targets x records) elements materialized at once
MAX_BLOCK = 2**21


def gaussian_logdensity(x, mean, sigma):
    """Log-density of independent normals, summed over the last axis.

    Broadcasts, so ``x`` may hold many points (rows) at once. Dimensions are
    accumulated in index order; the same point gives bit-identical results
    whatever the batch shape.
    """
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(~(sigma > 0)):
        raise ConstructionError(f"sigma must be positive, got {sigma}")
    dims = x.shape[-1]
    if mean.shape[-1] != dims or sigma.shape[-1] != dims:
        raise ConstructionError("x, mean and sigma must share their last dimension")
    acc = 0.0
    for j in range(dims):
        z = (x[..., j] - mean[..., j]) / sigma[..., j]
        acc = acc + (-0.5 * z * z - np.log(sigma[..., j]) - _HALF_LOG_2PI)
    if np.ndim(acc) == 0:
        return float(acc)
    return acc


def importance_weight(
    action: Setting,
    target: RandomizationPolicy,
    behavior_logdensity: float,
    cap: float = math.inf,
) -> float:
    """Capped density ratio of ``target`` over the behavior policy at ``action``.

    ``action`` is the unclipped logged draw.
    """
    if not cap > 0:
        raise ConstructionError(f"cap must be positive, got {cap}")
    target_ld = gaussian_logdensity(action.as_array(), target.center.as_array(), target.sigma)
    if not (math.isfinite(target_ld) and math.isfinite(behavior_logdensity)):
        raise ConstructionError("log-densities must be finite")
    return min(cap, math.exp(target_ld - behavior_logdensity))


@dataclass(frozen=True)
class IsEstimate:
    setting: Setting
    kpis: KpiVector
    ess: float
    mean_weight: float
    max_weight: float
    capped_fraction: float


def _estimate_block(data: "ArtificialDataset", centers: np.ndarray, sigma, cap: float,
                    normalize: str) -> List[tuple]:
    """Estimates for a block of target centers (rows of ``centers``)."""
    order = data.canonical_order()
    raw = data.raw_actions[order]
    behavior = data.behavior_logdensity[order]
    kpis = data.kpis[order]
    n = len(raw)

    target_ld = gaussian_logdensity(raw[None, :, :], centers[:, None, :], np.asarray(sigma))
    log_ratio = target_ld - behavior[None, :]
    if not np.all(np.isfinite(log_ratio)):
        raise ConstructionError("non-finite log-density ratio")
    raw_w = np.exp(log_ratio)
    w = np.minimum(raw_w, cap)

    sum_w = w.sum(axis=1)
    sum_w2 = (w * w).sum(axis=1)
    weighted = np.stack([(w * kpis[:, j]).sum(axis=1) for j in range(kpis.shape[1])], axis=1)
    if normalize == "plain":
        est = weighted / n
    elif normalize == "self":
        if np.any(sum_w == 0):
            raise ConstructionError("all importance weights vanished; self-normalization undefined")
        # rounding can push a convex combination a hair outside its range
        est = np.clip(weighted / sum_w[:, None], kpis.min(axis=0), kpis.max(axis=0))
    else:
        raise ConstructionError(f"normalize must be 'plain' or 'self', got {normalize!r}")
    with np.errstate(invalid="ignore", divide="ignore"):
        ess = np.where(sum_w2 > 0, sum_w * sum_w / sum_w2, 0.0)
    ess = np.clip(ess, min(1.0, n), n)
    capped = (raw_w > cap).mean(axis=1)
    return [
        (est[i], float(ess[i]), float(sum_w[i] / n), float(w[i].max()), float(capped[i]))
        for i in range(len(centers))
    ]


def _estimates(data, settings: Sequence[Setting], sigma, cap, normalize, ledger, threads):
    from .simulator import parallel_map

    if not cap > 0:
        raise ConstructionError(f"cap must be positive, got {cap}")
    n = len(data)
    if n == 0:
        raise ConstructionError("is_estimate needs a nonempty dataset")
    centers = np.array([s.values for s in settings], dtype=float)
    per_block = max(1, MAX_BLOCK // n)
    blocks = [range(i, min(i + per_block, len(settings))) for i in range(0, len(settings), per_block)]

    def run(block: range):
        out = _estimate_block(data, centers[block.start:block.stop], sigma, cap, normalize)
        if ledger is not None:
            ledger.add(is_reweigh_count=n * len(block), settings_is_evaluated=len(block))
        return out

    rows = [row for part in parallel_map(run, blocks, threads) for row in part]
    return [
        IsEstimate(s, KpiVector.from_array(est, n), ess, mean_w, max_w, capped)
        for s, (est, ess, mean_w, max_w, capped) in zip(settings, rows)
    ]


def is_estimate(
    data: "ArtificialDataset",
    target: RandomizationPolicy,
    cap: float = 10.0,
    normalize: str = "plain",
    ledger: Optional[CostLedger] = None,
) -> IsEstimate:
    """Reweight ``data`` towards ``target``.

    ``plain`` averages ``w_i * kpi_i`` over the records; ``self`` divides by the
    weight total instead, which keeps every estimate inside the range of the
    recorded KPIs.
    """
    return _estimates(data, [target.center], target.sigma, cap, normalize, ledger, 1)[0]


@dataclass(frozen=True)
class DenseGridSpec:
    d: int = 25
    half_width_sigmas: float = 1.0
    mode: str = "full-cartesian"

    def __post_init__(self):
        if self.d < 2:
            raise ConstructionError(f"dense grid needs d >= 2, got {self.d}")
        if not self.half_width_sigmas > 0:
            raise ConstructionError("half_width_sigmas must be positive")
        if self.mode not in ("full-cartesian", "axis-sweeps"):
            raise ConstructionError(f"unknown dense grid mode {self.mode!r}")


def _axis_values(center: float, sigma: float, spec: DenseGridSpec, lo: float, hi: float):
    # integer numerators keep the midpoint exactly at the center and the ends exactly at +-1
    offsets = (2.0 * np.arange(spec.d) - (spec.d - 1)) / (spec.d - 1)
    values = center + spec.half_width_sigmas * sigma * offsets
    return np.unique(np.clip(values, lo, hi))


def dense_grid(center: Setting, policy: RandomizationPolicy, spec: DenseGridSpec,
               space: ParameterSpace) -> List[Setting]:
    axes = [
        _axis_values(c, s, spec, lo, hi)
        for c, s, (lo, hi) in zip(center.values, policy.sigma, space.bounds)
    ]
    if spec.mode == "full-cartesian":
        return [Setting(p) for p in itertools.product(*(a.tolist() for a in axes))]
    settings, seen = [], set()
    for j, axis in enumerate(axes):
        for v in axis.tolist():
            values = list(center.values)
            values[j] = v
            key = tuple(values)
            if key not in seen:
                seen.add(key)
                settings.append(Setting(key))
    return settings


def is_art(
    data: "ArtificialDataset",
    center: Setting,
    spec: DenseGridSpec,
    cap: float,
    normalize: str,
    space: ParameterSpace,
    ledger: Optional[CostLedger] = None,
    threads: Optional[int] = None,
) -> List[IsEstimate]:
    """IS sweep over the dense grid around the dataset's randomization center."""
    if data.policy.center != center:
        raise ConstructionError("is_art must be centered on the dataset's behavior policy")
    grid = dense_grid(center, data.policy, spec, space)
    return _estimates(data, grid, data.policy.sigma, cap, normalize, ledger, threads)
