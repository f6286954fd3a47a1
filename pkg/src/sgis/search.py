"""Coarse grids, constrained scoring, top-k pools and the search drivers.

Three drivers share one result type (:class:`SgisResult`):

* :func:`enumerate_baseline` simulates every point of a grid directly,
* :func:`iterative_is_baseline` hill-climbs from one start with IS sweeps,
* :func:`sgis` seeds IS sweeps from the best coarse-grid settings and confirms
  every IS winner by direct simulation before it may enter the result pool.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .domain import (
    KPI_NAMES,
    ConstructionError,
    CostLedger,
    KpiDelta,
    KpiVector,
    ParameterSpace,
    RandomizationPolicy,
    Setting,
    SgisConfig,
    kpi_delta,
    make_setting,
)
from .estimator import DenseGridSpec, IsEstimate, is_art, is_estimate
from .simulator import SessionLog, collect_artificial, simulate

logger = logging.getLogger(__name__)

DIRECT = "direct-simulation"
IS_ESTIMATE = "is-estimate"


class EmptyPoolError(RuntimeError):
    """No feasible candidate is left to rank."""


@dataclass(frozen=True)
class ObjectiveSpec:
    """Maximize one KPI delta subject to percent-delta constraints.

    ``constraints`` holds ``(kpi, "<=" | ">=", threshold_percent)`` triples;
    ``baseline`` is the deployment setting's KPIs.
    """

    maximize: str
    constraints: Tuple[Tuple[str, str, float], ...]
    baseline: KpiVector

    def __post_init__(self):
        if self.maximize not in KPI_NAMES:
            raise ConstructionError(f"cannot maximize unknown KPI {self.maximize!r}")
        cons = []
        for name, relation, threshold in self.constraints:
            if name not in KPI_NAMES:
                raise ConstructionError(f"constraint on unknown KPI {name!r}")
            if relation not in ("<=", ">="):
                raise ConstructionError(f"constraint relation must be <= or >=, got {relation!r}")
            if not math.isfinite(threshold):
                raise ConstructionError("constraint thresholds must be finite")
            cons.append((name, relation, float(threshold)))
        object.__setattr__(self, "constraints", tuple(cons))


def score(kpis: KpiVector, objective: ObjectiveSpec) -> Tuple[KpiDelta, Optional[float]]:
    """Percent deltas and the objective score, ``None`` when infeasible."""
    delta = kpi_delta(kpis, objective.baseline)
    for name, relation, threshold in objective.constraints:
        value = delta.get(name)
        if (relation == "<=" and value > threshold) or (relation == ">=" and value < threshold):
            return delta, None
    return delta, delta.get(objective.maximize)


@dataclass(frozen=True)
class ScoredCandidate:
    setting: Setting
    kpis: KpiVector
    delta: KpiDelta
    score: Optional[float]
    source: str

    @property
    def feasible(self) -> bool:
        return self.score is not None


def score_candidate(setting: Setting, kpis: KpiVector, objective: ObjectiveSpec,
                    source: str = DIRECT) -> ScoredCandidate:
    delta, value = score(kpis, objective)
    return ScoredCandidate(setting, kpis, delta, value, source)


def top_k(candidates: Sequence[ScoredCandidate], k: int) -> List[ScoredCandidate]:
    """Best ``k`` feasible candidates, score descending, ties by smaller setting.

    Repeated settings collapse to one entry, preferring a direct simulation over
    an IS estimate. Raises :class:`EmptyPoolError` when nothing is feasible.
    """
    if k < 1:
        raise ConstructionError(f"k must be >= 1, got {k}")
    best: Dict[Tuple[float, ...], ScoredCandidate] = {}
    for cand in candidates:
        if not cand.feasible:
            continue
        key = cand.setting.values
        held = best.get(key)
        if held is None:
            best[key] = cand
            continue
        held_direct, cand_direct = held.source == DIRECT, cand.source == DIRECT
        if (cand_direct and not held_direct) or (
            cand_direct == held_direct and cand.score > held.score
        ):
            best[key] = cand
    if not best:
        raise EmptyPoolError("no feasible candidate to rank")
    ranked = sorted(best.values(), key=lambda c: (-c.score, c.setting.values))
    return ranked[:k]


def _grid_points(space: ParameterSpace, per_dim: int, max_grid: int) -> List[Setting]:
    if per_dim < 2:
        raise ConstructionError(f"a grid needs at least 2 points per dimension, got {per_dim}")
    total = per_dim ** space.dims
    if total > max_grid:
        raise ConstructionError(
            f"grid of {per_dim}^{space.dims} = {total} settings exceeds the cap of "
            f"{max_grid}; reduce the points per dimension"
        )
    axes = [np.linspace(lo, hi, per_dim).tolist() for lo, hi in space.bounds]
    return [Setting(p) for p in itertools.product(*axes)]


def coarse_grid(space: ParameterSpace, c: int, max_grid: int = 10**6) -> List[Setting]:
    """``c`` evenly spaced points per dimension, bounds included, lexicographic."""
    return _grid_points(space, c, max_grid)


@dataclass(frozen=True)
class IterationTrace:
    """What happened in one outer iteration (iteration 0 is the seeding step).

    ``proposals`` are the IS-ranked settings with their IS scores, ``confirmed``
    the same settings with their direct-simulation scores. ``diagnostics`` has
    one entry per randomization center.
    """

    iteration: int
    centers: Tuple[Tuple[float, ...], ...]
    proposals: Tuple[Tuple[Tuple[float, ...], Optional[float]], ...]
    confirmed: Tuple[Tuple[Tuple[float, ...], Optional[float]], ...]
    best_score: Optional[float]
    diagnostics: Tuple[Dict[str, float], ...] = ()
    note: str = ""


@dataclass
class SgisResult:
    method: str
    best_pool: List[ScoredCandidate]
    iterations_run: int
    ledger: CostLedger
    trace: List[IterationTrace] = field(default_factory=list)
    stop_reason: str = ""

    @property
    def best(self) -> Optional[ScoredCandidate]:
        return self.best_pool[0] if self.best_pool else None

    @property
    def best_score(self) -> Optional[float]:
        return self.best_pool[0].score if self.best_pool else None

    @property
    def seed_best_score(self) -> Optional[float]:
        """Best direct score of the seeding step, before any IS iteration."""
        return self.trace[0].best_score if self.trace else None


def _pairs(cands: Sequence[ScoredCandidate]):
    return tuple((c.setting.values, c.score) for c in cands)


class _DirectCache:
    """Direct simulations done in one run, so no setting is replayed twice."""

    def __init__(self, log, model, objective, ledger, threads):
        self.log, self.model, self.objective = log, model, objective
        self.ledger, self.threads = ledger, threads
        self.done: Dict[Tuple[float, ...], ScoredCandidate] = {}

    def __call__(self, settings: Sequence[Setting]) -> List[ScoredCandidate]:
        fresh = list(dict.fromkeys(s for s in settings if s.values not in self.done))
        if fresh:
            for s, kpis in simulate(self.log, fresh, self.model, self.ledger, self.threads):
                self.done[s.values] = score_candidate(s, kpis, self.objective, DIRECT)
        return [self.done[s.values] for s in settings]


def _sub_seed(seed: int, iteration: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=(iteration, index))


def _sigma_for(space: ParameterSpace, config: SgisConfig) -> Tuple[float, ...]:
    if config.sigma is not None:
        if len(config.sigma) != space.dims:
            raise ConstructionError("config sigma does not match the space dimension")
        return config.sigma
    # no sigma given: a quarter of each coarse grid step
    return tuple((hi - lo) / (config.c - 1) / 4.0 for lo, hi in space.bounds)


def _is_sweep(log, space, model, objective, config, center: Setting, sub_seed, ledger):
    sigma = _sigma_for(space, config)
    policy = RandomizationPolicy(center, sigma, config.clip_to_bounds)
    data = collect_artificial(log, policy, config.n_artificial, model, sub_seed, space,
                              ledger, config.threads)
    grid_spec = DenseGridSpec(config.d, config.half_width_sigmas, config.resolved_grid_mode())
    estimates = is_art(data, center, grid_spec, config.cap, config.normalize, space, ledger,
                       config.threads)
    scored = [score_candidate(e.setting, e.kpis, objective, IS_ESTIMATE) for e in estimates]
    ess = [e.ess for e in estimates]
    diag = {
        "n_records": float(len(data)),
        "grid_points": float(len(estimates)),
        "ess_min": float(min(ess)),
        "ess_max": float(max(ess)),
        "capped_fraction_max": float(max(e.capped_fraction for e in estimates)),
    }
    return scored, diag


def _check_config(space: ParameterSpace, config: SgisConfig) -> None:
    if config.m != space.dims:
        raise ConstructionError(f"config.m={config.m} but the space has {space.dims} dimensions")


def sgis(log: SessionLog, space: ParameterSpace, model, objective: ObjectiveSpec,
         config: SgisConfig) -> SgisResult:
    """Simulator-guided importance sampling search.

    Steps per outer iteration: collect artificial sessions around every pool
    member, sweep its dense grid with IS, keep the IS top-k of the union,
    simulate those directly and merge the direct scores into the best pool.
    The pool only ever admits direct scores, so the result is never worse than
    the coarse grid alone. Stops after ``u`` iterations, when the best score
    gains less than ``epsilon``, or when no feasible candidate remains.
    """
    _check_config(space, config)
    ledger = CostLedger()
    direct = _DirectCache(log, model, objective, ledger, config.threads)
    grid = coarse_grid(space, config.c, config.max_grid)
    seeded = direct(grid)
    try:
        pool = top_k(seeded, config.k)
    except EmptyPoolError:
        trace = [IterationTrace(0, (), (), (), None, note="no feasible coarse-grid setting")]
        return SgisResult("sgis", [], 0, ledger, trace, "empty-pool")
    best_pool = list(pool)
    trace = [IterationTrace(0, (), (), _pairs(pool), best_pool[0].score)]

    stop_reason = "max-iterations"
    iterations = 0
    for it in range(1, config.u + 1):
        centers = [cand.setting for cand in pool]
        swept = [
            _is_sweep(log, space, model, objective, config, center,
                      _sub_seed(config.seed, it, i), ledger)
            for i, center in enumerate(centers)
        ]
        ledger.add(iterations=1)
        iterations = it
        diagnostics = tuple(diag for _, diag in swept)
        union = [cand for scored, _ in swept for cand in scored]
        prev_best = best_pool[0].score
        try:
            proposals = top_k(union, config.k)
            confirmed = direct([p.setting for p in proposals])
            pool = top_k(confirmed, config.k)
        except EmptyPoolError:
            trace.append(IterationTrace(
                it, tuple(c.values for c in centers), (), (), prev_best, diagnostics,
                note="no feasible candidate after IS sweep",
            ))
            stop_reason = "empty-pool"
            break
        best_pool = top_k(best_pool + pool, config.k)
        trace.append(IterationTrace(
            it, tuple(c.values for c in centers), _pairs(proposals), _pairs(confirmed),
            best_pool[0].score, diagnostics,
        ))
        if it < config.u and best_pool[0].score - prev_best < config.epsilon:
            stop_reason = "early-stop"
            break
    logger.info("sgis finished after %d iterations (%s)", iterations, stop_reason)
    return SgisResult("sgis", best_pool, iterations, ledger, trace, stop_reason)


def enumerate_baseline(log: SessionLog, space: ParameterSpace, model, objective: ObjectiveSpec,
                       points_per_dim: int, k: int = 5, max_grid: int = 10**6,
                       threads: Optional[int] = None) -> SgisResult:
    """Directly simulate every point of a ``points_per_dim``-per-dimension grid."""
    ledger = CostLedger()
    grid = _grid_points(space, points_per_dim, max_grid)
    scored = [score_candidate(s, kpis, objective, DIRECT)
              for s, kpis in simulate(log, grid, model, ledger, threads)]
    try:
        pool = top_k(scored, k)
    except EmptyPoolError:
        trace = [IterationTrace(0, (), (), (), None, note="no feasible grid setting")]
        return SgisResult("enumerate", [], 0, ledger, trace, "empty-pool")
    trace = [IterationTrace(0, (), (), _pairs(pool), pool[0].score)]
    return SgisResult("enumerate", pool, 0, ledger, trace, "complete")


def iterative_is_baseline(log: SessionLog, space: ParameterSpace, model,
                          objective: ObjectiveSpec, start: Setting,
                          config: SgisConfig) -> SgisResult:
    """Hill-climb with IS from a single start.

    Each iteration randomizes around the current center, moves to the best
    feasible IS estimate on its dense grid and simulates that iterate directly.
    Iterates are accepted even when their direct score regresses.
    """
    _check_config(space, config)
    if not space.contains(start.values):
        raise ConstructionError(f"start {start.values} lies outside the space")
    ledger = CostLedger()
    direct = _DirectCache(log, model, objective, ledger, config.threads)
    current = direct([start])[0]
    visited = [current]
    trace = [IterationTrace(0, (), (), _pairs([current]), current.score)]
    stop_reason = "max-iterations"
    iterations = 0
    for it in range(1, config.u + 1):
        scored, diag = _is_sweep(log, space, model, objective, config, current.setting,
                                 _sub_seed(config.seed, it, 0), ledger)
        ledger.add(iterations=1)
        iterations = it
        try:
            proposal = top_k(scored, 1)[0]
        except EmptyPoolError:
            trace.append(IterationTrace(it, (current.setting.values,), (), (), current.score,
                                        (diag,), note="no feasible IS estimate"))
            stop_reason = "empty-pool"
            break
        nxt = direct([proposal.setting])[0]
        trace.append(IterationTrace(it, (current.setting.values,), _pairs([proposal]),
                                    _pairs([nxt]), nxt.score, (diag,)))
        visited.append(nxt)
        prev, current = current, nxt
        if prev.score is not None and nxt.score is not None and \
                abs(nxt.score - prev.score) < config.epsilon:
            stop_reason = "early-stop"
            break
    try:
        pool = top_k(visited, config.k)
    except EmptyPoolError:
        pool = []
    return SgisResult("iterative-is", pool, iterations, ledger, trace, stop_reason)


@dataclass(frozen=True)
class CorrelationReport:
    """Paired IY deltas (percent vs the center) from IS and from direct simulation."""

    center: Setting
    rows: Tuple[Tuple[Setting, float, float], ...]
    r: Optional[float]
    reason: str = ""
    excluded: int = 0


def correlation_report(log: SessionLog, space: ParameterSpace, model, center: Setting,
                       policy: RandomizationPolicy, n_probe: int, config: SgisConfig,
                       seed: int, kpi: str = "iy") -> CorrelationReport:
    """Compare IS and direct-simulation KPI deltas on random probes near ``center``.

    Probes are drawn uniformly within one sigma of the center per dimension.
    One artificial dataset collected at ``center`` serves every IS estimate.
    Probes equal to the center are excluded from the correlation.
    """
    if n_probe < 3:
        raise ConstructionError(f"need at least 3 probes, got {n_probe}")
    if policy.center != center:
        raise ConstructionError("the randomization policy must be centered on the probe center")
    ss = np.random.SeedSequence(seed)
    probe_seed, data_seed = ss.spawn(2)
    rng = np.random.default_rng(probe_seed)
    sigma = np.array(policy.sigma)
    offsets = rng.uniform(-1.0, 1.0, size=(n_probe, space.dims)) * sigma
    probes = [make_setting(space, center.as_array() + off)[0] for off in offsets]

    data = collect_artificial(log, policy, config.n_artificial, model, data_seed, space,
                              threads=config.threads)
    is_center = is_estimate(data, policy, config.cap, config.normalize).kpis.get(kpi)
    sims = dict(
        (s.values, kv) for s, kv in simulate(log, [center] + probes, model, threads=config.threads)
    )
    sim_center = sims[center.values].get(kpi)
    if is_center == 0 or sim_center == 0:
        raise ConstructionError(f"center {kpi} is zero; percent deltas undefined")

    rows, xs, ys, excluded = [], [], [], 0
    for probe in probes:
        is_val = is_estimate(data, policy.recentered(probe), config.cap, config.normalize)
        is_delta = 100.0 * (is_val.kpis.get(kpi) - is_center) / is_center
        sim_delta = 100.0 * (sims[probe.values].get(kpi) - sim_center) / sim_center
        rows.append((probe, is_delta, sim_delta))
        if probe == center:
            excluded += 1
            continue
        xs.append(is_delta)
        ys.append(sim_delta)

    if len(xs) < 2:
        return CorrelationReport(center, tuple(rows), None, "fewer than two usable probes", excluded)
    if np.ptp(xs) == 0 or np.ptp(ys) == 0:
        return CorrelationReport(center, tuple(rows), None, "zero variance in a delta series",
                                 excluded)
    r = float(stats.pearsonr(xs, ys)[0])
    return CorrelationReport(center, tuple(rows), r, "", excluded)
