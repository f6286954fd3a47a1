"""Open-box replay simulator and artificial-session collection.

Two response models share one interface (``kpi_rows`` for batched replay and
``replay`` for a single session):

* :class:`UserResponseModel` drives the ranking/auction causal graph: score
  candidates by ``bid**w_b * quality**w_q``, show the top ``ceil(L)`` with
  ``L = 1 + 4*sigmoid(setting[2])``, price by generalized second price and
  predict clicks with a logistic model damped by position.
* :class:`BumpSurfaceModel` is a known-ground-truth stand-in whose KPI
  surface is a sum of Gaussian bumps, useful for checking that a search
  really finds an optimum that is known analytically.
"""
from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .domain import (
    KPI_NAMES,
    CandidateAd,
    ConstructionError,
    CostLedger,
    KpiVector,
    ParameterSpace,
    RandomizationPolicy,
    Session,
    Setting,
)
from .estimator import gaussian_logdensity

#: rows replayed per vectorized chunk; bounds peak memory of batched replays
CHUNK_ROWS = 65536


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def resolve_threads(threads: Optional[int]) -> int:
    if threads is None:
        return os.cpu_count() or 1
    return max(1, int(threads))


def parallel_map(fn: Callable, items: Sequence, threads: Optional[int] = None) -> list:
    """Order-preserving map, fanned over a thread pool when ``threads > 1``."""
    n_workers = min(resolve_threads(threads), len(items))
    if n_workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(fn, items))


class SessionLog:
    """Immutable collection of logged sessions, packed into padded arrays."""

    def __init__(self, sessions: Iterable[Session]):
        self.sessions: Tuple[Session, ...] = tuple(sessions)
        if not self.sessions:
            raise ConstructionError("a session log needs at least one session")
        ids = [s.session_id for s in self.sessions]
        if len(set(ids)) != len(ids):
            raise ConstructionError("session ids must be unique within a log")

        n = len(self.sessions)
        width = max(len(s.candidates) for s in self.sessions)
        self.n_candidates = np.array([len(s.candidates) for s in self.sessions])
        self.bids = np.zeros((n, width))
        self.quality = np.zeros((n, width))
        self.click_logits = np.zeros((n, width))
        for i, s in enumerate(self.sessions):
            j = len(s.candidates)
            self.bids[i, :j] = [c.bid for c in s.candidates]
            self.quality[i, :j] = [c.quality for c in s.candidates]
            self.click_logits[i, :j] = [c.base_click_logit for c in s.candidates]
        self.valid = np.arange(width)[None, :] < self.n_candidates[:, None]
        self.session_ids = np.array(ids)
        self.first_feature = np.array(
            [s.user_features[0] if s.user_features else 0.0 for s in self.sessions]
        )
        for arr in (self.n_candidates, self.bids, self.quality, self.click_logits,
                    self.valid, self.session_ids, self.first_feature):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.sessions)

    def __iter__(self):
        return iter(self.sessions)

    def __getitem__(self, i: int) -> Session:
        return self.sessions[i]

    def __eq__(self, other) -> bool:
        return isinstance(other, SessionLog) and self.sessions == other.sessions

    def to_lines(self) -> List[str]:
        from .io import session_to_line

        return [session_to_line(s) for s in self.sessions]

    def digest(self) -> str:
        """sha256 over the canonical line encoding."""
        h = hashlib.sha256()
        for line in self.to_lines():
            h.update(line.encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()


def generate_sessions(n: int, seed: int) -> SessionLog:
    """Draw a synthetic session log.

    Each session gets 5 to 20 candidates with log-normal bids, uniform
    qualities on (0, 1] and normal base click logits. Identical ``(n, seed)``
    give identical logs.
    """
    if n < 1:
        raise ConstructionError(f"need n >= 1 sessions, got {n}")
    rng = np.random.default_rng(seed)
    counts = rng.integers(5, 21, size=n)
    total = int(counts.sum())
    bids = rng.lognormal(mean=0.0, sigma=0.75, size=total)
    quality = 1.0 - rng.random(total)
    logits = rng.normal(-2.0, 0.5, size=total)
    features = rng.normal(size=(n, 4))
    sessions = []
    start = 0
    for i, count in enumerate(counts):
        stop = start + int(count)
        candidates = tuple(
            CandidateAd(float(b), float(q), float(z))
            for b, q, z in zip(bids[start:stop], quality[start:stop], logits[start:stop])
        )
        sessions.append(Session(i, tuple(features[i].tolist()), candidates))
        start = stop
    return SessionLog(sessions)


@dataclass(frozen=True)
class CounterfactualSession:
    session_id: int
    # (candidate index, price charged, click probability), in display order
    shown_ads: Tuple[Tuple[int, float, float], ...]


def session_kpis(cf: CounterfactualSession) -> KpiVector:
    n_shown = len(cf.shown_ads)
    if n_shown == 0:
        return KpiVector(0.0, 0.0, 0.0, 0.0, n_sessions=1)
    iy = 1000.0 * n_shown
    clicks = 1000.0 * sum(p for _, _, p in cf.shown_ads)
    revenue = 1000.0 * sum(price * p for _, price, p in cf.shown_ads)
    return KpiVector(1000.0 * revenue / iy, clicks, iy, revenue, n_sessions=1)


def _kpis_from_shown(shown: np.ndarray, prices: np.ndarray, click_prob: np.ndarray) -> np.ndarray:
    n_shown = shown.sum(axis=1).astype(float)
    clicks = 1000.0 * np.where(shown, click_prob, 0.0).sum(axis=1)
    revenue = 1000.0 * np.where(shown, prices * click_prob, 0.0).sum(axis=1)
    iy = 1000.0 * n_shown
    with np.errstate(invalid="ignore", divide="ignore"):
        rpm = np.where(iy > 0, 1000.0 * revenue / np.where(iy > 0, iy, 1.0), 0.0)
    return np.column_stack([rpm, clicks, iy, revenue])


@dataclass(frozen=True)
class UserResponseModel:
    """Logistic click model over (base click logit, quality, position)."""

    click_weights: Tuple[float, float, float] = (1.0, 1.5, -0.3)
    position_decay: float = 0.8

    def __post_init__(self):
        weights = tuple(float(w) for w in self.click_weights)
        if len(weights) != 3 or not all(math.isfinite(w) for w in weights):
            raise ConstructionError("click_weights must be three finite numbers")
        if not 0.0 < self.position_decay <= 1.0:
            raise ConstructionError("position_decay must lie in (0, 1]")
        object.__setattr__(self, "click_weights", weights)

    @staticmethod
    def auction_knobs(actions: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Map settings to (bid exponent, quality exponent, slots to fill)."""
        actions = np.atleast_2d(actions)
        rows, m = actions.shape
        w_b = actions[:, 0]
        w_q = actions[:, 1] if m >= 2 else np.ones(rows)
        if m >= 3:
            slots = np.ceil(1.0 + 4.0 * _sigmoid(actions[:, 2])).astype(int)
        else:
            slots = np.full(rows, 3)
        return w_b, w_q, slots

    def _auction(self, bids, quality, logits, valid, n_cand, actions):
        w_b, w_q, slots = self.auction_knobs(actions)
        scores = bids ** w_b[:, None] * quality ** w_q[:, None]
        scores = np.where(valid, scores, -np.inf)
        order = np.argsort(-scores, axis=1, kind="stable")
        # only the shown slots and their runner-up matter downstream
        order = order[:, : int(slots.max()) + 1]
        s_sorted = np.take_along_axis(scores, order, axis=1)
        b_sorted = np.take_along_axis(bids, order, axis=1)
        q_sorted = np.take_along_axis(quality, order, axis=1)
        z_sorted = np.take_along_axis(logits, order, axis=1)

        width = order.shape[1]
        pos = np.arange(width)[None, :]
        has_next = pos + 1 < n_cand[:, None]
        s_next = np.concatenate([s_sorted[:, 1:], np.zeros((len(order), 1))], axis=1)
        b_next = np.concatenate([b_sorted[:, 1:], np.zeros((len(order), 1))], axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            gsp = b_next * s_next / s_sorted
        prices = np.where(has_next & (s_sorted > 0), np.minimum(gsp, b_sorted), 0.0)

        w0, w1, w2 = self.click_weights
        click_prob = _sigmoid(w0 * z_sorted + w1 * q_sorted + w2 * pos) * self.position_decay ** pos
        shown = pos < np.minimum(slots, n_cand)[:, None]
        return order, shown, prices, click_prob

    def kpi_rows(self, log: SessionLog, rows: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """Per-row KPI matrix (columns in ``KPI_NAMES`` order) for replaying
        session ``rows[i]`` under setting ``actions[i]``."""
        _, shown, prices, click_prob = self._auction(
            log.bids[rows], log.quality[rows], log.click_logits[rows],
            log.valid[rows], log.n_candidates[rows], actions,
        )
        return _kpis_from_shown(shown, prices, click_prob)

    def replay(self, log: SessionLog, row: int, setting: Setting) -> CounterfactualSession:
        idx = np.array([row])
        order, shown, prices, click_prob = self._auction(
            log.bids[idx], log.quality[idx], log.click_logits[idx],
            log.valid[idx], log.n_candidates[idx], np.array([setting.values]),
        )
        ads = tuple(
            (int(order[0, r]), float(prices[0, r]), float(click_prob[0, r]))
            for r in range(int(shown[0].sum()))
        )
        return CounterfactualSession(log[row].session_id, ads)


@dataclass(frozen=True)
class BumpSurfaceModel:
    """Known KPI surface: one ad per session, clicked with probability
    ``floor + sum(height * exp(-|a - center|^2 / (2 width^2)))`` and charged a
    session price ``exp(price_spread * user_features[0])``. Aggregate RPM is
    ``mean(price) * click_prob(a)``, so the bumps locate the optimum exactly."""

    bumps: Tuple[Tuple[Tuple[float, ...], float, float], ...]
    floor: float = 0.05
    price_spread: float = 0.2

    def __post_init__(self):
        bumps = tuple(
            (tuple(float(v) for v in center), float(height), float(width))
            for center, height, width in self.bumps
        )
        if not bumps:
            raise ConstructionError("need at least one bump")
        if len({len(c) for c, _, _ in bumps}) != 1:
            raise ConstructionError("all bump centers must share one dimension")
        if any(h < 0 or w <= 0 for _, h, w in bumps):
            raise ConstructionError("bump heights must be >= 0 and widths > 0")
        if self.price_spread < 0:
            raise ConstructionError("price_spread must be >= 0")
        if self.floor < 0 or self.floor + sum(h for _, h, _ in bumps) > 1.0:
            raise ConstructionError("floor + total bump height must lie in [0, 1]")
        object.__setattr__(self, "bumps", bumps)

    def click_prob(self, actions: np.ndarray) -> np.ndarray:
        actions = np.atleast_2d(actions)
        total = np.full(len(actions), float(self.floor))
        for center, height, width in self.bumps:
            sq = ((actions - np.array(center)) ** 2).sum(axis=1)
            total = total + height * np.exp(-sq / (2.0 * width * width))
        return total

    def kpi_rows(self, log: SessionLog, rows: np.ndarray, actions: np.ndarray) -> np.ndarray:
        p = self.click_prob(actions)[:, None]
        price = self.session_prices(log)[rows, None]
        return _kpis_from_shown(np.ones_like(p, dtype=bool), price, p)

    def replay(self, log: SessionLog, row: int, setting: Setting) -> CounterfactualSession:
        p = float(self.click_prob(np.array([setting.values]))[0])
        price = float(self.session_prices(log)[row])
        return CounterfactualSession(log[row].session_id, ((0, price, p),))

    def session_prices(self, log: SessionLog) -> np.ndarray:
        return np.exp(self.price_spread * log.first_feature)


def _check_setting(setting: Setting, dims: Optional[int]) -> None:
    if dims is not None and len(setting) != dims:
        raise ConstructionError(
            f"setting has {len(setting)} components, expected {dims}"
        )


def replay(
    session: Session, setting: Setting, model, space: Optional[ParameterSpace] = None
) -> CounterfactualSession:
    """Replay one session under ``setting``. Pure and deterministic."""
    if space is not None:
        _check_setting(setting, space.dims)
        if not space.contains(setting.values):
            raise ConstructionError(f"setting {setting.values} lies outside the space bounds")
    if isinstance(model, BumpSurfaceModel):
        _check_setting(setting, len(model.bumps[0][0]))
    return model.replay(SessionLog([session]), 0, setting)


def aggregate(per_session: np.ndarray) -> KpiVector:
    """Mean of per-session KPI rows.

    Uses exactly rounded sums, so the result does not depend on session order
    or on how the rows were computed in parallel.
    """
    n = len(per_session)
    if n == 0:
        raise ConstructionError("cannot aggregate an empty set of sessions")
    cols = per_session.T.tolist()
    return KpiVector.from_array([math.fsum(col) / n for col in cols], n_sessions=n)


def _settings_matrix(settings: Sequence[Setting]) -> np.ndarray:
    dims = {len(s) for s in settings}
    if len(dims) != 1:
        raise ConstructionError("all settings must share one dimension")
    return np.array([s.values for s in settings], dtype=float)


def evaluate_setting(
    log: SessionLog, setting: Setting, model, ledger: Optional[CostLedger] = None
) -> KpiVector:
    return simulate(log, [setting], model, ledger, threads=1)[0][1]


def simulate(
    log: SessionLog,
    settings: Sequence[Setting],
    model,
    ledger: Optional[CostLedger] = None,
    threads: Optional[int] = None,
) -> List[Tuple[Setting, KpiVector]]:
    """Directly simulate every setting on the whole log; output follows input order."""
    settings = list(settings)
    if not settings:
        raise ConstructionError("simulate needs at least one setting")
    if len(log) == 0:
        raise ConstructionError("cannot simulate on an empty log")
    if isinstance(model, BumpSurfaceModel):
        for s in settings:
            _check_setting(s, len(model.bumps[0][0]))
    actions = _settings_matrix(settings)
    n = len(log)
    per_chunk = max(1, CHUNK_ROWS // n)
    chunks = [range(i, min(i + per_chunk, len(settings))) for i in range(0, len(settings), per_chunk)]
    session_rows = np.arange(n)

    def run(chunk: range) -> List[KpiVector]:
        rows = np.tile(session_rows, len(chunk))
        acts = np.repeat(actions[chunk.start:chunk.stop], n, axis=0)
        kpis = model.kpi_rows(log, rows, acts).reshape(len(chunk), n, len(KPI_NAMES))
        out = [aggregate(block) for block in kpis]
        if ledger is not None:
            ledger.add(replay_count=n * len(chunk), settings_simulated=len(chunk))
        return out

    results = [kv for part in parallel_map(run, chunks, threads) for kv in part]
    return list(zip(settings, results))


class ArtificialDataset:
    """Randomized replays collected under one :class:`RandomizationPolicy`.

    Arrays are row-aligned: ``session_ids[i]`` replayed under ``actions[i]``
    (clipped to bounds) with logged behavior log-density
    ``behavior_logdensity[i]`` of the unclipped draw ``raw_actions[i]``, giving
    single-session KPIs ``kpis[i]``.
    """

    def __init__(self, policy, session_ids, actions, raw_actions, behavior_logdensity, kpis):
        self.policy: RandomizationPolicy = policy
        self.session_ids = np.asarray(session_ids)
        self.actions = np.asarray(actions, dtype=float)
        self.raw_actions = np.asarray(raw_actions, dtype=float)
        self.behavior_logdensity = np.asarray(behavior_logdensity, dtype=float)
        self.kpis = np.asarray(kpis, dtype=float)
        n = len(self.session_ids)
        if n == 0:
            raise ConstructionError("an artificial dataset needs at least one record")
        shapes_ok = (
            self.actions.shape == self.raw_actions.shape == (n, len(policy.center))
            and self.behavior_logdensity.shape == (n,)
            and self.kpis.shape == (n, len(KPI_NAMES))
        )
        if not shapes_ok:
            raise ConstructionError("artificial dataset arrays are not row-aligned")
        if not np.all(np.isfinite(self.behavior_logdensity)):
            raise ConstructionError("behavior log-densities must be finite")
        self._canonical = None
        for arr in (self.session_ids, self.actions, self.raw_actions,
                    self.behavior_logdensity, self.kpis):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.session_ids)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ArtificialDataset):
            return NotImplemented
        return self.policy == other.policy and all(
            np.array_equal(getattr(self, a), getattr(other, a))
            for a in ("session_ids", "actions", "raw_actions", "behavior_logdensity", "kpis")
        )

    @property
    def records(self) -> List[Tuple[int, Setting, float, KpiVector]]:
        return [
            (int(sid), Setting(tuple(a)), float(ld), KpiVector.from_array(k, 1))
            for sid, a, ld, k in zip(self.session_ids, self.actions.tolist(),
                                     self.behavior_logdensity, self.kpis)
        ]

    def canonical_order(self) -> np.ndarray:
        """Record order that depends only on record contents, not on storage order."""
        if self._canonical is None:
            keys = [self.raw_actions[:, j] for j in reversed(range(self.raw_actions.shape[1]))]
            self._canonical = np.lexsort(keys + [self.session_ids])
        return self._canonical

    def permuted(self, perm: Sequence[int]) -> "ArtificialDataset":
        perm = np.asarray(perm)
        return ArtificialDataset(
            self.policy, self.session_ids[perm], self.actions[perm], self.raw_actions[perm],
            self.behavior_logdensity[perm], self.kpis[perm],
        )


def collect_artificial(
    log: SessionLog,
    policy: RandomizationPolicy,
    n_artificial: int,
    model,
    seed,
    space: Optional[ParameterSpace] = None,
    ledger: Optional[CostLedger] = None,
    threads: Optional[int] = None,
) -> ArtificialDataset:
    """Replay uniformly resampled sessions under Gaussian-randomized settings.

    ``seed`` may be an int or a :class:`numpy.random.SeedSequence`.
    """
    if n_artificial < 1:
        raise ConstructionError(f"need n_artificial >= 1, got {n_artificial}")
    if policy.clip_to_bounds and space is None:
        raise ConstructionError("clipping to bounds needs the parameter space")
    rng = np.random.default_rng(seed)
    center = policy.center.as_array()
    sigma = np.array(policy.sigma)
    rows = rng.integers(0, len(log), size=n_artificial)
    raw = center + sigma * rng.standard_normal((n_artificial, len(center)))
    actions = np.clip(raw, space.lower, space.upper) if policy.clip_to_bounds else raw
    logdens = gaussian_logdensity(raw, center, sigma)

    chunks = [range(i, min(i + CHUNK_ROWS, n_artificial)) for i in range(0, n_artificial, CHUNK_ROWS)]
    parts = parallel_map(
        lambda ch: model.kpi_rows(log, rows[ch.start:ch.stop], actions[ch.start:ch.stop]),
        chunks, threads,
    )
    if ledger is not None:
        ledger.add(replay_count=n_artificial)
    return ArtificialDataset(
        policy, log.session_ids[rows], actions, raw, logdens, np.concatenate(parts, axis=0)
    )
