"""File formats: session logs, run configs and result documents.

Session log (``.jsonl``): one session per line, a compact JSON object::

    {"v":1,"session_id":0,"user_features":[...],"candidates":[[bid,quality,base_click_logit],...]}

Result documents are JSON with ``"schema": "sgis-result"`` and a ``"version"``.
Run-specific timing goes to a ``<out>.meta.json`` sidecar so that the primary
document is byte-identical across reruns.
"""
from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from .domain import (
    CandidateAd,
    ConstructionError,
    CostLedger,
    KpiDelta,
    KpiVector,
    ParameterSpace,
    Session,
    Setting,
    SgisConfig,
    make_setting,
)
from .search import IterationTrace, ObjectiveSpec, ScoredCandidate, SgisResult
from .simulator import BumpSurfaceModel, SessionLog, UserResponseModel

LOG_VERSION = 1
RESULT_SCHEMA = "sgis-result"
RESULT_VERSION = 1

PathLike = Union[str, Path]


class FormatError(ValueError):
    """A file does not follow its documented format."""


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


# -- session logs -----------------------------------------------------------

def session_to_line(s: Session) -> str:
    return json.dumps(
        {
            "v": LOG_VERSION,
            "session_id": s.session_id,
            "user_features": list(s.user_features),
            "candidates": [[c.bid, c.quality, c.base_click_logit] for c in s.candidates],
        },
        separators=(",", ":"),
        allow_nan=False,
    )


def session_from_line(line: str, lineno: int) -> Session:
    try:
        rec = json.loads(line)
        if rec.get("v") != LOG_VERSION:
            raise FormatError(f"unsupported session log version {rec.get('v')!r}")
        unknown = set(rec) - {"v", "session_id", "user_features", "candidates"}
        if unknown:
            raise FormatError(f"unknown fields {sorted(unknown)}")
        cands = tuple(CandidateAd(float(b), float(q), float(z)) for b, q, z in rec["candidates"])
        return Session(int(rec["session_id"]), tuple(rec["user_features"]), cands)
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"session log line {lineno}: {exc}") from exc


def write_session_log(log: SessionLog, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in log.to_lines():
            fh.write(line + "\n")


def read_session_log(path: PathLike) -> SessionLog:
    sessions = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                raise FormatError(f"session log line {lineno}: empty line")
            sessions.append(session_from_line(line, lineno))
    try:
        return SessionLog(sessions)
    except ConstructionError as exc:
        raise FormatError(f"session log {path}: {exc}") from exc


# -- run configuration ------------------------------------------------------

DEFAULT_SPACE = {
    "names": ["bid_exponent", "quality_exponent", "ad_load_logit"],
    "bounds": [[0.0, 2.0], [0.0, 2.0], [-4.0, 4.0]],
}
DEFAULT_MODEL = {"kind": "auction", "click_weights": [1.0, 1.5, -0.3], "position_decay": 0.8}
DEFAULT_OBJECTIVE = {
    "maximize": "rpm",
    "constraints": [["iy", "<=", 0.0]],
    "deployment": [1.0, 1.0, 0.0],
}
DEFAULT_RANDOMIZATION = {"sigma": [0.1, 0.1, 2.0], "clip_to_bounds": True}
DEFAULT_CORRELATION = {"n_probe": 50, "center": None}
DEFAULT_ITERATIVE = {"start": None, "sigma": None, "u": None}
_SGIS_KEYS = {f.name for f in dataclasses.fields(SgisConfig)} - {"m", "seed", "sigma",
                                                                 "clip_to_bounds", "threads"}

_TOP_KEYS = {"seed", "space", "model", "objective", "randomization", "sgis",
             "correlation", "iterative", "paths"}


@dataclasses.dataclass(frozen=True)
class RunConfig:
    seed: int
    space: ParameterSpace
    model: Any
    objective_spec: Dict[str, Any]
    deployment: Setting
    sgis: SgisConfig
    n_probe: int
    correlation_center: Optional[Setting]
    iterative_start: Optional[Setting]
    iterative_overrides: Dict[str, Any]
    paths: Dict[str, str]

    def iterative_config(self) -> SgisConfig:
        """Search config for the single-start IS baseline."""
        return dataclasses.replace(self.sgis, **self.iterative_overrides)

    def to_dict(self) -> Dict[str, Any]:
        """The resolved config, defaults filled in (embedded in results)."""
        if isinstance(self.model, BumpSurfaceModel):
            model = {
                "kind": "bumps",
                "floor": self.model.floor,
                "price_spread": self.model.price_spread,
                "bumps": [{"center": list(c), "height": h, "width": w}
                          for c, h, w in self.model.bumps],
            }
        else:
            model = {"kind": "auction", "click_weights": list(self.model.click_weights),
                     "position_decay": self.model.position_decay}
        sg = self.sgis
        iterative = {"start": list(self.iterative_start.values) if self.iterative_start else None,
                     "sigma": None, "u": None}
        if "sigma" in self.iterative_overrides:
            iterative["sigma"] = list(self.iterative_overrides["sigma"])
        if "u" in self.iterative_overrides:
            iterative["u"] = self.iterative_overrides["u"]
        return {
            "seed": self.seed,
            "space": {"names": list(self.space.names),
                      "bounds": [list(b) for b in self.space.bounds]},
            "model": model,
            "objective": {
                "maximize": self.objective_spec["maximize"],
                "constraints": [list(c) for c in self.objective_spec["constraints"]],
                "deployment": list(self.deployment.values),
            },
            "randomization": {"sigma": list(sg.sigma), "clip_to_bounds": sg.clip_to_bounds},
            "sgis": {key: (_encode_float(getattr(sg, key)) if key == "cap" else getattr(sg, key))
                     for key in sorted(_SGIS_KEYS)},
            "iterative": iterative,
            "correlation": {
                "n_probe": self.n_probe,
                "center": list(self.correlation_center.values) if self.correlation_center else None,
            },
        }


def _encode_float(x: float):
    return "inf" if x == math.inf else x


def _decode_float(x) -> float:
    return math.inf if x in ("inf", "Infinity", None) else float(x)


def _section(raw: Dict[str, Any], name: str, defaults: Dict[str, Any]) -> Dict[str, Any]:
    given = raw.get(name, {})
    if not isinstance(given, dict):
        raise FormatError(f"config section {name!r} must be an object")
    unknown = set(given) - set(defaults)
    if unknown:
        raise FormatError(f"unknown keys in config section {name!r}: {sorted(unknown)}")
    return {**defaults, **given}


def _build_model(spec: Dict[str, Any], dims: int):
    kind = spec.get("kind", "auction")
    if kind == "auction":
        unknown = set(spec) - {"kind", "click_weights", "position_decay"}
        if unknown:
            raise FormatError(f"unknown keys in auction model: {sorted(unknown)}")
        return UserResponseModel(
            tuple(spec.get("click_weights", DEFAULT_MODEL["click_weights"])),
            float(spec.get("position_decay", DEFAULT_MODEL["position_decay"])),
        )
    if kind == "bumps":
        unknown = set(spec) - {"kind", "bumps", "floor", "price_spread"}
        if unknown:
            raise FormatError(f"unknown keys in bumps model: {sorted(unknown)}")
        bumps = []
        for b in spec["bumps"]:
            if set(b) != {"center", "height", "width"}:
                raise FormatError("each bump needs exactly center, height and width")
            if len(b["center"]) != dims:
                raise FormatError("bump center dimension does not match the space")
            bumps.append((tuple(b["center"]), float(b["height"]), float(b["width"])))
        return BumpSurfaceModel(tuple(bumps), float(spec.get("floor", 0.05)),
                                float(spec.get("price_spread", 0.2)))
    raise FormatError(f"unknown model kind {kind!r}")


def parse_config(raw: Dict[str, Any], seed: Optional[int] = None,
                 threads: Optional[int] = None) -> RunConfig:
    """Validate a config mapping; ``seed``/``threads`` override the file."""
    if not isinstance(raw, dict):
        raise FormatError("config must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise FormatError(f"unknown config keys: {sorted(unknown)}")
    if seed is None:
        if "seed" not in raw:
            raise FormatError("config needs a seed (or pass --seed)")
        seed = raw["seed"]
    try:
        space_d = _section(raw, "space", DEFAULT_SPACE)
        space = ParameterSpace(tuple(tuple(b) for b in space_d["bounds"]), tuple(space_d["names"]))
        model_raw = raw.get("model", DEFAULT_MODEL)
        model = _build_model(model_raw, space.dims)
        obj = _section(raw, "objective", DEFAULT_OBJECTIVE)
        deployment, clipped = make_setting(space, obj["deployment"])
        if clipped:
            raise FormatError("objective.deployment lies outside the space bounds")
        rand = _section(raw, "randomization", DEFAULT_RANDOMIZATION)
        sg_raw = raw.get("sgis", {})
        unknown = set(sg_raw) - _SGIS_KEYS
        if unknown:
            raise FormatError(f"unknown keys in config section 'sgis': {sorted(unknown)}")
        sg_kwargs = dict(sg_raw)
        if "cap" in sg_kwargs:
            sg_kwargs["cap"] = _decode_float(sg_kwargs["cap"])
        sgis_config = SgisConfig(
            m=space.dims, seed=int(seed), sigma=tuple(rand["sigma"]),
            clip_to_bounds=bool(rand["clip_to_bounds"]), threads=threads, **sg_kwargs,
        )
        corr = _section(raw, "correlation", DEFAULT_CORRELATION)
        it = _section(raw, "iterative", DEFAULT_ITERATIVE)
        paths = raw.get("paths", {})
        if not isinstance(paths, dict) or set(paths) - {"log", "out"}:
            raise FormatError("config section 'paths' accepts only 'log' and 'out'")
        corr_center = make_setting(space, corr["center"])[0] if corr["center"] else None
        start = make_setting(space, it["start"])[0] if it["start"] else None
        it_over = {}
        if it["sigma"] is not None:
            it_over["sigma"] = tuple(float(v) for v in it["sigma"])
        if it["u"] is not None:
            it_over["u"] = int(it["u"])
        dataclasses.replace(sgis_config, **it_over)
        return RunConfig(
            seed=int(seed), space=space, model=model,
            objective_spec={"maximize": obj["maximize"],
                            "constraints": [tuple(c) for c in obj["constraints"]]},
            deployment=deployment, sgis=sgis_config, n_probe=int(corr["n_probe"]),
            correlation_center=corr_center, iterative_start=start,
            iterative_overrides=it_over, paths=dict(paths),
        )
    except (ConstructionError, KeyError, TypeError) as exc:
        raise FormatError(f"invalid config: {exc}") from exc


def load_config(path: PathLike, seed: Optional[int] = None,
                threads: Optional[int] = None) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(raw, seed, threads)


def build_objective(cfg: RunConfig, baseline: KpiVector) -> ObjectiveSpec:
    return ObjectiveSpec(cfg.objective_spec["maximize"],
                         tuple(cfg.objective_spec["constraints"]), baseline)


# -- results ----------------------------------------------------------------

def _kpis_to_dict(k: KpiVector) -> Dict[str, Any]:
    return dataclasses.asdict(k)


def _candidate_to_dict(c: ScoredCandidate) -> Dict[str, Any]:
    return {
        "setting": list(c.setting.values),
        "kpis": _kpis_to_dict(c.kpis),
        "delta": dataclasses.asdict(c.delta),
        "score": c.score,
        "source": c.source,
    }


def _candidate_from_dict(d: Dict[str, Any]) -> ScoredCandidate:
    return ScoredCandidate(Setting(tuple(d["setting"])), KpiVector(**d["kpis"]),
                           KpiDelta(**d["delta"]), d["score"], d["source"])


def _pairs_to_list(pairs):
    return [{"setting": list(s), "score": v} for s, v in pairs]


def _pairs_from_list(items) -> Tuple:
    return tuple((tuple(float(x) for x in p["setting"]), p["score"]) for p in items)


def _trace_to_dict(t: IterationTrace) -> Dict[str, Any]:
    return {
        "iteration": t.iteration,
        "centers": [list(c) for c in t.centers],
        "proposals": _pairs_to_list(t.proposals),
        "confirmed": _pairs_to_list(t.confirmed),
        "best_score": t.best_score,
        "diagnostics": [dict(d) for d in t.diagnostics],
        "note": t.note,
    }


def _trace_from_dict(d: Dict[str, Any]) -> IterationTrace:
    return IterationTrace(
        d["iteration"], tuple(tuple(float(x) for x in c) for c in d["centers"]),
        _pairs_from_list(d["proposals"]), _pairs_from_list(d["confirmed"]),
        d["best_score"], tuple(dict(x) for x in d["diagnostics"]), d["note"],
    )


def result_to_dict(result: SgisResult, log_digest: str = "",
                   config: Optional[Dict[str, Any]] = None,
                   baseline: Optional[KpiVector] = None) -> Dict[str, Any]:
    return {
        "schema": RESULT_SCHEMA,
        "version": RESULT_VERSION,
        "method": result.method,
        "log_digest": log_digest,
        "config": config or {},
        "baseline_kpis": _kpis_to_dict(baseline) if baseline is not None else None,
        "best_pool": [_candidate_to_dict(c) for c in result.best_pool],
        "iterations_run": result.iterations_run,
        "ledger": result.ledger.to_dict(),
        "trace": [_trace_to_dict(t) for t in result.trace],
        "stop_reason": result.stop_reason,
    }


def result_from_dict(doc: Dict[str, Any]) -> SgisResult:
    if doc.get("schema") != RESULT_SCHEMA or doc.get("version") != RESULT_VERSION:
        raise FormatError("not a version-1 sgis result document")
    return SgisResult(
        doc["method"],
        [_candidate_from_dict(c) for c in doc["best_pool"]],
        doc["iterations_run"],
        CostLedger.from_dict(doc["ledger"]),
        [_trace_from_dict(t) for t in doc["trace"]],
        doc["stop_reason"],
    )


def write_json(path: PathLike, doc: Dict[str, Any]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dumps(doc))


def read_json(path: PathLike) -> Dict[str, Any]:
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path} is not valid JSON: {exc}") from exc


def meta_path(out: PathLike) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".meta.json")


def write_csv(path: PathLike, header: Sequence[str], rows: List[Sequence[Any]]) -> None:
    """Plain CSV: header row, '.' decimals via ``repr``, LF line endings."""
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_cell(v) for v in row])


def _csv_cell(v):
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return v
