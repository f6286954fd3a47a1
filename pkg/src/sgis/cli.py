"""Command-line entry point: ``sgis <command> ...``.

Commands: ``gen-sessions``, ``sgis``, ``enumerate``, ``is-baseline``,
``correlation`` and ``compare``. Configs are JSON; see README for the keys.
Exit code is 0 only when a command finished and wrote all of its outputs.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional, Sequence

from . import io
from .domain import ConstructionError, make_setting
from .search import (
    CorrelationReport,
    SgisResult,
    correlation_report,
    enumerate_baseline,
    iterative_is_baseline,
    sgis,
)
from .domain import RandomizationPolicy
from .simulator import evaluate_setting, generate_sessions

logger = logging.getLogger("sgis")


class CommandError(RuntimeError):
    pass


def _parse_values(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise CommandError(f"expected comma-separated numbers, got {text!r}") from exc


def _prepare(args):
    cfg = io.load_config(args.config, seed=args.seed, threads=args.threads)
    log_path = args.log or cfg.paths.get("log")
    if not log_path:
        raise CommandError("no session log given (--log or paths.log)")
    log = io.read_session_log(log_path)
    baseline = evaluate_setting(log, cfg.deployment, cfg.model)
    objective = io.build_objective(cfg, baseline)
    return cfg, log, baseline, objective


def _out_path(args, cfg) -> Path:
    out = args.out or cfg.paths.get("out")
    if not out:
        raise CommandError("no output path given (--out or paths.out)")
    return Path(out)


def _write_result(out: Path, result: SgisResult, cfg, log, baseline, started: float,
                  threads) -> None:
    doc = io.result_to_dict(result, log.digest(), cfg.to_dict(), baseline)
    io.write_json(out, doc)
    io.write_json(io.meta_path(out), {
        "wall_time_s": time.perf_counter() - started,
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "threads": threads,
    })


def _describe_best(result: SgisResult, space) -> str:
    best = result.best
    if best is None:
        return "no feasible setting found"
    setting = ", ".join(f"{n}={v:.6g}" for n, v in zip(space.names, best.setting.values))
    d = best.delta
    return (f"best setting: {setting}\n"
            f"  score {best.score:+.4f}  dRPM {d.d_rpm:+.3f}%  dClicks {d.d_clicks:+.3f}%  "
            f"dIY {d.d_iy:+.3f}%  dRevenue {d.d_revenue:+.3f}%")


def _finish(result: SgisResult) -> int:
    if result.best is None:
        print("error: no feasible setting anywhere; partial trace written", file=sys.stderr)
        return 1
    return 0


def cmd_gen_sessions(args) -> int:
    cfg = io.load_config(args.config, seed=args.seed, threads=args.threads)
    out = _out_path(args, cfg)
    log = generate_sessions(cfg.sgis.n_sessions, cfg.seed)
    io.write_session_log(log, out)
    print(f"wrote {len(log)} sessions to {out}")
    print(f"sha256 {log.digest()}")
    return 0


def cmd_sgis(args) -> int:
    started = time.perf_counter()
    cfg, log, baseline, objective = _prepare(args)
    out = _out_path(args, cfg)
    result = sgis(log, cfg.space, cfg.model, objective, cfg.sgis)
    _write_result(out, result, cfg, log, baseline, started, args.threads)
    sg = cfg.sgis
    full_points = (sg.d * (sg.c - 1) + 1) ** cfg.space.dims
    print(_describe_best(result, cfg.space))
    print(f"iterations run: {result.iterations_run} ({result.stop_reason})")
    print(f"replays: sgis {result.ledger.replay_count}, full enumeration at "
          f"{sg.d * (sg.c - 1) + 1} points/dim would need {full_points * len(log)}")
    print(f"IS reweightings: {result.ledger.is_reweigh_count}")
    return _finish(result)


def cmd_enumerate(args) -> int:
    started = time.perf_counter()
    cfg, log, baseline, objective = _prepare(args)
    out = _out_path(args, cfg)
    result = enumerate_baseline(log, cfg.space, cfg.model, objective, args.points_per_dim,
                                k=cfg.sgis.k, max_grid=cfg.sgis.max_grid,
                                threads=cfg.sgis.threads)
    _write_result(out, result, cfg, log, baseline, started, args.threads)
    print(_describe_best(result, cfg.space))
    print(f"replays: {result.ledger.replay_count}")
    return _finish(result)


def cmd_is_baseline(args) -> int:
    started = time.perf_counter()
    cfg, log, baseline, objective = _prepare(args)
    out = _out_path(args, cfg)
    if args.start is not None:
        start, clipped = make_setting(cfg.space, _parse_values(args.start))
        if clipped:
            logger.warning("start %s clipped into bounds: %s", args.start, start.values)
    else:
        start = cfg.iterative_start or cfg.deployment
    result = iterative_is_baseline(log, cfg.space, cfg.model, objective, start,
                                   cfg.iterative_config())
    _write_result(out, result, cfg, log, baseline, started, args.threads)
    print(_describe_best(result, cfg.space))
    for t in result.trace:
        for values, value in t.confirmed:
            shown = "infeasible" if value is None else f"{value:+.4f}"
            print(f"  iterate {t.iteration}: {list(values)} -> {shown}")
    print(f"replays: {result.ledger.replay_count}, IS reweightings: "
          f"{result.ledger.is_reweigh_count}")
    return _finish(result)


def write_correlation(out: Path, report: CorrelationReport, space, log_digest: str) -> Path:
    header = list(space.names) + ["is_delta_iy", "sim_delta_iy"]
    rows = [list(s.values) + [x, y] for s, x, y in report.rows]
    io.write_csv(out, header, rows)
    sidecar = out.with_suffix(".json")
    io.write_json(sidecar, {
        "r": report.r,
        "reason": report.reason or None,
        "n_probe": len(report.rows),
        "excluded": report.excluded,
        "center": list(report.center.values),
        "log_digest": log_digest,
    })
    return sidecar


def cmd_correlation(args) -> int:
    cfg, log, _, _ = _prepare(args)
    out = _out_path(args, cfg)
    if args.center is not None:
        center = make_setting(cfg.space, _parse_values(args.center))[0]
    else:
        center = cfg.correlation_center or cfg.deployment
    n_probe = args.n_probe or cfg.n_probe
    policy = RandomizationPolicy(center, cfg.sgis.sigma, cfg.sgis.clip_to_bounds)
    report = correlation_report(log, cfg.space, cfg.model, center, policy, n_probe,
                                cfg.sgis, cfg.seed)
    sidecar = write_correlation(out, report, cfg.space, log.digest())
    if report.r is None:
        print(f"r undefined: {report.reason}")
    else:
        print(f"pearson r = {report.r:.4f} over {len(report.rows) - report.excluded} probes")
    print(f"wrote {out} and {sidecar}")
    return 0


def compare_rows(docs: Sequence[dict], names: Sequence[str]) -> List[dict]:
    ref = docs[0]
    for name, doc in zip(names, docs):
        if doc["log_digest"] != ref["log_digest"]:
            raise CommandError(f"{name} was computed on a different session log")
        for key in ("space", "objective"):
            if doc["config"].get(key) != ref["config"].get(key):
                raise CommandError(f"{name} uses a different {key} than {names[0]}")
    results = [io.result_from_dict(d) for d in docs]
    ref_replays = results[0].ledger.replay_count
    enum_replays = [r.ledger.replay_count for r in results if r.method == "enumerate"]
    rows = []
    for name, res in zip(names, results):
        row = {
            "file": name,
            "method": res.method,
            "best_score": res.best_score,
            "best_setting": " ".join(repr(v) for v in res.best.setting.values) if res.best else "",
            "replay_count": res.ledger.replay_count,
            "is_reweigh_count": res.ledger.is_reweigh_count,
            "replay_ratio_vs_first": (res.ledger.replay_count / ref_replays
                                      if ref_replays else None),
            "dominance": "",
            "cost_ordering": "",
        }
        if res.method == "sgis":
            seed = res.seed_best_score
            row["dominance"] = bool(res.best_score is not None and seed is not None
                                    and res.best_score >= seed)
            if enum_replays:
                row["cost_ordering"] = all(e >= 10 * res.ledger.replay_count for e in enum_replays)
        rows.append(row)
    return rows


def cmd_compare(args) -> int:
    docs = [io.read_json(p) for p in args.results]
    rows = compare_rows(docs, [str(p) for p in args.results])
    header = list(rows[0])
    wall = {}
    for p in args.results:
        meta = io.meta_path(p)
        wall[str(p)] = io.read_json(meta).get("wall_time_s") if meta.exists() else None
    print("  ".join(header + ["wall_time_s"]))
    for row in rows:
        print("  ".join(str(row[h]) for h in header) + f"  {wall[row['file']]}")
    if args.out:
        io.write_csv(args.out, header, [[row[h] for h in header] for row in rows])
        io.write_json(io.meta_path(args.out), {"wall_time_s": wall})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sgis", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_log=True):
        p.add_argument("--config", required=True)
        if needs_log:
            p.add_argument("--log")
        p.add_argument("--out")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int, help="worker cap (default: all cores)")

    p = sub.add_parser("gen-sessions", help="write a synthetic session log")
    common(p, needs_log=False)
    p.set_defaults(func=cmd_gen_sessions)

    p = sub.add_parser("sgis", help="run simulator-guided importance sampling")
    common(p)
    p.set_defaults(func=cmd_sgis)

    p = sub.add_parser("enumerate", help="simulate every point of a grid")
    common(p)
    p.add_argument("--points-per-dim", type=int, required=True)
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("is-baseline", help="iterative IS from a single start")
    common(p)
    p.add_argument("--start", help="comma-separated start values")
    p.set_defaults(func=cmd_is_baseline)

    p = sub.add_parser("correlation", help="IS vs simulator IY deltas on random probes")
    common(p)
    p.add_argument("--center", help="comma-separated center values")
    p.add_argument("--n-probe", type=int)
    p.set_defaults(func=cmd_correlation)

    p = sub.add_parser("compare", help="tabulate result files side by side")
    p.add_argument("results", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (io.FormatError, ConstructionError, CommandError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
