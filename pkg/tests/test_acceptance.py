"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that pytest prints in an
"acceptance criteria" section of the terminal summary.
"""
import json
import math
import re
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgis import (
    BumpSurfaceModel,
    ParameterSpace,
    RandomizationPolicy,
    Setting,
    SgisConfig,
    UserResponseModel,
    collect_artificial,
    evaluate_setting,
    generate_sessions,
    importance_weight,
    io,
    is_estimate,
    scenarios,
)
from sgis.cli import main
from sgis.search import (
    correlation_report,
    enumerate_baseline,
    iterative_is_baseline,
    sgis,
)

from conftest import record_criterion

ROOT = Path(__file__).resolve().parents[1]


def _write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture(scope="module")
def off_grid_runs(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("offgrid")
    cfg = str(ROOT / "configs" / "off_grid_optimum.json")
    log = str(tmp / "log.jsonl")
    assert main(["gen-sessions", "--config", cfg, "--out", log]) == 0
    assert main(["sgis", "--config", cfg, "--log", log, "--out", str(tmp / "sgis.json")]) == 0
    assert main(["enumerate", "--config", cfg, "--log", log, "--out", str(tmp / "enum.json"),
                 "--points-per-dim", "201"]) == 0
    assert main(["compare", str(tmp / "sgis.json"), str(tmp / "enum.json"),
                 "--out", str(tmp / "cmp.csv")]) == 0
    return tmp


@pytest.mark.slow
def test_criterion_1_off_grid_optimum(off_grid_runs):
    res = io.result_from_dict(io.read_json(off_grid_runs / "sgis.json"))
    oracle = io.result_from_dict(io.read_json(off_grid_runs / "enum.json"))
    gap = abs(oracle.best_score - res.best_score) / abs(oracle.best_score)
    coarse = res.seed_best_score
    peak = np.array(scenarios.OFF_GRID_PEAK)
    # the peak sits off the c=5 grid but within one sigma of its nearest grid point
    grid_axis = np.linspace(0.0, 2.0, 5)
    nearest = np.array([grid_axis[np.argmin(abs(grid_axis - p))] for p in peak])
    off_grid = bool(np.all(np.min(abs(grid_axis[:, None] - peak[None, :]), axis=0) > 1e-9))
    within_sigma = bool(np.all(abs(nearest - peak) <= 0.25))
    passed = gap <= 0.02 and res.best_score > coarse and off_grid and within_sigma
    record_criterion(1, "off-grid optimum recovery", passed,
                     f"sgis {res.best_score:.4f} oracle {oracle.best_score:.4f} "
                     f"gap {100 * gap:.3f}% coarse {coarse:.4f}")
    assert passed


@pytest.mark.slow
def test_criterion_2_cost_advantage(off_grid_runs):
    res = io.result_from_dict(io.read_json(off_grid_runs / "sgis.json"))
    oracle = io.result_from_dict(io.read_json(off_grid_runs / "enum.json"))
    cfg = io.load_config(ROOT / "configs" / "off_grid_optimum.json").sgis
    n = cfg.n_sessions
    fixed = cfg.c**2 * n + cfg.k * cfg.n_artificial
    extra = res.ledger.replay_count - fixed
    arithmetic_ok = extra % n == 0 and 0 <= extra <= cfg.k * n
    enum_ok = oracle.ledger.replay_count == 201**2 * n
    ratio = res.ledger.replay_count / oracle.ledger.replay_count
    table = (off_grid_runs / "cmp.csv").read_text().splitlines()
    sgis_row = dict(zip(table[0].split(","), table[1].split(",")))
    passed = arithmetic_ok and enum_ok and ratio < 0.10 and sgis_row["cost_ordering"] == "True" \
        and sgis_row["dominance"] == "True"
    record_criterion(2, "cost advantage", passed,
                     f"replays {res.ledger.replay_count} vs {oracle.ledger.replay_count} "
                     f"(ratio {ratio:.5f})")
    assert passed


@pytest.fixture(scope="module")
def small_dataset():
    log = generate_sessions(80, 12)
    space = ParameterSpace(((0.0, 2.0), (0.0, 2.0), (-4.0, 4.0)))
    policy = RandomizationPolicy(Setting((1.0, 1.0, 0.0)), (0.2, 0.2, 1.0))
    return collect_artificial(log, policy, 2000, UserResponseModel(), 5, space)


def test_criterion_3_estimator_laws(small_dataset):
    data = small_dataset
    n = len(data)

    # identity: every weight is exactly one and the estimate is the record mean
    weights = [importance_weight(Setting(tuple(r)), data.policy, ld)
               for r, ld in zip(data.raw_actions, data.behavior_logdensity)]
    assert all(w == 1.0 for w in weights)
    ident = is_estimate(data, data.policy, cap=math.inf)
    np.testing.assert_allclose(ident.kpis.as_array(), data.kpis.mean(axis=0), rtol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.6, 1.4), st.floats(0.6, 1.4), st.floats(-2, 2), st.floats(0.5, 50))
    def laws(x, y, z, cap):
        target = data.policy.recentered(Setting((x, y, z)))
        uncapped = is_estimate(data, target, cap=math.inf)
        assert uncapped == is_estimate(data, target, cap=1e308)
        snis = is_estimate(data, target, cap=cap, normalize="self")
        lo, hi = data.kpis.min(axis=0), data.kpis.max(axis=0)
        assert np.all(snis.kpis.as_array() >= lo) and np.all(snis.kpis.as_array() <= hi)
        assert 1.0 <= snis.ess <= n and 1.0 <= uncapped.ess <= n

    try:
        laws()
    except AssertionError:
        record_criterion(3, "estimator identity and cap laws", False, "property violated")
        raise
    record_criterion(3, "estimator identity and cap laws", True,
                     f"{n} unit weights; cap, SNIS range and ESS laws held on 30 random targets")


@pytest.mark.slow
def test_criterion_4_unbiasedness():
    log = generate_sessions(2000, 1)
    model = UserResponseModel()
    space = ParameterSpace(((0.0, 3.0),), ("bid_exponent",))
    sigma = 0.002
    a0 = 1.0
    behavior = RandomizationPolicy(Setting((a0,)), (sigma,), clip_to_bounds=False)
    target = behavior.recentered(Setting((a0 + 0.3 * sigma,)))
    estimates = np.array([
        is_estimate(collect_artificial(log, behavior, 50_000, model, seed, space),
                    target, cap=math.inf, normalize="plain").kpis.as_array()
        for seed in range(200)
    ])
    direct = evaluate_setting(log, target.center, model).as_array()
    se = estimates.std(axis=0, ddof=1) / math.sqrt(len(estimates))
    z = np.abs(estimates.mean(axis=0) - direct) / se
    passed = bool(np.all(z <= 3.0))
    record_criterion(4, "IS unbiasedness", passed,
                     "z per KPI " + " ".join(f"{k}={v:.2f}" for k, v in
                                             zip(("rpm", "clicks", "iy", "revenue"), z)))
    assert passed


@pytest.mark.slow
def test_criterion_5_correlation():
    raw = scenarios.with_overrides(scenarios.default_auction(), sgis={"n_artificial": 50_000})
    cfg = io.parse_config(raw)
    log = generate_sessions(cfg.sgis.n_sessions, cfg.seed)
    policy = RandomizationPolicy(cfg.deployment, cfg.sgis.sigma)
    rep = correlation_report(log, cfg.space, cfg.model, cfg.deployment, policy, 50,
                             cfg.sgis, cfg.seed)
    passed = rep.r is not None and rep.r >= 0.9
    record_criterion(5, "IS vs simulator correlation", passed,
                     f"r = {rep.r} over {len(rep.rows) - rep.excluded} probes")
    assert passed


def test_criterion_6_baseline_equivalence():
    cfg = io.parse_config(scenarios.with_overrides(
        scenarios.off_grid_optimum(), sgis={"u": 0, "n_sessions": 300}))
    log = generate_sessions(cfg.sgis.n_sessions, cfg.seed)
    base = evaluate_setting(log, cfg.deployment, cfg.model)
    obj = io.build_objective(cfg, base)
    res = sgis(log, cfg.space, cfg.model, obj, cfg.sgis)
    ref = enumerate_baseline(log, cfg.space, cfg.model, obj, cfg.sgis.c, k=cfg.sgis.k)
    passed = [(c.setting, c.score) for c in res.best_pool] == \
        [(c.setting, c.score) for c in ref.best_pool] and res.best_pool == ref.best_pool
    record_criterion(6, "u=0 equals coarse enumeration", passed,
                     f"{len(res.best_pool)} pool entries compared exactly")
    assert passed


@pytest.mark.slow
def test_criterion_7_local_trap():
    cfg = io.parse_config(scenarios.two_bumps())
    log = generate_sessions(cfg.sgis.n_sessions, cfg.seed)
    base = evaluate_setting(log, cfg.deployment, cfg.model)
    obj = io.build_objective(cfg, base)
    oracle = enumerate_baseline(log, cfg.space, cfg.model, obj, 201, k=1).best_score
    inferior_box = ParameterSpace(((0.0, 1.0), (0.0, 1.0)))
    inferior = enumerate_baseline(log, inferior_box, cfg.model, obj, 201, k=1)
    assert inferior.best.setting.values[0] < 1.0 and inferior.best.setting.values[1] < 1.0
    inferior_score = inferior.best_score

    trapped = iterative_is_baseline(log, cfg.space, cfg.model, obj, cfg.iterative_start,
                                    cfg.iterative_config())
    found = sgis(log, cfg.space, cfg.model, obj, cfg.sgis)
    trap_gap = abs(trapped.best_score - inferior_score) / abs(inferior_score)
    sgis_gap = abs(found.best_score - oracle) / abs(oracle)
    passed = trap_gap <= 0.02 and trapped.best_score < 0.9 * oracle and sgis_gap <= 0.02
    record_criterion(7, "local-trap contrast", passed,
                     f"iterative {trapped.best_score:.2f} (inferior mode {inferior_score:.2f}), "
                     f"sgis {found.best_score:.2f} (oracle {oracle:.2f})")
    assert passed


def test_criterion_8_live_results_documentation_only():
    readme = (ROOT / "README.md").read_text()
    documented = all(v in readme for v in ("+0.55%", "+1.11%", "-1.67%", "-0.74%"))
    # outcome values that only a live platform can produce never appear in code or tests
    live_only = re.compile(r"0\.55\b|1\.67\b")
    sources = list((ROOT / "src").rglob("*.py")) + [
        p for p in (ROOT / "tests").glob("*.py") if p.name != Path(__file__).name
    ]
    leaks = [str(p) for p in sources if live_only.search(p.read_text())]
    passed = documented and not leaks
    record_criterion(8, "live A/B deltas stay documentation-only", passed,
                     "README lists them as out of scope" if passed else f"leaks: {leaks}")
    assert passed


def test_criterion_9_determinism(tmp_path):
    raw = {"seed": 4, "sgis": {"c": 3, "d": 5, "k": 2, "u": 2, "n_sessions": 60,
                               "n_artificial": 400},
           "iterative": {"start": [0.5, 1.5, -1.0], "u": 2}}
    cfg = _write(tmp_path / "cfg.json", raw)
    outputs = {}
    for run, threads in (("a", "1"), ("b", "1"), ("c", "3")):
        d = tmp_path / run
        d.mkdir()
        t = ["--threads", threads]
        log = str(d / "log.jsonl")
        assert main(["gen-sessions", "--config", cfg, "--out", log] + t) == 0
        common = ["--config", cfg, "--log", log] + t
        assert main(["sgis", *common, "--out", str(d / "s.json")]) == 0
        assert main(["enumerate", *common, "--out", str(d / "e.json"),
                     "--points-per-dim", "4"]) == 0
        assert main(["is-baseline", *common, "--out", str(d / "i.json")]) == 0
        assert main(["correlation", *common, "--out", str(d / "c.csv"), "--n-probe", "10"]) == 0
        assert main(["compare", str(d / "s.json"), str(d / "e.json"), str(d / "i.json"),
                     "--out", str(d / "cmp.csv")]) == 0
        names = ["log.jsonl", "s.json", "e.json", "i.json", "c.csv", "c.json"]
        outputs[run] = {n: (d / n).read_bytes() for n in names}
        # the comparison table names its inputs by path; compare everything else
        outputs[run]["cmp.csv"] = re.sub(rb"[^,\n]*/" + run.encode() + rb"/", b"",
                                         (d / "cmp.csv").read_bytes())
    differing = sorted({n for r in ("b", "c") for n in outputs["a"]
                        if outputs[r][n] != outputs["a"][n]})
    passed = not differing
    record_criterion(9, "byte-identical reruns across thread counts", passed,
                     f"{len(outputs['a'])} outputs x 3 runs" if passed else f"differ: {differing}")
    assert passed
