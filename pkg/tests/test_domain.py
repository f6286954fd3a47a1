import math
import threading

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sgis import (
    ConstructionError,
    CostLedger,
    KpiVector,
    ParameterSpace,
    RandomizationPolicy,
    Setting,
    SgisConfig,
    kpi_delta,
    make_setting,
)


def test_make_setting_interior_point():
    space = ParameterSpace(((0.0, 1.0),))
    setting, clipped = make_setting(space, [0.5])
    assert setting == Setting((0.5,))
    assert not clipped


def test_make_setting_clips_to_bound():
    space = ParameterSpace(((0.0, 1.0),))
    setting, clipped = make_setting(space, [1.7])
    assert setting.values == (1.0,)
    assert clipped


def test_make_setting_length_mismatch():
    space = ParameterSpace(((0.0, 1.0), (0.0, 2.0)))
    with pytest.raises(ConstructionError):
        make_setting(space, [0.2])


@pytest.mark.parametrize(
    "bounds, names",
    [((), ()), (((1.0, 1.0),), ()), (((0.0, math.inf),), ()), (((0.0, 1.0),), ("a", "b"))],
)
def test_parameter_space_rejects_bad_bounds(bounds, names):
    with pytest.raises(ConstructionError):
        ParameterSpace(bounds, names)


bounded = st.lists(
    st.tuples(st.floats(-100, 100), st.floats(0.01, 100)), min_size=1, max_size=4
).map(lambda spans: ParameterSpace(tuple((lo, lo + w) for lo, w in spans)))


@given(bounded, st.data())
def test_make_setting_idempotent(space, data):
    values = [data.draw(st.floats(-1e3, 1e3)) for _ in range(space.dims)]
    setting, _ = make_setting(space, values)
    assert space.contains(setting.values)
    again, clipped = make_setting(space, setting.values)
    assert again == setting
    assert not clipped


def test_kpi_delta_identity_and_arithmetic():
    base = KpiVector(1.0, 10.0, 100.0, 5.0)
    assert kpi_delta(base, base).d_rpm == 0.0
    cand = KpiVector(1.0, 10.0, 99.0, 5.0)
    assert kpi_delta(cand, base).d_iy == pytest.approx(-1.0)


def test_kpi_delta_zero_baseline_names_component():
    base = KpiVector(1.0, 0.0, 100.0, 5.0)
    with pytest.raises(ConstructionError, match="clicks"):
        kpi_delta(KpiVector(1.0, 1.0, 1.0, 1.0), base)


positive = st.floats(1e-6, 1e6)


@given(positive, positive, positive, positive)
def test_kpi_delta_of_self_is_zero(rpm, clicks, iy, revenue):
    kv = KpiVector(rpm, clicks, iy, revenue)
    d = kpi_delta(kv, kv)
    assert (d.d_rpm, d.d_clicks, d.d_iy, d.d_revenue) == (0.0, 0.0, 0.0, 0.0)


def test_kpi_vector_rejects_non_finite():
    with pytest.raises(ConstructionError):
        KpiVector(math.nan, 0.0, 0.0, 0.0)


def test_randomization_policy_validates_sigma():
    with pytest.raises(ConstructionError):
        RandomizationPolicy(Setting((0.0, 0.0)), (1.0,))
    with pytest.raises(ConstructionError):
        RandomizationPolicy(Setting((0.0,)), (0.0,))


@pytest.mark.parametrize(
    "kwargs",
    [{"c": 1}, {"d": 1}, {"k": 0}, {"u": -1}, {"epsilon": -0.1}, {"cap": 0.0},
     {"n_sessions": 0}, {"n_artificial": 0}, {"normalize": "other"}],
)
def test_sgis_config_invariants(kwargs):
    with pytest.raises(ConstructionError):
        SgisConfig(**kwargs)


def test_sgis_config_defaults_match_flagship_experiment():
    cfg = SgisConfig()
    assert (cfg.m, cfg.c, cfg.d, cfg.k, cfg.u) == (3, 15, 25, 5, 1)
    assert cfg.resolved_grid_mode() == "full-cartesian"
    assert SgisConfig(m=4).resolved_grid_mode() == "axis-sweeps"


def test_ledger_increments_are_atomic_and_monotone():
    ledger = CostLedger()

    def bump():
        for _ in range(1000):
            ledger.add(replay_count=1, is_reweigh_count=2)

    workers = [threading.Thread(target=bump) for _ in range(8)]
    for w in workers:
        w.start()
    for w in workers:
        w.join()
    assert ledger.replay_count == 8000
    assert ledger.is_reweigh_count == 16000
    with pytest.raises(ValueError):
        ledger.add(replay_count=-1)
    assert CostLedger.from_dict(ledger.to_dict()) == ledger
