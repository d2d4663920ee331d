import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from codesign.diffkit import Gradient, ParamVector
from codesign.optimize import (
    COORDINATE_RATIO,
    AdamConfig,
    OptimizationAborted,
    ScanPoint,
    adam_run,
    alternating_vs_simultaneous_demo,
    lr_schedule,
    robustness_scan,
    second_difference,
    sweep_ratio_bruteforce,
    toy_quadratic,
)


def pv(**kw):
    return ParamVector(tuple(kw), np.array(list(kw.values()), dtype=float), ("dimensionless",) * len(kw))


def square(x):
    v = x.values
    return float(v @ v), Gradient(x.names, 2 * v)


@pytest.mark.parametrize("step,factor", [(0, 1.0), (5000, 0.5), (10000, 0.25)])
def test_schedule_examples(step, factor):
    assert lr_schedule(AdamConfig(r_init=0.003), step) == pytest.approx(0.003 * factor, rel=1e-15)


def test_schedule_without_decay_is_constant():
    cfg = AdamConfig(r_init=8e-5, decay_halflife_steps=None)
    assert lr_schedule(cfg, 0) == lr_schedule(cfg, 12345) == 8e-5


@pytest.mark.parametrize("kw", [{"r_init": 0.0}, {"b1": 1.0}, {"b2": 0.0}, {"steps": -1}, {"decay_halflife_steps": 0}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        AdamConfig(**kw)


def test_quadratic_converges():
    x, trace = adam_run(square, pv(x=1.0), AdamConfig(r_init=0.1, steps=500))
    assert abs(x["x"]) < 1e-3
    assert len(trace.records) == 501


def test_zero_gradient_leaves_parameters():
    x0 = pv(a=0.3, b=-2.0)
    x, _ = adam_run(lambda p: (1.0, Gradient(p.names, np.zeros(2))), x0, AdamConfig(steps=50))
    np.testing.assert_array_equal(x.values, x0.values)


def test_recorded_rates_and_determinism():
    cfg = AdamConfig(r_init=0.05, decay_halflife_steps=20, steps=60, snapshot_every=25)
    x1, t1 = adam_run(square, pv(a=0.7, b=-0.2), cfg)
    x2, t2 = adam_run(square, pv(a=0.7, b=-0.2), cfg)
    np.testing.assert_array_equal(x1.values, x2.values)
    assert [r.value for r in t1.records] == [r.value for r in t2.records]
    assert [r.lr for r in t1.records] == [lr_schedule(cfg, s) for s in range(61)]
    assert sorted(t1.snapshots) == [0, 25, 50, 60]
    assert np.all(np.diff(t1.steps) > 0)


@given(st.floats(0.2, 5.0), st.floats(0.001, 0.1))
def test_quadratic_trend_after_burn_in(x0, r):
    # Adam rings around the minimum, so the trend is read off the maximum of 25-step blocks
    _, trace = adam_run(square, pv(x=x0), AdamConfig(r_init=r, steps=300, decay_halflife_steps=None))
    blocks = trace.values[50:300].reshape(10, 25).max(axis=1)
    for prev, nxt in zip(blocks[:-1], blocks[1:]):
        assert nxt < prev or nxt < 1e-12


def test_abort_keeps_trace():
    def fg(p):
        v = p["x"]
        return (float("nan") if v < 0.95 else v * v), Gradient(p.names, np.array([2 * v]))

    with pytest.raises(OptimizationAborted) as info:
        adam_run(fg, pv(x=1.0), AdamConfig(r_init=0.01, steps=100))
    assert len(info.value.trace.records) > 0
    assert info.value.params["x"] < 0.95


def test_callback_sees_every_step():
    seen = []
    adam_run(square, pv(x=1.0), AdamConfig(steps=5), lambda s, x, v: seen.append(s))
    assert seen == list(range(6))


# ---------------------------------------------------------------------------
# scans


def test_scan_symmetric_for_even_objective():
    x = pv(phi_p=0.4, other=1.0)
    pts = robustness_scan(lambda p: (p["phi_p"] - 0.4) ** 2 + p["other"], x, [-0.02, -0.01, 0.0, 0.01, 0.02])
    vals = [p.value for p in pts]
    assert vals[0] == pytest.approx(vals[4], abs=1e-15) and vals[1] == pytest.approx(vals[3], abs=1e-15)
    assert vals[2] == 1.0


def test_scan_records_failures_and_continues():
    def f(p):
        if p["phi_p"] > 0:
            raise RuntimeError("boom")
        return 0.0

    pts = robustness_scan(f, pv(phi_p=0.0), [-0.1, 0.1, -0.2])
    assert [p.error is None for p in pts] == [True, False, True]
    assert "boom" in pts[1].error


def test_second_difference():
    pts = [ScanPoint(-0.01, 1.0), ScanPoint(0.0, 0.5), ScanPoint(0.01, 2.0)]
    assert second_difference(pts) == 2.0
    with pytest.raises(ValueError):
        second_difference(pts[:2])


# ---------------------------------------------------------------------------
# simultaneous versus alternating


def test_demo_meets_claims():
    r = alternating_vs_simultaneous_demo()
    assert r.simultaneous_value < 1e-8
    assert r.simultaneous_evaluations <= 200
    assert r.alternating_solves == 60
    assert r.alternating_value >= 100 * max(r.simultaneous_value, 1e-8)


def test_sweep_ratio_constant_and_matches_bruteforce():
    r = alternating_vs_simultaneous_demo()
    np.testing.assert_allclose(r.sweep_ratios, r.predicted_sweep_ratio, rtol=1e-9)
    brute = sweep_ratio_bruteforce((1.0, -0.3))
    np.testing.assert_allclose(brute, COORDINATE_RATIO**4, rtol=1e-6)


def test_first_steps_from_slow_eigendirection():
    r = alternating_vs_simultaneous_demo(start=(1.0, 1.0))
    np.testing.assert_allclose(r.simultaneous_first_step, -np.array([1.0, 1.0]) / np.sqrt(2), atol=1e-15)
    assert abs(r.alternating_first_step[1]) == 0.0
    assert toy_quadratic((0.0, 0.0)) == 0.0
