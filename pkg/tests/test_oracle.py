import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scenforge.config import OracleThresholds
from scenforge.document import parse_document
from scenforge.errors import DegenerateDistribution, MissingGoal, NonMonotonicTime, OracleError, TooFewSamples
from scenforge.map_graph import WorldPose
from scenforge.oracle import (TraceSample, assess_smoothness, classify_behaviors, compute_kinematics,
                              detect_collision, goal_from_document, lift_association, moving_average,
                              obstacle_footprints, signal_positions)

from conftest import seed_for


def make_trace(t, v, heading=0.0, x0=0.0, y0=0.0):
    """Samples whose positions integrate v along heading (trapezoidal)."""
    t = np.asarray(t, float)
    v = np.broadcast_to(np.asarray(v, float), t.shape)
    h = np.broadcast_to(np.asarray(heading, float), t.shape)
    ds = np.concatenate(([0.0], np.diff(t) * (v[1:] + v[:-1]) / 2))
    x = x0 + np.cumsum(ds * np.cos(h))
    y = y0 + np.cumsum(ds * np.sin(h))
    return [TraceSample(*map(float, row)) for row in zip(t, x, y, v, h)]


def grid(t_end, dt):
    return np.round(np.arange(0, round(t_end / dt) + 1) * dt, 9)


# -- kinematics ----------------------------------------------------------------

def test_constant_motion_has_zero_derivatives():
    s = compute_kinematics(make_trace(grid(3, 0.01), 5.0, 0.3))
    assert np.allclose(s.a, 0) and np.allclose(s.jerk, 0) and np.allclose(s.yaw_rate, 0)


def test_cubic_speed_jerk_at_one_ms():
    t = grid(3, 0.001)
    s = compute_kinematics(make_trace(t, t ** 3))
    mask = s.t_jerk > 0.5
    rel = np.abs(s.jerk[mask] - 6 * s.t_jerk[mask]) / (6 * s.t_jerk[mask])
    assert rel.max() < 0.02


def test_resampling_from_irregular_spacing():
    rng = np.random.default_rng(0)
    t = np.sort(np.concatenate(([0.0, 2.0], rng.uniform(0, 2, 3000))))
    t = np.unique(t)
    s = compute_kinematics(make_trace(t, 2 * t))  # a = 2
    assert np.allclose(s.a, 2, atol=1e-6)
    assert s.dt == 0.01 and np.allclose(np.diff(s.t), 0.01)


def test_yaw_unwrapped():
    t = grid(2, 0.01)
    heading = np.mod(3.0 + 0.5 * t, 2 * math.pi) - math.pi  # wraps at +pi
    s = compute_kinematics(make_trace(t, 1.0, heading))
    assert np.allclose(s.yaw_rate, 0.5, atol=1e-6)


def test_time_errors():
    with pytest.raises(NonMonotonicTime):
        compute_kinematics([TraceSample(t, 0, 0, 0, 0) for t in (0, 0.01, 0.01)])
    with pytest.raises(TooFewSamples):
        compute_kinematics([TraceSample(t, 0, 0, 0, 0) for t in (0, 0.01)])
    with pytest.raises(OracleError):
        compute_kinematics(make_trace(grid(1, 0.01), 1.0), jerk_interval=0.1)
    with pytest.raises(OracleError):
        TraceSample(0, float("nan"), 0, 0, 0)


def test_moving_average_examples():
    assert np.allclose(moving_average(np.full(50, 3.7), 10), 3.7)
    alt = np.array([1.0, -1.0] * 50)
    assert abs(moving_average(alt, 10)[-1]) < 1e-12
    assert moving_average(np.arange(10.0), 10)[-1] == 4.5
    assert moving_average(np.arange(10.0), 0.1, dt=0.01)[-1] == 4.5
    # warm-up: mean of what is available
    assert list(moving_average([2.0, 4.0, 6.0], 10)) == [2.0, 3.0, 4.0]


@settings(max_examples=50)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=80), st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=80),
       st.floats(-5, 5), st.integers(1, 20))
def test_moving_average_linear_and_bounded(xs, ys, k, n):
    m = min(len(xs), len(ys))
    x, y = np.array(xs[:m]), np.array(ys[:m])
    lhs = moving_average(x + k * y, n)
    rhs = moving_average(x, n) + k * moving_average(y, n)
    assert np.allclose(lhs, rhs, atol=1e-6)
    ma = moving_average(x, n)
    assert (ma >= x.min() - 1e-9).all() and (ma <= x.max() + 1e-9).all()


# -- collision -----------------------------------------------------------------

def step_trace(da, t_step=1.0, v0=10.0, dt=0.01):
    """Acceleration steps from 0 to ``da`` at t_step (one grid interval)."""
    t = grid(3, dt)
    v = np.where(t <= t_step, v0, v0 + da * (t - t_step))
    return make_trace(t, v)


def test_step_flagged_at_300_not_500():
    s = compute_kinematics(step_trace(-4.0))
    assert s.jerk.min() == pytest.approx(-400, rel=1e-6)
    hits = detect_collision(s, 300)
    assert len(hits) == 1 and hits[0].evidence["jerk"] == pytest.approx(-400, rel=1e-6)
    assert hits[0].t_start == pytest.approx(1.0, abs=0.011)
    assert detect_collision(s, 500) == []


def test_smooth_braking_peak_250():
    s = compute_kinematics(step_trace(-2.5))
    assert abs(s.jerk).max() == pytest.approx(250, rel=1e-6)
    assert detect_collision(s, 300) == []


def test_stationary_no_collision():
    assert detect_collision(compute_kinematics(make_trace(grid(5, 0.01), 0.0))) == []


def test_collision_threshold_positive():
    with pytest.raises(ValueError):
        detect_collision(compute_kinematics(make_trace(grid(1, 0.01), 0.0)), 0)


# -- smoothness ----------------------------------------------------------------

def test_sustained_jerk_finding():
    # raw jerk 1.2 on [2, 5]: the 1 s trailing average holds 1.2 on [3, 5] and
    # exceeds 0.9 from 2.75 to 5.25
    t = grid(8, 0.01)
    tau = np.clip(t - 2, 0, 3)
    v = 0.6 * tau ** 2 + 3.6 * np.clip(t - 5, 0, None)
    s = compute_kinematics(make_trace(t, v))
    found = assess_smoothness(s)
    assert [f.evidence["metric"] for f in found] == ["jerk"]
    f = found[0]
    assert f.t_start == pytest.approx(2.75, abs=0.02)
    assert f.t_end == pytest.approx(5.25, abs=0.02)
    plateau = (s.t_jerk > 3.05) & (s.t_jerk < 4.95)
    assert np.allclose(s.avg_jerk[plateau], 1.2, atol=1e-3)
    assert f.t_start <= 3 and f.t_end >= 5


def test_steady_turn_inside_band():
    t = grid(6, 0.01)
    s = compute_kinematics(make_trace(t, 5.0, math.radians(8) * t))
    assert assess_smoothness(s) == []


def test_swerve_yaw_finding():
    t = grid(6, 0.01)
    rate = math.radians(25)
    heading = rate * np.clip(t - 2, 0, 2)
    s = compute_kinematics(make_trace(t, 5.0, heading))
    found = assess_smoothness(s)
    assert [f.evidence["metric"] for f in found] == ["yaw_rate"]
    assert found[0].evidence["peak"] == pytest.approx(25, abs=0.01)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=12), st.lists(st.floats(-0.4, 0.4), min_size=4, max_size=12))
def test_smoothness_spans_match_threshold_masks(accs, yaws):
    # piecewise speed and heading profiles, one segment per second
    t = grid(len(accs), 0.01)
    a = np.repeat(accs, 100)[: t.size - 1]
    v = 20 + np.concatenate(([0.0], np.cumsum(a) * 0.01))
    w = np.interp(t, np.arange(len(yaws)), np.cumsum(yaws))
    s = compute_kinematics(make_trace(t, v, w))
    found = assess_smoothness(s)
    for metric, series, tt, limit in (("jerk", s.avg_jerk, s.t_jerk, 0.9),
                                      ("yaw_rate", s.avg_yaw_rate, s.t_yaw, math.radians(10))):
        mask = np.abs(series) > limit
        covered = np.zeros_like(mask)
        for f in found:
            if f.evidence["metric"] == metric:
                covered |= (tt >= f.t_start - 1e-9) & (tt <= f.t_end + 1e-9)
        assert (covered == mask).all()


# -- classification ------------------------------------------------------------

def test_failure_to_start():
    trace = make_trace(grid(20, 0.1), 0.0)
    found = classify_behaviors(trace, None, goal=WorldPose(100, 0, 0))
    assert [f.category for f in found] == ["failure_to_start"]


def test_plan_failure_50_m_short():
    trace = make_trace(grid(10, 0.1), 5.0)
    found = classify_behaviors(trace, None, goal=WorldPose(100, 0, 0))
    assert [f.category for f in found] == ["plan_failure"]
    assert found[0].evidence["goal_distance"] == pytest.approx(50, abs=1e-6)
    near = classify_behaviors(make_trace(grid(19.5, 0.1), 5.0), None, goal=WorldPose(100, 0, 0))
    assert near == []


def test_obstacle_contact_is_misinterpretation():
    doc = seed_for("bicycle_cone")
    poly = obstacle_footprints(doc)["obstacle1"]
    c = poly.centroid
    trace = make_trace(grid(10, 0.1), 4.0, 0.0, c.x - 20, c.y)
    found = classify_behaviors(trace, doc)
    assert [f.category for f in found] == ["misinterpretation"]
    assert found[0].evidence == {"reason": "obstacle_contact", "obstacle": "obstacle1"}
    # a parallel path 5 m to the side does not touch it
    clear = make_trace(grid(10, 0.1), 4.0, 0.0, c.x - 20, c.y + 5)
    assert all(f.category != "misinterpretation" for f in classify_behaviors(clear, doc))


def test_red_light_crossing():
    doc = seed_for("left_turn")
    s2 = signal_positions(doc)["s2"]
    assert (s2.x, s2.y) == pytest.approx((-8, 12), abs=1e-5)
    # southbound through the s2 stop line, 4 m onto the road
    trace = make_trace(grid(8, 0.1), 5.0, -math.pi / 2, -4.0, 30.0)
    goal = WorldPose(trace[-1].x, trace[-1].y, 0)
    red = [{"t": 0.0, "signal_id": "s2", "state": "red"}]
    green = [{"t": 0.0, "signal_id": "s2", "state": "green"}]
    found = classify_behaviors(trace, doc, goal=goal, signal_log=red)
    assert [f.category for f in found] == ["misinterpretation"]
    assert found[0].evidence["signal_id"] == "s2"
    assert classify_behaviors(trace, doc, goal=goal, signal_log=green) == []
    assert classify_behaviors(trace, doc, goal=goal) == []


def test_collision_and_plan_failure_co_occur():
    trace = step_trace(-4.0)
    found = classify_behaviors(trace, None, goal=WorldPose(500, 0, 0), node_id="7")
    assert {f.category for f in found} >= {"collision", "plan_failure"}
    assert {f.node_id for f in found} == {"7"}


def test_missing_goal():
    trace = make_trace(grid(2, 0.1), 1.0)
    with pytest.raises(MissingGoal):
        classify_behaviors(trace, None)
    doc = seed_for("left_turn")
    text = doc.text()
    stripped = "\n".join(l for l in text.splitlines() if "EgoGoal" not in l)
    with pytest.raises(MissingGoal):
        goal_from_document(parse_document(stripped))


def test_thresholds_configurable():
    trace = make_trace(grid(10, 0.1), 5.0)
    th = OracleThresholds(eps_goal=60.0)
    assert classify_behaviors(trace, None, goal=WorldPose(100, 0, 0), thresholds=th) == []


# -- lift ----------------------------------------------------------------------

def _dataset(n, n_f, n_c, n_fc):
    findings, features = {}, {}
    # first n_fc nodes have both, then feature only, then category only
    for i in range(n):
        nid = str(i)
        has_f = i < n_f
        has_c = i < n_fc or (n_f <= i < n_f + n_c - n_fc)
        features[nid] = ["x=1"] if has_f else ["x=0"]
        findings[nid] = ["collision"] if has_c else []
    return findings, features


def test_lift_forty_fifty_thirty():
    findings, features = _dataset(100, 40, 50, 30)
    rows = {(a.feature, a.category): a for a in lift_association(findings, features)}
    a = rows[("x=1", "collision")]
    assert a.lift == 1.5 and (a.n_fc, a.n_f, a.n_c, a.n) == (30, 40, 50, 100)


def test_lift_independent_is_one():
    findings, features = _dataset(100, 50, 40, 20)
    rows = {(a.feature, a.category): a.lift for a in lift_association(findings, features)}
    assert rows[("x=1", "collision")] == 1.0
    assert rows[("x=0", "collision")] == 1.0


def test_lift_degenerate():
    with pytest.raises(DegenerateDistribution):
        lift_association({"a": ["collision"], "b": ["plan_failure"]}, {"a": ["f=1"], "b": ["f=1"]})
    with pytest.raises(DegenerateDistribution):
        lift_association({}, {"a": ["f=1"], "b": ["f=2"]})


def test_lift_ranking_and_support():
    findings = {"1": ["collision"], "2": ["collision"], "3": [], "4": []}
    features = {"1": ["a=1", "b=1"], "2": ["a=1", "b=2"], "3": ["a=2", "b=1"], "4": ["a=2", "b=2"]}
    out = lift_association(findings, features)
    assert [a.feature for a in out] == ["a=1", "b=1", "b=2"]
    assert [a.lift for a in out] == [2.0, 1.0, 1.0]
    assert [a.feature for a in lift_association(findings, features, min_support=2)] == ["a=1"]


def brute_force_lift(findings, features):
    nodes = sorted(features)
    n = len(nodes)
    all_f = sorted({f for nid in nodes for f in features[nid]})
    all_c = sorted({c for nid in nodes for c in findings.get(nid, [])})
    out = {}
    for f in all_f:
        for c in all_c:
            n_f = sum(1 for nid in nodes if f in features[nid])
            n_c = sum(1 for nid in nodes if c in findings.get(nid, []))
            n_fc = sum(1 for nid in nodes if f in features[nid] and c in findings.get(nid, []))
            if n_fc:
                out[(f, c)] = float(Fraction(n_fc, n) / (Fraction(n_f, n) * Fraction(n_c, n)))
    return out


@st.composite
def datasets(draw):
    n = draw(st.integers(2, 200))
    feats = draw(st.lists(st.sets(st.sampled_from(["a=0", "a=1", "b=0", "b=1", "c=x"]), min_size=1),
                          min_size=n, max_size=n))
    cats = draw(st.lists(st.sets(st.sampled_from(["collision", "plan_failure", "smoothness_issue"])),
                         min_size=n, max_size=n))
    return {str(i): sorted(c) for i, c in enumerate(cats)}, {str(i): sorted(f) for i, f in enumerate(feats)}


@settings(max_examples=60, deadline=None)
@given(datasets())
def test_lift_matches_counting_oracle(data):
    findings, features = data
    n_bad = sum(1 for nid in features if findings[nid])
    if n_bad in (0, len(features)):
        with pytest.raises(DegenerateDistribution):
            lift_association(findings, features)
        return
    got = {(a.feature, a.category): a.lift for a in lift_association(findings, features)}
    assert got == brute_force_lift(findings, features)
