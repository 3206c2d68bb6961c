import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from trajaug.errors import ConfigError, UnobservedStateError
from trajaug.interaction import (
    REPORT_CSV_COLUMNS,
    TtcConfig,
    ego_vs_others_report,
    longitudinal_geometry,
    pairwise_ttc,
    scene_ttc_violation_counts,
    ttc_pair,
    ttc_violation_count,
)
from trajaug.kinematics import ComfortThresholds
from trajaug.scenario import AgentState
from trajaug.synthetic import GeneratorSpec, gen_synthetic

from conftest import make_scene, straight

CFG = TtcConfig()


def S(x, y, heading=0.0, vx=0.0, vy=0.0, length=4.0, width=2.0, observed=True):
    return AgentState((x, y), heading, (vx, vy), (length, width), observed)


def geometry_oracle(si, sj):
    # complex-number rotation into i's frame
    rot = complex(math.cos(-si.heading), math.sin(-si.heading))
    rel = complex(sj.position[0] - si.position[0], sj.position[1] - si.position[1]) * rot
    vi = complex(*si.velocity) * rot
    vj = complex(*sj.velocity) * rot
    return rel.real - si.length / 2 - sj.length / 2, vi.real - vj.real, rel.imag


def test_geometry_examples():
    g0, du, lat = longitudinal_geometry(S(0, 0, vx=10), S(10, 0, vx=5))
    assert (g0, du, lat) == (6.0, 5.0, 0.0)
    assert geometry_oracle(S(0, 0, vx=10), S(10, 0, vx=5)) == pytest.approx((6, 5, 0))
    g0, _, _ = longitudinal_geometry(S(0, 0), S(-10, 0))
    assert g0 < 0
    assert ttc_pair(S(0, 0, vx=10), S(-10, 0), CFG) == math.inf
    g0, _, lat = longitudinal_geometry(S(3, 3, length=4), S(3, 3, length=5))
    assert g0 == -4.5 and lat == 0.0


def test_geometry_rejects_unobserved():
    with pytest.raises(UnobservedStateError):
        longitudinal_geometry(S(0, 0), S(1, 0, observed=False))


finite = st.floats(-100, 100)


@given(finite, finite, st.floats(-4, 4), finite, finite, finite, finite, st.floats(-4, 4), finite,
       finite)
def test_geometry_matches_oracle(xi, yi, hi, vxi, vyi, xj, yj, hj, vxj, vyj):
    si, sj = S(xi, yi, hi, vxi, vyi), S(xj, yj, hj, vxj, vyj, length=5.0)
    assert longitudinal_geometry(si, sj) == pytest.approx(geometry_oracle(si, sj), abs=1e-9)


def test_ttc_examples():
    # g0 = 10: centers 14 m apart with 4 m boxes
    assert ttc_pair(S(0, 0, vx=15), S(14, 0, vx=10), CFG) == pytest.approx(2.0)
    assert ttc_pair(S(0, 0, vx=5), S(14, 0, vx=10), CFG) == math.inf
    assert ttc_pair(S(0, 0, vx=5), S(14, 0, vx=5), CFG) == math.inf
    # gate = (2 + 2) / 2 + 0.5 = 2.5 m
    assert ttc_pair(S(0, 0, vx=15), S(14, 2.5, vx=10), CFG) == pytest.approx(2.0)
    assert ttc_pair(S(0, 0, vx=15), S(14, 2.6, vx=10), CFG) == math.inf


def test_ttc_epsilon_guard_only_in_denominator():
    cfg = TtcConfig(epsilon=1.0)
    assert ttc_pair(S(0, 0, vx=10.5), S(14, 0, vx=10), cfg) == pytest.approx(10.0)


def test_ttc_config_validation():
    for bad in (dict(theta_ttc=0), dict(epsilon=-1), dict(lateral_margin=-0.1)):
        with pytest.raises(ConfigError):
            TtcConfig(**bad)
    TtcConfig(lateral_margin=0.0)


# --- brute-force rollout oracle -------------------------------------------------


def _corners(x, y, h, length, width):
    c, s = math.cos(h), math.sin(h)
    ux, uy = c * length / 2, s * length / 2
    wx, wy = -s * width / 2, c * width / 2
    return np.array([[x + ux + wx, y + uy + wy], [x + ux - wx, y + uy - wy],
                     [x - ux - wx, y - uy - wy], [x - ux + wx, y - uy + wy]])


def boxes_overlap(a, b):
    # separating axis test on two convex quads
    for poly in (a, b):
        for k in range(4):
            edge = poly[(k + 1) % 4] - poly[k]
            axis = np.array([-edge[1], edge[0]])
            pa, pb = a @ axis, b @ axis
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True


def rollout_first_contact(si, sj, horizon, step=0.01):
    """First time the front-to-rear gap along i's heading reaches zero."""
    e = np.array([math.cos(si.heading), math.sin(si.heading)])
    pi, pj = np.array(si.position), np.array(sj.position)
    vi, vj = np.array(si.velocity), np.array(sj.velocity)
    for k in range(int(horizon / step) + 1):
        t = k * step
        front_i = (pi + vi * t) @ e + si.length / 2
        rear_j = (pj + vj * t) @ e - sj.length / 2
        if rear_j - front_i <= 0:
            return t
    return None


def rollout_overlap(si, sj, horizon, step=0.01):
    for k in range(int(horizon / step) + 1):
        t = k * step
        a = _corners(si.position[0] + si.velocity[0] * t, si.position[1] + si.velocity[1] * t,
                     si.heading, si.length, si.width)
        b = _corners(sj.position[0] + sj.velocity[0] * t, sj.position[1] + sj.velocity[1] * t,
                     sj.heading, sj.length, sj.width)
        if boxes_overlap(a, b):
            return True
    return False


@settings(max_examples=60, deadline=None)
@given(st.floats(0.5, 30), st.floats(0.5, 10), st.floats(0, 20), st.floats(-math.pi, math.pi),
       st.floats(-1.5, 1.5))
def test_ttc_matches_rollout(gap, closing, speed, heading, lateral):
    e = np.array([math.cos(heading), math.sin(heading)])
    n = np.array([-e[1], e[0]])
    pj = (gap + 4.0) * e + lateral * n
    si = S(0, 0, heading, *(speed + closing) * e)
    sj = S(*pj, heading, *(speed * e))
    ttc = ttc_pair(si, sj, CFG)
    assert math.isfinite(ttc)
    hit = rollout_first_contact(si, sj, ttc + 1.0)
    assert hit is not None and abs(hit - ttc) <= 0.01 + 1e-9


@settings(max_examples=30, deadline=None)
@given(st.floats(0.5, 20), st.floats(0.5, 10), st.floats(2.6, 10), st.sampled_from([-1, 1]))
def test_gated_pairs_never_collide(gap, closing, lateral, side):
    si = S(0, 0, 0.0, 5.0 + closing, 0.0)
    sj = S(gap + 4.0, side * lateral, 0.0, 5.0, 0.0)
    assert ttc_pair(si, sj, CFG) == math.inf
    assert not rollout_overlap(si, sj, horizon=10.0, step=0.05)


@given(st.floats(0.1, 50), st.floats(0.01, 20), st.floats(0.01, 20))
def test_ttc_antitone_in_closing_speed(g0, du1, du2):
    assume(abs(du1 - du2) > 1e-6)
    lo, hi = sorted((du1, du2))
    t_lo = ttc_pair(S(0, 0, vx=hi), S(g0 + 4, 0, vx=hi - lo), CFG)
    t_hi = ttc_pair(S(0, 0, vx=hi), S(g0 + 4, 0, vx=0.0), CFG)
    assert t_hi < t_lo


@given(st.floats(-7, 7), st.floats(-50, 50), st.floats(-50, 50), st.floats(0.1, 20),
       st.floats(0.1, 5))
def test_ttc_rigid_invariant(rot, tx, ty, gap, closing):
    si, sj = S(0, 0, 0.3, 8 * math.cos(0.3), 8 * math.sin(0.3)), None
    e = np.array([math.cos(0.3), math.sin(0.3)])
    sj = S(*((gap + 4) * e), 0.3, *((8 - closing) * e))
    c, s = math.cos(rot), math.sin(rot)

    def move(st_):
        x, y = st_.position
        vx, vy = st_.velocity
        return S(c * x - s * y + tx, s * x + c * y + ty, st_.heading + rot,
                 c * vx - s * vy, s * vx + c * vy)

    assert ttc_pair(move(si), move(sj), CFG) == pytest.approx(ttc_pair(si, sj, CFG), rel=1e-9)


# --- violation counts ---------------------------------------------------------


def tailgating_scene(ttc_s=0.5, closing=5.0):
    gap = ttc_s * closing
    leader = straight("lead", x0=20.0 + gap + 4.0, y0=20.0, speed=10.0)
    follower = straight("follow", x0=20.0, y0=20.0, speed=10.0)
    vel = follower.velocity + [closing, 0.0]
    follower = follower.__class__("follow", "vehicle", follower.position, follower.heading, vel,
                                  follower.bbox, True)
    return make_scene([leader, follower])


def test_single_agent_scene_zero():
    scene = make_scene([])
    assert ttc_violation_count(scene, "ego", CFG) == 0


def test_tailgating_counts():
    scene = tailgating_scene()
    assert ttc_violation_count(scene, "follow", CFG) == 21
    assert ttc_violation_count(scene, "lead", CFG) == 0
    assert ttc_violation_count(scene, "follow", TtcConfig(theta_ttc=0.4)) == 0
    # exactly at threshold is not a violation
    assert ttc_violation_count(scene, "follow", TtcConfig(theta_ttc=0.5)) == 0


def test_tailgating_rollout_confirms_every_step():
    scene = tailgating_scene()
    f, lead = scene.track("follow"), scene.track("lead")
    for t in range(21):
        hit = rollout_first_contact(f.state(t), lead.state(t), 2.0)
        assert hit is not None and hit < 1.0


def test_unobserved_partner_skipped():
    scene = tailgating_scene()
    lead = scene.track("lead")
    obs = np.ones(101, bool)
    obs[:10] = False
    hidden = lead.__class__("lead", "vehicle", lead.position, lead.heading, lead.velocity,
                            lead.bbox, obs)
    scene = make_scene([hidden, scene.track("follow")])
    assert ttc_violation_count(scene, "follow", CFG) == 11


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 3.0), st.floats(0.05, 3.0))
def test_count_monotone_in_threshold(t1, t2):
    lo, hi = sorted((t1, t2))
    scene = tailgating_scene(ttc_s=1.0)
    a = scene_ttc_violation_counts(scene, TtcConfig(theta_ttc=lo))
    b = scene_ttc_violation_counts(scene, TtcConfig(theta_ttc=hi))
    assert all(a[k] <= b[k] for k in a)


def test_pairwise_matches_scalar(small_corpus):
    scene = small_corpus[0]
    st_ = scene.stacked
    ttc = pairwise_ttc(st_.position, st_.heading, st_.velocity, st_.bbox, st_.observed, CFG)
    tracks = scene.tracks
    for t in (0, 10, 20):
        for i, ti in enumerate(tracks):
            for j, tj in enumerate(tracks):
                si, sj = ti.state(t), tj.state(t)
                if i == j or not (si.observed and sj.observed):
                    expected = math.inf
                else:
                    expected = ttc_pair(si, sj, CFG)
                assert ttc[i, j, t] == pytest.approx(expected)


def test_prefilter_does_not_change_nearby_result():
    scene = tailgating_scene()
    assert scene_ttc_violation_counts(scene, TtcConfig(prefilter_radius=50.0)) == \
        scene_ttc_violation_counts(scene, CFG)


# --- ego vs others report -------------------------------------------------------


def test_report_stationary_all_zero():
    spec = GeneratorSpec(n_scenes=3, ego_stationary=True, n_cruisers=0, n_turners=0,
                         n_stationary=4)
    report = ego_vs_others_report(gen_synthetic(spec, 1), ComfortThresholds(), CFG)
    assert report.aggregates["scenes"] == 3
    for row in report.csv_rows():
        assert row[3] == 0 and row[4] == 0


def test_report_empty():
    report = ego_vs_others_report([], ComfortThresholds(), CFG)
    assert report.rows == () and report.aggregates["scenes"] == 0
    assert report.to_csv().strip() == ",".join(REPORT_CSV_COLUMNS)


def test_report_jerky_others_exceed_ego():
    spec = GeneratorSpec(n_scenes=4, n_cruisers=2, n_turners=0, n_jerky=2)
    corpus = list(gen_synthetic(spec, 3))
    report = ego_vs_others_report(corpus, ComfortThresholds(), CFG)
    agg = report.aggregates
    # analytic: every jerky agent violates at all 21 steps, cruisers never
    assert agg["ego"]["comfort"]["mean"] == 0.0
    assert agg["others"]["comfort"]["mean"] == pytest.approx(21 * 2 / 4)
    parsed = list(csv.DictReader(io.StringIO(report.to_csv())))
    assert {r["role"] for r in parsed} == {"ego", "other"}
    assert json.loads(report.to_json())["scenes"] == 4


def test_report_sorted_by_scene_id(small_corpus):
    fwd = ego_vs_others_report(small_corpus, ComfortThresholds(), CFG)
    rev = ego_vs_others_report(small_corpus[::-1], ComfortThresholds(), CFG)
    assert fwd.to_csv() == rev.to_csv()
    ids = [r.scene_id for r in fwd.rows]
    assert ids == sorted(ids)
