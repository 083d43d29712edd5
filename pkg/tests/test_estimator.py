import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from camot.errors import InsufficientPointsError, InvalidInputError
from camot.estimator import (
    AngleEstimator,
    AngleHistory,
    EstimatorConfig,
    angle_error,
    error_terms,
    estimate_frame,
    extrapolate_clipped_box,
    lift_all,
    mean_aspect,
    optimize_angle,
    select_boxes,
    smooth_angle,
)
from camot.geometry import BBox, lift_detection, plane_angle
from camot.optimize import nelder_mead
from camot.pipeline import estimate_sequence
from camot.synth import SceneSpec, make_scene


def scene_frame(theta_deg, n=25, noise=0.0, seed=0):
    spec = SceneSpec(n_objects=n, theta_star=math.radians(theta_deg), noise=noise, seed=seed, n_frames=1)
    dets, gt = make_scene(spec)[0]
    return spec, dets, gt


def selected(dets, cam, n_plane=40):
    return [dets[i] for i in select_boxes(dets, cam, n_plane)]


# --------------------------------------------------------------------------
# select_boxes / extrapolate_clipped_box

def test_select_one_box_per_region(cam):
    dets = [BBox(x - 10, 500, 20, 50, 0.8) for x in (100, 600, 1100, 1600)]
    assert select_boxes(dets, cam, 4) == [0, 1, 2, 3]


def test_select_keeps_most_confident_in_region(cam):
    dets = [BBox(100, 500, 20, 50, 0.8), BBox(150, 400, 20, 50, 0.9)]
    assert select_boxes(dets, cam, 4) == [1]


def test_select_skips_clipped(cam):
    dets = [BBox(-5, 500, 20, 50, 0.99), BBox(600, 500, 20, 50, 0.3)]
    assert select_boxes(dets, cam, 4) == [1]


def test_extrapolate_unclipped_is_noop(cam):
    box = BBox(100, 100, 40, 100)
    assert extrapolate_clipped_box(box, cam, 0.4) is box


def test_extrapolate_bottom_clip(cam):
    box = BBox(100, 1000, 40, 80, 0.7)
    out = extrapolate_clipped_box(box, cam, 0.4)
    assert (out.top, out.w, out.h, out.conf) == (1000, 40, pytest.approx(100.0), 0.7)


def test_extrapolate_left_clip(cam):
    box = BBox(0, 100, 20, 100)
    out = extrapolate_clipped_box(box, cam, 0.4)
    assert out.right == 20
    assert out.w == pytest.approx(40.0)
    assert out.h == 100


def test_extrapolate_never_shrinks(cam):
    box = BBox(0, 100, 80, 100)  # already wider than 0.4 * height
    assert extrapolate_clipped_box(box, cam, 0.4).tlbr() == box.tlbr()


def test_extrapolate_outside_frame(cam):
    with pytest.raises(InvalidInputError):
        extrapolate_clipped_box(BBox(-50, 100, 20, 100), cam, 0.4)


def test_mean_aspect_default(cam):
    assert mean_aspect([BBox(-1, 10, 5, 10)], cam) == pytest.approx(0.41)
    assert mean_aspect([BBox(10, 10, 5, 10), BBox(10, 10, 3, 10)], cam) == pytest.approx(0.4)


# --------------------------------------------------------------------------
# error terms

@pytest.mark.parametrize("theta_deg", [10.0, 30.0, 50.0])
def test_error_terms_vanish_at_truth(theta_deg):
    spec, dets, _ = scene_frame(theta_deg)
    terms = error_terms(spec.theta_star, selected(dets, spec.cam), spec.cam, spec.H, mode="exact")
    assert terms.regr < 1e-6
    assert terms.angle < 1e-3
    # every lifted segment is parallel to the fitted normal
    assert terms.normal < 1e-12
    assert terms.total < 1e-4


def test_angle_error_grows_away_from_truth():
    spec, dets, _ = scene_frame(30.0)
    boxes = selected(dets, spec.cam)
    at = angle_error(spec.theta_star, boxes, spec.cam, spec.H, mode="exact")[0]
    off = angle_error(spec.theta_star + math.radians(5), boxes, spec.cam, spec.H, mode="exact")[0]
    assert off > 100 * at


@pytest.mark.parametrize("theta_deg", [20.0, 35.0])
def test_angle_term_is_gap_to_plane_angle(theta_deg):
    spec, dets, _ = scene_frame(30.0, noise=2.0, seed=4)
    terms = error_terms(math.radians(theta_deg), selected(dets, spec.cam), spec.cam, spec.H, mode="exact")
    expect = 2 / math.pi * abs(math.radians(theta_deg) - plane_angle(terms.plane))
    assert terms.angle == pytest.approx(expect, abs=1e-15)
    assert terms.total == pytest.approx(0.6 * terms.normal + 0.3 * terms.angle + 0.1 * terms.regr)


def test_angle_error_needs_three_boxes(cam):
    with pytest.raises(InsufficientPointsError):
        angle_error(0.3, [BBox(100, 600, 20, 50)] * 2, cam, 1.7)


# --------------------------------------------------------------------------
# optimize_angle

def test_optimize_recovers_30_degrees():
    spec, dets, _ = scene_frame(30.0)
    theta, err = optimize_angle(selected(dets, spec.cam), spec.cam, EstimatorConfig(), 0.0)
    assert abs(math.degrees(theta) - 30.0) < 0.5
    assert err < 1e-4


def test_optimize_quadratic_objective(cam):
    cfg = EstimatorConfig(tau_eps=1e-10)
    theta, val = optimize_angle([], cam, cfg, 0.0, objective=lambda t: (t - 0.4) ** 2)
    assert abs(theta - 0.4) < 1e-4
    assert val < 1e-10


def test_optimize_two_boxes_is_insufficient(cam):
    with pytest.raises(InsufficientPointsError):
        optimize_angle([BBox(100, 600, 20, 50), BBox(900, 700, 20, 50)], cam, EstimatorConfig(), 0.0)


def test_optimize_respects_bounds(cam):
    theta, _ = optimize_angle([], cam, EstimatorConfig(), 0.3, objective=lambda t: 2.0 - t)
    assert theta == pytest.approx(math.pi / 2 - 0.01)
    theta, _ = optimize_angle([], cam, EstimatorConfig(), 0.3, objective=lambda t: 1.0 + t)
    assert theta == 0.0


@given(st.floats(0.1, 1.4), st.floats(0.05, 10.0))
def test_h_invariance_of_chosen_angle(theta_deg_scale, s):
    spec, dets, _ = scene_frame(15.0 + 30.0 * theta_deg_scale / 1.4, n=12, noise=1.0, seed=2)
    boxes = selected(dets, spec.cam)
    a, _ = optimize_angle(boxes, spec.cam, EstimatorConfig(H=1.7), 0.0)
    b, _ = optimize_angle(boxes, spec.cam, EstimatorConfig(H=1.7 * s), 0.0)
    assert abs(a - b) < 1e-6


# --------------------------------------------------------------------------
# nelder_mead

def test_nelder_mead_rosenbrock():
    rosen = lambda x: (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2
    res = nelder_mead(rosen, [-1.2, 1.0], 0.5, xtol=1e-10, max_iters=2000)
    assert res.x == pytest.approx([1.0, 1.0], abs=1e-4)


def test_nelder_mead_stops_at_target():
    res = nelder_mead(lambda x: float(x[0] ** 2), [3.0], 1.0, target=0.5)
    assert res.reason == "target"
    assert res.fun < 0.5


def test_nelder_mead_initial_step_flips_inside_bounds():
    seen = []

    def f(x):
        seen.append(float(x[0]))
        return float((x[0] - 0.2) ** 2)

    nelder_mead(f, [1.0], 0.1, bounds=([0.0], [1.0]), max_iters=0)
    assert seen == [1.0, pytest.approx(0.9)]


# --------------------------------------------------------------------------
# smoothing

def test_smooth_constant():
    h = AngleHistory(15)
    for f in range(1, 10):
        h.push(f, 0.3)
    assert smooth_angle(h) == pytest.approx(0.3)


def test_smooth_hand_value():
    h = AngleHistory(2)
    h.push(1, math.radians(10.0))
    h.push(2, math.radians(20.0))
    assert math.degrees(smooth_angle(h)) == pytest.approx(50.0 / 3.0)


def test_smooth_single_entry():
    h = AngleHistory(15)
    h.push(4, 0.7)
    assert smooth_angle(h) == 0.7


def test_smooth_skips_gap_frames():
    # a frame without an estimate keeps its slot in the window
    h = AngleHistory(3)
    h.push(1, 0.0)
    h.push(3, 0.6)
    assert smooth_angle(h) == pytest.approx((1 * 0.0 + 3 * 0.6) / 4)


def test_smooth_window_from_fps():
    assert AngleHistory.for_fps(30).window == 15
    assert EstimatorConfig(fps=25).window == 12


@given(st.lists(st.floats(0.0, 1.5), min_size=1, max_size=40), st.integers(1, 20))
def test_smooth_within_hull(values, w):
    h = AngleHistory(w)
    for f, v in enumerate(values, start=1):
        h.push(f, v)
    recent = values[-w:]
    assert min(recent) - 1e-12 <= smooth_angle(h) <= max(recent) + 1e-12


def test_history_rejects_out_of_order():
    h = AngleHistory(3)
    h.push(2, 0.1)
    with pytest.raises(InvalidInputError):
        h.push(2, 0.1)
    with pytest.raises(InvalidInputError):
        smooth_angle(AngleHistory(3))


# --------------------------------------------------------------------------
# estimate_frame

def test_sequence_at_20_degrees_settles():
    spec = SceneSpec(n_objects=25, theta_star=math.radians(20.0), n_frames=60, motion="linear", seed=5)
    dets = {gt.frame: d for d, gt in make_scene(spec)}
    geoms = estimate_sequence(dets, spec.cam, EstimatorConfig())
    late = [g for g in geoms if g.frame > 15]
    assert max(abs(math.degrees(g.theta) - 20.0) for g in late) < 2.0


def test_fallback_keeps_previous_plane():
    spec, dets, _ = scene_frame(30.0, n=10)
    est = AngleEstimator(spec.cam)
    first = est.step(dets, 1)
    assert not first.used_fallback
    second = est.step(dets[:2], 2)
    assert second.used_fallback
    assert second.plane is first.plane
    assert second.theta == first.theta
    assert set(second.points) == {0, 1}


def test_cold_start_empty_frame(cam):
    cfg = EstimatorConfig(theta0=math.radians(10.0))
    g = estimate_frame([], cam, cfg, None, AngleHistory(cfg.window))
    assert g.used_fallback
    assert g.theta == cfg.theta0 == g.theta_raw
    assert g.points == {}
    assert g.plane is None
    assert g.frame == 1


def test_lift_all_extrapolates_clipped_boxes():
    spec, dets, _ = scene_frame(30.0, n=6)
    cut = BBox(500.0, 1000.0, 40.0, 80.0, 0.9)
    boxes = list(dets) + [cut]
    pts = lift_all(boxes, spec.theta_star, spec.cam, spec.H, "exact")
    assert set(pts) == set(range(len(boxes)))
    full = extrapolate_clipped_box(cut, spec.cam, mean_aspect(boxes, spec.cam))
    assert full.h > cut.h
    ref = lift_detection(full, spec.theta_star, spec.cam, spec.H, mode="exact").centroid
    assert pts[len(dets)] == pytest.approx(ref, rel=1e-12)
    assert lift_all([], 0.3, spec.cam, spec.H, "exact") == {}


@pytest.mark.parametrize(
    "kw", [dict(n_plane=2), dict(lambdas=(1.0, -0.1, 0.1)), dict(theta0=2.0), dict(mode="x"), dict(fps=0)]
)
def test_config_validation(kw):
    with pytest.raises(InvalidInputError):
        EstimatorConfig(**kw)
