import math


from camot.estimator import EstimatorConfig
from camot.metrics import evaluate
from camot.pipeline import estimate_sequence, track_sequence
from camot.plotting import plot_angles, plot_eval, plot_scene, plot_tracks
from camot.synth import SceneSpec, generate_scene, make_scene

PNG = b"\x89PNG\r\n\x1a\n"


def scene():
    spec = SceneSpec(n_objects=6, theta_star=math.radians(25.0), n_frames=20, motion="linear", seed=1)
    frames = make_scene(spec)
    return spec, {gt.frame: d for d, gt in frames}, frames


def test_angle_figure_is_reproducible(tmp_path):
    spec, dets, _ = scene()
    geoms = estimate_sequence(dets, spec.cam, EstimatorConfig())
    a = plot_angles(geoms, tmp_path / "a.png", spec.theta_star)
    b = plot_angles(geoms, tmp_path / "b.png", spec.theta_star)
    assert a.read_bytes().startswith(PNG)
    assert a.read_bytes() == b.read_bytes()


def test_track_and_eval_figures(tmp_path):
    spec, dets, frames = scene()
    res = track_sequence(dets, spec.cam)
    assert plot_tracks(res.by_frame(), tmp_path / "t.png", spec.cam.width, spec.cam.height).read_bytes().startswith(PNG)
    assert plot_tracks(res.by_frame(), tmp_path / "t2.png").exists()
    gt = {g.frame: [(o.id, o.box) for o in g.objects if o.visible] for _, g in frames}
    rep = evaluate(gt, res.by_frame())
    assert plot_eval(rep, tmp_path / "e.png").read_bytes().startswith(PNG)


def test_scene_figure(tmp_path):
    world = generate_scene(SceneSpec(n_objects=4, motion="crossing", n_frames=30))
    assert plot_scene(world.positions, world.ids, tmp_path / "s.png").read_bytes().startswith(PNG)


def test_fallback_only_angles(tmp_path):
    from camot.estimator import FrameGeometry

    geoms = [FrameGeometry(f, 0.0, 0.0, None, {}, 0.0, True) for f in range(1, 4)]
    assert plot_angles(geoms, tmp_path / "f.png").exists()
