"""Command-line entry point: ``camot synth | angle | track | eval``.

Exit codes: 0 success, 1 runtime or evaluation failure, 2 usage or input
validation failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import io
from .errors import CamotError, InvalidInputError, ParseError
from .estimator import FrameGeometry
from .geometry import BBox, CameraIntrinsics
from .metrics import evaluate
from .pipeline import estimate_sequence, track_sequence
from .synth import MOTIONS, SceneSpec, generate_scene, project_scene

log = logging.getLogger("camot")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# synth

def cmd_synth(args) -> int:
    if not 0.0 <= args.theta < 90.0:
        raise UsageError("--theta must lie in [0, 90) degrees")
    cam = CameraIntrinsics.from_focal_mm(args.f_mm, args.width, args.height)
    try:
        spec = SceneSpec(
            n_objects=args.objects,
            theta_star=math.radians(args.theta),
            cam=cam,
            n_frames=args.frames,
            fps=args.fps,
            motion=args.motion,
            noise=args.noise,
            seed=args.seed,
            cam_height=args.cam_height,
            occlusion=args.occlusion,
        )
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    world = generate_scene(spec)
    frames = project_scene(world, spec)

    dets = {gt.frame: d for d, gt in frames}
    io.write_detections(out / "det.txt", dets)
    gt_rows = []
    for _, gt in frames:
        for o in gt.objects:
            if o.visible:
                b = o.box
                gt_rows.append((gt.frame, o.id, BBox(b.left, b.top, b.w, b.h, 1.0)))
    io.write_tracks(out / "gt.txt", gt_rows)
    with open(out / "gt_geom.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "id", "X", "Y", "Z", "theta_star_deg"])
        for _, gt in frames:
            for o in gt.objects:
                if o.visible:
                    w.writerow([gt.frame, o.id, *(f"{v:.6f}" for v in o.centroid), f"{args.theta:g}"])
    if args.plot:
        from .plotting import plot_scene

        plot_scene(world.positions, world.ids, out / "scene.png")

    n_det = sum(len(d) for d in dets.values())
    print(
        f"scene: {spec.n_objects} objects, {spec.n_frames} frames, theta* = {args.theta:g} deg, "
        f"camera {spec.height:g} m high, f = {cam.f_px:.1f} px, motion = {spec.motion}, "
        f"noise = {spec.noise:g} px, seed = {spec.seed}"
    )
    print(f"wrote {n_det} detections and {len(gt_rows)} ground-truth boxes to {out}/")
    return EXIT_OK


# --------------------------------------------------------------------------
# angle / track

THETA_HEADER = ["frame", "theta_raw_deg", "theta_deg", "error", "fallback", "n_points"]


def _theta_rows(fh, geoms: Sequence[FrameGeometry]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(THETA_HEADER)
    for g in geoms:
        w.writerow(
            [
                g.frame,
                f"{math.degrees(g.theta_raw):.6f}",
                f"{math.degrees(g.theta):.6f}",
                f"{g.error:.6e}",
                int(g.used_fallback),
                len(g.points),
            ]
        )


def write_theta_log(path, geoms: Sequence[FrameGeometry]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        _theta_rows(fh, geoms)


def _load_config(args) -> io.RunConfig:
    cfg = io.read_config(args.config) if args.config else io.RunConfig()
    try:
        return cfg.with_overrides(mode=getattr(args, "mode", None))
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from None


def _warn_if_cold(geoms, path) -> None:
    if geoms and all(g.used_fallback for g in geoms):
        log.warning("%s: fewer than 3 detections in every frame; angle held at theta0", path)


def cmd_angle(args) -> int:
    cfg = _load_config(args)
    dets = io.read_detections(args.det)
    geoms = estimate_sequence(dets, cfg.camera(), cfg.estimator())
    _warn_if_cold(geoms, args.det)
    out = Path(args.out) if args.out else None
    if out is None:
        _theta_rows(sys.stdout, geoms)
    else:
        write_theta_log(out, geoms)
        if args.plot:
            from .plotting import plot_angles

            plot_angles(geoms, out.with_suffix(".png"))
    return EXIT_OK


@dataclass(frozen=True)
class TrackJob:
    det: str
    out: str
    theta_log: str
    cfg: io.RunConfig
    cmc: str | None
    plot: bool


def run_track_job(job: TrackJob) -> str:
    cfg = job.cfg
    dets = io.read_detections(job.det)
    cmc = io.read_cmc(job.cmc) if job.cmc else None
    cam = cfg.camera()
    res = track_sequence(dets, cam, cfg.estimator(), cfg.tracker(), cmc)
    _warn_if_cold(res.geoms, job.det)
    io.write_tracks(job.out, ((t.frame, t.id, t.box) for t in res.tracks))
    write_theta_log(job.theta_log, res.geoms)
    if job.plot:
        from .plotting import plot_angles, plot_tracks

        plot_angles(res.geoms, Path(job.theta_log).with_suffix(".png"))
        plot_tracks(res.by_frame(), Path(job.out).with_suffix(".png"), cam.width, cam.height)
    ids = {t.id for t in res.tracks}
    return f"{job.det}: {len(res.geoms)} frames, {len(ids)} tracks -> {job.out}"


def _track_jobs(args, cfg) -> list[TrackJob]:
    dets = [Path(d) for d in args.det]
    for d in dets:
        if not d.is_file():
            raise FileNotFoundError(f"no such file: {d}")
    if args.cmc and len(dets) > 1:
        raise UsageError("--cmc applies to a single sequence")
    if len(dets) == 1:
        out = Path(args.out)
        log_path = Path(args.theta_log) if args.theta_log else out.with_name(out.stem + "_theta.csv")
        return [TrackJob(str(dets[0]), str(out), str(log_path), cfg, args.cmc, args.plot)]
    if args.theta_log:
        raise UsageError("--theta-log applies to a single sequence")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = [d.parent.name or d.stem for d in dets]
    if len(set(names)) != len(names):
        raise UsageError("several inputs share a parent directory name")
    return [
        TrackJob(str(d), str(out_dir / f"{n}.txt"), str(out_dir / f"{n}_theta.csv"), cfg, None, args.plot)
        for d, n in zip(dets, names)
    ]


def cmd_track(args) -> int:
    cfg = _load_config(args)
    jobs = _track_jobs(args, cfg)
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            lines = list(pool.map(run_track_job, jobs))
    else:
        lines = [run_track_job(j) for j in jobs]
    for line in lines:
        print(line)
    return EXIT_OK


# --------------------------------------------------------------------------
# eval

EVAL_HEADER = ["mota", "idf1", "fp", "fn", "idsw", "num_gt", "num_pred"]


def format_report(rep) -> str:
    head = f"{'MOTA':>8} {'IDF1':>8} {'FP':>7} {'FN':>7} {'IDSw':>6} {'GT':>7}"
    row = f"{rep.mota:8.3f} {rep.idf1:8.3f} {rep.fp:7d} {rep.fn:7d} {rep.idsw:6d} {rep.num_gt:7d}"
    return head + "\n" + row


def cmd_eval(args) -> int:
    gt = io.read_tracks(args.gt)
    pred = io.read_tracks(args.result)
    if gt:
        lo, hi = min(gt), max(gt)
        stray = sorted(f for f in pred if not lo <= f <= hi)
        if stray:
            print(
                f"error: result frames {stray[0]}..{stray[-1]} lie outside the ground-truth range {lo}..{hi}",
                file=sys.stderr,
            )
            return EXIT_RUNTIME
    try:
        rep = evaluate(gt, pred)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(format_report(rep))
    csv_path = Path(args.csv) if args.csv else Path(args.result).with_name(Path(args.result).stem + "_eval.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVAL_HEADER)
        row = rep.row()
        w.writerow([f"{row[k]:.6f}" if isinstance(row[k], float) else row[k] for k in EVAL_HEADER])
    if args.plot:
        from .plotting import plot_eval

        plot_eval(rep, csv_path.with_suffix(".png"))
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="camot", description="Camera-angle-aware multi-object tracking.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic scene (det.txt, gt.txt, gt_geom.csv)")
    s.add_argument("--objects", type=int, default=20)
    s.add_argument("--theta", type=float, default=30.0, help="camera elevation in degrees")
    s.add_argument("--frames", type=int, default=60)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--noise", type=float, default=0.0, help="box-edge jitter std in pixels")
    s.add_argument("--motion", choices=MOTIONS, default="static")
    s.add_argument("--fps", type=float, default=30.0)
    s.add_argument("--f-mm", type=float, default=50.0, help="35 mm-equivalent focal length")
    s.add_argument("--width", type=int, default=1920)
    s.add_argument("--height", type=int, default=1080)
    s.add_argument("--cam-height", type=float, default=None, help="camera height above ground in meters")
    s.add_argument("--occlusion", type=float, default=None, help="drop detections covered by this fraction")
    s.add_argument("--plot", action="store_true", help="also write scene.png")
    s.set_defaults(func=cmd_synth)

    a = sub.add_parser("angle", help="per-frame elevation estimates as CSV")
    a.add_argument("det")
    a.add_argument("--config")
    a.add_argument("--mode", choices=("exact", "paper"))
    a.add_argument("--out", help="CSV path (default: stdout)")
    a.add_argument("--plot", action="store_true", help="also write a PNG next to --out")
    a.set_defaults(func=cmd_angle)

    t = sub.add_parser("track", help="estimate angles and track")
    t.add_argument("det", nargs="+")
    t.add_argument("--config")
    t.add_argument("--cmc", help="camera-motion file (single sequence only)")
    t.add_argument("--out", required=True, help="result file, or a directory for several inputs")
    t.add_argument("--theta-log", help="angle CSV (default: <out>_theta.csv)")
    t.add_argument("--mode", choices=("exact", "paper"))
    t.add_argument("--jobs", type=int, default=1, help="parallel sequences")
    t.add_argument("--plot", action="store_true", help="also write PNGs next to the outputs")
    t.set_defaults(func=cmd_track)

    e = sub.add_parser("eval", help="CLEAR-MOT and IDF1 against ground truth")
    e.add_argument("gt")
    e.add_argument("result")
    e.add_argument("--csv", help="report CSV (default: <result>_eval.csv)")
    e.add_argument("--plot", action="store_true", help="also write a per-frame error PNG")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (FileNotFoundError, ParseError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CamotError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
