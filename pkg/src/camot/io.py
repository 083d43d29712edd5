"""MOTChallenge text files, CMC transform files and run configuration.

Detection / ground-truth / result rows have ten comma-separated columns::

    frame,id,bb_left,bb_top,bb_width,bb_height,conf,x,y,z

CMC rows hold, for frame ``t``, the 2x3 affine that carries pixel positions
of frame ``t - 1`` into frame ``t``::

    frame,a11,a12,a13,a21,a22,a23

Run configs are ``key = value`` lines; ``#`` starts a comment.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import InvalidInputError, ParseError
from .estimator import EstimatorConfig
from .geometry import BBox, CameraIntrinsics

IDENTITY = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


@dataclass(frozen=True)
class MotRow:
    frame: int
    id: int
    box: BBox


def _read_lines(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, start=1):
            line = line.strip()
            if line:
                yield no, line


def _floats(path, no, line, count):
    parts = line.split(",")
    if len(parts) != count:
        raise ParseError(path, no, f"expected {count} fields, got {len(parts)}")
    try:
        vals = [float(p) for p in parts]
    except ValueError as exc:
        raise ParseError(path, no, str(exc)) from None
    if not all(math.isfinite(v) for v in vals):
        raise ParseError(path, no, "non-finite value")
    return vals


def _int_field(path, no, value, name):
    if value != int(value):
        raise ParseError(path, no, f"{name} must be an integer, got {value}")
    return int(value)


def read_mot(path) -> list[MotRow]:
    """Parse any 10-column MOTChallenge file into rows in file order.

    Confidence values outside [0, 1] are clipped; ground-truth files use the
    column as a 0/1 consider flag, result files may carry raw scores.
    """
    rows = []
    for no, line in _read_lines(path):
        v = _floats(path, no, line, 10)
        frame = _int_field(path, no, v[0], "frame")
        oid = _int_field(path, no, v[1], "id")
        if frame < 1:
            raise ParseError(path, no, f"frame must be >= 1, got {frame}")
        if v[4] <= 0 or v[5] <= 0:
            raise ParseError(path, no, "box width and height must be positive")
        conf = min(max(v[6], 0.0), 1.0)
        rows.append(MotRow(frame, oid, BBox(v[2], v[3], v[4], v[5], conf)))
    return rows


def read_detections(path) -> dict[int, list[BBox]]:
    """Detections grouped by frame, file order kept within a frame."""
    out: dict[int, list[BBox]] = {}
    for row in read_mot(path):
        out.setdefault(row.frame, []).append(row.box)
    return out


def read_tracks(path) -> dict[int, list[tuple[int, BBox]]]:
    """Ground-truth or result file as ``frame -> [(id, box), ...]``."""
    out: dict[int, list[tuple[int, BBox]]] = {}
    for row in read_mot(path):
        out.setdefault(row.frame, []).append((row.id, row.box))
    return out


def _fmt(x: float) -> str:
    s = f"{x:.2f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def format_row(frame: int, oid: int, box: BBox) -> str:
    return ",".join(
        [str(frame), str(oid), _fmt(box.left), _fmt(box.top), _fmt(box.w), _fmt(box.h), _fmt(box.conf), "-1", "-1", "-1"]
    )


def write_tracks(path, results: Iterable[tuple[int, int, BBox]]) -> None:
    """Write ``(frame, id, box)`` triples sorted by frame then id.

    Values are rounded to two decimals; an empty input leaves an empty file.
    """
    rows = sorted(results, key=lambda r: (r[0], r[1]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for frame, oid, box in rows:
            fh.write(format_row(frame, oid, box) + "\n")


def write_detections(path, frames: Mapping[int, list[BBox]]) -> None:
    write_tracks(path, ((f, -1, b) for f in frames for b in frames[f]))


def read_cmc(path) -> dict[int, np.ndarray]:
    out: dict[int, np.ndarray] = {}
    for no, line in _read_lines(path):
        v = _floats(path, no, line, 7)
        frame = _int_field(path, no, v[0], "frame")
        if frame in out:
            raise ParseError(path, no, f"duplicate frame {frame}")
        out[frame] = np.array(v[1:], dtype=float).reshape(2, 3)
    return out


def cmc_for(transforms: Mapping[int, np.ndarray] | None, frame: int) -> np.ndarray:
    if not transforms or frame not in transforms:
        return IDENTITY.copy()
    return transforms[frame]


def write_cmc(path, transforms: Mapping[int, np.ndarray]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for frame in sorted(transforms):
            vals = np.asarray(transforms[frame], dtype=float).ravel()
            fh.write(",".join([str(frame)] + [repr(float(x)) for x in vals]) + "\n")


@dataclass(frozen=True)
class RunConfig:
    # camera
    width: int = 1920
    height: int = 1080
    f_mm: float = 50.0
    f_px: float | None = None
    cx: float | None = None
    cy: float | None = None
    # angle estimation (angles in degrees here)
    theta0_deg: float = 0.0
    n_plane: int = 40
    lambda_n: float = 0.6
    lambda_theta: float = 0.3
    lambda_regr: float = 0.1
    tau_eps: float = 1e-4
    H: float = 1.7
    fps: float = 30.0
    max_iters: int = 100
    mode: str = "exact"
    # tracking
    tau_high: float = 0.6
    tau_low: float = 0.2
    lost_buffer: int = 30
    match_thresh_first: float = 0.2
    match_thresh_second: float = 0.3
    min_hits: int = 2
    sigma_p: float = 0.085
    sigma_v: float = 0.0106
    depth_gate: float = 0.5
    angle_aware: bool = True
    use_depth: bool = True
    # paths
    det_path: str | None = None
    cmc_path: str | None = None
    out_path: str | None = None

    def camera(self) -> CameraIntrinsics:
        f_px = self.f_px if self.f_px is not None else self.f_mm * self.width / 36.0
        cx = self.cx if self.cx is not None else self.width / 2.0
        cy = self.cy if self.cy is not None else self.height / 2.0
        return CameraIntrinsics(f_px, cx, cy, self.width, self.height)

    def estimator(self) -> EstimatorConfig:
        return EstimatorConfig(
            theta0=math.radians(self.theta0_deg),
            n_plane=self.n_plane,
            lambdas=(self.lambda_n, self.lambda_theta, self.lambda_regr),
            tau_eps=self.tau_eps,
            H=self.H,
            fps=self.fps,
            max_iters=self.max_iters,
            mode=self.mode,
        )

    def tracker(self):
        from .tracker import TrackerConfig

        return TrackerConfig(
            tau_high=self.tau_high,
            tau_low=self.tau_low,
            lost_buffer=self.lost_buffer,
            match_thresh_first=self.match_thresh_first,
            match_thresh_second=self.match_thresh_second,
            min_hits=self.min_hits,
            sigma_p=self.sigma_p,
            sigma_v=self.sigma_v,
            depth_gate=self.depth_gate,
            angle_aware=self.angle_aware,
            use_depth=self.use_depth,
        )

    def validate(self) -> "RunConfig":
        self.camera()
        self.estimator()
        self.tracker()
        return self

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None}).validate()


_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _coerce(name: str, typ, raw: str):
    raw = raw.strip()
    if "None" in str(typ) and raw.lower() in ("none", ""):
        return None
    t = str(typ)
    try:
        if "bool" in t:
            return _BOOL[raw.lower()]
        if "int" in t:
            return int(raw)
        if "float" in t:
            return float(raw)
    except (ValueError, KeyError):
        raise InvalidInputError(f"bad value for {name}: {raw!r}") from None
    return raw


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    kinds = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    for no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(source, no, "expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in kinds:
            raise ParseError(source, no, f"unknown key {key!r}")
        try:
            values[key] = _coerce(key, kinds[key], raw)
        except InvalidInputError as exc:
            raise ParseError(source, no, str(exc)) from None
    return RunConfig(**values).validate()


def read_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    return parse_config(path.read_text(encoding="utf-8"), os.fspath(path))


def format_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {'none' if v is None else str(v).lower() if isinstance(v, bool) else v}")
    return "\n".join(lines) + "\n"
