"""Per-frame camera elevation estimation from detection boxes.

Each frame: pick at most one confident, unclipped box per vertical strip of
the image, search the elevation that makes the lifted boxes stand upright on
a common plane, smooth that estimate over the last ``fps / 2`` frames, then
lift every detection at the smoothed angle.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateFitError,
    InsufficientPointsError,
    InvalidInputError,
)
from .geometry import (
    MODES,
    BBox,
    CameraIntrinsics,
    Plane,
    Point3,
    RayBundle,
    fit_plane,
    lift_bundle,
    plane_angle,
)
from .optimize import nelder_mead

THETA_MAX = math.pi / 2 - 0.01
DEFAULT_ASPECT = 0.41
# objective value for trial angles at which fewer than three boxes lift
PENALTY = 1e3
# spacing of the coarse scan that seeds a search without a previous estimate
SCAN_STEP = math.radians(2.5)


@dataclass(frozen=True)
class EstimatorConfig:
    theta0: float = 0.0
    n_plane: int = 40
    lambdas: tuple[float, float, float] = (0.6, 0.3, 0.1)
    tau_eps: float = 1e-4
    H: float = 1.7
    fps: float = 30.0
    max_iters: int = 100
    mode: str = "exact"
    simplex_step: float = math.radians(5.0)
    xtol: float = 1e-6

    def __post_init__(self):
        if len(self.lambdas) != 3 or min(self.lambdas) < 0 or sum(self.lambdas) <= 0:
            raise InvalidInputError("lambdas must be three non-negative weights with positive sum")
        if self.n_plane < 3:
            raise InvalidInputError("n_plane must be >= 3")
        if self.tau_eps <= 0 or self.fps <= 0 or self.H <= 0:
            raise InvalidInputError("tau_eps, fps and H must be positive")
        if not 0.0 <= self.theta0 <= THETA_MAX:
            raise InvalidInputError("theta0 must lie in [0, pi/2 - 0.01]")
        if self.mode not in MODES:
            raise InvalidInputError(f"mode must be one of {MODES}")

    @property
    def window(self) -> int:
        return max(1, round(self.fps / 2))


@dataclass
class FrameGeometry:
    frame: int
    theta: float
    theta_raw: float
    plane: Plane | None
    points: dict[int, Point3]
    error: float
    used_fallback: bool


class AngleHistory:
    """Raw per-frame angles inside the smoothing window."""

    def __init__(self, window: int):
        self.window = max(1, int(window))
        self._items: deque[tuple[int, float]] = deque(maxlen=self.window)

    @classmethod
    def for_fps(cls, fps: float) -> "AngleHistory":
        return cls(max(1, round(fps / 2)))

    def push(self, frame: int, theta: float) -> None:
        if self._items and frame <= self._items[-1][0]:
            raise InvalidInputError(f"frame {frame} is not after {self._items[-1][0]}")
        self._items.append((frame, theta))

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    @property
    def last_frame(self) -> int | None:
        return self._items[-1][0] if self._items else None


def smooth_angle(history: AngleHistory) -> float:
    """Linearly weighted moving average over the window ending at the newest frame.

    An entry ``k`` frames older than the newest gets weight ``w - k``; entries
    that fell out of the window are ignored and the remaining weights are
    normalised to sum to one.
    """
    if len(history) == 0:
        raise InvalidInputError("empty angle history")
    w = history.window
    t = history.last_frame
    num = den = 0.0
    for frame, theta in history:
        weight = frame - t + w
        if weight > 0:
            num += weight * theta
            den += weight
    return num / den


def is_clipped(box: BBox, cam: CameraIntrinsics) -> bool:
    return box.left <= 0 or box.top <= 0 or box.right >= cam.width or box.bottom >= cam.height


def select_boxes(dets: Sequence[BBox], cam: CameraIntrinsics, n_plane: int) -> list[int]:
    """Indices of the most confident unclipped box in each of ``n_plane`` columns strips."""
    best: dict[int, int] = {}
    for i, box in enumerate(dets):
        if is_clipped(box, cam):
            continue
        region = min(n_plane - 1, max(0, int(box.x_center / cam.width * n_plane)))
        j = best.get(region)
        if j is None or box.conf > dets[j].conf:
            best[region] = i
    return sorted(best.values())


def mean_aspect(dets: Sequence[BBox], cam: CameraIntrinsics) -> float:
    ratios = [b.w / b.h for b in dets if not is_clipped(b, cam)]
    return float(np.mean(ratios)) if ratios else DEFAULT_ASPECT


def extrapolate_clipped_box(box: BBox, cam: CameraIntrinsics, mean_aspect: float) -> BBox:
    """Grow the clipped side(s) of a box to the expected full-object shape.

    Boxes cut at the top or bottom edge are stretched to ``width / aspect``
    tall, boxes cut at the left or right edge to ``height * aspect`` wide.
    The visible extent is never reduced.
    """
    if box.right <= 0 or box.left >= cam.width or box.bottom <= 0 or box.top >= cam.height:
        raise InvalidInputError(f"box {box!r} lies outside the frame")
    if mean_aspect <= 0:
        raise InvalidInputError("mean_aspect must be positive")
    left, top, right, bottom = box.tlbr()
    cut_l, cut_r = box.left <= 0, box.right >= cam.width
    cut_t, cut_b = box.top <= 0, box.bottom >= cam.height

    if cut_t or cut_b:
        grow = max(0.0, box.w / mean_aspect - box.h)
        if cut_t and cut_b:
            top, bottom = top - grow / 2, bottom + grow / 2
        elif cut_t:
            top -= grow
        else:
            bottom += grow
    if cut_l or cut_r:
        grow = max(0.0, box.h * mean_aspect - box.w)
        if cut_l and cut_r:
            left, right = left - grow / 2, right + grow / 2
        elif cut_l:
            left -= grow
        else:
            right += grow
    if (left, top, right, bottom) == box.tlbr():
        return box
    return BBox(left, top, right - left, bottom - top, box.conf)


def _box_arrays(boxes: Sequence[BBox]):
    xc = np.array([b.left + b.w / 2.0 for b in boxes], dtype=float)
    top = np.array([b.top for b in boxes], dtype=float)
    bottom = np.array([b.top + b.h for b in boxes], dtype=float)
    return xc, top, bottom


def _rays(boxes: Sequence[BBox], cam: CameraIntrinsics) -> RayBundle:
    return RayBundle.from_pixels(*_box_arrays(boxes), cam)


@dataclass
class ErrorTerms:
    total: float
    normal: float
    angle: float
    regr: float
    plane: Plane
    points: np.ndarray  # valid centroids only, (M, 3)
    valid: np.ndarray  # mask over the input boxes


def _error_terms(theta, rays: RayBundle, H, lambdas, mode) -> ErrorTerms:
    centroid, p_top, p_bottom, valid = lift_bundle(rays, theta, H, mode)
    if int(valid.sum()) < 3:
        raise InsufficientPointsError(f"only {int(valid.sum())} boxes lift at theta={theta:.6f}")
    pts = centroid[valid]
    plane = fit_plane(pts, require_axis_intersection=False)
    n = plane.n
    # compare against the downward-facing normal; n_y + n_z > 0 for any
    # ground seen from an elevation in [0, pi/2]
    down = n if n[1] + n[2] >= 0 else -n
    v = p_bottom[valid] - p_top[valid]
    cos = (v @ down) / np.sqrt(np.einsum("ij,ij->i", v, v))
    m = len(pts)
    e_n = float((1.0 - np.clip(cos, -1.0, 1.0)).sum()) / m
    e_t = 2.0 / math.pi * abs(theta - plane_angle(plane))
    dist = (pts - plane.p0) @ n
    # RMSE in units of the object height keeps the objective scale free
    e_r = math.sqrt(float(dist @ dist) / m) / H
    l_n, l_t, l_r = lambdas
    total = l_n * e_n + l_t * e_t + l_r * e_r
    return ErrorTerms(total, e_n, e_t, e_r, plane, pts, valid)


def error_terms(
    theta: float,
    boxes: Sequence[BBox],
    cam: CameraIntrinsics,
    H: float,
    lambdas=(0.6, 0.3, 0.1),
    mode: str = "paper",
) -> ErrorTerms:
    """Like :func:`angle_error` but keeps the three weighted terms apart."""
    if len(boxes) < 3:
        raise InsufficientPointsError(f"need 3 boxes, got {len(boxes)}")
    try:
        return _error_terms(theta, _rays(boxes, cam), H, lambdas, mode)
    except DegenerateFitError as exc:
        raise InsufficientPointsError(str(exc)) from exc


def angle_error(
    theta: float,
    boxes: Sequence[BBox],
    cam: CameraIntrinsics,
    H: float,
    lambdas=(0.6, 0.3, 0.1),
    mode: str = "paper",
) -> tuple[float, Plane, np.ndarray]:
    """Weighted plane-consistency error of lifting ``boxes`` at ``theta``.

    Returns ``(error, plane, points)`` where ``points`` holds the centroids
    of the boxes that lifted cleanly. Raises InsufficientPointsError when
    fewer than three boxes survive.
    """
    terms = error_terms(theta, boxes, cam, H, lambdas, mode)
    return terms.total, terms.plane, terms.points


def optimize_angle(
    boxes: Sequence[BBox],
    cam: CameraIntrinsics,
    config: EstimatorConfig,
    theta_init: float,
    objective=None,
    scan: bool = False,
) -> tuple[float, float]:
    """Search the elevation in ``[0, pi/2 - 0.01]`` minimising the plane error.

    ``objective`` replaces the plane error with any ``f(theta) -> float``.
    With ``scan=True`` the simplex starts from the best of ``theta_init`` and
    a coarse grid over the whole range, which avoids the spurious minimum
    the plane error can have at the lower bound for steep views.
    """
    if objective is None:
        if len(boxes) < 3:
            raise InsufficientPointsError(f"need 3 boxes, got {len(boxes)}")
        rays = _rays(boxes, cam)

        def objective(theta):
            try:
                return _error_terms(theta, rays, config.H, config.lambdas, config.mode).total
            except (InsufficientPointsError, DegenerateFitError):
                return PENALTY

    start = min(max(theta_init, 0.0), THETA_MAX)
    if scan:
        grid = [start, *np.arange(0.0, THETA_MAX, SCAN_STEP)]
        start = grid[int(np.argmin([objective(float(t)) for t in grid]))]
    res = nelder_mead(
        lambda x: objective(float(x[0])),
        [start],
        config.simplex_step,
        target=config.tau_eps,
        xtol=config.xtol,
        max_iters=config.max_iters,
        bounds=([0.0], [THETA_MAX]),
    )
    if res.fun >= PENALTY:
        raise InsufficientPointsError("no trial angle lifted three boxes")
    return float(res.x[0]), res.fun


def lift_all(
    dets: Sequence[BBox], theta: float, cam: CameraIntrinsics, H: float, mode: str
) -> dict[int, Point3]:
    """Lift every detection at ``theta``; clipped boxes are extrapolated first."""
    if not dets:
        return {}
    aspect = mean_aspect(dets, cam)
    full = []
    for b in dets:
        if is_clipped(b, cam):
            try:
                b = extrapolate_clipped_box(b, cam, aspect)
            except InvalidInputError:
                pass
        full.append(b)
    centroid, _, _, valid = lift_bundle(_rays(full, cam), theta, H, mode)
    return {i: Point3(*map(float, centroid[i])) for i in range(len(full)) if valid[i]}


def estimate_frame(
    dets: Sequence[BBox],
    cam: CameraIntrinsics,
    config: EstimatorConfig,
    prev: FrameGeometry | None,
    history: AngleHistory,
    frame: int | None = None,
) -> FrameGeometry:
    """Estimate the elevation for one frame and lift its detections.

    The search starts from the previous frame's angle; the first frame with
    a usable plane is seeded by a coarse scan that includes ``theta0``.
    ``history`` is updated in place with the raw optimum. When fewer than
    three boxes are usable the previous frame's angle and plane are kept
    (or ``theta0`` with no points on a cold start).
    """
    if frame is None:
        frame = (prev.frame + 1) if prev is not None else 1
    cold = prev is None or prev.plane is None
    init = config.theta0 if prev is None else prev.theta
    sel = select_boxes(dets, cam, config.n_plane)
    chosen = [dets[i] for i in sel]
    try:
        theta_raw, err = optimize_angle(chosen, cam, config, init, scan=cold)
        _, plane, _ = angle_error(theta_raw, chosen, cam, config.H, config.lambdas, config.mode)
    except InsufficientPointsError:
        if prev is None:
            return FrameGeometry(frame, config.theta0, config.theta0, None, {}, 0.0, True)
        points = lift_all(dets, prev.theta, cam, config.H, config.mode)
        return FrameGeometry(frame, prev.theta, prev.theta, prev.plane, points, prev.error, True)

    history.push(frame, theta_raw)
    theta = smooth_angle(history)
    points = lift_all(dets, theta, cam, config.H, config.mode)
    return FrameGeometry(frame, theta, theta_raw, plane, points, err, False)


@dataclass
class AngleEstimator:
    """Sequential estimator holding the per-sequence state."""

    cam: CameraIntrinsics
    config: EstimatorConfig = field(default_factory=EstimatorConfig)

    def __post_init__(self):
        self.history = AngleHistory(self.config.window)
        self.prev: FrameGeometry | None = None

    def step(self, dets: Sequence[BBox], frame: int | None = None) -> FrameGeometry:
        geom = estimate_frame(dets, self.cam, self.config, self.prev, self.history, frame)
        self.prev = geom
        return geom
