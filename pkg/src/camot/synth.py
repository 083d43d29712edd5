"""Synthetic ground-truth scenes: upright cylinders on a flat ground plane.

Ground positions live in a camera-anchored world frame: ``lateral`` is
meters to the right of the camera, ``forward`` is horizontal meters in
front of it, and the ground sits ``cam_height`` meters below the optical
center. Boxes are built from the exact projections of each cylinder's top
and bottom center: their rows give the box top and bottom, the mean of their
columns gives the box center, and the width is the projected diameter at the
centroid depth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidInputError
from .geometry import BBox, CameraIntrinsics, Point3

MOTIONS = ("static", "linear", "crossing")


def default_camera() -> CameraIntrinsics:
    return CameraIntrinsics.from_focal_mm(50.0, 1920, 1080)


@dataclass(frozen=True)
class SceneSpec:
    n_objects: int = 20
    theta_star: float = math.radians(30.0)
    cam: CameraIntrinsics = field(default_factory=default_camera)
    H: float = 1.7
    # ((lateral_min, lateral_max), (forward_min, forward_max)); None derives
    # the visible ground region from the camera
    area: tuple[tuple[float, float], tuple[float, float]] | None = None
    n_frames: int = 60
    fps: float = 30.0
    motion: str = "static"
    noise: float = 0.0
    seed: int = 0
    cam_height: float | None = None
    aspect: float = 0.41
    speed: float = 1.4
    # forward distances of the two walkers in a crossing pair
    crossing_depths: tuple[float, float] = (5.0, 15.0)
    crossing_width: float = 3.0
    # drop a detection when a nearer object's box covers at least this
    # fraction of it; None keeps every in-frame object detected
    occlusion: float | None = None

    def __post_init__(self):
        if self.n_objects < 1:
            raise InvalidInputError("n_objects must be >= 1")
        if not 0.0 <= self.theta_star < math.pi / 2:
            raise InvalidInputError("theta_star must lie in [0, pi/2)")
        if self.noise < 0:
            raise InvalidInputError("noise must be >= 0")
        if self.n_frames < 1 or self.fps <= 0 or self.H <= 0:
            raise InvalidInputError("n_frames, fps and H must be positive")
        if self.motion not in MOTIONS:
            raise InvalidInputError(f"motion must be one of {MOTIONS}")
        if self.occlusion is not None and not 0.0 < self.occlusion <= 1.0:
            raise InvalidInputError("occlusion must lie in (0, 1]")

    @property
    def height(self) -> float:
        """Camera height above the ground."""
        if self.cam_height is not None:
            return self.cam_height
        return 6.0 if self.theta_star > math.radians(10.0) else 1.8


@dataclass(frozen=True)
class World:
    spec: SceneSpec
    ids: np.ndarray  # (n_objects,)
    positions: np.ndarray  # (n_frames, n_objects, 2) lateral, forward
    conf: np.ndarray  # (n_objects,) detector confidence per object


@dataclass(frozen=True)
class GtObject:
    id: int
    centroid: Point3
    box: BBox | None
    visible: bool
    clipped: bool = False
    occluded: bool = False


@dataclass(frozen=True)
class GtFrame:
    frame: int
    objects: list[GtObject]


def to_camera(lateral, up, forward, theta: float) -> np.ndarray:
    """World offsets from the optical center to camera coordinates (..., 3)."""
    s, c = math.sin(theta), math.cos(theta)
    lateral, up, forward = np.broadcast_arrays(
        np.asarray(lateral, float), np.asarray(up, float), np.asarray(forward, float)
    )
    return np.stack([lateral, -(up * c + forward * s), forward * c - up * s], axis=-1)


def _project(p: np.ndarray, cam: CameraIntrinsics) -> np.ndarray:
    return np.stack([cam.cx + cam.f_px * p[..., 0] / p[..., 2], cam.cy + cam.f_px * p[..., 1] / p[..., 2]], -1)


def object_geometry(lateral, forward, spec: SceneSpec) -> dict[str, np.ndarray]:
    """Exact camera-frame points and box edges for objects at ground positions."""
    h0, H, th, cam = spec.height, spec.H, spec.theta_star, spec.cam
    p_b = to_camera(lateral, -h0, forward, th)
    p_t = to_camera(lateral, -h0 + H, forward, th)
    p_c = (p_b + p_t) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        q_t = _project(p_t, cam)
        q_b = _project(p_b, cam)
        width = spec.aspect * H * cam.f_px / p_c[..., 2]
    xc = (q_t[..., 0] + q_b[..., 0]) / 2.0
    return {
        "centroid": p_c,
        "p_top": p_t,
        "p_bottom": p_b,
        "left": xc - width / 2.0,
        "right": xc + width / 2.0,
        "top": q_t[..., 1],
        "bottom": q_b[..., 1],
        "in_front": (p_t[..., 2] > 0.1) & (p_b[..., 2] > 0.1),
    }


def visible_area(spec: SceneSpec) -> tuple[tuple[float, float], tuple[float, float]]:
    """Ground rectangle that roughly covers the camera's view."""
    cam, h0, th = spec.cam, spec.height, spec.theta_star
    steep = th + math.atan((cam.height - cam.cy) / cam.f_px)
    near = 0.5 if steep >= math.pi / 2 - 1e-3 else h0 / math.tan(steep)
    # keep boxes at least ~90 px tall so jittered edges still carry depth
    far = min(cam.f_px * spec.H / 90.0, 40.0)
    shallow = th - math.atan(cam.cy / cam.f_px)
    if shallow > 1e-3:
        far = min(far, h0 / math.tan(shallow))
    far = max(far, near + 1.0)
    half = far * (cam.width / 2.0) / cam.f_px
    return (-half, half), (near, far)


def _fits(g: dict, cam: CameraIntrinsics, margin: float = 2.0) -> bool:
    return bool(
        g["in_front"]
        and g["left"] >= margin
        and g["top"] >= margin
        and g["right"] <= cam.width - margin
        and g["bottom"] <= cam.height - margin
    )


def _sample_position(rng, spec: SceneSpec, area) -> tuple[float, float]:
    (x0, x1), (z0, z1) = area
    for _ in range(10000):
        x, z = rng.uniform(x0, x1), rng.uniform(z0, z1)
        if _fits(object_geometry(x, z, spec), spec.cam):
            return x, z
    raise InvalidInputError("could not place an object fully inside the frame")


def generate_scene(spec: SceneSpec) -> World:
    """Place and move ``spec.n_objects`` cylinders on the ground plane."""
    rng = np.random.default_rng(spec.seed)
    area = spec.area or visible_area(spec)
    n, T = spec.n_objects, spec.n_frames
    pos = np.zeros((T, n, 2))
    t = np.arange(T, dtype=float)
    if spec.motion == "crossing":
        # pairs of walkers swap forward distance and lateral side; both
        # reach the same ground point at the midpoint frame
        near, far = spec.crossing_depths
        mid = (T - 1) / 2.0
        frac = (t - mid) / max(T - 1, 1)  # -0.5 .. 0.5
        meet = rng.uniform(-1.0, 1.0, size=(n + 1) // 2)
        for k in range(n):
            pair, second = divmod(k, 2)
            sign = 1.0 if second == 0 else -1.0
            pos[:, k, 0] = meet[pair] + sign * spec.crossing_width * frac
            pos[:, k, 1] = (near + far) / 2.0 + sign * (far - near) * frac
    else:
        for k in range(n):
            pos[:, k] = _sample_position(rng, spec, area)
        if spec.motion == "linear":
            heading = rng.uniform(0, 2 * math.pi, size=n)
            vel = spec.speed / spec.fps * np.stack([np.cos(heading), np.sin(heading)], -1)
            pos = pos + t[:, None, None] * vel[None, :, :]
    conf = rng.uniform(0.65, 0.99, size=n)
    return World(spec=spec, ids=np.arange(1, n + 1), positions=pos, conf=conf)


def project_scene(world: World, spec: SceneSpec | None = None) -> list[tuple[list[BBox], GtFrame]]:
    """Project every frame; returns ``(detections, ground truth)`` per frame.

    Objects behind the camera or entirely outside the image are invisible.
    Partially visible boxes are clipped to the frame, as detectors report
    them. With ``spec.noise > 0`` each box edge gets independent Gaussian
    jitter of that many pixels. With ``spec.occlusion`` set, objects mostly
    covered by a nearer object's box stay in the ground truth but yield no
    detection. Ground-truth boxes are always the exact projections.
    """
    spec = spec or world.spec
    cam = spec.cam
    rng = np.random.default_rng([spec.seed, 1])
    out = []
    for f in range(world.positions.shape[0]):
        g = object_geometry(world.positions[f, :, 0], world.positions[f, :, 1], spec)
        objs: list[GtObject] = []
        noisy: dict[int, BBox] = {}
        for k, oid in enumerate(world.ids):
            c = Point3(*map(float, g["centroid"][k]))
            edges = np.array([g["left"][k], g["top"][k], g["right"][k], g["bottom"][k]])
            jitter = rng.normal(0.0, spec.noise, 4) if spec.noise > 0 else np.zeros(4)
            conf = float(world.conf[k])
            box, clipped = _clip_box(edges, cam, conf) if g["in_front"][k] else (None, False)
            if box is None:
                objs.append(GtObject(int(oid), c, None, False))
                continue
            objs.append(GtObject(int(oid), c, box, True, clipped))
            det = _clip_box(edges + jitter, cam, conf)[0] if spec.noise > 0 else box
            if det is not None:
                noisy[int(oid)] = det
        if spec.occlusion is not None:
            objs = _mark_occluded(objs, spec.occlusion)
        dets = [noisy[o.id] for o in objs if o.visible and not o.occluded and o.id in noisy]
        out.append((dets, GtFrame(f + 1, objs)))
    return out


def _clip_box(edges: np.ndarray, cam: CameraIntrinsics, conf: float) -> tuple[BBox | None, bool]:
    l, t, r, b = (float(e) for e in edges)
    if r <= 0 or b <= 0 or l >= cam.width or t >= cam.height:
        return None, False
    cl, ct = max(l, 0.0), max(t, 0.0)
    cr, cb = min(r, float(cam.width)), min(b, float(cam.height))
    if cr - cl < 1.0 or cb - ct < 1.0:
        return None, False
    return BBox(cl, ct, cr - cl, cb - ct, conf), (cl, ct, cr, cb) != (l, t, r, b)


def coverage(box: BBox, other: BBox) -> float:
    """Fraction of ``box``'s area inside ``other``."""
    w = min(box.right, other.right) - max(box.left, other.left)
    h = min(box.bottom, other.bottom) - max(box.top, other.top)
    return max(w, 0.0) * max(h, 0.0) / (box.w * box.h)


def _mark_occluded(objs: list[GtObject], thresh: float) -> list[GtObject]:
    vis = [o for o in objs if o.visible]
    out = []
    for o in objs:
        hidden = o.visible and any(
            q is not o and q.centroid.Z < o.centroid.Z and coverage(o.box, q.box) >= thresh for q in vis
        )
        out.append(replace(o, occluded=True) if hidden else o)
    return out


def crossing_spec(seed: int, **overrides) -> SceneSpec:
    """One scenario of the seeded near/far crossing suite.

    Two walkers trade forward distances 5 m and 15 m over three seconds and
    meet at the midpoint frame. A 28 mm-equivalent lens on a 5 m mast keeps
    both in view at a 30 degree elevation, and a detector that misses mostly
    covered objects makes the pass-by ambiguous for a purely 2D tracker.
    """
    kw = dict(
        n_objects=2,
        theta_star=math.radians(30.0),
        cam=CameraIntrinsics.from_focal_mm(28.0, 1920, 1080),
        n_frames=90,
        motion="crossing",
        noise=2.0,
        seed=seed,
        cam_height=5.0,
        crossing_depths=(5.0, 15.0),
        crossing_width=1.0,
        occlusion=0.5,
    )
    kw.update(overrides)
    return SceneSpec(**kw)


def make_scene(spec: SceneSpec) -> list[tuple[list[BBox], GtFrame]]:
    return project_scene(generate_scene(spec), spec)
