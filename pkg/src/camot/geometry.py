"""Pinhole back-projection and flat-ground lifting of detection boxes.

Frames: image origin at the top-left corner with x to the right and y down.
The camera frame has X right, Y down and Z forward along the principal axis,
so a pixel maps to the ray ``((x - cx) / f, (y - cy) / f, 1)`` with no sign
flips. The elevation angle ``theta`` is the downward pitch of the principal
axis below the horizon; in camera coordinates the world "up" direction is
``(0, -cos(theta), -sin(theta))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    DegenerateFitError,
    DegenerateGeometryError,
    InsufficientPointsError,
    InvalidInputError,
)

EPS = 1e-9
MODES = ("paper", "exact")


@dataclass(frozen=True)
class CameraIntrinsics:
    f_px: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        vals = (self.f_px, self.cx, self.cy, self.width, self.height)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidInputError("camera intrinsics must be finite")
        if self.f_px <= 0:
            raise InvalidInputError(f"f_px must be positive, got {self.f_px}")
        if self.width <= 0 or self.height <= 0:
            raise InvalidInputError("image size must be positive")

    @classmethod
    def from_focal_mm(cls, f_mm: float, width: int, height: int) -> "CameraIntrinsics":
        """Build intrinsics from a 35 mm-equivalent focal length.

        The sensor is taken as 36 mm wide, so ``f_px = f_mm * width / 36``.
        The principal point sits at the image center.
        """
        return cls(f_mm * width / 36.0, width / 2.0, height / 2.0, width, height)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.f_px, 0.0, self.cx], [0.0, self.f_px, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class BBox:
    left: float
    top: float
    w: float
    h: float
    conf: float = 1.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.left, self.top, self.w, self.h, self.conf)):
            raise InvalidInputError(f"non-finite box {self!r}")
        if self.w <= 0 or self.h <= 0:
            raise InvalidInputError(f"box size must be positive, got w={self.w} h={self.h}")
        if not 0.0 <= self.conf <= 1.0:
            raise InvalidInputError(f"confidence must lie in [0, 1], got {self.conf}")

    @property
    def right(self) -> float:
        return self.left + self.w

    @property
    def bottom(self) -> float:
        return self.top + self.h

    @property
    def x_center(self) -> float:
        return self.left + self.w / 2.0

    @property
    def y_center(self) -> float:
        return self.top + self.h / 2.0

    def tlbr(self) -> tuple[float, float, float, float]:
        return self.left, self.top, self.right, self.bottom


class Ray(NamedTuple):
    """Camera-frame ray ``(a, b, 1)``."""

    a: float
    b: float

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, 1.0])


class Point3(NamedTuple):
    X: float
    Y: float
    Z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.X, self.Y, self.Z])


@dataclass(frozen=True)
class LiftedObject:
    r_top: Ray
    r_bottom: Ray
    alpha: float
    gamma: float
    d_top: float
    d_bottom: float
    centroid: Point3
    v: np.ndarray


@dataclass(frozen=True)
class Plane:
    """Plane with unit normal ``n`` (``n_z >= 0``) through ``p0``.

    ``p0`` is the intersection with the principal axis, ``(0, 0, z_plane)``.
    Only planes fitted with ``require_axis_intersection=False`` may be
    parallel to the axis; for those ``p0`` is the plane point closest to the
    camera center instead.
    """

    n: np.ndarray
    p0: np.ndarray

    @property
    def z_plane(self) -> float:
        return float(self.p0[2])


def up_vector(theta: float) -> np.ndarray:
    """World up direction in camera coordinates for elevation ``theta``."""
    return np.array([0.0, -math.cos(theta), -math.sin(theta)])


def back_project(cam: CameraIntrinsics, px: Sequence[float]) -> Ray:
    x, y = float(px[0]), float(px[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise InvalidInputError(f"non-finite pixel {px!r}")
    return Ray((x - cam.cx) / cam.f_px, (y - cam.cy) / cam.f_px)


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


@dataclass(frozen=True)
class RayBundle:
    """Angle-independent ray quantities for N boxes (center column, top, bottom)."""

    a: np.ndarray
    bt: np.ndarray
    bb: np.ndarray
    u_top: np.ndarray
    u_bottom: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray

    @classmethod
    def from_pixels(cls, x_center, top, bottom, cam: CameraIntrinsics) -> "RayBundle":
        a = (np.asarray(x_center, dtype=float) - cam.cx) / cam.f_px
        bt = (np.asarray(top, dtype=float) - cam.cy) / cam.f_px
        bb = (np.asarray(bottom, dtype=float) - cam.cy) / cam.f_px
        ones = np.ones_like(a)
        u_t = _unit(np.stack([a, bt, ones], axis=-1))
        u_b = _unit(np.stack([a, bb, ones], axis=-1))
        # atan2 of cross and dot stays accurate for nearly parallel rays
        cross = np.linalg.norm(np.cross(u_t, u_b), axis=-1)
        gamma = np.arctan2(cross, np.einsum("ij,ij->i", u_t, u_b))
        return cls(a, bt, bb, u_t, u_b, np.arctan(bt), gamma)

    def __len__(self):
        return len(self.a)


def lift_bundle(rays: RayBundle, theta: float, H: float, mode: str = "paper"):
    """Lift pre-computed rays at ``theta``.

    Returns ``(centroid, p_top, p_bottom, valid)``; rows that are not valid
    may hold garbage.
    """
    a, bt, bb, alpha, gamma = rays.a, rays.bt, rays.bb, rays.alpha, rays.gamma
    n = len(a)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if mode == "paper":
            half = np.sin(gamma / 2.0)
            mid = theta + alpha + gamma / 2.0
            low = np.cos(mid + gamma / 2.0)
            d_top = H * np.cos(mid) / (2.0 * half)
            d_bottom = 2.0 * d_top * half * np.sin(mid) / low + d_top
            valid = (half > EPS) & (np.abs(low) > EPS) & (d_top > 0) & (d_bottom > 0)
            w_t = d_top * np.cos(alpha) / 2.0
            w_b = d_bottom * np.cos(alpha + gamma) / 2.0
            centroid = np.empty((n, 3))
            centroid[:, 0] = a * (w_t + w_b)
            centroid[:, 1] = bt * w_t + bb * w_b
            centroid[:, 2] = w_t + w_b
            p_top = rays.u_top * d_top[:, None]
            p_bottom = rays.u_bottom * d_bottom[:, None]
        elif mode == "exact":
            # bottom point on the ground, top point H above it along world up;
            # the top row fixes the depth and the box center column fixes X as
            # the mean of both endpoints' projected columns
            s, c = math.sin(theta), math.cos(theta)
            span = bb - bt
            z_b = H * (c - bt * s) / span
            z_t = z_b - H * s
            valid = (span > EPS) & (gamma > EPS) & (z_b > EPS) & (z_t > EPS)
            x = 2.0 * a / (1.0 / z_b + 1.0 / z_t)
            p_bottom = np.empty((n, 3))
            p_bottom[:, 0] = x
            p_bottom[:, 1] = bb * z_b
            p_bottom[:, 2] = z_b
            p_top = p_bottom + H * up_vector(theta)
            centroid = p_bottom + (H / 2.0) * up_vector(theta)
        else:
            raise InvalidInputError(f"unknown lift mode {mode!r}")
        valid &= np.isfinite(centroid).all(axis=1) & (centroid[:, 2] > 0)
    return centroid, p_top, p_bottom, valid


def lift_arrays(
    x_center: np.ndarray,
    top: np.ndarray,
    bottom: np.ndarray,
    theta: float,
    cam: CameraIntrinsics,
    H: float,
    mode: str = "paper",
) -> dict[str, np.ndarray]:
    """Vectorised lifting of N boxes given as center column, top and bottom rows.

    Returns a dict of arrays: ``centroid``, ``p_top``, ``p_bottom`` (N x 3),
    ``alpha``, ``gamma``, ``d_top``, ``d_bottom`` (N) and a boolean ``valid``
    mask. Rows that are not valid hold NaN.
    """
    if mode not in MODES:
        raise InvalidInputError(f"unknown lift mode {mode!r}")
    rays = RayBundle.from_pixels(x_center, top, bottom, cam)
    centroid, p_top, p_bottom, valid = lift_bundle(rays, theta, H, mode)
    bad = ~valid
    for arr in (centroid, p_top, p_bottom):
        arr[bad] = np.nan
    return {
        "centroid": centroid,
        "p_top": p_top,
        "p_bottom": p_bottom,
        "alpha": rays.alpha,
        "gamma": rays.gamma,
        "d_top": np.linalg.norm(p_top, axis=-1),
        "d_bottom": np.linalg.norm(p_bottom, axis=-1),
        "valid": valid,
    }


def lift_detection(
    box: BBox, theta: float, cam: CameraIntrinsics, H: float, mode: str = "paper"
) -> LiftedObject:
    """Lift one detection to camera-frame 3D under the flat-ground model.

    ``mode="paper"`` applies the closed-form triangle relations for the top
    and bottom slant distances and the cosine-weighted centroid. Those treat
    both rays as lying in the vertical plane through the principal axis and
    assume the mid ray bisects the object, so they are approximate.
    ``mode="exact"`` solves the vertical-segment constraints directly and is
    exact for boxes whose top/bottom rows are the projections of the object's
    top and bottom centers.

    Raises DegenerateGeometryError when the object cannot be placed.
    """
    if not 0.0 <= theta < math.pi / 2:
        raise InvalidInputError(f"theta must lie in [0, pi/2), got {theta}")
    if H <= 0:
        raise InvalidInputError("object height must be positive")
    out = lift_arrays(
        np.array([box.x_center]), np.array([box.top]), np.array([box.bottom]), theta, cam, H, mode
    )
    if not out["valid"][0]:
        raise DegenerateGeometryError(f"cannot lift {box!r} at theta={theta:.6f}")
    r_top = back_project(cam, (box.x_center, box.top))
    r_bottom = back_project(cam, (box.x_center, box.bottom))
    return LiftedObject(
        r_top=r_top,
        r_bottom=r_bottom,
        alpha=float(out["alpha"][0]),
        gamma=float(out["gamma"][0]),
        d_top=float(out["d_top"][0]),
        d_bottom=float(out["d_bottom"][0]),
        centroid=Point3(*map(float, out["centroid"][0])),
        v=out["p_top"][0] - out["p_bottom"][0],
    )


def _orient(n: np.ndarray) -> np.ndarray:
    # n_z >= 0; for normals perpendicular to the axis fall back to n_y, then n_x
    for k in (2, 1, 0):
        if abs(n[k]) > EPS:
            return n if n[k] > 0 else -n
    return n


def fit_plane(points, require_axis_intersection: bool = True) -> Plane:
    """Total-least-squares plane through ``points`` (N x 3, N >= 3)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 3:
        raise InsufficientPointsError(f"plane fit needs 3 points, got {len(pts)}")
    center = pts.sum(axis=0) / len(pts)
    centered = pts - center
    # eigenvalues of the scatter matrix are the squared singular values
    evals, evecs = np.linalg.eigh(centered.T @ centered)
    # second singular value negligible against the first: a line, not a plane
    if evals[1] <= 1e-12 * max(evals[2], 0.0):
        raise DegenerateFitError("points are collinear")
    n = _orient(evecs[:, 0] / np.linalg.norm(evecs[:, 0]))
    d = float(n @ center)
    if abs(n[2]) >= EPS:
        p0 = np.array([0.0, 0.0, d / n[2]])
    elif require_axis_intersection:
        raise DegenerateFitError("plane is parallel to the principal axis")
    else:
        p0 = n * d
    return Plane(n=n, p0=p0)


def plane_angle(plane: Plane) -> float:
    """Camera elevation implied by a ground plane with normal ``plane.n``.

    A level camera sees a ground normal perpendicular to its axis (0), a
    top-down camera sees it along the axis (pi/2).
    """
    nz = min(max(float(plane.n[2]), 0.0), 1.0)
    return math.pi / 2 - math.acos(nz)


def point_plane_distance(p, plane: Plane) -> float:
    return abs(float(plane.n @ (np.asarray(p, dtype=float) - plane.p0)))
