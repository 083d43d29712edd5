"""Angle-aware pseudo-3D tracking-by-detection.

Tracks carry a constant-velocity Kalman state over the image box center,
inverse depth, aspect ratio and height::

    (u, v, iz, a, h, du, dv, diz, dh)

Position process noise is scaled by inverse depth, so distant objects are
expected to move fewer pixels per frame. Association follows the two-stage
high/low confidence scheme: confident detections are matched first with a
DIoU-style similarity whose vertical terms are weighted by the camera angle,
leftover tracks then get a second chance against low-confidence detections
with plain IoU.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InvalidInputError, NumericalFailureError
from .estimator import FrameGeometry
from .geometry import BBox, CameraIntrinsics, Point3

NDIM = 9
OBS = 5


class Status(enum.Enum):
    TENTATIVE = "tentative"
    ACTIVE = "active"
    LOST = "lost"


@dataclass(frozen=True)
class TrackerConfig:
    tau_high: float = 0.6
    tau_low: float = 0.2
    lost_buffer: int = 30
    match_thresh_first: float = 0.2
    match_thresh_second: float = 0.3
    min_hits: int = 2
    # meters; pixel noise is sigma * f_px * inverse depth
    sigma_p: float = 0.085
    sigma_v: float = 0.0106
    # relative inverse-depth disagreement above which a first-stage pair is refused
    depth_gate: float | None = 0.5
    angle_aware: bool = True
    use_depth: bool = True

    def __post_init__(self):
        if not 0.0 <= self.tau_low < self.tau_high <= 1.0:
            raise InvalidInputError("need 0 <= tau_low < tau_high <= 1")
        if self.lost_buffer < 0 or self.min_hits < 1:
            raise InvalidInputError("lost_buffer must be >= 0 and min_hits >= 1")
        if self.sigma_p <= 0 or self.sigma_v <= 0:
            raise InvalidInputError("noise scales must be positive")
        if self.depth_gate is not None and self.depth_gate <= 0:
            raise InvalidInputError("depth_gate must be positive")

    @classmethod
    def ablated(cls, **kw) -> "TrackerConfig":
        """2D baseline: no angle factor, inverse depth never observed."""
        return cls(angle_aware=False, use_depth=False, **kw)


# --------------------------------------------------------------------------
# box similarity

def _tlbr(boxes) -> np.ndarray:
    if isinstance(boxes, np.ndarray):
        return boxes.reshape(-1, 4)
    return np.array([b.tlbr() for b in boxes], dtype=float).reshape(-1, 4)


def iou_matrix(a, b) -> np.ndarray:
    a, b = _tlbr(a), _tlbr(b)
    lt = np.maximum(a[:, None, :2], b[None, :, :2])
    rb = np.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = np.clip(rb - lt, 0.0, None)
    inter = wh[..., 0] * wh[..., 1]
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    return inter / (area_a[:, None] + area_b[None, :] - inter)


def angle_factor(theta: float) -> float:
    return 1.0 + math.cos(theta) ** 2


def similarity_matrix(a, b, phi: float = 1.0) -> np.ndarray:
    """IoU minus the center-distance penalty with vertical terms scaled by ``phi``."""
    a, b = _tlbr(a), _tlbr(b)
    iou = iou_matrix(a, b)
    dx = (a[:, None, 0] + a[:, None, 2] - b[None, :, 0] - b[None, :, 2]) / 2.0
    dy = (a[:, None, 1] + a[:, None, 3] - b[None, :, 1] - b[None, :, 3]) / 2.0
    cx = np.maximum(a[:, None, 2], b[None, :, 2]) - np.minimum(a[:, None, 0], b[None, :, 0])
    cy = np.maximum(a[:, None, 3], b[None, :, 3]) - np.minimum(a[:, None, 1], b[None, :, 1])
    return iou - (dx**2 + phi * dy**2) / (cx**2 + phi * cy**2)


def diou(b1: BBox, b2: BBox) -> float:
    return float(similarity_matrix([b1], [b2], 1.0)[0, 0])


def angle_aware_similarity(b1: BBox, b2: BBox, theta: float) -> float:
    return float(similarity_matrix([b1], [b2], angle_factor(theta))[0, 0])


def linear_assignment(cost, thresh: float):
    """Minimum-cost matching keeping only pairs with ``cost <= thresh``.

    Returns ``(pairs, unmatched_rows, unmatched_cols)``.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.size == 0:
        rows, cols = cost.shape if cost.ndim == 2 else (0, 0)
        return [], list(range(rows)), list(range(cols))
    # gated entries get a cost no feasible pair set can prefer
    blocked = cost > thresh
    work = np.where(blocked, thresh + 1.0 + np.abs(cost).max() * cost.size, cost)
    r, c = linear_sum_assignment(work)
    pairs = [(int(i), int(j)) for i, j in zip(r, c) if not blocked[i, j]]
    mr = {i for i, _ in pairs}
    mc = {j for _, j in pairs}
    return (
        pairs,
        [i for i in range(cost.shape[0]) if i not in mr],
        [j for j in range(cost.shape[1]) if j not in mc],
    )


# --------------------------------------------------------------------------
# Kalman filter

_F = np.eye(NDIM)
for _i in range(4):
    _F[(0, 1, 2, 4)[_i], 5 + _i] = 1.0
_H = np.zeros((OBS, NDIM))
_H[np.arange(OBS), np.arange(OBS)] = 1.0

POS_W = 1.0 / 20  # measurement / init noise relative to box height
VEL_W = 1.0 / 160
IZ_W = 0.1  # inverse-depth measurement noise relative to itself
A_STD = 0.1


@dataclass(frozen=True)
class KalmanState:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def box(self) -> BBox:
        return state_box(self.mean)


def state_box(mean: np.ndarray, conf: float = 1.0) -> BBox:
    u, v, _, a, h = mean[:5]
    h = max(float(h), 1e-3)
    w = max(float(a) * h, 1e-3)
    return BBox(float(u) - w / 2.0, float(v) - h / 2.0, w, h, conf)


def state_tlbr(means: np.ndarray) -> np.ndarray:
    """Boxes ``(x1, y1, x2, y2)`` of stacked states, sizes floored like :func:`state_box`."""
    h = np.maximum(means[:, 4], 1e-3)
    w = np.maximum(means[:, 3] * h, 1e-3)
    x1 = means[:, 0] - w / 2.0
    y1 = means[:, 1] - h / 2.0
    return np.stack([x1, y1, x1 + w, y1 + h], axis=1)


def observation(box: BBox, iz: float | None) -> np.ndarray:
    return np.array([box.x_center, box.y_center, np.nan if iz is None else iz, box.w / box.h, box.h])


def kf_initiate(obs: np.ndarray, iz_guess: float) -> KalmanState:
    iz = obs[2] if np.isfinite(obs[2]) else iz_guess
    h = obs[4]
    mean = np.array([obs[0], obs[1], iz, obs[3], h, 0.0, 0.0, 0.0, 0.0])
    std = np.array(
        [2 * POS_W * h, 2 * POS_W * h, 0.5 * iz, 1e-2, 2 * POS_W * h,
         10 * VEL_W * h, 10 * VEL_W * h, 0.1 * iz, 10 * VEL_W * h]
    )
    return KalmanState(mean, np.diag(std**2))


def _process_std(means: np.ndarray, f_px: float, cfg: TrackerConfig) -> np.ndarray:
    iz = np.maximum(means[:, 2], 1e-6)
    h = np.maximum(means[:, 4], 1e-3)
    pos = cfg.sigma_p * f_px * iz
    vel = cfg.sigma_v * f_px * iz
    return np.stack(
        [pos, pos, 0.05 * iz, np.full_like(iz, 1e-2), POS_W * h, vel, vel, 0.005 * iz, VEL_W * h], axis=1
    )


def process_noise(mean: np.ndarray, f_px: float, cfg: TrackerConfig) -> np.ndarray:
    return np.diag(_process_std(mean[None, :], f_px, cfg)[0] ** 2)


def kf_predict_batch(means: np.ndarray, covs: np.ndarray, f_px: float, cfg: TrackerConfig):
    """Constant-velocity step for stacked states ``(N, 9)`` / ``(N, 9, 9)``."""
    new = means @ _F.T
    # an inverse depth may not cross zero; hold it and stop its drift
    bad = new[:, 2] <= 0
    new[bad, 2] = means[bad, 2]
    new[bad, 7] = 0.0
    cov = _F @ covs @ _F.T
    diag = np.arange(NDIM)
    cov[:, diag, diag] += _process_std(means, f_px, cfg) ** 2
    return new, cov


def kf_predict(state: KalmanState, cam: CameraIntrinsics, cfg: TrackerConfig | None = None) -> KalmanState:
    """Constant-velocity step; pixel noise shrinks with distance."""
    m, c = kf_predict_batch(state.mean[None, :], state.cov[None], cam.f_px, cfg or TrackerConfig())
    return KalmanState(m[0], c[0])


def kf_update_batch(means: np.ndarray, covs: np.ndarray, obs: np.ndarray, std: np.ndarray):
    """Kalman correction of stacked states with per-row observation stds.

    A channel whose observation is NaN or whose std is infinite is treated as
    unobserved for that row.
    """
    means, covs = means.copy(), covs.copy()
    seen = np.isfinite(obs) & np.isfinite(std)
    patterns, inverse = np.unique(seen, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    for p, mask in enumerate(patterns):
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            continue
        rows = np.flatnonzero(inverse == p)
        P = covs[rows]
        PHt = P[:, :, idx]
        R = std[rows][:, idx] ** 2
        S = PHt[:, idx, :].copy()
        S[:, np.arange(idx.size), np.arange(idx.size)] += R
        try:
            K = np.linalg.solve(S, PHt.transpose(0, 2, 1)).transpose(0, 2, 1)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailureError("singular innovation covariance") from exc
        innov = obs[rows][:, idx] - means[rows][:, idx]
        means[rows] += np.einsum("nik,nk->ni", K, innov)
        # Joseph form keeps the covariance symmetric PSD
        IKH = np.broadcast_to(np.eye(NDIM), P.shape).copy()
        IKH[:, :, idx] -= K
        cov = IKH @ P @ IKH.transpose(0, 2, 1) + (K * R[:, None, :]) @ K.transpose(0, 2, 1)
        covs[rows] = (cov + cov.transpose(0, 2, 1)) / 2.0
    if not np.all(np.isfinite(covs)):
        raise NumericalFailureError("non-finite covariance")
    scale = np.maximum(1.0, np.abs(covs).max(axis=(1, 2)))
    if np.any(np.linalg.eigvalsh(covs)[:, 0] < -1e-9 * scale):
        raise NumericalFailureError("covariance lost positive semi-definiteness")
    return means, covs


def kf_update(state: KalmanState, obs, obs_noise) -> KalmanState:
    """Kalman correction with a per-channel observation std.

    Channels whose observation is NaN or whose std is infinite are treated as
    unobserved.
    """
    obs = np.asarray(obs, dtype=float).reshape(1, OBS)
    std = np.asarray(obs_noise, dtype=float).reshape(1, OBS)
    m, c = kf_update_batch(state.mean[None, :], state.cov[None], obs, std)
    return KalmanState(m[0], c[0])


def measurement_noise(mean: np.ndarray, use_depth: bool = True) -> np.ndarray:
    h = max(float(mean[4]), 1e-3)
    iz = max(float(mean[2]), 1e-6)
    return np.array([POS_W * h, POS_W * h, IZ_W * iz if use_depth else np.inf, A_STD, POS_W * h])


def cmc_matrix(transform) -> np.ndarray:
    t = np.asarray(transform, dtype=float).reshape(2, 3)
    if not np.all(np.isfinite(t)):
        raise InvalidInputError("non-finite CMC transform")
    return t


def warp_state(state: KalmanState, transform) -> KalmanState:
    t = cmc_matrix(transform)
    if np.array_equal(t, np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])):
        return state
    R, off = t[:, :2], t[:, 2]
    T = np.eye(NDIM)
    T[0:2, 0:2] = R
    T[5:7, 5:7] = R
    mean = T @ state.mean
    mean[0:2] += off
    return KalmanState(mean, T @ state.cov @ T.T)


# --------------------------------------------------------------------------
# tracks

@dataclass
class Track:
    state: KalmanState
    status: Status = Status.TENTATIVE
    id: int | None = None
    hits: int = 1
    frames_lost: int = 0
    conf: float = 0.0
    last_point3: Point3 | None = None
    last_frame: int = 0

    @property
    def mean(self) -> np.ndarray:
        return self.state.mean

    @property
    def cov(self) -> np.ndarray:
        return self.state.cov

    @property
    def box(self) -> BBox:
        return state_box(self.state.mean, min(max(self.conf, 0.0), 1.0))


def apply_cmc(tracks: Sequence[Track], transform) -> list[Track]:
    """Warp every track's image position and velocity by a 2x3 affine."""
    for trk in tracks:
        trk.state = warp_state(trk.state, transform)
    return list(tracks)


@dataclass(frozen=True)
class TrackOutput:
    frame: int
    id: int
    box: BBox
    conf: float


@dataclass
class Tracker:
    cam: CameraIntrinsics
    config: TrackerConfig = field(default_factory=TrackerConfig)

    def __post_init__(self):
        self.tracks: list[Track] = []
        self.frame = 0
        self._next_id = 1

    def _new_id(self) -> int:
        tid = self._next_id
        self._next_id += 1
        return tid

    def _iz_guess(self, box: BBox, H: float = 1.7) -> float:
        return box.h / (self.cam.f_px * H)

    def _associate(self, tracks, dets, det_idx, iz_obs, phi, thresh, depth_gate):
        if not tracks or not det_idx:
            return [], list(range(len(tracks))), list(range(len(det_idx)))
        means = np.array([t.mean for t in tracks])
        tboxes = state_tlbr(means)
        dboxes = np.array([dets[i].tlbr() for i in det_idx])
        sim = similarity_matrix(tboxes, dboxes, phi) if phi is not None else iou_matrix(tboxes, dboxes)
        if depth_gate is not None:
            t_iz = means[:, 2]
            d_iz = np.array([iz_obs[i] for i in det_idx])
            with np.errstate(invalid="ignore"):
                rel = np.abs(t_iz[:, None] - d_iz[None, :]) / np.maximum(t_iz[:, None], d_iz[None, :])
            sim = np.where(np.isfinite(rel) & (rel > depth_gate), -np.inf, sim)
        cost = np.where(np.isfinite(sim), 1.0 - sim, 1e6)
        return linear_assignment(cost, 1.0 - thresh)

    def _match(self, trk: Track, box: BBox, iz: float, point: Point3 | None, frame: int, pending: list):
        pending.append((trk, observation(box, iz if self.config.use_depth and np.isfinite(iz) else None)))
        trk.hits += 1
        trk.frames_lost = 0
        trk.conf = box.conf
        trk.last_frame = frame
        if point is not None:
            trk.last_point3 = point

    def _apply_updates(self, pending: list) -> set[int]:
        """Kalman-correct all matched tracks at once; returns ids of failed tracks."""
        if not pending:
            return set()
        means = np.array([t.mean for t, _ in pending])
        covs = np.array([t.cov for t, _ in pending])
        obs = np.array([o for _, o in pending])
        std = np.array([measurement_noise(m, self.config.use_depth) for m in means])
        try:
            means, covs = kf_update_batch(means, covs, obs, std)
        except NumericalFailureError:
            failed = set()
            for (trk, o), sd in zip(pending, std):
                try:
                    trk.state = kf_update(trk.state, o, sd)
                except NumericalFailureError:
                    failed.add(id(trk))
            return failed
        for k, (trk, _) in enumerate(pending):
            trk.state = KalmanState(means[k], covs[k])
        return set()

    def _predict_all(self) -> None:
        if not self.tracks:
            return
        means = np.array([t.mean for t in self.tracks])
        covs = np.array([t.cov for t in self.tracks])
        means, covs = kf_predict_batch(means, covs, self.cam.f_px, self.config)
        for k, trk in enumerate(self.tracks):
            trk.state = KalmanState(means[k], covs[k])

    def step(
        self,
        dets: Sequence[BBox],
        geom: FrameGeometry | None = None,
        cmc=None,
        frame: int | None = None,
    ) -> list[TrackOutput]:
        """Advance one frame; returns the confirmed tracks seen in this frame."""
        frame = self.frame + 1 if frame is None else frame
        if frame <= self.frame:
            raise InvalidInputError(f"frame {frame} does not follow {self.frame}")
        if geom is not None:
            if geom.frame != frame:
                raise InvalidInputError(f"geometry for frame {geom.frame} passed with frame {frame}")
            if any(not 0 <= k < len(dets) for k in geom.points):
                raise InvalidInputError("geometry points do not match the detections")
        cfg = self.config
        self.frame = frame
        theta = geom.theta if geom is not None else math.pi / 2
        points = geom.points if geom is not None else {}
        iz_obs = [1.0 / points[i].Z if i in points else float("nan") for i in range(len(dets))]

        if cmc is not None:
            apply_cmc(self.tracks, cmc)
        self._predict_all()

        high = [i for i, d in enumerate(dets) if d.conf >= cfg.tau_high]
        low = [i for i, d in enumerate(dets) if cfg.tau_low <= d.conf < cfg.tau_high]
        confirmed = [t for t in self.tracks if t.status is not Status.TENTATIVE]
        tentative = [t for t in self.tracks if t.status is Status.TENTATIVE]
        phi = angle_factor(theta) if cfg.angle_aware else 1.0
        gate = cfg.depth_gate if cfg.use_depth else None
        # the three association stages touch disjoint tracks, so the Kalman
        # corrections can wait and run as one batch
        pending: list = []

        # stage 1: confident detections vs confirmed (active and lost) tracks
        pairs, um_t, um_d = self._associate(confirmed, dets, high, iz_obs, phi, cfg.match_thresh_first, gate)
        for ti, dj in pairs:
            trk, di = confirmed[ti], high[dj]
            self._match(trk, dets[di], iz_obs[di], points.get(di), frame, pending)
            trk.status = Status.ACTIVE
        left_high = [high[j] for j in um_d]

        # stage 2: low-confidence detections vs tracks still active, plain IoU
        rest = [confirmed[i] for i in um_t if confirmed[i].status is Status.ACTIVE]
        pairs2, um_t2, _ = self._associate(rest, dets, low, iz_obs, None, cfg.match_thresh_second, None)
        for ti, dj in pairs2:
            self._match(rest[ti], dets[low[dj]], iz_obs[low[dj]], points.get(low[dj]), frame, pending)
        for i in um_t2:
            rest[i].status = Status.LOST
        for trk in confirmed:
            if trk.last_frame != frame:
                trk.status = Status.LOST
                trk.frames_lost += 1

        # tentative tracks get the confident leftovers
        pairs3, um_t3, um_d3 = self._associate(tentative, dets, left_high, iz_obs, phi, cfg.match_thresh_first, gate)
        confirm_now = []
        for ti, dj in pairs3:
            trk = tentative[ti]
            self._match(trk, dets[left_high[dj]], iz_obs[left_high[dj]], points.get(left_high[dj]), frame, pending)
            if trk.hits >= cfg.min_hits:
                confirm_now.append(trk)
        dropped = {id(tentative[i]) for i in um_t3}
        dropped |= self._apply_updates(pending)
        for trk in confirm_now:
            if id(trk) not in dropped:
                trk.status = Status.ACTIVE
                trk.id = self._new_id()

        born = []
        for j in um_d3:
            di = left_high[j]
            known = cfg.use_depth and np.isfinite(iz_obs[di])
            obs = observation(dets[di], iz_obs[di] if known else None)
            trk = Track(
                kf_initiate(obs, self._iz_guess(dets[di])),
                conf=dets[di].conf,
                last_point3=points.get(di),
                last_frame=frame,
            )
            if cfg.min_hits <= 1:
                trk.status = Status.ACTIVE
                trk.id = self._new_id()
            born.append(trk)

        self.tracks = [
            t for t in self.tracks
            if id(t) not in dropped and not (t.status is Status.LOST and t.frames_lost > cfg.lost_buffer)
        ] + born

        out = [
            TrackOutput(frame, t.id, t.box, t.conf)
            for t in self.tracks
            if t.status is Status.ACTIVE and t.last_frame == frame
        ]
        return sorted(out, key=lambda o: o.id)
