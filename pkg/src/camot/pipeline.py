"""Whole-sequence drivers: angle estimation alone, or estimation plus tracking."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .estimator import AngleEstimator, EstimatorConfig, FrameGeometry
from .geometry import BBox, CameraIntrinsics
from .io import cmc_for
from .tracker import Tracker, TrackerConfig, TrackOutput


@dataclass
class SequenceResult:
    geoms: list[FrameGeometry]
    tracks: list[TrackOutput]

    @property
    def cold(self) -> bool:
        """True when no frame had enough boxes for an angle search."""
        return all(g.used_fallback for g in self.geoms)

    def by_frame(self) -> dict[int, list[tuple[int, BBox]]]:
        out: dict[int, list[tuple[int, BBox]]] = {}
        for t in self.tracks:
            out.setdefault(t.frame, []).append((t.id, t.box))
        return out


def _frame_range(dets: Mapping[int, Sequence[BBox]], n_frames: int | None) -> range:
    last = max(dets, default=0)
    return range(1, max(last, n_frames or 0) + 1)


def estimate_sequence(
    dets: Mapping[int, Sequence[BBox]],
    cam: CameraIntrinsics,
    config: EstimatorConfig | None = None,
    n_frames: int | None = None,
) -> list[FrameGeometry]:
    """Run the estimator over frames ``1..N``; missing frames count as empty."""
    est = AngleEstimator(cam, config or EstimatorConfig())
    return [est.step(list(dets.get(f, ())), f) for f in _frame_range(dets, n_frames)]


def track_sequence(
    dets: Mapping[int, Sequence[BBox]],
    cam: CameraIntrinsics,
    est_config: EstimatorConfig | None = None,
    trk_config: TrackerConfig | None = None,
    cmc: Mapping[int, np.ndarray] | None = None,
    n_frames: int | None = None,
) -> SequenceResult:
    """Estimate the angle and track every frame in order."""
    est = AngleEstimator(cam, est_config or EstimatorConfig())
    trk = Tracker(cam, trk_config or TrackerConfig())
    geoms, tracks = [], []
    for f in _frame_range(dets, n_frames):
        frame_dets = list(dets.get(f, ()))
        geom = est.step(frame_dets, f)
        geoms.append(geom)
        tracks.extend(trk.step(frame_dets, geom, cmc_for(cmc, f) if cmc else None, f))
    return SequenceResult(geoms, tracks)
