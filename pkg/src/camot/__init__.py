"""Camera-elevation-aware pseudo-3D multi-object tracking."""

from .errors import (
    CamotError,
    DegenerateFitError,
    DegenerateGeometryError,
    InsufficientPointsError,
    InvalidInputError,
    NumericalFailureError,
    ParseError,
)
from .estimator import AngleEstimator, EstimatorConfig, FrameGeometry, angle_error, estimate_frame, optimize_angle
from .geometry import BBox, CameraIntrinsics, Plane, Point3, Ray, fit_plane, lift_detection, plane_angle
from .metrics import EvalReport, clear_mot, evaluate, idf1
from .pipeline import estimate_sequence, track_sequence
from .synth import SceneSpec, make_scene
from .tracker import Tracker, TrackerConfig, angle_aware_similarity, diou

__all__ = [
    "AngleEstimator",
    "BBox",
    "CamotError",
    "CameraIntrinsics",
    "DegenerateFitError",
    "DegenerateGeometryError",
    "EstimatorConfig",
    "EvalReport",
    "FrameGeometry",
    "InsufficientPointsError",
    "InvalidInputError",
    "NumericalFailureError",
    "ParseError",
    "Plane",
    "Point3",
    "Ray",
    "SceneSpec",
    "Tracker",
    "TrackerConfig",
    "angle_aware_similarity",
    "angle_error",
    "clear_mot",
    "diou",
    "estimate_frame",
    "estimate_sequence",
    "evaluate",
    "fit_plane",
    "idf1",
    "lift_detection",
    "make_scene",
    "optimize_angle",
    "plane_angle",
    "track_sequence",
]
