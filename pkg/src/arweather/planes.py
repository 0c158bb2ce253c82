"""Plane fitting and tracking from 3D point samples.

Stands in for platform plane detection: the caller supplies point
samples (synthetic scenes, unprojected depth); RANSAC finds the dominant
plane, a least-squares refit polishes it, and a small registry merges
repeated observations of the same surface.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ArWeatherError

DEFAULT_GRAVITY = np.array([0.0, 0.0, 1.0])

HORIZONTAL_COS = np.cos(np.radians(10.0))
VERTICAL_COS = np.cos(np.radians(80.0))
MERGE_NORMAL_COS = np.cos(np.radians(5.0))
MERGE_OFFSET_M = 0.02


class TooFewPoints(ArWeatherError):
    """Fewer than 3 points supplied."""


class DegenerateInput(ArWeatherError):
    """Points do not determine a plane with the required support."""


class Orientation(str, enum.Enum):
    HORIZONTAL = "Horizontal"
    VERTICAL = "Vertical"
    OTHER = "Other"


@dataclass(frozen=True)
class RansacParams:
    iterations: int = 500
    inlier_tol: float = 0.01
    min_support: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.inlier_tol <= 0:
            raise ValueError("inlier_tol must be positive")


@dataclass
class PlaneModel:
    """Infinite plane n . x = offset with inlier support."""

    normal: np.ndarray
    offset: float
    inlier_count: int
    orientation: Orientation
    id: int

    def distance(self, point: np.ndarray) -> float:
        return float(abs(self.normal @ point - self.offset))

    def to_json_dict(self) -> dict:
        return {
            "id": int(self.id),
            "normal": [float(v) for v in self.normal],
            "offset": float(self.offset),
            "inlier_count": int(self.inlier_count),
            "orientation": self.orientation.value,
        }


def _canonical_sign(normal: np.ndarray, offset: float):
    """Normal sign such that offset >= 0; deterministic at offset == 0."""
    if offset < 0:
        return -normal, -offset
    if offset == 0:
        lead = np.argmax(np.abs(normal))
        if normal[lead] < 0:
            return -normal, offset
    return normal, offset


def _least_squares_plane(points: np.ndarray):
    centroid = points.mean(axis=0)
    centered = points - centroid
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    normal = vt[-1]
    normal = normal / np.linalg.norm(normal)
    return _canonical_sign(normal, float(normal @ centroid))


def classify(plane, gravity: np.ndarray = DEFAULT_GRAVITY) -> Orientation:
    """Orientation from the angle between plane normal and gravity.

    Sign-invariant: a flipped normal classifies identically.
    """
    normal = plane.normal if isinstance(plane, PlaneModel) else np.asarray(plane)
    alignment = abs(float(normal @ gravity))
    if alignment > HORIZONTAL_COS:
        return Orientation.HORIZONTAL
    if alignment < VERTICAL_COS:
        return Orientation.VERTICAL
    return Orientation.OTHER


def fit_plane_ransac(
    points: np.ndarray,
    params: RansacParams | None = None,
    gravity: np.ndarray = DEFAULT_GRAVITY,
    plane_id: int = 0,
) -> PlaneModel:
    """Dominant plane by RANSAC with a least-squares refit over inliers.

    Raises:
        TooFewPoints: fewer than 3 points.
        DegenerateInput: points are collinear, or no model reaches
            ``min_support`` inliers.
    """
    if params is None:
        params = RansacParams()
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError("points must be (n, 3)")
    n = len(points)
    if n < 3:
        raise TooFewPoints(f"need at least 3 points, got {n}")

    rng = np.random.default_rng(params.seed)
    best_inliers = None
    best_key = (-1, np.inf)  # (count, rms) -> maximize count, minimize rms
    for _ in range(params.iterations):
        i, j, l = rng.choice(n, size=3, replace=False)
        v1 = points[j] - points[i]
        v2 = points[l] - points[i]
        normal = np.cross(v1, v2)
        norm = np.linalg.norm(normal)
        if norm < 1e-12:
            continue
        normal = normal / norm
        offset = float(normal @ points[i])
        dist = np.abs(points @ normal - offset)
        inliers = dist <= params.inlier_tol
        count = int(inliers.sum())
        if count < 3:
            continue
        rms = float(np.sqrt((dist[inliers] ** 2).mean()))
        if count > best_key[0] or (count == best_key[0] and rms < best_key[1]):
            best_key = (count, rms)
            best_inliers = inliers
    if best_inliers is None:
        raise DegenerateInput("all sampled triples were collinear")
    if best_key[0] < params.min_support:
        raise DegenerateInput(
            f"best plane has {best_key[0]} inliers < min_support {params.min_support}"
        )
    normal, offset = _least_squares_plane(points[best_inliers])
    return PlaneModel(
        normal=normal,
        offset=offset,
        inlier_count=int(best_inliers.sum()),
        orientation=classify(normal, gravity),
        id=plane_id,
    )


@dataclass
class PlaneSet:
    """Registry of persistent planes with stable ids."""

    planes: list = field(default_factory=list)
    next_id: int = 0
    _support: dict = field(default_factory=dict)  # id -> inlier points

    def __iter__(self):
        return iter(self.planes)

    def __len__(self):
        return len(self.planes)

    def get(self, plane_id: int) -> PlaneModel | None:
        for p in self.planes:
            if p.id == plane_id:
                return p
        return None

    def to_json_list(self) -> list:
        return [p.to_json_dict() for p in self.planes]


def _same_surface(a: PlaneModel, b_normal: np.ndarray, b_offset: float) -> bool:
    dot = float(a.normal @ b_normal)
    if abs(dot) < MERGE_NORMAL_COS:
        return False
    offset_b = b_offset if dot >= 0 else -b_offset
    return abs(a.offset - offset_b) <= MERGE_OFFSET_M


def update_planes(
    state: PlaneSet,
    points: np.ndarray,
    params: RansacParams | None = None,
    gravity: np.ndarray = DEFAULT_GRAVITY,
) -> PlaneSet:
    """Fit a plane to new samples and merge it into the registry.

    A candidate matching an existing plane (normals within 5 deg, offsets
    within 2 cm) is merged: the model is refit over the combined inlier
    points and keeps the older plane's id. Otherwise it is appended.
    """
    if params is None:
        params = RansacParams()
    candidate = fit_plane_ransac(points, params, gravity, plane_id=state.next_id)
    points = np.asarray(points, dtype=np.float64)
    dist = np.abs(points @ candidate.normal - candidate.offset)
    inlier_pts = points[dist <= params.inlier_tol]

    for idx, existing in enumerate(state.planes):
        if _same_surface(existing, candidate.normal, candidate.offset):
            combined = np.vstack([state._support[existing.id], inlier_pts])
            normal, offset = _least_squares_plane(combined)
            merged = PlaneModel(
                normal=normal,
                offset=offset,
                inlier_count=len(combined),
                orientation=classify(normal, gravity),
                id=existing.id,
            )
            state.planes[idx] = merged
            state._support[existing.id] = combined
            return state

    state.planes.append(candidate)
    state._support[candidate.id] = inlier_pts
    state.next_id += 1
    return state
