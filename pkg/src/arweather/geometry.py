"""Rigid-transform algebra, pinhole camera model and grayscale image I/O.

Coordinate conventions (right-handed everywhere):

    Camera frame:  +x right, +y down, +z forward (optical axis).
    Tag frame:     origin at tag center, +x right, +y up when facing the
                   tag, +z out of the tag face. The detected border square
                   spans [-s/2, +s/2] x [-s/2, +s/2] for physical size s.
    World frame:   arbitrary right-handed frame supplied by the caller
                   (simulations here use +z up).

A ``Pose`` maps points from its source frame into its target frame:
``x_target = R @ x_source + t``. Units are meters for translations and
pixels for image coordinates.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ArWeatherError

ORTHONORMALITY_TOL = 1e-9


class PointBehindCamera(ArWeatherError):
    """Projection was requested for a point at or behind the camera plane."""


class InvalidImage(ArWeatherError):
    """Image buffer or PGM payload is malformed."""


def _as_rotation(m) -> np.ndarray:
    r = np.asarray(m, dtype=np.float64)
    if r.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {r.shape}")
    return r


def nearest_rotation(m: np.ndarray) -> np.ndarray:
    """Project a 3x3 matrix onto SO(3) (polar decomposition via SVD)."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=np.float64))
    r = u @ vt
    if np.linalg.det(r) < 0:
        r = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    return r


def rotation_exp(w: np.ndarray) -> np.ndarray:
    """Rodrigues: axis-angle vector (radians) to rotation matrix."""
    w = np.asarray(w, dtype=np.float64)
    theta = np.linalg.norm(w)
    if theta < 1e-12:
        k = _skew(w)
        return np.eye(3) + k  # first-order term is exact enough below 1e-12
    k = _skew(w / theta)
    return np.eye(3) + np.sin(theta) * k + (1.0 - np.cos(theta)) * (k @ k)


def rotation_log(r: np.ndarray) -> np.ndarray:
    """Inverse of :func:`rotation_exp`; returns the axis-angle vector."""
    r = _as_rotation(r)
    cos_theta = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_theta)
    if theta < 1e-12:
        return np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]]) / 2.0
    if np.pi - theta < 1e-6:
        # Near pi the off-diagonal formula degenerates; use the symmetric part.
        a = (r + np.eye(3)) / 2.0
        axis = np.sqrt(np.clip(np.diag(a), 0.0, None))
        # Fix signs from the largest component.
        i = int(np.argmax(axis))
        if axis[i] > 0:
            axis = np.array([a[0, i], a[1, i], a[2, i]]) / axis[i]
        n = np.linalg.norm(axis)
        if n == 0:
            return np.zeros(3)
        return theta * axis / n
    return theta / (2.0 * np.sin(theta)) * np.array(
        [r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]]
    )


def rotation_angle_deg(ra: np.ndarray, rb: np.ndarray) -> float:
    """Geodesic angle between two rotations, in degrees."""
    ra = _as_rotation(ra)
    rb = _as_rotation(rb)
    cos_theta = np.clip((np.trace(ra.T @ rb) - 1.0) / 2.0, -1.0, 1.0)
    return float(np.degrees(np.arccos(cos_theta)))


def _skew(w: np.ndarray) -> np.ndarray:
    return np.array(
        [
            [0.0, -w[2], w[1]],
            [w[2], 0.0, -w[0]],
            [-w[1], w[0], 0.0],
        ]
    )


@dataclass
class Pose:
    """Rigid transform: ``x_target = rotation @ x_source + translation``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = _as_rotation(self.rotation)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Pose":
        m = np.asarray(m, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous transform."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def orthonormality_drift(self) -> float:
        return float(np.max(np.abs(self.rotation.T @ self.rotation - np.eye(3))))

    def is_valid(self, tol: float = ORTHONORMALITY_TOL) -> bool:
        return (
            self.orthonormality_drift() <= tol
            and abs(np.linalg.det(self.rotation) - 1.0) <= tol
        )

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one (3,) point or an (n, 3) array of points."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def to_json_dict(self) -> dict:
        """Rotation as 9 row-major numbers, translation as 3 (meters)."""
        return {
            "rotation": [float(v) for v in self.rotation.reshape(-1)],
            "translation": [float(v) for v in self.translation],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Pose":
        return cls(np.asarray(d["rotation"], dtype=np.float64).reshape(3, 3),
                   np.asarray(d["translation"], dtype=np.float64))


def compose(a: Pose, b: Pose) -> Pose:
    """Pose applying ``b`` first, then ``a`` (matrix product a @ b)."""
    r = a.rotation @ b.rotation
    t = a.rotation @ b.translation + a.translation
    out = Pose(r, t)
    if out.orthonormality_drift() > ORTHONORMALITY_TOL:
        out = Pose(nearest_rotation(r), t)
    return out


def invert(p: Pose) -> Pose:
    r = p.rotation.T
    return Pose(r, -(r @ p.translation))


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole model; focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def k_matrix(self) -> np.ndarray:
        return np.array(
            [
                [self.fx, 0.0, self.cx],
                [0.0, self.fy, self.cy],
                [0.0, 0.0, 1.0],
            ]
        )

    def to_json_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=int(d["width"]),
            height=int(d["height"]),
        )


MIN_PROJECTION_DEPTH = 1e-9


def project(k: CameraIntrinsics, pose: Pose, point: np.ndarray) -> np.ndarray:
    """Project a 3D point (source frame of ``pose``) to pixel coordinates.

    Raises:
        PointBehindCamera: camera-frame depth is <= 1e-9 m.
    """
    p_cam = pose.apply(np.asarray(point, dtype=np.float64))
    z = p_cam[2]
    if z <= MIN_PROJECTION_DEPTH:
        raise PointBehindCamera(f"point depth {z:.3g} m is not in front of the camera")
    return np.array(
        [k.fx * p_cam[0] / z + k.cx, k.fy * p_cam[1] / z + k.cy]
    )


def project_many(k: CameraIntrinsics, pose: Pose, points: np.ndarray) -> np.ndarray:
    """Vectorized :func:`project` for an (n, 3) array."""
    p_cam = pose.apply(np.asarray(points, dtype=np.float64))
    z = p_cam[:, 2]
    if np.any(z <= MIN_PROJECTION_DEPTH):
        raise PointBehindCamera("at least one point is not in front of the camera")
    return np.column_stack(
        [k.fx * p_cam[:, 0] / z + k.cx, k.fy * p_cam[:, 1] / z + k.cy]
    )


@dataclass
class GrayImage:
    """8-bit grayscale image; ``pixels`` is (height, width) uint8, row-major."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.size != self.width * self.height:
            raise InvalidImage(
                f"buffer has {self.pixels.size} bytes, expected {self.width * self.height}"
            )
        self.pixels = self.pixels.reshape(self.height, self.width)

    @classmethod
    def filled(cls, width: int, height: int, value: int) -> "GrayImage":
        return cls(width, height, np.full((height, width), value, dtype=np.uint8))

    def to_pgm(self) -> bytes:
        header = f"P5\n{self.width} {self.height}\n255\n".encode("ascii")
        return header + self.pixels.tobytes()

    @classmethod
    def from_pgm(cls, data: bytes) -> "GrayImage":
        """Parse a binary (P5) PGM, tolerating comments and extra whitespace."""
        if not data.startswith(b"P5"):
            raise InvalidImage("not a binary PGM (missing P5 magic)")
        # Header: magic, width, height, maxval, then a single whitespace byte.
        tokens = []
        pos = 2
        while len(tokens) < 3:
            m = re.match(rb"(?:\s|#[^\n]*\n)*(\d+)", data[pos:])
            if not m:
                raise InvalidImage("truncated PGM header")
            tokens.append(int(m.group(1)))
            pos += m.end()
        width, height, maxval = tokens
        if maxval != 255:
            raise InvalidImage(f"unsupported PGM maxval {maxval}")
        pos += 1  # single whitespace after maxval
        buf = data[pos : pos + width * height]
        if len(buf) != width * height:
            raise InvalidImage("truncated PGM pixel data")
        return cls(width, height, np.frombuffer(buf, dtype=np.uint8).copy())
