"""Shared helpers for the test suite: random rigid transforms and scenes."""

from __future__ import annotations

import numpy as np

from arweather.geometry import CameraIntrinsics, Pose, rotation_exp


def random_rotation(rng: np.random.Generator, max_angle_rad: float = np.pi) -> np.ndarray:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(-max_angle_rad, max_angle_rad)
    return rotation_exp(axis * angle)


def random_pose(rng: np.random.Generator, t_scale: float = 2.0) -> Pose:
    return Pose(random_rotation(rng), rng.uniform(-t_scale, t_scale, size=3))


def default_intrinsics() -> CameraIntrinsics:
    return CameraIntrinsics(fx=600.0, fy=600.0, cx=320.0, cy=240.0, width=640, height=480)


def looking_at_tag_pose(
    rng: np.random.Generator,
    distance: float,
    max_tilt_deg: float,
    max_offset: float = 0.05,
    max_yaw_deg: float = 180.0,
) -> Pose:
    """Tag -> camera pose: tag roughly ahead of the camera at ``distance``.

    Tilt is a rotation about a random in-plane axis, so the tag normal
    deviates from the optical axis by at most ``max_tilt_deg``.
    """
    tilt = np.radians(rng.uniform(0.0, max_tilt_deg))
    axis_angle = rng.uniform(0.0, 2 * np.pi)
    axis = np.array([np.cos(axis_angle), np.sin(axis_angle), 0.0])
    yaw = np.radians(rng.uniform(-max_yaw_deg, max_yaw_deg))
    r_tilt = rotation_exp(axis * tilt)
    r_yaw = rotation_exp(np.array([0.0, 0.0, yaw]))
    # Identity rotation already faces the camera (tag +z into the scene).
    r = r_tilt @ r_yaw
    t = np.array(
        [
            rng.uniform(-max_offset, max_offset),
            rng.uniform(-max_offset, max_offset),
            distance,
        ]
    )
    return Pose(r, t)
