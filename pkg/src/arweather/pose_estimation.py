"""Tag pose recovery from a detection: homography decomposition + refinement.

The homography of a planar tag factors as K [s*r1, s*r2, t] up to scale.
Recovering (R, t) from that factorization has the classic two-fold planar
ambiguity; both candidates are refined by Gauss-Newton on the corner
reprojection error and the lower-residual one wins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArWeatherError
from .detector import DegenerateCorners, TagDetection, homography_from_corners
from .geometry import CameraIntrinsics, PointBehindCamera, Pose, nearest_rotation, rotation_exp
from .rendering import tag_corners_tag_frame

MAX_ITERATIONS = 50
STEP_NORM_TOL = 1e-10
ERROR_DECREASE_TOL = 1e-12


class SingularIntrinsics(ArWeatherError):
    """Camera matrix is not invertible."""


class DegenerateHomography(ArWeatherError):
    """Homography does not admit a planar pose decomposition."""


class DivergedBehindCamera(ArWeatherError):
    """Refinement drove a tag corner to non-positive depth."""


@dataclass
class PoseEstimate:
    pose: Pose  # tag frame -> camera frame
    reprojection_rms: float  # pixels, per-corner distance RMS
    iterations: int


def _decompose(h: np.ndarray, k: CameraIntrinsics, tag_size: float):
    """Both planar decomposition candidates (r3 = +/- r1 x r2)."""
    if tag_size <= 0:
        raise ValueError("tag_size must be positive")
    km = k.k_matrix
    if abs(np.linalg.det(km)) < 1e-12:
        raise SingularIntrinsics("camera matrix is singular")
    m = np.linalg.inv(km) @ h
    n1 = np.linalg.norm(m[:, 0])
    n2 = np.linalg.norm(m[:, 1])
    if n1 < 1e-12 or n2 < 1e-12 or abs(m[2, 2]) < 1e-12:
        raise DegenerateHomography("homography columns do not span a plane pose")
    m = m / (0.5 * (n1 + n2))
    if m[2, 2] < 0:  # tag must sit in front of the camera
        m = -m
    r1, r2 = m[:, 0], m[:, 1]
    t = m[:, 2] * tag_size
    r3 = np.cross(r1, r2)
    candidates = []
    for r3_signed in (r3, -r3):
        rot = nearest_rotation(np.column_stack([r1, r2, r3_signed]))
        candidates.append(Pose(rotation=rot, translation=t.copy()))
    return candidates


def pose_from_homography(h: np.ndarray, k: CameraIntrinsics, tag_size: float) -> Pose:
    """Initial tag->camera pose from the detection homography.

    Raises:
        SingularIntrinsics: K is not invertible.
        DegenerateHomography: decomposition breaks down (rank loss,
            zero-depth translation).
    """
    return _decompose(h, k, tag_size)[0]


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def reprojection_residual(
    pose: Pose, corners: np.ndarray, k: CameraIntrinsics, tag_size: float
) -> np.ndarray:
    """Stacked (8,) reprojection residual of the 4 tag corners.

    Raises:
        DivergedBehindCamera: a corner has non-positive camera depth.
    """
    pts = tag_corners_tag_frame(tag_size)
    cam = pts @ pose.rotation.T + pose.translation
    if (cam[:, 2] <= 1e-9).any():
        raise DivergedBehindCamera("tag corner at non-positive depth")
    u = k.fx * cam[:, 0] / cam[:, 2] + k.cx
    v = k.fy * cam[:, 1] / cam[:, 2] + k.cy
    return (np.column_stack([u, v]) - corners).reshape(-1)


def reprojection_jacobian(pose: Pose, k: CameraIntrinsics, tag_size: float) -> np.ndarray:
    """Analytic (8, 6) Jacobian of the residual in (d_omega, d_t).

    The rotation is perturbed on the right, R <- R exp([d_omega]x), so
    d(R X)/d_omega = -R [X]x; translation enters identically.
    """
    pts = tag_corners_tag_frame(tag_size)
    rot, t = pose.rotation, pose.translation
    jac = np.zeros((8, 6))
    for i, x_tag in enumerate(pts):
        p = rot @ x_tag + t
        x, y, z = p
        d_uv_dp = np.array(
            [
                [k.fx / z, 0.0, -k.fx * x / z**2],
                [0.0, k.fy / z, -k.fy * y / z**2],
            ]
        )
        dp = np.hstack([-rot @ _skew(x_tag), np.eye(3)])  # (3, 6)
        jac[2 * i : 2 * i + 2] = d_uv_dp @ dp
    return jac


def _rms(residual: np.ndarray) -> float:
    per_corner = residual.reshape(-1, 2)
    return float(np.sqrt((per_corner**2).sum(axis=1).mean()))


def refine_pose(
    initial: Pose, corners: np.ndarray, k: CameraIntrinsics, tag_size: float
) -> PoseEstimate:
    """Gauss-Newton minimization of corner reprojection error.

    Accepts only improving steps (with step halving), so the returned
    error never exceeds the initial error.

    Raises:
        DivergedBehindCamera: initial or iterated pose puts a corner at
            non-positive depth.
    """
    corners = np.asarray(corners, dtype=np.float64)
    pose = initial
    res = reprojection_residual(pose, corners, k, tag_size)
    err = float(res @ res)
    iterations = 0
    for _ in range(MAX_ITERATIONS):
        jac = reprojection_jacobian(pose, k, tag_size)
        jtj = jac.T @ jac
        jtr = jac.T @ res
        try:
            step = np.linalg.solve(jtj, -jtr)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(jac, -res, rcond=None)[0]
        if np.linalg.norm(step) < STEP_NORM_TOL:
            break
        improved = False
        for _halving in range(20):
            candidate = Pose(
                rotation=pose.rotation @ rotation_exp(step[:3]),
                translation=pose.translation + step[3:],
            )
            try:
                cand_res = reprojection_residual(candidate, corners, k, tag_size)
            except DivergedBehindCamera:
                step = step / 2.0
                continue
            cand_err = float(cand_res @ cand_res)
            if cand_err < err:
                improved = True
                break
            step = step / 2.0
        if not improved:
            break
        decrease = err - cand_err
        pose, res, err = candidate, cand_res, cand_err
        iterations += 1
        if decrease < ERROR_DECREASE_TOL:
            break
    return PoseEstimate(pose=pose, reprojection_rms=_rms(res), iterations=iterations)


def estimate(detection: TagDetection, k: CameraIntrinsics, tag_size: float) -> PoseEstimate:
    """Full pose pipeline: decompose both candidates, refine, keep the best.

    Raises:
        DegenerateHomography: detection corners cannot produce a pose.
        SingularIntrinsics, DivergedBehindCamera: as in the steps.
    """
    try:
        h = homography_from_corners(detection.corners)
    except DegenerateCorners as e:
        raise DegenerateHomography(str(e)) from e
    best: PoseEstimate | None = None
    last_error: Exception | None = None
    for candidate in _decompose(h, k, tag_size):
        try:
            refined = refine_pose(candidate, detection.corners, k, tag_size)
        except (DivergedBehindCamera, PointBehindCamera) as e:
            last_error = e
            continue
        if best is None or refined.reprojection_rms < best.reprojection_rms:
            best = refined
    if best is None:
        raise DivergedBehindCamera(str(last_error))
    return best
