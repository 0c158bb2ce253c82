"""Synthetic tag-image renderer.

Ground-truth oracle for the detection and pose tests: a tag pattern is
projected through an exact pinhole model, so detector output can be
compared against analytically known corner positions and poses.

Rendering maps each output pixel back onto the tag plane through the
plane-to-image homography (mathematically identical to projecting each
cell) and supersamples 4x4 per pixel so edges carry sub-pixel gradient
information. Background is mid-gray; optional additive Gaussian noise is
applied over the full frame and clamped to [0, 255].
"""

from __future__ import annotations

import numpy as np

from .errors import ArWeatherError
from .families import TagFamily
from .geometry import CameraIntrinsics, GrayImage, Pose, project_many

BACKGROUND_GRAY = 128
SUPERSAMPLE = 4
MIN_CORNER_DEPTH = 1e-6


class IdOutOfRange(ArWeatherError):
    """Requested tag id is outside the family codebook."""


class NonPositiveTagSize(ArWeatherError):
    """Physical tag size must be > 0 meters."""


class TagOutsideFrustum(ArWeatherError):
    """Part of the tag graphic projects outside the image or behind the camera."""


def tag_corners_tag_frame(tag_size: float) -> np.ndarray:
    """Border-square corners in the tag frame (meters), z = 0.

    Tag frame: +x right, +y down, +z into the face. Counter-clockwise as
    viewed, starting bottom-left: BL, BR, TR, TL.
    """
    h = tag_size / 2.0
    return np.array(
        [
            [-h, h, 0.0],
            [h, h, 0.0],
            [h, -h, 0.0],
            [-h, -h, 0.0],
        ]
    )


def plane_to_image_homography(
    k: CameraIntrinsics, pose: Pose, tag_size: float
) -> np.ndarray:
    """Homography mapping canonical tag coords (border square [-1/2,1/2]^2) to pixels."""
    rt = np.column_stack(
        [
            pose.rotation[:, 0] * tag_size,
            pose.rotation[:, 1] * tag_size,
            pose.translation,
        ]
    )
    return k.k_matrix @ rt


def render_tag(
    family: TagFamily,
    tag_id: int,
    pose: Pose,
    k: CameraIntrinsics,
    tag_size: float,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> GrayImage:
    """Render one tag; ``pose`` is tag frame -> camera frame.

    Raises:
        IdOutOfRange: tag id not in the family codebook.
        NonPositiveTagSize: tag_size <= 0.
        TagOutsideFrustum: graphic corners behind the camera or off-frame.
    """
    if tag_size <= 0:
        raise NonPositiveTagSize(f"tag size {tag_size} m must be positive")
    if not (0 <= tag_id < len(family)):
        raise IdOutOfRange(f"tag id {tag_id} outside 0..{len(family) - 1}")

    half = family.layout.half_extent * tag_size
    outer = np.array(
        [
            [-half, -half, 0.0],
            [half, -half, 0.0],
            [half, half, 0.0],
            [-half, half, 0.0],
        ]
    )
    depths = pose.apply(outer)[:, 2]
    if np.any(depths <= MIN_CORNER_DEPTH):
        raise TagOutsideFrustum("tag graphic extends behind the camera")
    corners_px = project_many(k, pose, outer)
    if (
        corners_px[:, 0].min() < 0
        or corners_px[:, 1].min() < 0
        or corners_px[:, 0].max() > k.width - 1
        or corners_px[:, 1].max() > k.height - 1
    ):
        raise TagOutsideFrustum("tag graphic projects outside the image")

    img = np.full((k.height, k.width), float(BACKGROUND_GRAY))

    u0 = max(int(np.floor(corners_px[:, 0].min())) - 1, 0)
    u1 = min(int(np.ceil(corners_px[:, 0].max())) + 1, k.width - 1)
    v0 = max(int(np.floor(corners_px[:, 1].min())) - 1, 0)
    v1 = min(int(np.ceil(corners_px[:, 1].max())) + 1, k.height - 1)

    h = plane_to_image_homography(k, pose, tag_size)
    h_inv = np.linalg.inv(h)
    # Homogeneous sign of in-front plane points, anchored at the tag center.
    center_px = h @ np.array([0.0, 0.0, 1.0])
    w_center = h_inv[2] @ np.array([center_px[0] / center_px[2], center_px[1] / center_px[2], 1.0])
    w_sign = 1.0 if w_center > 0 else -1.0

    ss = SUPERSAMPLE
    offs = (np.arange(ss) + 0.5) / ss - 0.5
    us = np.arange(u0, u1 + 1)
    vs = np.arange(v0, v1 + 1)
    # Sample grid: for every pixel in the bbox, ss*ss sub-pixel positions.
    uu = (us[:, None] + offs[None, :]).reshape(-1)  # (nu*ss,)
    vv = (vs[:, None] + offs[None, :]).reshape(-1)  # (nv*ss,)
    gu, gv = np.meshgrid(uu, vv)  # (nv*ss, nu*ss)

    denom = h_inv[2, 0] * gu + h_inv[2, 1] * gv + h_inv[2, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        x = (h_inv[0, 0] * gu + h_inv[0, 1] * gv + h_inv[0, 2]) / denom
        y = (h_inv[1, 0] * gu + h_inv[1, 1] * gv + h_inv[1, 2]) / denom

    layout = family.layout
    he = layout.half_extent
    pattern = family.pattern(tag_id)
    valid = (w_sign * denom > 1e-12) & (np.abs(x) <= he) & (np.abs(y) <= he)

    col = np.clip(((x + he) / layout.cell_size).astype(np.int64), 0, layout.total_width - 1)
    row = np.clip(((y + he) / layout.cell_size).astype(np.int64), 0, layout.total_width - 1)
    shade = np.where(valid, pattern[row, col].astype(np.float64), float(BACKGROUND_GRAY))

    # Average the ss*ss sub-samples of each pixel.
    nv, nu = len(vs), len(us)
    shade = shade.reshape(nv, ss, nu, ss).mean(axis=(1, 3))
    img[v0 : v1 + 1, u0 : u1 + 1] = shade

    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        img = img + rng.normal(0.0, noise_sigma, size=img.shape)

    return GrayImage(k.width, k.height, np.clip(np.round(img), 0, 255).astype(np.uint8))
