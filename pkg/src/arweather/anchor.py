"""World-anchor fusion: marker pose + detected planes.

A tag observation fixes where virtual content belongs; detected planes
pin it to real geometry. The anchor created here keeps that placement
when the camera moves on, instead of requiring the tag in view every
frame. ``simulate_trajectory`` replays a camera path in both modes so
the difference is measurable.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArWeatherError
from .geometry import (
    Pose,
    compose,
    invert,
    rotation_angle_deg,
    rotation_exp,
    rotation_log,
)
from .planes import PlaneModel


class EmptyTrajectory(ArWeatherError):
    """simulate_trajectory needs at least one frame."""


@dataclass(frozen=True)
class FusionParams:
    snap_threshold: float = 0.02
    smoothing_alpha: float = 0.2
    outlier_gate_translation: float = 0.10
    outlier_gate_rotation: float = 15.0

    def __post_init__(self):
        if not 0.0 < self.smoothing_alpha <= 1.0:
            raise ValueError("smoothing_alpha must be in (0, 1]")
        if self.snap_threshold < 0:
            raise ValueError("snap_threshold must be >= 0")


@dataclass(frozen=True)
class TagObservation:
    """One sighting of the tag: its camera-frame pose plus odometry."""

    tag_pose_cam: Pose
    camera_pose_world: Pose
    timestamp: float = 0.0


@dataclass
class WorldAnchor:
    pose: Pose  # model frame -> world frame
    snapped_plane: int | None
    snapped: bool
    last_tag_observation: float
    observation_count: int

    def to_json_dict(self) -> dict:
        return {
            "pose": self.pose.to_json_dict(),
            "snapped_plane": self.snapped_plane,
            "snapped": self.snapped,
            "last_tag_observation": float(self.last_tag_observation),
            "observation_count": int(self.observation_count),
        }


def _slerp(ra: np.ndarray, rb: np.ndarray, t: float) -> np.ndarray:
    """Shortest-arc interpolation from ra (t=0) to rb (t=1)."""
    return ra @ rotation_exp(t * rotation_log(ra.T @ rb))


def _align_z_to(rotation: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Minimal world-frame rotation taking the pose's +z onto the normal.

    The plane normal's stored sign is a bookkeeping convention (offset >= 0),
    so alignment targets whichever sign of the normal is nearer the current
    +z; this preserves yaw and never flips content through the surface.
    """
    z = rotation[:, 2]
    n = normal if float(z @ normal) >= 0.0 else -normal
    axis = np.cross(z, n)
    s = float(np.linalg.norm(axis))
    c = float(np.clip(z @ n, -1.0, 1.0))
    if s < 1e-12:
        return rotation
    angle = math.atan2(s, c)
    return rotation_exp(axis / s * angle) @ rotation


def _snap_to_planes(pose: Pose, planes, threshold: float):
    """Project onto the nearest plane within threshold, if any.

    Returns (pose, plane_id or None). Distance is point-to-plane of the
    pose origin; the winning plane gets the origin projected onto it and
    the +z axis rotated onto its normal.
    """
    best = None
    best_dist = threshold
    for plane in planes:
        dist = plane.distance(pose.translation)
        if dist <= best_dist:
            best = plane
            best_dist = dist
    if best is None:
        return pose, None
    signed = float(best.normal @ pose.translation) - best.offset
    origin = pose.translation - signed * best.normal
    rotation = _align_z_to(pose.rotation, best.normal)
    return Pose(rotation=rotation, translation=origin), best.id


def create_anchor(
    tag_pose_cam: Pose,
    camera_pose_world: Pose,
    planes,
    params: FusionParams | None = None,
    timestamp: float = 0.0,
) -> WorldAnchor:
    """Lift a tag pose into the world and snap it to nearby geometry."""
    if params is None:
        params = FusionParams()
    world = compose(camera_pose_world, tag_pose_cam)
    snapped_pose, plane_id = _snap_to_planes(world, planes, params.snap_threshold)
    return WorldAnchor(
        pose=snapped_pose,
        snapped_plane=plane_id,
        snapped=plane_id is not None,
        last_tag_observation=timestamp,
        observation_count=1,
    )


def update_anchor(
    anchor: WorldAnchor,
    observation: TagObservation | None,
    planes,
    params: FusionParams | None = None,
) -> WorldAnchor:
    """Blend a new observation into the anchor, or hold it.

    No observation returns the anchor untouched — that hold is the point
    of fusing: content stays put while the tag is out of view. An
    observation outside the outlier gates is dropped without effect.
    """
    if observation is None:
        return anchor
    if params is None:
        params = FusionParams()
    candidate = create_anchor(
        observation.tag_pose_cam,
        observation.camera_pose_world,
        planes,
        params,
        timestamp=observation.timestamp,
    )
    dt = float(np.linalg.norm(candidate.pose.translation - anchor.pose.translation))
    dr = rotation_angle_deg(candidate.pose.rotation, anchor.pose.rotation)
    if dt > params.outlier_gate_translation or dr > params.outlier_gate_rotation:
        return anchor

    alpha = params.smoothing_alpha
    translation = (1.0 - alpha) * anchor.pose.translation + alpha * candidate.pose.translation
    rotation = _slerp(anchor.pose.rotation, candidate.pose.rotation, alpha)
    blended = Pose(rotation=rotation, translation=translation)
    snapped_pose, plane_id = _snap_to_planes(blended, planes, params.snap_threshold)
    return WorldAnchor(
        pose=snapped_pose,
        snapped_plane=plane_id,
        snapped=plane_id is not None,
        last_tag_observation=observation.timestamp,
        observation_count=anchor.observation_count + 1,
    )


class FusionMode(str, enum.Enum):
    MARKER_ONLY = "MarkerOnly"
    FUSED = "Fused"


@dataclass(frozen=True)
class SimScene:
    """Ground truth for the drift harness.

    The virtual model sits at the tag, so ``tag_pose_world`` doubles as
    the true content pose. Observation noise is applied to the synthetic
    camera-frame tag poses (translation in meters, rotation in degrees).
    """

    tag_pose_world: Pose
    planes: list = field(default_factory=list)
    noise_translation: float = 0.0
    noise_rotation_deg: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class TrajectoryFrame:
    camera_pose_world: Pose
    tag_visible: bool = True


@dataclass(frozen=True)
class FrameResult:
    frame: int
    mode: FusionMode
    visible: bool
    err_t_m: float
    err_r_deg: float
    lost: bool
    # World-frame placement used for the error above (None before the
    # first sighting).  Not part of the CSV report.
    anchor_pose: Pose | None = None


@dataclass
class DriftReport:
    mode: FusionMode
    rows: list
    final_anchor: WorldAnchor | None = None

    @property
    def lost_frames(self) -> int:
        return sum(1 for r in self.rows if r.lost)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("frame,mode,visible,err_t_m,err_r_deg,lost\n")
        for r in self.rows:
            buf.write(
                f"{r.frame},{r.mode.value},{int(r.visible)},"
                f"{r.err_t_m:.9g},{r.err_r_deg:.9g},{int(r.lost)}\n"
            )
        return buf.getvalue()

    def summary(self) -> dict:
        errs_t = [r.err_t_m for r in self.rows if not math.isnan(r.err_t_m)]
        errs_r = [r.err_r_deg for r in self.rows if not math.isnan(r.err_r_deg)]
        return {
            "mode": self.mode.value,
            "frames": len(self.rows),
            "lost_frames": self.lost_frames,
            "max_err_t_m": max(errs_t) if errs_t else None,
            "mean_err_t_m": float(np.mean(errs_t)) if errs_t else None,
            "max_err_r_deg": max(errs_r) if errs_r else None,
            "mean_err_r_deg": float(np.mean(errs_r)) if errs_r else None,
        }


def _perturbed(pose: Pose, rng, sigma_t: float, sigma_r_deg: float) -> Pose:
    if sigma_t <= 0 and sigma_r_deg <= 0:
        return pose
    dt = rng.normal(0.0, sigma_t, size=3) if sigma_t > 0 else np.zeros(3)
    rotation = pose.rotation
    if sigma_r_deg > 0:
        w = rng.normal(0.0, np.radians(sigma_r_deg), size=3)
        rotation = rotation_exp(w) @ rotation
    return Pose(rotation=rotation, translation=pose.translation + dt)


def _pose_error(pose: Pose, truth: Pose):
    err_t = float(np.linalg.norm(pose.translation - truth.translation))
    err_r = rotation_angle_deg(pose.rotation, truth.rotation)
    return err_t, err_r


def plane_from_json_dict(d: dict, fallback_id: int = 0) -> PlaneModel:
    """Plane from {normal, offset, id?, inlier_count?} (scene files)."""
    from .planes import classify

    normal = np.asarray(d["normal"], dtype=np.float64)
    normal = normal / np.linalg.norm(normal)
    return PlaneModel(
        normal=normal,
        offset=float(d["offset"]),
        inlier_count=int(d.get("inlier_count", 0)),
        orientation=classify(normal),
        id=int(d.get("id", fallback_id)),
    )


def scene_from_json_dict(d: dict) -> SimScene:
    """SimScene from the documented scene-file shape.

    Expected keys: tag_pose_world {rotation: 9 numbers, translation: 3},
    planes (list, optional), noise_translation / noise_rotation_deg /
    seed (optional).
    """
    return SimScene(
        tag_pose_world=Pose.from_json_dict(d["tag_pose_world"]),
        planes=[
            plane_from_json_dict(p, i) for i, p in enumerate(d.get("planes", []))
        ],
        noise_translation=float(d.get("noise_translation", 0.0)),
        noise_rotation_deg=float(d.get("noise_rotation_deg", 0.0)),
        seed=int(d.get("seed", 0)),
    )


def trajectory_from_json_list(items) -> list:
    """Frames from [{camera_pose_world: {...}, tag_visible: bool}, ...]."""
    return [
        TrajectoryFrame(
            camera_pose_world=Pose.from_json_dict(item["camera_pose_world"]),
            tag_visible=bool(item.get("tag_visible", True)),
        )
        for item in items
    ]


def simulate_trajectory(
    scene: SimScene,
    trajectory,
    mode: FusionMode,
    params: FusionParams | None = None,
) -> DriftReport:
    """Replay a camera path and report per-frame anchor error.

    MarkerOnly re-derives the placement from each frame's tag pose; when
    the tag is hidden, the last camera-frame pose is reused, so the
    placement rides along with the camera and the frame counts as lost.
    Fused maintains a WorldAnchor and simply holds it through occlusion.

    Raises:
        EmptyTrajectory: no frames supplied.
    """
    frames = list(trajectory)
    if not frames:
        raise EmptyTrajectory("trajectory has no frames")
    if params is None:
        params = FusionParams()
    rng = np.random.default_rng(scene.seed)
    truth = scene.tag_pose_world

    anchor: WorldAnchor | None = None
    last_tag_pose_cam: Pose | None = None
    rows = []
    for i, frame in enumerate(frames):
        observation = None
        if frame.tag_visible:
            true_cam = compose(invert(frame.camera_pose_world), truth)
            noisy = _perturbed(
                true_cam, rng, scene.noise_translation, scene.noise_rotation_deg
            )
            observation = TagObservation(noisy, frame.camera_pose_world, timestamp=i)

        placement = None
        if mode is FusionMode.MARKER_ONLY:
            lost = observation is None
            if observation is not None:
                last_tag_pose_cam = observation.tag_pose_cam
            if last_tag_pose_cam is None:
                err_t = err_r = float("nan")
            else:
                placement = compose(frame.camera_pose_world, last_tag_pose_cam)
                err_t, err_r = _pose_error(placement, truth)
        else:
            if anchor is None:
                if observation is not None:
                    anchor = create_anchor(
                        observation.tag_pose_cam,
                        observation.camera_pose_world,
                        scene.planes,
                        params,
                        timestamp=i,
                    )
            else:
                anchor = update_anchor(anchor, observation, scene.planes, params)
            lost = anchor is None
            if anchor is None:
                err_t = err_r = float("nan")
            else:
                placement = anchor.pose
                err_t, err_r = _pose_error(anchor.pose, truth)

        rows.append(
            FrameResult(
                frame=i,
                mode=mode,
                visible=frame.tag_visible,
                err_t_m=err_t,
                err_r_deg=err_r,
                lost=lost,
                anchor_pose=placement,
            )
        )
    return DriftReport(mode=mode, rows=rows, final_anchor=anchor)
