"""Command-line front end for the pipeline stages.

Machine-readable output (JSON, CSV) goes to standard output; anything
meant for humans goes to standard error. Exit codes: 0 success, 1 for
usage or I/O failures, 2 when a command ran cleanly but found nothing.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import signal
import socket
import sys
import time
from pathlib import Path

import click

from .anchor import (
    EmptyTrajectory,
    FusionMode,
    scene_from_json_dict,
    simulate_trajectory,
    trajectory_from_json_list,
)
from .detector import DetectorParams, detect
from .errors import ArWeatherError
from .families import default_family, load_family
from .geometry import CameraIntrinsics, GrayImage, InvalidImage
from .mockserver import MockWeatherServer
from .pose_estimation import estimate
from .service import ConfigError, ServiceConfig, create_app

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_EMPTY = 2


def _fail(message: str, code: int = EXIT_ERROR):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _read_image(path: str) -> GrayImage:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        _fail(f"cannot read image {path}: {exc}")
    try:
        return GrayImage.from_pgm(data)
    except InvalidImage as exc:
        _fail(f"bad PGM {path}: {exc}")


def _load_family(path: str | None):
    if path is None:
        return default_family()
    try:
        return load_family(path)
    except (OSError, ArWeatherError) as exc:
        _fail(f"cannot load family {path}: {exc}")


def _load_json(path: str, what: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        _fail(f"cannot read {what} {path}: {exc}")


def _detector_params(path: str | None) -> DetectorParams:
    if path is None:
        return DetectorParams()
    raw = _load_json(path, "params file")
    known = {f.name for f in dataclasses.fields(DetectorParams)}
    unknown = set(raw) - known
    if unknown:
        _fail(f"unknown detector params: {sorted(unknown)}")
    return DetectorParams(**raw)


@click.group()
def main():
    """Tag localization and weather visualization toolkit."""
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command("detect")
@click.option("--image", "image_path", required=True, help="Input PGM image.")
@click.option("--family", "family_path", default=None, help="Codebook file.")
@click.option("--params", "params_path", default=None, help="Detector params JSON.")
def cmd_detect(image_path, family_path, params_path):
    """Detect tags in an image; JSON detections to standard output."""
    image = _read_image(image_path)
    family = _load_family(family_path)
    params = _detector_params(params_path)
    detections = detect(image, family, params)
    click.echo(json.dumps([d.to_json_dict() for d in detections]))


@main.command("pose")
@click.option("--image", "image_path", required=True, help="Input PGM image.")
@click.option("--family", "family_path", default=None, help="Codebook file.")
@click.option("--intrinsics", "intrinsics_path", default=None,
              help="JSON file with fx/fy/cx/cy/width/height.")
@click.option("--tag-size", type=float, default=0.16, show_default=True,
              help="Tag edge length in meters.")
def cmd_pose(image_path, family_path, intrinsics_path, tag_size):
    """Detect tags and estimate camera-frame poses (JSON array)."""
    if tag_size <= 0:
        _fail(f"tag size must be positive, got {tag_size}")
    image = _read_image(image_path)
    family = _load_family(family_path)
    if intrinsics_path is None:
        k = CameraIntrinsics(fx=600.0, fy=600.0, cx=image.width / 2,
                             cy=image.height / 2, width=image.width,
                             height=image.height)
    else:
        raw = _load_json(intrinsics_path, "intrinsics file")
        try:
            k = CameraIntrinsics(**raw)
        except (TypeError, ValueError) as exc:
            _fail(f"bad intrinsics: {exc}")
    detections = detect(image, family)
    poses = []
    for det in detections:
        try:
            result = estimate(det, k, tag_size)
        except ArWeatherError as exc:
            click.echo(f"tag {det.id}: pose failed: {exc}", err=True)
            continue
        poses.append({
            "tag_id": int(det.id),
            "pose": result.pose.to_json_dict(),
            "reprojection_rms": float(result.reprojection_rms),
            "iterations": int(result.iterations),
        })
    click.echo(json.dumps(poses))
    if not poses:
        click.echo("no tags found", err=True)
        sys.exit(EXIT_EMPTY)


@main.command("simulate-drift")
@click.option("--scene", "scene_path", required=True, help="Scene JSON file.")
@click.option("--trajectory", "trajectory_path", required=True,
              help="Trajectory JSON file.")
@click.option("--mode", type=click.Choice(["both", "fused", "marker-only"]),
              default="both", show_default=True)
@click.option("--summary-json", "summary_path", default=None,
              help="Also write the JSON summaries to this file.")
def cmd_simulate_drift(scene_path, trajectory_path, mode, summary_path):
    """Replay a trajectory; CSV drift report to standard output."""
    scene_raw = _load_json(scene_path, "scene file")
    trajectory_raw = _load_json(trajectory_path, "trajectory file")
    try:
        scene = scene_from_json_dict(scene_raw)
        trajectory = trajectory_from_json_list(trajectory_raw)
    except (KeyError, TypeError, ValueError) as exc:
        _fail(f"bad scene/trajectory: {exc}")
    modes = {
        "both": [FusionMode.MARKER_ONLY, FusionMode.FUSED],
        "fused": [FusionMode.FUSED],
        "marker-only": [FusionMode.MARKER_ONLY],
    }[mode]
    reports = []
    for m in modes:
        try:
            reports.append(simulate_trajectory(scene, trajectory, m))
        except EmptyTrajectory:
            _fail("trajectory is empty")
    csv_lines = reports[0].to_csv()
    for extra in reports[1:]:
        csv_lines += "".join(extra.to_csv().splitlines(keepends=True)[1:])
    click.echo(csv_lines, nl=False)
    if summary_path is not None:
        summaries = {r.mode.value: r.summary() for r in reports}
        Path(summary_path).write_text(json.dumps(summaries, indent=2) + "\n")
    for r in reports:
        s = r.summary()
        click.echo(
            f"{s['mode']}: {s['frames']} frames, {s['lost_frames']} lost, "
            f"max err {s['max_err_t_m']}", err=True,
        )


def _check_port_free(host: str, port: int):
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((host, port))
    except OSError as exc:
        _fail(f"cannot bind {host}:{port}: {exc}")
    finally:
        probe.close()


@main.command("serve")
@click.option("--config", "config_path", default=None, help="ServiceConfig JSON.")
@click.option("--host", default=None, help="Override bind host.")
@click.option("--port", type=int, default=None, help="Override bind port.")
def cmd_serve(config_path, host, port):
    """Run the HTTP API service (uvicorn) until interrupted."""
    import uvicorn

    try:
        config = ServiceConfig.from_file(config_path) if config_path else ServiceConfig()
        if host is not None:
            config.host = host
        if port is not None:
            config.port = port
        app = create_app(config, start_poller=True)
    except (ConfigError, ArWeatherError) as exc:
        _fail(str(exc))
    _check_port_free(config.host, config.port)
    click.echo(f"serving on http://{config.host}:{config.port}", err=True)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")


@main.command("mock-weather")
@click.option("--port", type=int, default=9555, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
def cmd_mock_weather(port, host):
    """Serve the fixture CWB/EPA payloads until interrupted."""
    try:
        server = MockWeatherServer(host=host, port=port)
    except OSError as exc:
        _fail(f"cannot bind {host}:{port}: {exc}")
    server.start()
    click.echo(f"mock weather on {server.base_url} (/cwb, /epa)", err=True)
    signal.signal(signal.SIGTERM, lambda *_: sys.exit(EXIT_OK))
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
