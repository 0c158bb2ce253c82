"""HTTP service: weather, scenes, localization, and the fused anchor.

Thin FastAPI layer over the library modules. All JSON bodies are built
from the same ``to_json_dict``/``to_json`` helpers the tests use, so a
route response is byte-identical to the library output it wraps.
"""

from __future__ import annotations

import json
import logging
import threading
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import anchor as anchor_mod
from .detector import DetectorParams, detect
from .errors import ArWeatherError
from .families import default_family, load_family
from .geometry import CameraIntrinsics, GrayImage, InvalidImage
from .pose_estimation import estimate
from .vizmap import UnknownMetric, build_scene, parse_metric
from .weather import (
    NoDataYet,
    PollConfig,
    UnknownCity,
    WeatherStore,
    load_cities,
    poll_loop,
    poll_once,
    to_json,
)

log = logging.getLogger("arweather.service")

DEFAULT_INTRINSICS = {
    "fx": 600.0, "fy": 600.0, "cx": 320.0, "cy": 240.0, "width": 640, "height": 480,
}


class ConfigError(ArWeatherError):
    """Service configuration invalid; refuse to start."""


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    cities_path: str | None = None
    codebook_path: str | None = None
    intrinsics: dict = field(default_factory=lambda: dict(DEFAULT_INTRINSICS))
    tag_size_m: float = 0.16
    poll_period_s: float = 60.0
    cwb_url: str | None = None
    epa_url: str | None = None
    # Built UI assets to serve under /app (optional; any static host works).
    static_dir: str | None = None

    @classmethod
    def from_file(cls, path) -> "ServiceConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def validate(self):
        if self.tag_size_m <= 0:
            raise ConfigError(f"tag_size_m must be positive, got {self.tag_size_m}")
        for label, p in (("cities_path", self.cities_path),
                         ("codebook_path", self.codebook_path)):
            if p is not None and not Path(p).is_file():
                raise ConfigError(f"{label} does not exist: {p}")
        if self.static_dir is not None and not Path(self.static_dir).is_dir():
            raise ConfigError(f"static_dir does not exist: {self.static_dir}")
        missing = set(DEFAULT_INTRINSICS) - set(self.intrinsics)
        if missing:
            raise ConfigError(f"intrinsics missing keys: {sorted(missing)}")

    def endpoints(self) -> tuple:
        pairs = []
        if self.cwb_url:
            pairs.append((self.cwb_url, "cwb"))
        if self.epa_url:
            pairs.append((self.epa_url, "epa"))
        return tuple(pairs)


def _canonical_json(payload) -> Response:
    return Response(
        content=json.dumps(payload, separators=(",", ":"), ensure_ascii=False),
        media_type="application/json",
    )


def _error(status: int, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"detail": detail})


def create_app(config: ServiceConfig | None = None, start_poller: bool = False) -> FastAPI:
    """Build the service; set start_poller for the background poll loop."""
    if config is None:
        config = ServiceConfig()
    config.validate()

    try:
        cities = load_cities(config.cities_path)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"malformed city list: {exc}") from exc
    family = (
        default_family()
        if config.codebook_path is None
        else load_family(config.codebook_path)
    )
    intrinsics = CameraIntrinsics(**config.intrinsics)
    store = WeatherStore(cities)
    poll_config = (
        PollConfig(endpoints=config.endpoints(), period_s=config.poll_period_s)
        if config.endpoints()
        else None
    )

    @asynccontextmanager
    async def lifespan(app_: FastAPI):
        state = app_.state
        if poll_config is not None:
            outcomes = poll_once(poll_config, store)
            log.info("initial poll: %s", outcomes)
            if start_poller:
                thread = threading.Thread(
                    target=poll_loop,
                    args=(poll_config, store),
                    kwargs={"stop_event": state.stop_poll},
                    daemon=True,
                )
                thread.start()
                state.poll_thread = thread
        yield
        state.stop_poll.set()

    app = FastAPI(title="arweather", docs_url=None, redoc_url=None, lifespan=lifespan)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    if config.static_dir is not None:
        app.mount("/app", StaticFiles(directory=config.static_dir, html=True), name="ui")
    state = app.state
    state.config = config
    state.cities = cities
    state.store = store
    state.family = family
    state.intrinsics = intrinsics
    state.anchor = None
    state.anchor_lock = threading.Lock()
    state.stop_poll = threading.Event()
    state.poll_thread = None

    @app.get("/cities")
    def get_cities():
        return _canonical_json(
            [{"name": c.name, "map_x": c.x, "map_y": c.y} for c in cities]
        )

    @app.get("/weather/{city}")
    def get_weather(city: str):
        try:
            record = store.latest(city)
        except UnknownCity:
            return _error(404, f"unknown city {city!r}")
        except NoDataYet:
            return _error(503, f"no data yet for {city!r}")
        return Response(content=to_json(record), media_type="application/json")

    @app.get("/scene/{city}/{metric}")
    def get_scene(city: str, metric: str):
        try:
            m = parse_metric(metric)
        except UnknownMetric as exc:
            return _error(400, f"unknown metric: {exc}")
        try:
            record = store.latest(city)
            spec = build_scene(record, m)
        except UnknownCity:
            return _error(404, f"unknown city {city!r}")
        except (NoDataYet, ValueError):
            return _error(503, f"no {metric} data yet for {city!r}")
        return _canonical_json(spec.to_json_dict())

    @app.post("/localize")
    async def localize(request: Request):
        body = await request.body()
        try:
            image = GrayImage.from_pgm(body)
        except InvalidImage as exc:
            return _error(400, f"malformed image: {exc}")
        detections = detect(image, family, DetectorParams())
        poses = []
        for det in detections:
            try:
                result = estimate(det, intrinsics, config.tag_size_m)
            except ArWeatherError:
                poses.append(None)
                continue
            poses.append(
                {
                    "tag_id": int(det.id),
                    "pose": result.pose.to_json_dict(),
                    "reprojection_rms": float(result.reprojection_rms),
                    "iterations": int(result.iterations),
                }
            )
        return _canonical_json(
            {"detections": [d.to_json_dict() for d in detections], "poses": poses}
        )

    @app.get("/anchor")
    def get_anchor():
        with state.anchor_lock:
            current = state.anchor
        if current is None:
            return _error(404, "no anchor created")
        return _canonical_json(current.to_json_dict())

    @app.post("/simulate")
    async def simulate(request: Request):
        try:
            payload = await request.json()
        except json.JSONDecodeError:
            return _error(400, "body must be JSON")
        try:
            scene = anchor_mod.scene_from_json_dict(payload["scene"])
            trajectory = anchor_mod.trajectory_from_json_list(payload["trajectory"])
            mode_name = str(payload.get("mode", "both")).lower()
        except (KeyError, TypeError, ValueError) as exc:
            return _error(400, f"bad simulation payload: {exc}")
        if mode_name == "both":
            modes = [anchor_mod.FusionMode.MARKER_ONLY, anchor_mod.FusionMode.FUSED]
        elif mode_name in ("fused", "markeronly", "marker_only", "marker-only"):
            modes = [
                anchor_mod.FusionMode.FUSED
                if mode_name == "fused"
                else anchor_mod.FusionMode.MARKER_ONLY
            ]
        else:
            return _error(400, f"unknown mode {payload.get('mode')!r}")
        reports = {}
        final_anchor = None
        try:
            for mode in modes:
                report = anchor_mod.simulate_trajectory(scene, trajectory, mode)
                reports[mode.value] = report.summary()
                if mode is anchor_mod.FusionMode.FUSED:
                    final_anchor = report.final_anchor
        except anchor_mod.EmptyTrajectory:
            return _error(400, "trajectory has no frames")
        if final_anchor is not None:
            with state.anchor_lock:
                state.anchor = final_anchor
        return _canonical_json(
            {
                "reports": reports,
                "final_anchor": None if final_anchor is None else final_anchor.to_json_dict(),
            }
        )

    return app
