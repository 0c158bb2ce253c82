"""HTTP service tests: routes, error mapping, schema validation."""

import json

import jsonschema
import numpy as np
import pytest
from fastapi.testclient import TestClient

from arweather.families import default_family
from arweather.geometry import GrayImage, Pose
from arweather.mockserver import MockWeatherServer
from arweather.rendering import render_tag
from arweather.service import ConfigError, ServiceConfig, create_app
from arweather.vizmap import Metric, build_scene
from arweather.weather import _weather_data_path, latest, to_json

from util import default_intrinsics


def load_schema(name):
    path = _weather_data_path(f"../schemas/{name}.schema.json")
    return json.loads(path.read_text())


def check_schema(body, name):
    jsonschema.validate(body, load_schema(name))


@pytest.fixture(scope="module")
def mock_server():
    with MockWeatherServer() as mock:
        yield mock


@pytest.fixture(scope="module")
def client(mock_server):
    config = ServiceConfig(
        cwb_url=mock_server.url("/cwb"),
        epa_url=mock_server.url("/epa"),
        poll_period_s=3600,
    )
    app = create_app(config)
    with TestClient(app) as test_client:
        yield test_client


@pytest.fixture(scope="module")
def cold_client():
    # No endpoints configured: the store stays empty.
    app = create_app(ServiceConfig())
    with TestClient(app) as test_client:
        yield test_client


class TestCities:
    def test_full_list(self, client):
        response = client.get("/cities")
        assert response.status_code == 200
        body = response.json()
        check_schema(body, "cities")
        assert len(body) == 22
        names = {c["name"] for c in body}
        assert {"Taipei", "Kaohsiung", "Penghu"} <= names
        assert all(0 <= c["map_x"] <= 1 and 0 <= c["map_y"] <= 1 for c in body)


class TestWeather:
    def test_fixture_record_after_poll(self, client):
        response = client.get("/weather/Taipei")
        assert response.status_code == 200
        check_schema(response.json(), "weather_record")
        assert response.json()["uv_index"] == 5.5
        assert response.json()["pm25_aqi"] == 60

    def test_body_is_canonical_serialization(self, client):
        store = client.app.state.store
        response = client.get("/weather/Yilan")
        assert response.text == to_json(latest(store, "Yilan"))

    def test_unknown_city_404(self, client):
        assert client.get("/weather/Gotham").status_code == 404

    def test_no_data_yet_503(self, cold_client):
        assert cold_client.get("/weather/Taipei").status_code == 503


class TestScene:
    def test_matches_build_scene_byte_for_byte(self, client):
        store = client.app.state.store
        for city, metric, name in (
            ("Taipei", Metric.UV, "uv"),
            ("Kaohsiung", Metric.PM25, "pm25"),
            ("Yilan", Metric.RAINFALL, "rainfall"),
            ("Keelung", Metric.TEMPERATURE, "temperature"),
        ):
            response = client.get(f"/scene/{city}/{name}")
            assert response.status_code == 200
            check_schema(response.json(), "scene_spec")
            expected = build_scene(latest(store, city), metric).to_json_dict()
            assert response.text == json.dumps(
                expected, separators=(",", ":"), ensure_ascii=False
            )

    def test_unknown_metric_400(self, client):
        assert client.get("/scene/Taipei/wind").status_code == 400

    def test_unknown_city_404(self, client):
        assert client.get("/scene/Gotham/uv").status_code == 404

    def test_no_data_503(self, cold_client):
        assert cold_client.get("/scene/Taipei/uv").status_code == 503

    def test_pure_function_of_store(self, client):
        a = client.get("/scene/Taipei/uv")
        b = client.get("/scene/Taipei/uv")
        assert a.content == b.content


class TestLocalize:
    def test_rendered_tag_roundtrip(self, client):
        k = default_intrinsics()
        pose = Pose(rotation=np.eye(3), translation=np.array([0.0, 0.0, 1.0]))
        image = render_tag(default_family(), 7, pose, k, tag_size=0.16)
        response = client.post("/localize", content=image.to_pgm())
        assert response.status_code == 200
        body = response.json()
        check_schema(body, "localize_response")
        assert len(body["detections"]) == 1
        assert body["detections"][0]["id"] == 7
        estimated = body["poses"][0]
        assert estimated["tag_id"] == 7
        t = estimated["pose"]["translation"]
        assert abs(t[2] - 1.0) < 0.01
        assert estimated["reprojection_rms"] < 1.0

    def test_blank_image_empty_arrays(self, client):
        blank = GrayImage.filled(160, 120, 128)
        response = client.post("/localize", content=blank.to_pgm())
        assert response.status_code == 200
        assert response.json() == {"detections": [], "poses": []}

    def test_truncated_body_400(self, client):
        blank = GrayImage.filled(160, 120, 128)
        data = blank.to_pgm()[:-50]
        assert client.post("/localize", content=data).status_code == 400

    def test_garbage_body_400(self, client):
        assert client.post("/localize", content=b"not a pgm").status_code == 400


def simulation_payload(hide_frames=(), n=12):
    rot = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    tag_pose = Pose(rotation=rot, translation=np.array([2.0, 0.0, 0.0]))
    frames = []
    for i in range(n):
        cam = Pose(rotation=np.eye(3), translation=np.array([0.0, 0.1 * i, 0.0]))
        frames.append(
            {"camera_pose_world": cam.to_json_dict(), "tag_visible": i not in hide_frames}
        )
    return {
        "scene": {
            "tag_pose_world": tag_pose.to_json_dict(),
            "planes": [{"normal": [1.0, 0.0, 0.0], "offset": 2.0, "id": 0}],
            "noise_translation": 0.001,
            "seed": 5,
        },
        "trajectory": frames,
        "mode": "both",
    }


class TestAnchorAndSimulate:
    def test_fresh_service_404(self, cold_client):
        assert cold_client.get("/anchor").status_code == 404

    def test_simulate_then_anchor(self, client):
        payload = simulation_payload(hide_frames={5, 6})
        response = client.post("/simulate", json=payload)
        assert response.status_code == 200
        body = response.json()
        check_schema(body, "simulate_response")
        assert body["reports"]["MarkerOnly"]["lost_frames"] == 2
        assert body["reports"]["Fused"]["lost_frames"] == 0
        anchor_response = client.get("/anchor")
        assert anchor_response.status_code == 200
        check_schema(anchor_response.json(), "anchor")
        assert anchor_response.json() == body["final_anchor"]
        # Anchor reads are stable snapshots.
        assert client.get("/anchor").content == anchor_response.content

    def test_simulate_empty_trajectory_400(self, client):
        payload = simulation_payload()
        payload["trajectory"] = []
        assert client.post("/simulate", json=payload).status_code == 400

    def test_simulate_bad_mode_400(self, client):
        payload = simulation_payload()
        payload["mode"] = "teleport"
        assert client.post("/simulate", json=payload).status_code == 400

    def test_simulate_missing_scene_400(self, client):
        assert client.post("/simulate", json={"trajectory": []}).status_code == 400


class TestConfig:
    def test_tag_size_must_be_positive(self):
        with pytest.raises(ConfigError):
            create_app(ServiceConfig(tag_size_m=0.0))

    def test_missing_cities_file(self):
        with pytest.raises(ConfigError):
            create_app(ServiceConfig(cities_path="/nonexistent/cities.json"))

    def test_malformed_cities_file_refuses_start(self, tmp_path):
        bad = tmp_path / "cities.json"
        bad.write_text('[{"name": "Taipei"}]')  # missing coordinates
        with pytest.raises(ConfigError):
            create_app(ServiceConfig(cities_path=str(bad)))

    def test_empty_city_file_is_allowed(self, tmp_path):
        empty = tmp_path / "cities.json"
        empty.write_text("[]")
        app = create_app(ServiceConfig(cities_path=str(empty)))
        with TestClient(app) as test_client:
            assert test_client.get("/cities").json() == []

    def test_from_file_rejects_unknown_keys(self, tmp_path):
        config_path = tmp_path / "svc.json"
        config_path.write_text('{"portt": 1234}')
        with pytest.raises(ConfigError):
            ServiceConfig.from_file(config_path)

    def test_from_file_round_trip(self, tmp_path):
        config_path = tmp_path / "svc.json"
        config_path.write_text('{"port": 9001, "tag_size_m": 0.2}')
        config = ServiceConfig.from_file(config_path)
        assert config.port == 9001
        assert config.tag_size_m == 0.2

    def test_missing_static_dir_refuses_start(self):
        with pytest.raises(ConfigError):
            create_app(ServiceConfig(static_dir="/nonexistent/dist"))

    def test_static_dir_served_under_app(self, tmp_path):
        (tmp_path / "index.html").write_text("<!doctype html><title>ui</title>")
        app = create_app(ServiceConfig(static_dir=str(tmp_path)))
        with TestClient(app) as test_client:
            response = test_client.get("/app/")
            assert response.status_code == 200
            assert "ui" in response.text
            # API routes are unaffected by the mount.
            assert test_client.get("/cities").status_code == 200
