"""Weather observation ingest: adapters, JSON serialization, store, poller.

Two upstream shapes are supported — a CWB-like feed carrying UV index,
temperature, and rainfall per station, and an EPA-like feed carrying
PM2.5 concentrations per site (converted to AQI on ingest). Records are
merged per city in a ``WeatherStore`` so the newest complete picture is
always available to the service layer.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from collections import deque
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import requests

from .errors import ArWeatherError

log = logging.getLogger("arweather.weather")

SOURCE_CWB = "cwb"
SOURCE_EPA = "epa"

RECORD_FIELDS = (
    "city",
    "timestamp",
    "uv_index",
    "temperature_c",
    "pm25_aqi",
    "rainfall_mm_hr",
)
METRIC_FIELDS = RECORD_FIELDS[2:]


class NetworkError(ArWeatherError):
    """Endpoint unreachable or returned a server error; retry later."""


class SchemaError(ArWeatherError):
    """Payload structure does not match the adapter contract."""


class ParseError(ArWeatherError):
    """Text is not a valid serialized WeatherRecord."""


class InvariantViolation(ArWeatherError):
    """Record field outside its legal range."""


class UnknownCity(ArWeatherError):
    """City not in the configured list."""


class NoDataYet(ArWeatherError):
    """Known city, but nothing ingested for it."""


def _weather_data_path(name: str) -> Path:
    return Path(resources.files("arweather").joinpath(f"data/weather/{name}"))


@dataclass(frozen=True)
class City:
    """Canonical city name plus its normalized map-pin position."""

    name: str
    x: float
    y: float


def load_cities(path: Path | None = None) -> list:
    if path is None:
        path = _weather_data_path("cities.json")
    raw = json.loads(Path(path).read_text())
    return [City(name=c["name"], x=float(c["x"]), y=float(c["y"])) for c in raw]


def load_aqi_breakpoints(path: Path | None = None) -> list:
    if path is None:
        path = _weather_data_path("aqi_breakpoints.json")
    return json.loads(Path(path).read_text())


_DEFAULT_BREAKPOINTS = None


def aqi_from_pm25(concentration: float, table: list | None = None) -> int:
    """PM2.5 concentration (ug/m3) to AQI via piecewise-linear breakpoints.

    Concentrations beyond the top band clamp to 500; interpolated values
    round half-up to an integer index.
    """
    global _DEFAULT_BREAKPOINTS
    if table is None:
        if _DEFAULT_BREAKPOINTS is None:
            _DEFAULT_BREAKPOINTS = load_aqi_breakpoints()
        table = _DEFAULT_BREAKPOINTS
    if concentration < 0:
        raise InvariantViolation(f"negative PM2.5 concentration: {concentration}")
    for row in table:
        if row["conc_lo"] <= concentration <= row["conc_hi"]:
            span = row["conc_hi"] - row["conc_lo"]
            frac = 0.0 if span == 0 else (concentration - row["conc_lo"]) / span
            return int(row["aqi_lo"] + frac * (row["aqi_hi"] - row["aqi_lo"]) + 0.5)
    return 500


@dataclass(frozen=True)
class WeatherRecord:
    """One city's observations at a timestamp; absent metrics are None."""

    city: str
    timestamp: int
    uv_index: float | None = None
    temperature_c: float | None = None
    pm25_aqi: int | None = None
    rainfall_mm_hr: float | None = None

    def __post_init__(self):
        if self.uv_index is not None and self.uv_index < 0:
            raise InvariantViolation(f"uv_index {self.uv_index} < 0")
        if self.pm25_aqi is not None and not 0 <= self.pm25_aqi <= 500:
            raise InvariantViolation(f"pm25_aqi {self.pm25_aqi} outside [0, 500]")
        if self.rainfall_mm_hr is not None and self.rainfall_mm_hr < 0:
            raise InvariantViolation(f"rainfall_mm_hr {self.rainfall_mm_hr} < 0")

    def merged_onto(self, previous: "WeatherRecord | None") -> "WeatherRecord":
        """Fill this record's absent metrics from an older record."""
        if previous is None:
            return self
        fills = {
            f: getattr(previous, f)
            for f in METRIC_FIELDS
            if getattr(self, f) is None and getattr(previous, f) is not None
        }
        return replace(self, **fills) if fills else self

    def is_complete(self) -> bool:
        return all(getattr(self, f) is not None for f in METRIC_FIELDS)


def to_json(record: WeatherRecord) -> str:
    """Canonical serialization: fixed key order, no whitespace."""
    payload = {f: getattr(record, f) for f in RECORD_FIELDS}
    return json.dumps(payload, separators=(",", ":"))


def from_json(text: str) -> WeatherRecord:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ParseError("expected a JSON object")
    missing = [f for f in RECORD_FIELDS if f not in raw]
    if missing:
        raise ParseError(f"missing fields: {missing}")
    if not isinstance(raw["city"], str):
        raise ParseError("city must be a string")
    for f in RECORD_FIELDS[1:]:
        if raw[f] is not None and not isinstance(raw[f], (int, float)):
            raise ParseError(f"{f} must be a number or null")
    return WeatherRecord(
        city=raw["city"],
        timestamp=int(raw["timestamp"]),
        uv_index=None if raw["uv_index"] is None else float(raw["uv_index"]),
        temperature_c=None if raw["temperature_c"] is None else float(raw["temperature_c"]),
        pm25_aqi=None if raw["pm25_aqi"] is None else int(raw["pm25_aqi"]),
        rainfall_mm_hr=None if raw["rainfall_mm_hr"] is None else float(raw["rainfall_mm_hr"]),
    )


def _require(payload: dict, key: str, kind: type):
    if key not in payload:
        raise SchemaError(f"payload missing required key {key!r}")
    value = payload[key]
    if not isinstance(value, kind):
        raise SchemaError(f"key {key!r} must be {kind.__name__}")
    return value


def _number_or_none(entry: dict, key: str):
    value = entry.get(key)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"station field {key!r} must be numeric")
    return float(value)


def parse_cwb(payload: dict, cities) -> tuple:
    """CWB-like adapter: stations with uv/temperature/rainfall.

    Returns (records, dropped_count); entries for cities outside the
    configured list are dropped and counted.
    """
    generated_at = _require(payload, "generated_at", (int, float))
    stations = _require(payload, "stations", list)
    known = {c.name for c in cities}
    records, dropped = [], 0
    for entry in stations:
        if not isinstance(entry, dict):
            raise SchemaError("station entries must be objects")
        name = entry.get("city")
        if not isinstance(name, str):
            raise SchemaError("station missing a city name")
        if name not in known:
            dropped += 1
            continue
        records.append(
            WeatherRecord(
                city=name,
                timestamp=int(generated_at),
                uv_index=_number_or_none(entry, "uv_index"),
                temperature_c=_number_or_none(entry, "temperature_c"),
                rainfall_mm_hr=_number_or_none(entry, "rainfall_mm_hr"),
            )
        )
    return records, dropped


def parse_epa(payload: dict, cities, breakpoints=None) -> tuple:
    """EPA-like adapter: sites with PM2.5 concentration, converted to AQI."""
    generated_at = _require(payload, "generated_at", (int, float))
    sites = _require(payload, "sites", list)
    known = {c.name for c in cities}
    records, dropped = [], 0
    for entry in sites:
        if not isinstance(entry, dict):
            raise SchemaError("site entries must be objects")
        name = entry.get("city")
        if not isinstance(name, str):
            raise SchemaError("site missing a city name")
        if name not in known:
            dropped += 1
            continue
        conc = _number_or_none(entry, "pm25_ugm3")
        records.append(
            WeatherRecord(
                city=name,
                timestamp=int(generated_at),
                pm25_aqi=None if conc is None else aqi_from_pm25(conc, breakpoints),
            )
        )
    return records, dropped


_ADAPTERS = {SOURCE_CWB: parse_cwb, SOURCE_EPA: parse_epa}


def fetch_observations(
    endpoint: str,
    source: str,
    cities=None,
    timeout: float = 5.0,
) -> list:
    """GET the endpoint and parse it with the named source adapter.

    Raises:
        NetworkError: connection failure or HTTP error status (retryable).
        SchemaError: body is not JSON or does not match the adapter.
    """
    if source not in _ADAPTERS:
        raise ValueError(f"unknown source {source!r}; expected one of {sorted(_ADAPTERS)}")
    if cities is None:
        cities = load_cities()
    try:
        response = requests.get(endpoint, timeout=timeout)
    except requests.RequestException as exc:
        raise NetworkError(f"GET {endpoint} failed: {exc}") from exc
    if response.status_code != 200:
        raise NetworkError(f"GET {endpoint} returned HTTP {response.status_code}")
    try:
        payload = response.json()
    except ValueError as exc:
        raise SchemaError(f"endpoint {endpoint} did not return JSON") from exc
    if not isinstance(payload, dict):
        raise SchemaError("top-level payload must be an object")
    records, dropped = _ADAPTERS[source](payload, cities)
    if dropped:
        log.warning("%s: dropped %d entries for unknown cities", source, dropped)
    return records


class WeatherStore:
    """Latest record per city plus a bounded history log.

    One writer (the poller), many readers. ``latest[c].timestamp`` never
    decreases: older records are ignored, same-timestamp records may only
    fill in metrics that are still absent (so cross-source merges work).
    """

    def __init__(self, cities=None, history_capacity: int = 1024):
        self._cities = list(cities) if cities is not None else load_cities()
        self._known = {c.name for c in self._cities}
        self._latest: dict = {}
        self._history = deque(maxlen=history_capacity)
        self._lock = threading.Lock()

    @property
    def cities(self) -> list:
        return list(self._cities)

    def ingest(self, record: WeatherRecord) -> bool:
        """Merge one record; returns True if the store changed."""
        if record.city not in self._known:
            raise UnknownCity(record.city)
        with self._lock:
            previous = self._latest.get(record.city)
            if previous is not None:
                if record.timestamp < previous.timestamp:
                    return False
                if record.timestamp == previous.timestamp:
                    merged = record.merged_onto(previous)
                    if merged == previous:
                        return False
                    # Same instant, new metrics: fold into the record.
                    record = merged
                else:
                    record = record.merged_onto(previous)
            self._latest[record.city] = record
            self._history.append(record)
            return True

    def latest(self, city: str) -> WeatherRecord:
        if city not in self._known:
            raise UnknownCity(city)
        with self._lock:
            record = self._latest.get(city)
        if record is None:
            raise NoDataYet(city)
        return record

    def snapshot(self) -> dict:
        with self._lock:
            return dict(self._latest)

    def history(self) -> list:
        with self._lock:
            return list(self._history)


def latest(store: WeatherStore, city: str) -> WeatherRecord:
    """Freshest record for a city (UnknownCity / NoDataYet on failure)."""
    return store.latest(city)


@dataclass(frozen=True)
class PollConfig:
    """endpoints: sequence of (url, source) pairs polled each round."""

    endpoints: tuple
    period_s: float = 60.0
    backoff_initial_s: float = 1.0
    backoff_cap_s: float = 300.0

    def __post_init__(self):
        if self.period_s <= 0:
            raise ValueError("period_s must be positive")
        object.__setattr__(self, "endpoints", tuple(tuple(e) for e in self.endpoints))


def poll_once(config: PollConfig, store: WeatherStore, cities=None) -> dict:
    """Fetch every endpoint once; returns per-endpoint outcome strings."""
    if cities is None:
        cities = store.cities
    outcomes = {}
    for url, source in config.endpoints:
        try:
            records = fetch_observations(url, source, cities)
        except NetworkError as exc:
            log.warning("%s: network error: %s", source, exc)
            outcomes[(url, source)] = "network-error"
            continue
        except SchemaError as exc:
            log.error("%s: schema error, skipping this round: %s", source, exc)
            outcomes[(url, source)] = "schema-error"
            continue
        changed = sum(1 for r in records if store.ingest(r))
        outcomes[(url, source)] = f"ok:{changed}"
    return outcomes


def poll_loop(
    config: PollConfig,
    store: WeatherStore,
    stop_event: threading.Event | None = None,
    max_rounds: int | None = None,
    sleep_fn=time.sleep,
    time_fn=time.monotonic,
) -> int:
    """Poll endpoints until stopped; returns the number of rounds run.

    NetworkError puts the failing endpoint on exponential backoff (capped
    at ``backoff_cap_s``); SchemaError skips the source for the round
    without backoff. Records older than what the store holds are ignored,
    so repeated identical payloads are no-ops.
    """
    backoff_until = {e: 0.0 for e in config.endpoints}
    backoff_s = {e: config.backoff_initial_s for e in config.endpoints}
    rounds = 0
    while True:
        if stop_event is not None and stop_event.is_set():
            return rounds
        if max_rounds is not None and rounds >= max_rounds:
            return rounds
        now = time_fn()
        for endpoint in config.endpoints:
            if now < backoff_until[endpoint]:
                continue
            url, source = endpoint
            try:
                records = fetch_observations(url, source, store.cities)
            except NetworkError as exc:
                backoff_until[endpoint] = now + backoff_s[endpoint]
                log.warning(
                    "%s: network error (retry in %.0fs): %s",
                    source, backoff_s[endpoint], exc,
                )
                backoff_s[endpoint] = min(backoff_s[endpoint] * 2, config.backoff_cap_s)
                continue
            except SchemaError as exc:
                log.error("%s: schema error, skipping this round: %s", source, exc)
                continue
            backoff_s[endpoint] = config.backoff_initial_s
            backoff_until[endpoint] = 0.0
            for record in records:
                store.ingest(record)
        rounds += 1
        sleep_fn(config.period_s)
