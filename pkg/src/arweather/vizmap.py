"""Metric-to-visual mapping: colors, particle density, scene assembly.

Each weather metric maps to renderer-agnostic visual parameters — a
sphere color plus particle/convection intensities — bundled in a
``SceneSpec``. Anchor colors live in module-level tables so the ramps
are data, not code; the directional constraints (green to purple, blue
to red, light to dark, sparse to dense) are what the tests enforce.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import ArWeatherError
from .weather import WeatherRecord


class NegativeInput(ArWeatherError):
    """Metric value below zero where the scale starts at zero."""


class OutOfRange(ArWeatherError):
    """Value outside the metric's defined domain."""


class UnknownMetric(ArWeatherError):
    """Metric name not one of uv/temperature/pm25/rainfall."""


@dataclass(frozen=True)
class Color:
    """RGB triple; components are clamped into [0, 1] on construction."""

    r: float
    g: float
    b: float

    def __post_init__(self):
        object.__setattr__(self, "r", min(1.0, max(0.0, float(self.r))))
        object.__setattr__(self, "g", min(1.0, max(0.0, float(self.g))))
        object.__setattr__(self, "b", min(1.0, max(0.0, float(self.b))))

    def luminance(self) -> float:
        return 0.2126 * self.r + 0.7152 * self.g + 0.0722 * self.b

    def to_json_dict(self) -> dict:
        return {"r": self.r, "g": self.g, "b": self.b}


class Metric(str, enum.Enum):
    UV = "UV"
    TEMPERATURE = "Temperature"
    PM25 = "PM25"
    RAINFALL = "Rainfall"


_METRIC_BY_ROUTE = {
    "uv": Metric.UV,
    "temperature": Metric.TEMPERATURE,
    "pm25": Metric.PM25,
    "rainfall": Metric.RAINFALL,
}


def parse_metric(name: str) -> Metric:
    try:
        return _METRIC_BY_ROUTE[name.lower()]
    except KeyError:
        raise UnknownMetric(
            f"{name!r}; expected one of {sorted(_METRIC_BY_ROUTE)}"
        ) from None


# UV index ramp, following the conventional 5-band index colors.
UV_ANCHORS = (
    (0.0, Color(0.0, 0.8, 0.0)),   # green
    (3.0, Color(1.0, 1.0, 0.0)),   # yellow
    (6.0, Color(1.0, 0.5, 0.0)),   # orange
    (8.0, Color(1.0, 0.0, 0.0)),   # red
    (11.0, Color(0.6, 0.0, 0.8)),  # purple; 11+ clamps here
)

TEMP_MIN_C = -10.0
TEMP_MAX_C = 40.0
TEMP_COLD = Color(0.0, 0.0, 1.0)
TEMP_HOT = Color(1.0, 0.0, 0.0)

# AQI ramp light green -> tan -> dark brown, strictly darkening.
PM25_ANCHORS = (
    (0.0, Color(0.70, 0.90, 0.60)),
    (50.0, Color(0.75, 0.78, 0.40)),
    (100.0, Color(0.80, 0.65, 0.30)),
    (150.0, Color(0.70, 0.48, 0.22)),
    (200.0, Color(0.55, 0.34, 0.15)),
    (300.0, Color(0.38, 0.20, 0.09)),
    (500.0, Color(0.20, 0.10, 0.05)),
)

RAIN_CAP_MM_HR = 80.0
RAIN_SPHERE_COLOR = Color(0.45, 0.55, 0.75)  # rain reads as particles, not hue

BASELINE_PARTICLE_DENSITY = 0.3


def _lerp_color(a: Color, b: Color, t: float) -> Color:
    return Color(
        a.r + (b.r - a.r) * t,
        a.g + (b.g - a.g) * t,
        a.b + (b.b - a.b) * t,
    )


def _ramp(anchors, x: float) -> Color:
    if x <= anchors[0][0]:
        return anchors[0][1]
    if x >= anchors[-1][0]:
        return anchors[-1][1]
    for (x0, c0), (x1, c1) in zip(anchors, anchors[1:]):
        if x0 <= x <= x1:
            return _lerp_color(c0, c1, (x - x0) / (x1 - x0))
    raise AssertionError("unreachable: anchors are ordered")


def uv_to_color(uv: float) -> Color:
    """UV index to the green-through-purple index ramp (11+ is purple)."""
    if math.isnan(uv) or uv < 0:
        raise NegativeInput(f"uv_index {uv}")
    return _ramp(UV_ANCHORS, uv)


def temp_to_visual(t: float) -> tuple:
    """Temperature to (color, convection_intensity).

    The blend parameter s runs 0 at -10 C (blue) to 1 at 40 C (red);
    convection is its complement — colder air convects harder.
    """
    if not math.isfinite(t):
        raise ValueError(f"temperature must be finite, got {t}")
    s = min(1.0, max(0.0, (t - TEMP_MIN_C) / (TEMP_MAX_C - TEMP_MIN_C)))
    return _lerp_color(TEMP_COLD, TEMP_HOT, s), 1.0 - s


def pm25_to_color(aqi: float) -> Color:
    if math.isnan(aqi) or not 0 <= aqi <= 500:
        raise OutOfRange(f"pm25_aqi {aqi} outside [0, 500]")
    return _ramp(PM25_ANCHORS, aqi)


def rainfall_to_density(rain: float) -> float:
    """Rain rate to particle density, saturating at RAIN_CAP_MM_HR."""
    if math.isnan(rain) or rain < 0:
        raise NegativeInput(f"rainfall_mm_hr {rain}")
    return min(1.0, rain / RAIN_CAP_MM_HR)


@dataclass(frozen=True)
class SceneSpec:
    """Visual parameters for one city/metric pair."""

    city: str
    metric: Metric
    sphere_color: Color
    particle_density: float
    convection_intensity: float
    pin_label: str
    timestamp: int

    def __post_init__(self):
        if not 0.0 <= self.particle_density <= 1.0:
            raise ValueError("particle_density outside [0, 1]")
        if not 0.0 <= self.convection_intensity <= 1.0:
            raise ValueError("convection_intensity outside [0, 1]")
        if not self.pin_label:
            raise ValueError("pin_label must be non-empty")

    def to_json_dict(self) -> dict:
        return {
            "city": self.city,
            "metric": self.metric.value,
            "sphere_color": self.sphere_color.to_json_dict(),
            "particle_density": self.particle_density,
            "convection_intensity": self.convection_intensity,
            "pin_label": self.pin_label,
            "timestamp": int(self.timestamp),
        }


def _metric_value(record: WeatherRecord, metric: Metric):
    field = {
        Metric.UV: "uv_index",
        Metric.TEMPERATURE: "temperature_c",
        Metric.PM25: "pm25_aqi",
        Metric.RAINFALL: "rainfall_mm_hr",
    }[metric]
    value = getattr(record, field)
    if value is None:
        raise ValueError(f"record for {record.city} has no {field}")
    return value


def build_scene(record: WeatherRecord, metric: Metric) -> SceneSpec:
    """Assemble the SceneSpec for one record and metric.

    Particle density reflects rainfall only when Rainfall is selected
    (otherwise a fixed baseline); convection reflects temperature only
    when Temperature is selected.
    """
    value = _metric_value(record, metric)
    convection = 0.0
    density = BASELINE_PARTICLE_DENSITY
    if metric is Metric.UV:
        color = uv_to_color(value)
        label = f"{record.city}: {value:.1f} UVI"
    elif metric is Metric.TEMPERATURE:
        color, convection = temp_to_visual(value)
        label = f"{record.city}: {value:.1f} \N{DEGREE SIGN}C"
    elif metric is Metric.PM25:
        color = pm25_to_color(value)
        label = f"{record.city}: {value:d} AQI"
    else:
        color = RAIN_SPHERE_COLOR
        density = rainfall_to_density(value)
        label = f"{record.city}: {value:.1f} mm/hr"
    return SceneSpec(
        city=record.city,
        metric=metric,
        sphere_color=color,
        particle_density=density,
        convection_intensity=convection,
        pin_label=label,
        timestamp=record.timestamp,
    )
