/** Wire types mirrored from the HTTP API. Field names match the JSON exactly. */

export interface City {
  name: string;
  /** Normalized map position, 0..1, origin top-left. */
  map_x: number;
  map_y: number;
}

export interface Rgb {
  r: number;
  g: number;
  b: number;
}

export type MetricName = "UV" | "Temperature" | "PM25" | "Rainfall";

export interface SceneSpec {
  city: string;
  metric: MetricName;
  sphere_color: Rgb;
  particle_density: number;
  convection_intensity: number;
  pin_label: string;
  timestamp: number;
}

export interface WeatherRecord {
  city: string;
  timestamp: number;
  uv_index: number | null;
  temperature_c: number | null;
  pm25_aqi: number | null;
  rainfall_mm_hr: number | null;
}

/** Route segment for each metric button, in display order. */
export const METRICS: { name: MetricName; route: string; label: string }[] = [
  { name: "UV", route: "uv", label: "UV" },
  { name: "Temperature", route: "temperature", label: "Temperature" },
  { name: "PM25", route: "pm25", label: "PM2.5" },
  { name: "Rainfall", route: "rainfall", label: "Rainfall" },
];
