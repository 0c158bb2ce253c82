import type { City, SceneSpec, WeatherRecord } from "./types.js";

/** Non-2xx response. `status` lets callers tell "no data yet" (503) apart. */
export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, message: string) {
    super(message);
    this.status = status;
  }
}

async function getJson<T>(url: string): Promise<T> {
  const response = await fetch(url);
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, detail || `HTTP ${response.status}`);
  }
  return (await response.json()) as T;
}

export function fetchCities(base = ""): Promise<City[]> {
  return getJson<City[]>(`${base}/cities`);
}

export function fetchScene(
  city: string,
  metricRoute: string,
  base = "",
): Promise<SceneSpec> {
  return getJson<SceneSpec>(
    `${base}/scene/${encodeURIComponent(city)}/${metricRoute}`,
  );
}

export function fetchWeather(city: string, base = ""): Promise<WeatherRecord> {
  return getJson<WeatherRecord>(`${base}/weather/${encodeURIComponent(city)}`);
}
