import type { City, SceneSpec } from "../src/types";

/** Minimal DOM shell with the ids initApp expects. */
export function mountSkeleton(): void {
  document.body.innerHTML = `
    <span id="stale-badge" hidden></span>
    <div id="error-banner" hidden>
      <span id="error-text"></span>
      <button id="retry-button" type="button">Retry</button>
    </div>
    <div id="map"></div>
    <h2 id="selected-city"></h2>
    <div id="metric-buttons"></div>
    <p id="no-data" hidden></p>
    <canvas id="sphere" width="120" height="120"></canvas>
    <p id="pin-label"></p>
  `;
}

export function sampleCities(count = 3): City[] {
  const names = [
    "Taipei", "Kaohsiung", "Taichung", "Tainan", "Keelung", "Hsinchu",
    "Chiayi", "Yilan", "Hualien", "Taitung", "Penghu", "Kinmen",
  ];
  return Array.from({ length: count }, (_, i) => ({
    name: names[i % names.length] + (i >= names.length ? `-${i}` : ""),
    map_x: (i + 1) / (count + 1),
    map_y: 0.1 + (0.8 * i) / Math.max(count - 1, 1),
  }));
}

export function sampleScene(overrides: Partial<SceneSpec> = {}): SceneSpec {
  return {
    city: "Taipei",
    metric: "UV",
    sphere_color: { r: 0.0, g: 0.8, b: 0.0 },
    particle_density: 0.3,
    convection_intensity: 0.0,
    pin_label: "Taipei: 5.5 UVI",
    timestamp: 1718000000,
    ...overrides,
  };
}

/** Installs a scripted global fetch; returns the call log. */
export function stubFetch(
  handler: (url: string) => { status: number; body: unknown } | undefined,
): string[] {
  const calls: string[] = [];
  globalThis.fetch = (async (input: RequestInfo | URL) => {
    const url = String(input);
    calls.push(url);
    const scripted = handler(url);
    if (scripted === undefined) {
      throw new TypeError("fetch failed (stub: connection refused)");
    }
    return new Response(JSON.stringify(scripted.body), {
      status: scripted.status,
      headers: { "Content-Type": "application/json" },
    });
  }) as typeof fetch;
  return calls;
}
