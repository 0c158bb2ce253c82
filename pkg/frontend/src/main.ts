import { ApiError, fetchCities, fetchScene } from "./api.js";
import { MetricButtons } from "./controls.js";
import { MapView } from "./map.js";
import { ScenePoller } from "./poll.js";
import { SphereView } from "./sphere.js";
import { ViewStore } from "./state.js";
import type { City } from "./types.js";

export interface AppOptions {
  fetchCitiesFn?: () => Promise<City[]>;
  fetchSceneFn?: typeof fetchScene;
  pollPeriodMs?: number;
  now?: () => number;
}

export interface AppHandles {
  store: ViewStore;
  poller: ScenePoller;
  sphere: SphereView;
  reloadCities: () => Promise<void>;
}

/**
 * Wires the widgets to the store. The document must contain the ids used
 * below (see index.html); tests build a minimal skeleton and stub fetch.
 */
export async function initApp(
  doc: Document,
  options: AppOptions = {},
): Promise<AppHandles> {
  const fetchCitiesFn = options.fetchCitiesFn ?? (() => fetchCities());
  const fetchSceneFn = options.fetchSceneFn ?? fetchScene;

  const mapRoot = doc.getElementById("map") as HTMLElement;
  const buttonsRoot = doc.getElementById("metric-buttons") as HTMLElement;
  const canvas = doc.getElementById("sphere") as HTMLCanvasElement;
  const labelEl = doc.getElementById("pin-label") as HTMLElement;
  const cityNameEl = doc.getElementById("selected-city") as HTMLElement;
  const staleBadge = doc.getElementById("stale-badge") as HTMLElement;
  const noDataEl = doc.getElementById("no-data") as HTMLElement;
  const errorBanner = doc.getElementById("error-banner") as HTMLElement;
  const errorText = doc.getElementById("error-text") as HTMLElement;
  const retryButton = doc.getElementById("retry-button") as HTMLButtonElement;

  const store = new ViewStore();
  const sphere = new SphereView(canvas, labelEl);
  const poller = new ScenePoller({
    store,
    fetchSceneFn,
    periodMs: options.pollPeriodMs,
    now: options.now,
  });

  const mapView = new MapView(mapRoot, (name) => {
    store.selectCity(name);
    poller.resetStaleness();
    if (store.get().selectedMetric !== null) void poller.refresh();
  });

  const buttons = new MetricButtons(buttonsRoot, (metric) => {
    store.selectMetric(metric);
    poller.resetStaleness();
    void poller.refresh();
  });

  store.subscribe((state) => {
    mapView.setSelected(state.selectedCity);
    buttons.setEnabled(state.selectedCity !== null);
    buttons.setActive(state.selectedMetric);
    cityNameEl.textContent = state.selectedCity ?? "";
    if (state.scene) {
      sphere.show(state.scene);
    } else {
      sphere.clear();
    }
    noDataEl.hidden = !state.noDataYet;
    staleBadge.hidden = state.stalenessS <= poller.staleThresholdS;
    errorBanner.hidden = state.error === null;
    errorText.textContent = state.error ?? "";
  });

  const reloadCities = async () => {
    try {
      const cities = await fetchCitiesFn();
      mapView.render(cities);
      store.clearError();
    } catch (error) {
      mapView.render([]);
      const message =
        error instanceof ApiError
          ? `Could not load cities: ${error.message}`
          : `Could not load cities: ${String(error)}`;
      store.fetchFailed(message);
    }
  };

  retryButton.addEventListener("click", () => {
    void reloadCities();
  });

  await reloadCities();
  poller.start();
  return { store, poller, sphere, reloadCities };
}

declare const process: unknown;

// Browser bootstrap; tests import initApp directly instead.
if (typeof process === "undefined" && typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", () => {
    void initApp(document);
  });
}
