import type { MetricName, SceneSpec } from "./types.js";

/**
 * Single source of truth for the view. Invariant: `scene` is non-null only
 * while both selections are set and the matching fetch succeeded; any
 * selection change clears it until the next response lands.
 */
export interface ViewState {
  selectedCity: string | null;
  selectedMetric: MetricName | null;
  scene: SceneSpec | null;
  /** Seconds since the served record's timestamp last advanced. */
  stalenessS: number;
  /** Human-readable banner text; null when healthy. */
  error: string | null;
  /** True after a 503 — the service is up but has no observations yet. */
  noDataYet: boolean;
}

export type Listener = (state: ViewState) => void;

export class ViewStore {
  private state: ViewState = {
    selectedCity: null,
    selectedMetric: null,
    scene: null,
    stalenessS: 0,
    error: null,
    noDataYet: false,
  };

  private listeners: Listener[] = [];

  get(): ViewState {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private commit(patch: Partial<ViewState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.state);
  }

  selectCity(name: string): void {
    if (name === this.state.selectedCity) return;
    this.commit({ selectedCity: name, scene: null, noDataYet: false });
  }

  /** Ignored unless a city is already selected (pin first, then metric). */
  selectMetric(metric: MetricName): void {
    if (this.state.selectedCity === null) return;
    this.commit({ selectedMetric: metric, scene: null, noDataYet: false });
  }

  /** Accepts a scene only if it matches the current selection. */
  sceneLoaded(scene: SceneSpec): void {
    if (
      scene.city !== this.state.selectedCity ||
      scene.metric !== this.state.selectedMetric
    ) {
      return; // stale response from a superseded selection
    }
    this.commit({ scene, error: null, noDataYet: false });
  }

  fetchFailed(message: string, status?: number): void {
    if (status === 503) {
      this.commit({ scene: null, noDataYet: true, error: null });
    } else {
      this.commit({ error: message });
    }
  }

  clearError(): void {
    this.commit({ error: null });
  }

  setStaleness(seconds: number): void {
    if (seconds === this.state.stalenessS) return;
    this.commit({ stalenessS: seconds });
  }
}
