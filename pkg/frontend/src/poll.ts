import { ApiError } from "./api.js";
import type { SceneSpec } from "./types.js";
import { METRICS } from "./types.js";
import type { ViewStore } from "./state.js";

export interface PollerOptions {
  store: ViewStore;
  fetchSceneFn: (city: string, metricRoute: string) => Promise<SceneSpec>;
  /** Refresh period. Default 5 s. */
  periodMs?: number;
  /** Badge shows after this many periods without a timestamp advance. */
  staleAfterPeriods?: number;
  now?: () => number;
}

/**
 * Re-fetches the currently selected scene on a timer. At most one fetch is
 * live at a time in the sense that only the newest one may commit
 * (latest-wins: an older in-flight response is dropped on arrival).
 * Staleness is measured from the served record timestamps, not from fetch
 * success — a server that answers with the same observation forever goes
 * stale just like a dead one.
 */
export class ScenePoller {
  private readonly store: ViewStore;
  private readonly fetchSceneFn: PollerOptions["fetchSceneFn"];
  readonly periodMs: number;
  readonly staleThresholdS: number;
  private readonly now: () => number;

  private seq = 0;
  private timer: ReturnType<typeof setInterval> | null = null;
  private lastTimestamp: number | null = null;
  private lastAdvanceMs: number | null = null;

  constructor(options: PollerOptions) {
    this.store = options.store;
    this.fetchSceneFn = options.fetchSceneFn;
    this.periodMs = options.periodMs ?? 5000;
    this.staleThresholdS =
      ((options.staleAfterPeriods ?? 3) * this.periodMs) / 1000;
    this.now = options.now ?? Date.now;
  }

  start(): void {
    if (this.timer !== null) return;
    this.timer = setInterval(() => {
      void this.refresh();
    }, this.periodMs);
  }

  stop(): void {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
  }

  /** Forget the timestamp history (call when the selection changes). */
  resetStaleness(): void {
    this.lastTimestamp = null;
    this.lastAdvanceMs = null;
    this.store.setStaleness(0);
  }

  isStale(): boolean {
    return this.store.get().stalenessS > this.staleThresholdS;
  }

  /** Fetch the scene for the current selection, if complete. */
  async refresh(): Promise<void> {
    const { selectedCity, selectedMetric } = this.store.get();
    if (selectedCity === null || selectedMetric === null) return;
    const metric = METRICS.find((m) => m.name === selectedMetric);
    if (!metric) return;

    this.seq += 1;
    const mySeq = this.seq;
    try {
      const scene = await this.fetchSceneFn(selectedCity, metric.route);
      if (mySeq !== this.seq) return; // superseded while in flight
      this.store.sceneLoaded(scene);
      if (scene.timestamp !== this.lastTimestamp) {
        this.lastTimestamp = scene.timestamp;
        this.lastAdvanceMs = this.now();
      }
    } catch (error) {
      if (mySeq !== this.seq) return;
      if (error instanceof ApiError) {
        this.store.fetchFailed(error.message, error.status);
      } else {
        this.store.fetchFailed(String(error));
      }
    }
    this.updateStaleness();
  }

  private updateStaleness(): void {
    if (this.lastAdvanceMs === null) return;
    this.store.setStaleness((this.now() - this.lastAdvanceMs) / 1000);
  }
}
