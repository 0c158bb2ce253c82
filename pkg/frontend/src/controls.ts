import { METRICS, type MetricName } from "./types.js";

/**
 * The four metric buttons. All start disabled; they only become clickable
 * once a pin has been selected, so the server never sees a metric request
 * without a city.
 */
export class MetricButtons {
  private readonly buttons = new Map<MetricName, HTMLButtonElement>();

  constructor(root: HTMLElement, onSelect: (metric: MetricName) => void) {
    for (const metric of METRICS) {
      const button = document.createElement("button");
      button.type = "button";
      button.className = "metric-button";
      button.dataset.metric = metric.name;
      button.textContent = metric.label;
      button.disabled = true;
      button.addEventListener("click", () => onSelect(metric.name));
      root.appendChild(button);
      this.buttons.set(metric.name, button);
    }
  }

  setEnabled(enabled: boolean): void {
    for (const button of this.buttons.values()) button.disabled = !enabled;
  }

  setActive(metric: MetricName | null): void {
    for (const [name, button] of this.buttons) {
      button.classList.toggle("metric-button--active", name === metric);
    }
  }
}
