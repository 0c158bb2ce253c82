import type { City } from "./types.js";

/**
 * Pin layer over the island outline. One button per city, positioned by the
 * server-supplied normalized coordinates; clicking raises `onSelect` and the
 * selected pin gets the `pin--selected` class.
 */
export class MapView {
  private readonly root: HTMLElement;
  private readonly onSelect: (name: string) => void;
  private pins = new Map<string, HTMLButtonElement>();

  constructor(root: HTMLElement, onSelect: (name: string) => void) {
    this.root = root;
    this.onSelect = onSelect;
  }

  render(cities: City[]): void {
    this.root.textContent = "";
    this.pins.clear();
    if (cities.length === 0) {
      const notice = document.createElement("p");
      notice.className = "map-empty-notice";
      notice.textContent = "No cities configured.";
      this.root.appendChild(notice);
      return;
    }
    for (const city of cities) {
      const pin = document.createElement("button");
      pin.type = "button";
      pin.className = "pin";
      pin.dataset.city = city.name;
      pin.title = city.name;
      pin.style.left = `${(city.map_x * 100).toFixed(2)}%`;
      pin.style.top = `${(city.map_y * 100).toFixed(2)}%`;
      pin.addEventListener("click", () => this.onSelect(city.name));
      this.root.appendChild(pin);
      this.pins.set(city.name, pin);
    }
  }

  setSelected(name: string | null): void {
    for (const [city, pin] of this.pins) {
      pin.classList.toggle("pin--selected", city === name);
    }
  }
}
