import { beforeEach, describe, expect, it } from "vitest";

import {
  BASE_DRIFT,
  CONVECTION_DRIFT,
  MAX_PARTICLES,
  SphereView,
  cssColor,
  planScene,
} from "../src/sphere";
import { sampleScene } from "./helpers";

describe("planScene", () => {
  it("uses the served color verbatim, not a recomputed one", () => {
    // Deliberately "wrong-looking" values a client-side mapper would never
    // produce for UV; they must come through untouched.
    const plan = planScene(
      sampleScene({ sphere_color: { r: 0.123, g: 0.456, b: 0.789 } }),
    );
    expect(plan.fillStyle).toBe(cssColor({ r: 0.123, g: 0.456, b: 0.789 }));
    expect(plan.fillStyle).toBe("rgb(31, 116, 201)");
  });

  it("maps the uv-0 fixture to a green sphere", () => {
    const plan = planScene(sampleScene());
    expect(plan.fillStyle).toBe("rgb(0, 204, 0)");
  });

  it("binds particle count linearly to the served density", () => {
    expect(planScene(sampleScene({ particle_density: 0 })).particleCount).toBe(0);
    expect(planScene(sampleScene({ particle_density: 1 })).particleCount).toBe(
      MAX_PARTICLES,
    );
    expect(
      planScene(sampleScene({ particle_density: 0.5 })).particleCount,
    ).toBe(Math.round(0.5 * MAX_PARTICLES));
  });

  it("binds drift speed linearly to convection intensity", () => {
    const calm = planScene(sampleScene({ convection_intensity: 0 }));
    const roiling = planScene(sampleScene({ convection_intensity: 1 }));
    expect(calm.particleSpeed).toBeCloseTo(BASE_DRIFT, 12);
    expect(roiling.particleSpeed).toBeCloseTo(BASE_DRIFT + CONVECTION_DRIFT, 12);
  });

  it("passes the pin label through verbatim", () => {
    const plan = planScene(sampleScene({ pin_label: "Yilan: 12.0 mm/hr" }));
    expect(plan.label).toBe("Yilan: 12.0 mm/hr");
  });
});

describe("SphereView", () => {
  let canvas: HTMLCanvasElement;
  let label: HTMLElement;

  beforeEach(() => {
    document.body.innerHTML =
      `<canvas id="sphere" width="100" height="100"></canvas><p id="pin-label"></p>`;
    canvas = document.getElementById("sphere") as HTMLCanvasElement;
    label = document.getElementById("pin-label") as HTMLElement;
  });

  it("shows the label and seeds particles from the plan", () => {
    const view = new SphereView(canvas, label);
    view.show(sampleScene({ particle_density: 1, pin_label: "Taipei: 80.0 mm/hr" }));
    expect(label.textContent).toBe("Taipei: 80.0 mm/hr");
    expect(view.particleCount()).toBe(MAX_PARTICLES);
  });

  it("re-showing an identical scene changes nothing", () => {
    const view = new SphereView(canvas, label);
    const scene = sampleScene();
    view.show(scene);
    const generation = view.generation;
    view.show({ ...scene });
    expect(view.generation).toBe(generation);
  });

  it("a changed timestamp counts as a new scene", () => {
    const view = new SphereView(canvas, label);
    view.show(sampleScene());
    const generation = view.generation;
    view.show(sampleScene({ timestamp: 1718000060 }));
    expect(view.generation).toBe(generation + 1);
  });

  it("clear() wipes the label and the particle field", () => {
    const view = new SphereView(canvas, label);
    view.show(sampleScene());
    view.clear();
    expect(label.textContent).toBe("");
    expect(view.particleCount()).toBe(0);
    expect(view.currentPlan()).toBeNull();
  });

  it("tick() drifts particles upward and wraps them", () => {
    const view = new SphereView(canvas, label);
    view.show(sampleScene({ particle_density: 0.1, convection_intensity: 1 }));
    const before = (view as unknown as { particles: { y: number }[] }).particles
      .map((p) => p.y);
    view.tick(500);
    const after = (view as unknown as { particles: { y: number }[] }).particles
      .map((p) => p.y);
    expect(after).not.toEqual(before);
    for (const y of after) {
      expect(y).toBeGreaterThanOrEqual(0);
      expect(y).toBeLessThanOrEqual(1);
    }
  });
});
