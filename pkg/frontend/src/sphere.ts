import type { Rgb, SceneSpec } from "./types.js";

/**
 * Maps a served SceneSpec to concrete draw parameters and animates the
 * particle layer. Every visual number here is a direct rescaling of a
 * SceneSpec field — no metric knowledge, no color math of our own.
 */

export const MAX_PARTICLES = 400;
/** Particle drift in canvas-heights per second at convection 0 / 1. */
export const BASE_DRIFT = 0.05;
export const CONVECTION_DRIFT = 0.45;

export interface RenderPlan {
  fillStyle: string;
  particleCount: number;
  /** Upward drift speed, canvas-heights per second. */
  particleSpeed: number;
  label: string;
}

export function cssColor(color: Rgb): string {
  const channel = (x: number) => Math.round(Math.min(1, Math.max(0, x)) * 255);
  return `rgb(${channel(color.r)}, ${channel(color.g)}, ${channel(color.b)})`;
}

export function planScene(scene: SceneSpec): RenderPlan {
  return {
    fillStyle: cssColor(scene.sphere_color),
    particleCount: Math.round(scene.particle_density * MAX_PARTICLES),
    particleSpeed: BASE_DRIFT + scene.convection_intensity * CONVECTION_DRIFT,
    label: scene.pin_label,
  };
}

interface Particle {
  x: number; // 0..1 relative to canvas width
  y: number;
  size: number;
  phase: number; // horizontal sway offset
}

export class SphereView {
  private readonly canvas: HTMLCanvasElement;
  private readonly labelEl: HTMLElement;
  private readonly ctx: CanvasRenderingContext2D | null;
  private plan: RenderPlan | null = null;
  private lastSceneKey: string | null = null;
  private particles: Particle[] = [];
  private rafHandle: number | null = null;
  private lastTickMs: number | null = null;
  /** Increments only when a genuinely different scene is shown (test hook). */
  generation = 0;

  constructor(canvas: HTMLCanvasElement, labelEl: HTMLElement) {
    this.canvas = canvas;
    this.labelEl = labelEl;
    this.ctx = canvas.getContext ? canvas.getContext("2d") : null;
  }

  show(scene: SceneSpec): void {
    const key = JSON.stringify(scene);
    if (key === this.lastSceneKey) return; // unchanged scene: no visual change
    this.lastSceneKey = key;
    this.plan = planScene(scene);
    this.generation += 1;
    this.labelEl.textContent = this.plan.label;
    this.seedParticles(this.plan.particleCount);
    this.draw();
    this.ensureLoop();
  }

  clear(): void {
    this.plan = null;
    this.lastSceneKey = null;
    this.particles = [];
    this.labelEl.textContent = "";
    this.stopLoop();
    if (this.ctx) {
      this.ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    }
  }

  currentPlan(): RenderPlan | null {
    return this.plan;
  }

  particleCount(): number {
    return this.particles.length;
  }

  private seedParticles(count: number): void {
    // Deterministic layout: particles on a phyllotaxis-like spiral so the
    // field looks uniform at any density without a RNG dependency.
    this.particles = [];
    for (let i = 0; i < count; i++) {
      const golden = i * 0.61803398875;
      this.particles.push({
        x: golden - Math.floor(golden),
        y: (i + 0.5) / Math.max(count, 1),
        size: 1.5 + (i % 3),
        phase: (i * 2 * Math.PI) / Math.max(count, 1),
      });
    }
  }

  /** Advance the animation by `dtMs`. Public so tests can step it. */
  tick(dtMs: number): void {
    if (!this.plan) return;
    const dy = this.plan.particleSpeed * (dtMs / 1000);
    for (const p of this.particles) {
      p.y -= dy;
      if (p.y < 0) p.y += 1;
      p.x += Math.sin(p.phase + p.y * 2 * Math.PI) * 0.0004 * dtMs;
      if (p.x < 0) p.x += 1;
      if (p.x > 1) p.x -= 1;
    }
    this.draw();
  }

  private ensureLoop(): void {
    if (this.rafHandle !== null || typeof requestAnimationFrame !== "function") {
      return;
    }
    const step = (nowMs: number) => {
      if (this.lastTickMs !== null) this.tick(nowMs - this.lastTickMs);
      this.lastTickMs = nowMs;
      this.rafHandle = requestAnimationFrame(step);
    };
    this.rafHandle = requestAnimationFrame(step);
  }

  private stopLoop(): void {
    if (this.rafHandle !== null && typeof cancelAnimationFrame === "function") {
      cancelAnimationFrame(this.rafHandle);
    }
    this.rafHandle = null;
    this.lastTickMs = null;
  }

  private draw(): void {
    if (!this.ctx || !this.plan) return;
    const { width, height } = this.canvas;
    const ctx = this.ctx;
    ctx.clearRect(0, 0, width, height);

    const cx = width / 2;
    const cy = height / 2;
    const radius = Math.min(width, height) * 0.32;

    // Shaded circle: the served color, lit from the upper left.
    const gradient = ctx.createRadialGradient(
      cx - radius * 0.35, cy - radius * 0.35, radius * 0.1,
      cx, cy, radius,
    );
    gradient.addColorStop(0, "rgba(255, 255, 255, 0.55)");
    gradient.addColorStop(0.25, this.plan.fillStyle);
    gradient.addColorStop(1, this.plan.fillStyle);
    ctx.fillStyle = this.plan.fillStyle;
    ctx.beginPath();
    ctx.arc(cx, cy, radius, 0, 2 * Math.PI);
    ctx.fill();
    ctx.fillStyle = gradient;
    ctx.beginPath();
    ctx.arc(cx, cy, radius, 0, 2 * Math.PI);
    ctx.fill();

    ctx.fillStyle = "rgba(255, 255, 255, 0.85)";
    for (const p of this.particles) {
      ctx.beginPath();
      ctx.arc(p.x * width, p.y * height, p.size, 0, 2 * Math.PI);
      ctx.fill();
    }
  }
}
