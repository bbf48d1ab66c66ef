/** Browser entry point: wires the exploration state to the DOM.
 *
 * Everything numeric on screen comes from service responses; this file only
 * routes events, issues requests, and re-renders.
 */

import { ApiClient } from "./api.js";
import { heatBase, heatGrid, sampleHeat, HeatResult } from "./heat.js";
import { ladderHtml } from "./ladder.js";
import { projectionModel, projectionSvg } from "./projection.js";
import {
  applyEdit,
  buildPlanRequest,
  completePlan,
  Edit,
  ExplorationState,
  failPlan,
  initialState,
  PlanRunner,
  selectInstance,
} from "./state.js";
import type { InstanceRow } from "./types.js";
import { emptyPlanHtml, instanceTableHtml, serviceErrorHtml } from "./view.js";

declare global {
  interface Window {
    API_BASE?: string;
  }
}

function apiBase(): string {
  const injected = window.API_BASE;
  if (injected && !injected.startsWith("__")) return injected;
  return window.location.origin;
}

const client = new ApiClient(apiBase());
const runner = new PlanRunner();

let state: ExplorationState = initialState();
let listing: InstanceRow[] = [];
let pair: [string, string] | null = null;
let heat: HeatResult | null = null;
let heatController: AbortController | null = null;
let heatEnabled = false;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function renderBrowser(): void {
  el("instances").innerHTML = instanceTableHtml(listing, state.instance?.id ?? null);
  for (const row of el("instances").querySelectorAll("tr[data-id]")) {
    row.addEventListener("click", () => {
      const id = Number((row as HTMLElement).dataset.id);
      const found = listing.find((r) => r.id === id);
      if (found) {
        state = selectInstance(state, found);
        renderControls();
        renderPlan();
      }
    });
  }
}

function featureNames(): string[] {
  return state.instance ? Object.keys(state.instance.features) : [];
}

function interventionSet(): string[] {
  if (state.togglesTouched) return Object.keys(state.toggles).filter((f) => state.toggles[f]);
  return state.lastPlan?.payload.config.intervention ?? [];
}

function renderControls(): void {
  const names = featureNames();
  const active = new Set(interventionSet());
  el("toggles").innerHTML = names
    .map((n) => {
      const on = state.togglesTouched ? Boolean(state.toggles[n]) : active.has(n);
      return (
        `<label class="toggle"><input type="checkbox" data-feature="${n}"` +
        `${on ? " checked" : ""}/> ${n}</label>`
      );
    })
    .join("");
  for (const box of el("toggles").querySelectorAll("input[data-feature]")) {
    box.addEventListener("change", () => {
      const input = box as HTMLInputElement;
      edit({ kind: "toggle", feature: input.dataset.feature as string, enabled: input.checked });
    });
  }
  el("selected").textContent = state.instance
    ? `instance ${state.instance.id}`
    : "no instance selected";
  renderErrors();
}

function renderErrors(): void {
  const entries = Object.entries(state.errors);
  el("errors").innerHTML = entries
    .map(([control, message]) => `<p class="error">[${control}] ${message}</p>`)
    .join("");
}

function defaultPair(): [string, string] | null {
  const iv = state.lastPlan?.payload.config.intervention ?? [];
  if (iv.length >= 2) return [iv[0], iv[1]];
  const names = state.lastPlan?.payload.feature_names ?? [];
  if (names.length >= 2) return [names[0], names[1]];
  return null;
}

function renderPlan(): void {
  const panel = el("plan");
  if (!state.lastPlan) {
    panel.innerHTML = emptyPlanHtml();
    el("projection").innerHTML = "";
    return;
  }
  panel.innerHTML = ladderHtml(state.lastPlan.payload);
  panel.classList.toggle("stale", state.stale);
  el("stale-note").textContent = state.stale
    ? "parameters changed - plan again to refresh"
    : "";
  renderProjection();
}

function renderProjection(): void {
  const target = el("projection");
  if (!state.lastPlan) {
    target.innerHTML = "";
    return;
  }
  const p = pair ?? defaultPair();
  if (!p) {
    target.innerHTML = "";
    return;
  }
  const names = state.lastPlan.payload.feature_names;
  el("pair-x").innerHTML = names
    .map((n) => `<option${n === p[0] ? " selected" : ""}>${n}</option>`)
    .join("");
  el("pair-y").innerHTML = names
    .map((n) => `<option${n === p[1] ? " selected" : ""}>${n}</option>`)
    .join("");
  try {
    const model = projectionModel(state.lastPlan.payload, p, listing);
    target.innerHTML = projectionSvg(model, heat);
    target.classList.toggle("stale", state.stale);
  } catch (err) {
    target.innerHTML = `<p class="error">${err instanceof Error ? err.message : String(err)}</p>`;
  }
}

function restartHeat(): void {
  heatController?.abort();
  heat = null;
  if (!heatEnabled || !state.lastPlan || !state.instance) {
    renderProjection();
    return;
  }
  const p = pair ?? defaultPair();
  if (!p) return;
  const model = projectionModel(state.lastPlan.payload, p, listing);
  const controller = new AbortController();
  heatController = controller;
  const grid = heatGrid(model.extent, 25);
  sampleHeat(client, heatBase(state.instance.features, p), p, grid, controller.signal)
    .then((result) => {
      if (heatController === controller) {
        heat = result;
        renderProjection();
      }
    })
    .catch((err) => {
      if ((err as Error).name !== "AbortError") {
        state = failPlan(state, err);
        renderErrors();
      }
    });
  renderProjection();
}

function edit(e: Edit): void {
  state = applyEdit(state, e);
  renderControls();
  renderPlan();
}

async function plan(): Promise<void> {
  if (!state.instance) {
    state = { ...state, errors: { instance: "select an instance first" } };
    renderErrors();
    return;
  }
  el("plan-btn").setAttribute("disabled", "");
  try {
    const outcome = await runner.run(client, buildPlanRequest(state));
    if (outcome) {
      state = completePlan(state, outcome);
      pair = pair ?? defaultPair();
      renderControls();
      renderPlan();
      restartHeat();
    }
  } catch (err) {
    state = failPlan(state, err);
    renderErrors();
  } finally {
    el("plan-btn").removeAttribute("disabled");
  }
}

async function loadInstances(): Promise<void> {
  const status = el("browser-status");
  status.innerHTML = "loading&#8230;";
  try {
    const raw = (el<HTMLInputElement>("filter").value || "").trim();
    const filter = raw ? { op: ">=" as const, value: Number(raw) } : null;
    if (raw && Number.isNaN(Number(raw))) throw new Error("filter must be a number");
    const result = await client.instances(filter);
    listing = result.instances;
    status.textContent = `${result.count} instances`;
    renderBrowser();
  } catch (err) {
    status.innerHTML = serviceErrorHtml(err instanceof Error ? err.message : String(err));
    const retry = status.querySelector("button[data-action=retry]");
    retry?.addEventListener("click", () => void loadInstances());
  }
}

async function checkHealth(): Promise<void> {
  try {
    const h = await client.health();
    el("health").textContent = `service ok (build ${h.build}, bundle ${h.bundle})`;
  } catch {
    el("health").textContent = "service unreachable";
  }
}

function numberOrNull(value: string): number | null {
  const v = value.trim();
  if (!v) return null;
  const parsed = Number(v);
  return Number.isNaN(parsed) ? null : parsed;
}

function wire(): void {
  el("plan-btn").addEventListener("click", () => void plan());
  el("reload").addEventListener("click", () => void loadInstances());
  el<HTMLInputElement>("filter").addEventListener("change", () => void loadInstances());
  el<HTMLInputElement>("ctl-L").addEventListener("change", (ev) =>
    edit({ kind: "L", value: numberOrNull((ev.target as HTMLInputElement).value) }),
  );
  el<HTMLInputElement>("ctl-cell").addEventListener("change", (ev) =>
    edit({ kind: "cellSigma", value: numberOrNull((ev.target as HTMLInputElement).value) }),
  );
  el<HTMLInputElement>("ctl-seed").addEventListener("change", (ev) =>
    edit({ kind: "seed", value: numberOrNull((ev.target as HTMLInputElement).value) }),
  );
  el<HTMLInputElement>("ctl-target").addEventListener("change", (ev) =>
    edit({ kind: "target", value: numberOrNull((ev.target as HTMLInputElement).value) }),
  );
  el<HTMLInputElement>("ctl-ceiling").addEventListener("change", (ev) =>
    edit({ kind: "ceiling", value: numberOrNull((ev.target as HTMLInputElement).value) }),
  );
  el<HTMLSelectElement>("ctl-direction").addEventListener("change", (ev) => {
    const v = (ev.target as HTMLSelectElement).value;
    edit({ kind: "direction", value: v === "default" ? null : (v as "minimize" | "maximize") });
  });
  el<HTMLSelectElement>("pair-x").addEventListener("change", () => {
    const x = el<HTMLSelectElement>("pair-x").value;
    const y = el<HTMLSelectElement>("pair-y").value;
    pair = [x, y];
    restartHeat();
  });
  el<HTMLSelectElement>("pair-y").addEventListener("change", () => {
    const x = el<HTMLSelectElement>("pair-x").value;
    const y = el<HTMLSelectElement>("pair-y").value;
    pair = [x, y];
    restartHeat();
  });
  el<HTMLInputElement>("ctl-heat").addEventListener("change", (ev) => {
    heatEnabled = (ev.target as HTMLInputElement).checked;
    restartHeat();
  });
}

wire();
void checkHealth();
void loadInstances();
renderPlan();
