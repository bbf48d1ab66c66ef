/** Step-ladder view: which variable moves at each step, in payload order,
 * with the prediction trace and the score readout. Pure string rendering so
 * identical payloads give identical markup.
 */

import type { PlanResult } from "./types.js";

export interface LadderRow {
  step: number;
  feature: string | null;
  move: number;
  prediction: number;
  logDensity: number;
}

export function ladderRows(p: PlanResult): LadderRow[] {
  return p.steps.map((s, i) => ({
    step: i,
    feature: s.feature,
    move: s.move,
    prediction: s.prediction,
    logDensity: s.log_density,
  }));
}

export interface ScoreReadout {
  score: number;
  optimal: number;
  baselineMean: number;
  baselineCount: number;
}

export function scoreReadout(p: PlanResult): ScoreReadout {
  const bs = p.baseline_log_actionabilities;
  const mean = bs.length ? bs.reduce((a, b) => a + b, 0) / bs.length : 0;
  return {
    score: p.score,
    optimal: p.log_actionability,
    baselineMean: mean,
    baselineCount: bs.length,
  };
}

export function fmt(v: number): string {
  const out = v.toFixed(3);
  return out === "-0.000" ? "0.000" : out;
}

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function arrowFor(move: number): string {
  if (move > 0) return "&#8593;";
  if (move < 0) return "&#8595;";
  return "&#8226;";
}

/** Inline SVG polyline of the prediction at each step. */
export function predictionTraceSvg(p: PlanResult, width = 260, height = 60): string {
  const preds = p.steps.map((s) => s.prediction);
  const lo = Math.min(...preds);
  const hi = Math.max(...preds);
  const span = hi - lo || 1;
  const dx = preds.length > 1 ? width / (preds.length - 1) : 0;
  const pts = preds
    .map((v, i) => `${fmt(i * dx)},${fmt(height - ((v - lo) / span) * height)}`)
    .join(" ");
  return (
    `<svg class="trace" viewBox="0 0 ${width} ${height}" preserveAspectRatio="none">` +
    `<polyline points="${pts}" fill="none" stroke="currentColor" stroke-width="1.5"/>` +
    `</svg>`
  );
}

export function ladderHtml(p: PlanResult): string {
  const rows = ladderRows(p)
    .map((r) => {
      const name = r.feature === null ? "origin" : esc(r.feature);
      return (
        `<tr><td>${r.step}</td><td>${name}</td>` +
        `<td class="move">${arrowFor(r.move)}</td>` +
        `<td class="num">${fmt(r.prediction)}</td>` +
        `<td class="num">${fmt(r.logDensity)}</td></tr>`
      );
    })
    .join("");
  const s = scoreReadout(p);
  return (
    `<table class="ladder"><thead><tr>` +
    `<th>step</th><th>variable</th><th>move</th><th>prediction</th><th>log density</th>` +
    `</tr></thead><tbody>${rows}</tbody></table>` +
    predictionTraceSvg(p) +
    `<p class="score">score <b>${fmt(s.score)}</b> ` +
    `(path ${fmt(s.optimal)} vs mean of ${s.baselineCount} baselines ${fmt(s.baselineMean)})</p>`
  );
}
