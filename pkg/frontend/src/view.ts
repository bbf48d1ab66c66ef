/** Pure HTML fragments for the browser shell. Kept DOM-free so rendering is
 * deterministic and unit-testable as strings. */

import { fmt } from "./ladder.js";
import type { InstanceRow } from "./types.js";

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function cell(v: number | null): string {
  return v === null ? "<td class=\"num missing\">&#8212;</td>" : `<td class="num">${fmt(v)}</td>`;
}

export function instanceTableHtml(rows: InstanceRow[], selectedId: number | null = null): string {
  if (!rows.length) {
    return `<p class="empty">no instances match the current filter</p>`;
  }
  const body = rows
    .map((r) => {
      const cls = r.id === selectedId ? ` class="selected"` : "";
      return (
        `<tr data-id="${r.id}"${cls}><td>${r.id}</td>` +
        cell(r.response) +
        cell(r.prediction) +
        `</tr>`
      );
    })
    .join("");
  return (
    `<table class="instances"><thead><tr>` +
    `<th>id</th><th>response</th><th>prediction</th>` +
    `</tr></thead><tbody>${body}</tbody></table>`
  );
}

export function serviceErrorHtml(message: string): string {
  return (
    `<div class="service-error"><p>service unreachable: ${esc(message)}</p>` +
    `<button type="button" data-action="retry">retry</button></div>`
  );
}

export function emptyPlanHtml(): string {
  return `<p class="empty">select an instance and press Plan</p>`;
}
