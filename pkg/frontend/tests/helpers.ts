/** Shared test plumbing: fixture loading and a recording fetch stub.
 * Fixtures are byte-for-byte captures of real service responses; tests
 * replay them so no expected number is computed in the UI code under test.
 */

import { readFileSync } from "node:fs";
import type { FetchLike } from "../src/api.js";

export function fixtureText(name: string): string {
  return readFileSync(new URL(`./fixtures/${name}.json`, import.meta.url), "utf-8");
}

export function fixture<T>(name: string): T {
  return JSON.parse(fixtureText(name)) as T;
}

export function okJson(raw: string): Response {
  return new Response(raw, {
    status: 200,
    headers: { "content-type": "application/json" },
  });
}

export function errorJson(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

export interface RecordedCall {
  url: string;
  init?: RequestInit;
}

/** Fetch stub that records every call and delegates to a handler. */
export function recordingFetch(
  handler: (url: string, init: RequestInit | undefined, n: number) => Response | Promise<Response>,
): { impl: FetchLike; calls: RecordedCall[] } {
  const calls: RecordedCall[] = [];
  const impl: FetchLike = (url, init) => {
    calls.push({ url, init });
    return Promise.resolve(handler(url, init, calls.length - 1));
  };
  return { impl, calls };
}

/** A fetch whose response is gated until release() and which honours the
 * request's AbortSignal, like a real in-flight HTTP request. */
export function gatedFetch(raw: string): { impl: FetchLike; release: () => void } {
  let open: () => void = () => undefined;
  const gate = new Promise<void>((resolve) => {
    open = resolve;
  });
  const impl: FetchLike = (_url, init) =>
    new Promise<Response>((resolve, reject) => {
      const signal = init?.signal;
      if (signal?.aborted) {
        reject(new DOMException("aborted", "AbortError"));
        return;
      }
      signal?.addEventListener("abort", () =>
        reject(new DOMException("aborted", "AbortError")),
      );
      void gate.then(() => resolve(okJson(raw)));
    });
  return { impl, release: () => open() };
}
