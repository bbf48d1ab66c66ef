/** Thin typed client over fetch. The plan call keeps the raw response text
 * so callers can prove the rendered result is exactly what the service sent.
 */

import type {
  ApiErrorBody,
  DensityResponse,
  HealthResponse,
  InstanceListing,
  PlanResult,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly body: ApiErrorBody,
  ) {
    super(body.message);
    this.name = "ApiError";
  }
}

export interface PlanRequestBody {
  instance_id?: number;
  features?: Record<string, number>;
  intervention?: string[];
  cell_sigma?: number;
  L?: number;
  direction?: string;
  constraints?: {
    feature_bounds?: Record<string, [number, number]>;
    prediction_floor?: number | null;
    prediction_ceiling?: number | null;
    target_value?: number | null;
  };
  seed?: number;
}

export interface ThresholdFilter {
  op: ">=" | "<=";
  value: number;
}

/** Query path for the instance listing; the filter mirrors the server's
 * `response>=NUM` / `response<=NUM` grammar. */
export function instancesQuery(filter?: ThresholdFilter | null): string {
  if (!filter) return "/v1/instances";
  const expr = `response${filter.op}${filter.value}`;
  return `/v1/instances?filter=${encodeURIComponent(expr)}`;
}

async function errorFrom(res: Response): Promise<ApiError> {
  let body: ApiErrorBody;
  try {
    body = (await res.json()) as ApiErrorBody;
  } catch {
    body = { code: `http_${res.status}`, message: res.statusText || "request failed", detail: null };
  }
  return new ApiError(res.status, body);
}

export class ApiClient {
  private readonly fetchImpl: FetchLike;

  constructor(
    readonly base: string,
    fetchImpl?: FetchLike,
  ) {
    this.fetchImpl = fetchImpl ?? ((url, init) => fetch(url, init));
  }

  private url(path: string): string {
    return this.base.replace(/\/+$/, "") + path;
  }

  async health(): Promise<HealthResponse> {
    const res = await this.fetchImpl(this.url("/v1/health"));
    if (!res.ok) throw await errorFrom(res);
    return (await res.json()) as HealthResponse;
  }

  async instances(filter?: ThresholdFilter | null): Promise<InstanceListing> {
    const res = await this.fetchImpl(this.url(instancesQuery(filter)));
    if (!res.ok) throw await errorFrom(res);
    return (await res.json()) as InstanceListing;
  }

  async plan(
    body: PlanRequestBody,
    signal?: AbortSignal,
  ): Promise<{ payload: PlanResult; raw: string }> {
    const res = await this.fetchImpl(this.url("/v1/plan"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
      signal,
    });
    if (!res.ok) throw await errorFrom(res);
    const raw = await res.text();
    return { payload: JSON.parse(raw) as PlanResult, raw };
  }

  async density(
    x: Record<string, number> | number[],
    y?: number,
    signal?: AbortSignal,
  ): Promise<DensityResponse> {
    const body: { x: typeof x; y?: number } = { x };
    if (y !== undefined) body.y = y;
    const res = await this.fetchImpl(this.url("/v1/density"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
      signal,
    });
    if (!res.ok) throw await errorFrom(res);
    return (await res.json()) as DensityResponse;
  }
}
