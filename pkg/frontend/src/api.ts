/**
 * HTTP client for the scenario service.
 *
 * Every request is appended to a RequestLog so tests (and the browser
 * console) can audit exactly what the UI sent. A request counts as a
 * mutation when it can change stored state: PUT, DELETE, scenario creation
 * and forking. Trace and wave calls use POST only to carry a body; the
 * service computes and forgets, so they are logged as reads.
 */

import type {
  ApiErrorBody,
  ScenarioDoc,
  ScenarioEnvelope,
  TimelineNode,
  TraceResponse,
} from "./types.js";

export interface LoggedRequest {
  method: string;
  url: string;
  body?: string;
  status: number;
  mutation: boolean;
}

export class RequestLog {
  entries: LoggedRequest[] = [];

  add(entry: LoggedRequest): void {
    this.entries.push(entry);
  }

  mutations(): LoggedRequest[] {
    return this.entries.filter((e) => e.mutation);
  }

  /** Entries whose URL contains the given fragment. */
  matching(fragment: string): LoggedRequest[] {
    return this.entries.filter((e) => e.url.includes(fragment));
  }

  clear(): void {
    this.entries = [];
  }
}

export class ApiError extends Error {
  readonly code: string;
  readonly status: number;
  readonly detail: unknown;

  constructor(status: number, body: ApiErrorBody) {
    super(body.message);
    this.name = "ApiError";
    this.code = body.code;
    this.status = status;
    this.detail = body.detail;
  }
}

function isMutation(method: string, path: string): boolean {
  if (method === "PUT" || method === "DELETE") return true;
  if (method === "POST") {
    return path === "/scenarios" || path.endsWith("/fork");
  }
  return false;
}

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

export class Client {
  readonly base: string;
  readonly log: RequestLog;
  private readonly fetchImpl: FetchLike;

  constructor(base: string, fetchImpl?: FetchLike, log?: RequestLog) {
    this.base = base.replace(/\/$/, "");
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
    this.log = log ?? new RequestLog();
  }

  private async request(
    method: string,
    path: string,
    body?: string,
  ): Promise<Response> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.body = body;
      init.headers = { "content-type": "application/json" };
    }
    let resp: Response;
    try {
      resp = await this.fetchImpl(this.base + path, init);
    } catch (err) {
      this.log.add({ method, url: path, body, status: 0, mutation: false });
      throw new ApiError(0, {
        code: "UNREACHABLE",
        message: `service unreachable: ${String(err)}`,
        detail: null,
      });
    }
    this.log.add({
      method,
      url: path,
      body,
      status: resp.status,
      mutation: resp.ok && isMutation(method, path.split("?")[0] ?? path),
    });
    if (!resp.ok) {
      let envelope: ApiErrorBody;
      try {
        envelope = (await resp.json()) as ApiErrorBody;
      } catch {
        envelope = { code: "HTTP", message: `status ${resp.status}`, detail: null };
      }
      throw new ApiError(resp.status, envelope);
    }
    return resp;
  }

  private async json<T>(method: string, path: string, body?: string): Promise<T> {
    const resp = await this.request(method, path, body);
    return (await resp.json()) as T;
  }

  async health(): Promise<{ status: string }> {
    return this.json("GET", "/healthz");
  }

  /** Raw canonical text of the stored document, byte-faithful for export. */
  async scenarioText(id: string): Promise<string> {
    const resp = await this.request("GET", `/scenarios/${id}`);
    return resp.text();
  }

  async createScenario(envelope: ScenarioEnvelope): Promise<{ id: string; digest: string }> {
    return this.json("POST", "/scenarios", JSON.stringify(envelope));
  }

  async putScenario(id: string, doc: ScenarioDoc): Promise<{ id: string; digest: string }> {
    const envelope: ScenarioEnvelope = { scenario: doc, schema_version: 1 };
    return this.json("PUT", `/scenarios/${id}`, JSON.stringify(envelope));
  }

  async deleteScenario(id: string): Promise<void> {
    await this.request("DELETE", `/scenarios/${id}`);
  }

  async fork(id: string): Promise<{ id: string; digest: string; parent: string }> {
    return this.json("POST", `/scenarios/${id}/fork`);
  }

  async trace(id: string, beam: string): Promise<TraceResponse> {
    return this.json("POST", `/scenarios/${id}/trace`, JSON.stringify({ beam }));
  }

  async render(
    id: string,
    opts: { mode?: string; focus?: string; seed?: number } = {},
  ): Promise<string> {
    const params = new URLSearchParams({ format: "svg" });
    if (opts.mode) params.set("mode", opts.mode);
    if (opts.focus) params.set("focus", opts.focus);
    if (opts.seed !== undefined) params.set("seed", String(opts.seed));
    const resp = await this.request("GET", `/scenarios/${id}/render?${params}`);
    return resp.text();
  }

  async frames(id: string, steps: number): Promise<string[]> {
    const body = await this.json<{ frames: string[] }>(
      "GET",
      `/scenarios/${id}/frames?steps=${steps}`,
    );
    return body.frames;
  }

  async timeline(rootId: string): Promise<TimelineNode> {
    return this.json("GET", `/timeline/${rootId}`);
  }
}
