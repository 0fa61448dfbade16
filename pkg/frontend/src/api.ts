// Thin typed client over the mission control HTTP API. The console never
// recomputes similarities or map state; every number it shows comes straight
// out of these payloads.

export type MissionState = "idle" | "running" | "paused" | "stalled" | "done";
export type SliceLayer = "occupancy" | "activation";

export interface MissionStatus {
  state: MissionState;
  tick: number;
  current_query: string | null;
  position: number[] | null;
  yaw: number;
  goal: { position: number[]; yaw: number } | null;
  coverage: number;
  snapshot_version: number;
}

export interface SlicePayload {
  z: number;
  layer: SliceLayer;
  voxel_size: number;
  origin: [number, number];
  width: number;
  height: number;
  cells: number[];
  snapshot_version: number;
}

export interface SegmentRow {
  id: number;
  centroid: [number, number, number] | null;
  similarity: number;
  voxel_count: number;
  pixel_count: number;
}

export interface QueryResult {
  term: string;
  top_segments: SegmentRow[];
  snapshot_version: number;
}

export interface PlannerCandidate {
  pos: number[];
  yaw: number;
  gain: number;
  w: number;
  utility: number;
  travel_time: number;
  inside_cube: number | null;
}

export interface PlannerEntry {
  tick: number;
  query: string | null;
  n_frontiers: number;
  n_cubes: number;
  candidates: PlannerCandidate[];
  goal: number | null;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public payload: { error?: string; [key: string]: unknown },
  ) {
    super(`HTTP ${status}: ${payload.error ?? "request failed"}`);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

function normalizeBase(addr: string): string {
  const trimmed = addr.trim().replace(/\/+$/, "");
  if (trimmed === "") {
    return "";
  }
  return /^https?:\/\//.test(trimmed) ? trimmed : `http://${trimmed}`;
}

export class SeekmapClient {
  readonly base: string;
  private fetchFn: FetchLike;

  constructor(addr: string, fetchFn?: FetchLike) {
    this.base = normalizeBase(addr);
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async request(method: string, path: string, body?: unknown): Promise<Response> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
      init.headers = { "Content-Type": "application/json" };
    }
    const resp = await this.fetchFn(this.base + path, init);
    if (!resp.ok) {
      let payload: { error?: string } = {};
      try {
        payload = await resp.json();
      } catch {
        // non-JSON error body; keep the bare status
      }
      throw new ApiError(resp.status, payload);
    }
    return resp;
  }

  private async getJson<T>(path: string): Promise<T> {
    return (await this.request("GET", path)).json();
  }

  status(): Promise<MissionStatus> {
    return this.getJson("/mission/status");
  }

  slice(z: number, layer: SliceLayer): Promise<SlicePayload> {
    return this.getJson(`/map/slice?z=${encodeURIComponent(z)}&layer=${layer}`);
  }

  segments(): Promise<{ segments: SegmentRow[]; snapshot_version: number }> {
    return this.getJson("/map/segments");
  }

  async query(term: string): Promise<QueryResult> {
    return (await this.request("POST", "/query", { term })).json();
  }

  async start(): Promise<void> {
    await this.request("POST", "/mission/start");
  }

  async pause(): Promise<void> {
    await this.request("POST", "/mission/pause");
  }

  async resume(): Promise<void> {
    await this.request("POST", "/mission/resume");
  }

  async plannerLog(since: number): Promise<PlannerEntry[]> {
    const resp = await this.request("GET", `/planner/log?since=${since}`);
    const text = await resp.text();
    return text
      .split("\n")
      .filter((line) => line.trim() !== "")
      .map((line) => JSON.parse(line) as PlannerEntry);
  }
}
