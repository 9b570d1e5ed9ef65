/** Typed client for the simulation service.
 *
 * Every number the UI displays originates from one of these responses;
 * nothing here computes physics. The fetch implementation is injectable
 * so contract tests can replay recorded backend responses.
 */

export interface ContactDoc {
  id: string;
  z_lo_mm: number;
  z_hi_mm: number;
  theta_lo_deg: number;
  theta_hi_deg: number;
  ring: boolean;
}

export interface SceneDoc {
  lead: {
    tip_mm: [number, number, number];
    direction: [number, number, number];
    shaft_radius_mm: number;
    shaft_length_mm: number;
    contacts: ContactDoc[];
    groups: Record<string, string[]>;
  };
  grid: {
    shape: [number, number, number];
    origin_mm: [number, number, number];
    spacing_mm: [number, number, number];
    boundary: string;
  };
  label_counts: Record<string, number>;
  tracts: { name: string; n_fibers: number; damaged: number }[];
}

/** Normalized stimulation-setting document, as the server echoes it. */
export interface SettingDoc {
  label: string;
  contacts: string;
  amplitude_ma: number;
  frequency_hz: number;
  pulse_width_us: number;
  pulse_shape: string;
}

export interface SettingsDoc {
  settings: SettingDoc[];
  models: string[];
}

export interface TractResultDoc {
  name: string;
  statuses: number[];
  activation_percent: number;
  failures?: [number, string][];
}

/** The normalized setting a report echoes: polarity resolved into
 * explicit cathode and anode lists. */
export interface ReportSettingDoc {
  label: string;
  cathodes: string[];
  anodes: string[];
  amplitude_ma: number;
  frequency_hz: number;
  pulse_width_us: number;
  pulse_shape: string;
}

export interface ReportDoc {
  setting: ReportSettingDoc;
  model: string;
  denominator_rule: string;
  tracts: TractResultDoc[];
  diagnostics?: Record<string, unknown>;
  wall_s?: number;
}

export type JobStatus = "queued" | "running" | "done" | "failed";

export interface JobDoc {
  job_id: string;
  model?: string;
  status: JobStatus;
  setting?: SettingDoc;
  report?: ReportDoc;
  error?: string;
}

export interface SliceDoc {
  job_id: string;
  plane: "yz" | "xz" | "xy";
  coord_mm: number;
  axes: [string, string];
  origin_mm: [number, number];
  spacing_mm: [number, number];
  shape: [number, number];
  unit: string;
  values: number[][];
}

export interface TractsDoc {
  from_job: string | null;
  status_codes: Record<string, number>;
  tracts: {
    name: string;
    diameters_um: number[];
    statuses: number[];
    fibers: [number, number, number][][];
  }[];
}

export interface SimulateBody {
  model: string;
  setting: Record<string, unknown>;
}

/** Non-2xx response; `detail` carries the server's violation list verbatim. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string[],
  ) {
    super(detail.join("; ") || `HTTP ${status}`);
    this.name = "ApiError";
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function errorDetail(res: Response): Promise<string[]> {
  try {
    const body = (await res.json()) as { detail?: unknown };
    if (Array.isArray(body.detail)) return body.detail.map(String);
    if (typeof body.detail === "string") return [body.detail];
  } catch {
    // non-JSON error body; fall through to the bare status
  }
  return [`HTTP ${res.status}`];
}

export class ApiClient {
  constructor(
    readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (u, i) => fetch(u, i),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const res = await this.fetchImpl(this.baseUrl + path);
    if (!res.ok) throw new ApiError(res.status, await errorDetail(res));
    return (await res.json()) as T;
  }

  getScene(): Promise<SceneDoc> {
    return this.getJson("/api/scene");
  }

  getSettings(): Promise<SettingsDoc> {
    return this.getJson("/api/settings");
  }

  async simulate(body: SimulateBody): Promise<JobDoc> {
    const res = await this.fetchImpl(this.baseUrl + "/api/simulate", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!res.ok) throw new ApiError(res.status, await errorDetail(res));
    return (await res.json()) as JobDoc;
  }

  getJob(jobId: string): Promise<JobDoc> {
    return this.getJson(`/api/jobs/${encodeURIComponent(jobId)}`);
  }

  getSlice(jobId: string, plane: string, coordMm?: number): Promise<SliceDoc> {
    const q = coordMm === undefined ? "" : `&coord=${coordMm}`;
    return this.getJson(
      `/api/field/${encodeURIComponent(jobId)}/slice?plane=${plane}${q}`,
    );
  }

  getTracts(): Promise<TractsDoc> {
    return this.getJson("/api/tracts");
  }
}

/** Poll a job until it leaves the queue, reporting every observed state. */
export async function pollJob(
  client: ApiClient,
  jobId: string,
  onUpdate: (job: JobDoc) => void,
  intervalMs = 1000,
  sleep: (ms: number) => Promise<void> = (ms) =>
    new Promise((r) => setTimeout(r, ms)),
): Promise<JobDoc> {
  for (;;) {
    const job = await client.getJob(jobId);
    onUpdate(job);
    if (job.status === "done" || job.status === "failed") return job;
    await sleep(intervalMs);
  }
}
