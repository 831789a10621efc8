// Typed client for the run-store HTTP API. All console data flows through
// these calls; the console never reads run directories directly.

export interface DimensionScore {
  dim: number;
  mpwd: number;
  predictiveness: number;
  variance: number;
  mpwd_rank: number;
  pred_rank: number;
  z_min: number;
  z_max: number;
  above_threshold: boolean;
}

export interface RunManifest {
  run_id: string;
  dataset_ref: string;
  dataset_hash: string;
  train_config: { latent_dim: number; beta?: number; [key: string]: unknown };
  status: string;
  created_at: string;
  schema_version: number;
}

export interface VerdictRecord {
  run_id: string;
  dim: number;
  verdict: string;
  notes: string;
  judge: string;
  timestamp: string;
}

export interface RunDetail {
  manifest: RunManifest;
  scoreboard: DimensionScore[] | null;
  verdicts: { [dim: string]: VerdictRecord };
}

export interface TraversalResponse {
  dim: number;
  values: number[];
  instance: string;
  frames: string[]; // base64 PNGs
}

export interface ExtremesResponse {
  dim: number;
  l: number;
  min: string; // base64 PNG grids
  max: string;
}

export interface KdeCurve {
  dim: number;
  class: number;
  grid: number[];
  density: number[];
  h: number;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(private base: string = "") {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.base + path, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        detail = ((await resp.json()) as { error: string }).error;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  listRuns(): Promise<RunManifest[]> {
    return this.json("/api/runs");
  }

  getRun(runId: string): Promise<RunDetail> {
    return this.json(`/api/runs/${runId}`);
  }

  getTraversal(
    runId: string,
    dim: number,
    steps = 8
  ): Promise<TraversalResponse> {
    return this.json(`/api/runs/${runId}/dims/${dim}/traversal?steps=${steps}`);
  }

  getExtremes(runId: string, dim: number, l = 16): Promise<ExtremesResponse> {
    return this.json(`/api/runs/${runId}/dims/${dim}/extremes?l=${l}`);
  }

  getKde(runId: string, dim: number): Promise<KdeCurve[]> {
    return this.json(`/api/runs/${runId}/dims/${dim}/kde`);
  }

  /** Decode a full latent vector; resolves to raw PNG bytes. */
  async decode(runId: string, z: number[]): Promise<Uint8Array> {
    const resp = await fetch(`${this.base}/api/runs/${runId}/decode`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ z }),
    });
    if (!resp.ok) {
      const body = (await resp.json()) as { error: string };
      throw new ApiError(resp.status, body.error);
    }
    return new Uint8Array(await resp.arrayBuffer());
  }

  postVerdict(
    runId: string,
    dim: number,
    verdict: string,
    notes = "",
    judge = ""
  ): Promise<VerdictRecord> {
    return this.json(`/api/runs/${runId}/dims/${dim}/verdict`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ verdict, notes, judge }),
    });
  }
}
