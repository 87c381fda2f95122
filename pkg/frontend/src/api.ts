/** Typed client for the scoring service JSON API. The UI never recomputes
 * scores locally; everything rendered comes from these responses. */

export interface AttributeEntry {
  name: string;
  score: number;
  display_score: number;
  weight: number;
  heatmap_url: string;
}

export interface Prompt {
  attribute: string;
  severity: string;
  template_id: string;
  text: string;
  region: [number, number, number, number] | null;
}

export interface EvaluateResponse {
  image_id: string;
  overall: { raw: number; display: number };
  attributes: AttributeEntry[];
  prompt: Prompt | null;
}

export interface ModelInfo {
  image_size: number;
  feature_size: number;
  attributes: string[];
  sigma: number;
  poll_interval: number;
}

export interface RegionMessage {
  attribute: string;
  severity: string;
  template_id: string;
  text: string;
  region: [number, number, number, number] | null;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function parseError(response: Response): Promise<never> {
  let code = "unknown";
  let message = `HTTP ${response.status}`;
  try {
    const body = await response.json();
    if (body && body.error) {
      code = body.error.code ?? code;
      message = body.error.message ?? message;
    }
  } catch {
    // non-JSON error body; keep the defaults
  }
  throw new ApiError(response.status, code, message);
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  async modelInfo(): Promise<ModelInfo> {
    const r = await this.fetchFn(`${this.baseUrl}/api/model/info`);
    if (!r.ok) return parseError(r);
    return r.json();
  }

  async evaluate(image: Blob): Promise<EvaluateResponse> {
    const form = new FormData();
    form.append("image", image, "frame.png");
    const r = await this.fetchFn(`${this.baseUrl}/api/evaluate`, { method: "POST", body: form });
    if (!r.ok) return parseError(r);
    return r.json();
  }

  async region(imageId: string, rect: [number, number, number, number]): Promise<RegionMessage> {
    const r = await this.fetchFn(`${this.baseUrl}/api/region`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ image_id: imageId, rect }),
    });
    if (!r.ok) return parseError(r);
    return r.json();
  }

  heatmapUrl(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async fetchHeatmap(path: string): Promise<Blob> {
    const r = await this.fetchFn(this.heatmapUrl(path));
    if (!r.ok) return parseError(r);
    return r.blob();
  }
}
