import type { MosSummaryDoc, RatingSubmission, SessionDescriptor } from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly offenders: string[];

  constructor(status: number, message: string, offenders: string[] = []) {
    super(message);
    this.status = status;
    this.offenders = offenders;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Thin typed client for the listening-test service endpoints. */
export class ApiClient {
  private readonly fetchFn: FetchLike;
  readonly baseUrl: string;

  constructor(fetchFn: FetchLike, baseUrl = "") {
    this.fetchFn = fetchFn;
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  audioUrl(path: string): string {
    return this.baseUrl + path;
  }

  private async parseError(response: Response): Promise<ApiError> {
    let message = `request failed with status ${response.status}`;
    let offenders: string[] = [];
    try {
      const doc = (await response.json()) as { error?: string; offenders?: string[] };
      if (doc.error) message = doc.error;
      if (doc.offenders) offenders = doc.offenders;
    } catch {
      // non-JSON error body; keep the generic message
    }
    return new ApiError(response.status, message, offenders);
  }

  async loadSession(part: 1 | 2, seed?: number, participant?: string): Promise<SessionDescriptor> {
    const query = new URLSearchParams({ part: String(part) });
    if (seed !== undefined) query.set("seed", String(seed));
    if (participant !== undefined) query.set("participant", participant);
    const response = await this.fetchFn(`${this.baseUrl}/api/session?${query.toString()}`);
    if (!response.ok) throw await this.parseError(response);
    return (await response.json()) as SessionDescriptor;
  }

  async submitRatings(payload: RatingSubmission): Promise<number> {
    const response = await this.fetchFn(`${this.baseUrl}/api/ratings`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (!response.ok) throw await this.parseError(response);
    const doc = (await response.json()) as { stored: number };
    return doc.stored;
  }

  async results(): Promise<MosSummaryDoc> {
    const response = await this.fetchFn(`${this.baseUrl}/api/results`);
    if (!response.ok) throw await this.parseError(response);
    return (await response.json()) as MosSummaryDoc;
  }
}
