/** Typed client for the observer-study HTTP API.
 *
 * The server owns all ordering and timing: GET /next is idempotent (same
 * item, same deadline, until answered) and a submission that was recorded
 * but whose response got lost surfaces as a 409 on retry. The client turns
 * both properties into plain retry loops so flaky networks never skip or
 * double-count an item.
 */

export interface SessionInfo {
  sessionId: string;
  total: number;
}

export interface CurrentItem {
  imageId: string;
  imageUrl: string;
  index: number;
  total: number;
  deadlineEpochMs: number;
}

export type NextResult = { done: true } | { done: false; item: CurrentItem };

export type SubmitStatus = "accepted" | "timed_out";

export interface Report {
  sessionId: string;
  observer: string;
  tp: number;
  tn: number;
  fp: number;
  fn: number;
  u: number;
  precision: number;
  recall: number;
  accuracy: number;
  auc: number;
}

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
    this.name = "ApiError";
  }
}

const RETRIES = 3;
const RETRY_DELAY_MS = 250;

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

function num(obj: Record<string, unknown>, key: string): number {
  const v = obj[key];
  if (typeof v !== "number" || !Number.isFinite(v)) {
    throw new ApiError(`malformed response: ${key} is not a number`, 0);
  }
  return v;
}

function str(obj: Record<string, unknown>, key: string): string {
  const v = obj[key];
  if (typeof v !== "string" || v.length === 0) {
    throw new ApiError(`malformed response: ${key} is not a string`, 0);
  }
  return v;
}

export class StudyClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    let lastError: unknown;
    for (let attempt = 0; attempt <= RETRIES; attempt++) {
      if (attempt > 0) await sleep(RETRY_DELAY_MS * attempt);
      try {
        return await this.fetchFn(this.baseUrl + path, init);
      } catch (err) {
        lastError = err; // network-level failure only; HTTP errors resolve
      }
    }
    throw new ApiError(`network failure for ${path}: ${lastError}`, 0);
  }

  private async json(resp: Response): Promise<Record<string, unknown>> {
    const body = (await resp.json()) as unknown;
    if (typeof body !== "object" || body === null) {
      throw new ApiError("malformed response body", resp.status);
    }
    return body as Record<string, unknown>;
  }

  async createSession(
    observer: string,
    deckSeed: number,
    nEach?: number,
  ): Promise<SessionInfo> {
    const resp = await this.request("/session", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        observer,
        deck_seed: deckSeed,
        ...(nEach !== undefined ? { n_each: nEach } : {}),
      }),
    });
    if (resp.status !== 201) {
      throw new ApiError(`session creation failed: ${await resp.text()}`, resp.status);
    }
    const body = await this.json(resp);
    return { sessionId: str(body, "session_id"), total: num(body, "total") };
  }

  async nextItem(sessionId: string): Promise<NextResult> {
    const resp = await this.request(`/session/${sessionId}/next`);
    if (!resp.ok) {
      throw new ApiError(`next failed: ${await resp.text()}`, resp.status);
    }
    const body = await this.json(resp);
    if (body.done === true) return { done: true };
    return {
      done: false,
      item: {
        imageId: str(body, "image_id"),
        imageUrl: str(body, "image_url"),
        index: num(body, "index"),
        total: num(body, "total"),
        deadlineEpochMs: num(body, "deadline_epoch_ms"),
      },
    };
  }

  /** Submit one response. A 409 on a retry attempt means the earlier try
   * was recorded and its acknowledgment lost, so it reports success. */
  async submit(
    sessionId: string,
    imageId: string,
    value: number,
    elapsedMs: number,
  ): Promise<SubmitStatus> {
    const payload = JSON.stringify({
      image_id: imageId,
      value,
      elapsed_ms: Math.max(0, Math.round(elapsedMs)),
    });
    let lastError: unknown;
    for (let attempt = 0; attempt <= RETRIES; attempt++) {
      if (attempt > 0) await sleep(RETRY_DELAY_MS * attempt);
      let resp: Response;
      try {
        resp = await this.fetchFn(`${this.baseUrl}/session/${sessionId}/response`, {
          method: "POST",
          headers: { "content-type": "application/json" },
          body: payload,
        });
      } catch (err) {
        lastError = err;
        continue;
      }
      if (resp.ok) {
        const body = await this.json(resp);
        const status = body.status;
        if (status !== "accepted" && status !== "timed_out") {
          throw new ApiError("malformed submit status", resp.status);
        }
        return status;
      }
      if (resp.status === 409 && attempt > 0) return "accepted";
      throw new ApiError(`submit failed: ${await resp.text()}`, resp.status);
    }
    throw new ApiError(`network failure submitting response: ${lastError}`, 0);
  }

  async report(sessionId: string): Promise<Report> {
    const resp = await this.request(`/session/${sessionId}/report`);
    if (!resp.ok) {
      throw new ApiError(`report failed: ${await resp.text()}`, resp.status);
    }
    const body = await this.json(resp);
    return {
      sessionId: str(body, "session_id"),
      observer: str(body, "observer"),
      tp: num(body, "tp"),
      tn: num(body, "tn"),
      fp: num(body, "fp"),
      fn: num(body, "fn"),
      u: num(body, "u"),
      precision: num(body, "precision"),
      recall: num(body, "recall"),
      accuracy: num(body, "accuracy"),
      auc: num(body, "auc"),
    };
  }

  async transcriptCsv(sessionId: string): Promise<string> {
    const resp = await this.request(`/session/${sessionId}/transcript.csv`);
    if (!resp.ok) {
      throw new ApiError(`transcript failed: ${await resp.text()}`, resp.status);
    }
    return resp.text();
  }

  /** Absolute URL for a server-relative image path. */
  imageUrl(relative: string): string {
    return this.baseUrl + relative;
  }
}
