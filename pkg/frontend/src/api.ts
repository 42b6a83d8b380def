/**
 * Typed client for the motif service HTTP API (/api/v1).
 *
 * Everything the annotator view consumes passes through
 * parseAnnotatorQuestion, which rejects any payload carrying answer
 * information (imposter identity, control flags), so a server regression
 * cannot leak through this client.
 */

export interface ReportStats {
  n_clusters: number;
  size_quartiles: [number, number, number];
  max_size: number;
  frac_gt1: number;
  frac_gt3: number;
  n_components: number;
  n_edges: number;
}

export interface RunInfo {
  label: string;
  n_images: number;
  stats: ReportStats;
}

export interface MotifSummary {
  cluster_id: number;
  size: number;
  top_members: number[];
}

export interface MotifListing {
  label: string;
  stats: ReportStats;
  motifs: MotifSummary[];
}

export interface MotifDetail {
  label: string;
  cluster_id: number;
  size: number;
  members: number[];
  member_scores: number[];
}

export interface SessionCreated {
  session_id: string;
  label: string;
  n_questions: number;
}

/** The only question fields an annotator is ever allowed to see. */
export interface AnnotatorQuestion {
  question_id: string;
  images: number[];
  index: number;
  total: number;
}

export type NextQuestion =
  | { done: false; question: AnnotatorQuestion }
  | { done: true; total: number };

export interface AnswerAck {
  status: string;
  remaining: number;
}

export interface EvalStats {
  config_label: string;
  n_sessions: number;
  n_scored: number;
  accuracy: number;
  sessions_discarded: number;
  control_pass: Record<string, boolean>;
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

/** Thrown when a payload for the annotator view contains answer information. */
export class LeakError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "LeakError";
  }
}

const ALLOWED_QUESTION_KEYS = new Set(["question_id", "images", "index", "total"]);
const FORBIDDEN_KEY_PATTERN = /imposter|control|host|correct|answer/i;

export function parseAnnotatorQuestion(payload: unknown): NextQuestion {
  if (typeof payload !== "object" || payload === null) {
    throw new ApiError(0, "malformed next-question payload");
  }
  const body = payload as Record<string, unknown>;
  for (const key of Object.keys(body)) {
    if (FORBIDDEN_KEY_PATTERN.test(key)) {
      throw new LeakError(`annotator payload contains forbidden field "${key}"`);
    }
  }
  if (body.done === true) {
    return { done: true, total: Number(body.total ?? 0) };
  }
  const q = body.question;
  if (typeof q !== "object" || q === null) {
    throw new ApiError(0, "next-question payload is missing the question");
  }
  const fields = q as Record<string, unknown>;
  for (const key of Object.keys(fields)) {
    if (FORBIDDEN_KEY_PATTERN.test(key)) {
      throw new LeakError(`annotator payload contains forbidden field "${key}"`);
    }
    if (!ALLOWED_QUESTION_KEYS.has(key)) {
      throw new LeakError(`annotator payload contains unexpected field "${key}"`);
    }
  }
  const images = fields.images;
  if (!Array.isArray(images) || images.length !== 5 || !images.every((v) => Number.isInteger(v))) {
    throw new ApiError(0, "question must carry exactly 5 image ids");
  }
  return {
    done: false,
    question: {
      question_id: String(fields.question_id),
      images: images as number[],
      index: Number(fields.index),
      total: Number(fields.total),
    },
  };
}

async function decode(resp: Response): Promise<unknown> {
  const body = await resp.json().catch(() => ({}));
  if (!resp.ok) {
    const message = (body as { error?: string }).error ?? resp.statusText;
    throw new ApiError(resp.status, message);
  }
  return body;
}

export class ApiClient {
  constructor(readonly baseUrl: string = "") {}

  private async get(path: string): Promise<unknown> {
    return decode(await fetch(`${this.baseUrl}${path}`));
  }

  private async post(path: string, payload: unknown): Promise<unknown> {
    const resp = await fetch(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    return decode(resp);
  }

  listRuns(): Promise<RunInfo[]> {
    return this.get("/api/v1/runs") as Promise<RunInfo[]>;
  }

  getMotifs(label?: string): Promise<MotifListing> {
    const path = label ? `/api/v1/runs/${encodeURIComponent(label)}/motifs` : "/api/v1/motifs";
    return this.get(path) as Promise<MotifListing>;
  }

  getMotifDetail(label: string, clusterId: number): Promise<MotifDetail> {
    return this.get(
      `/api/v1/runs/${encodeURIComponent(label)}/motifs/${clusterId}`,
    ) as Promise<MotifDetail>;
  }

  async createSession(label?: string, seed?: number): Promise<SessionCreated> {
    const payload: Record<string, unknown> = {};
    if (label !== undefined) payload.label = label;
    if (seed !== undefined) payload.seed = seed;
    return (await this.post("/api/v1/eval/sessions", payload)) as SessionCreated;
  }

  async nextQuestion(sessionId: string): Promise<NextQuestion> {
    const raw = await this.get(`/api/v1/eval/sessions/${encodeURIComponent(sessionId)}/next`);
    return parseAnnotatorQuestion(raw);
  }

  async submitAnswer(
    sessionId: string,
    questionId: string,
    chosenPosition: number,
    annotatorId: string,
  ): Promise<AnswerAck> {
    return (await this.post("/api/v1/eval/answer", {
      session_id: sessionId,
      question_id: questionId,
      chosen_position: chosenPosition,
      annotator_id: annotatorId,
    })) as AnswerAck;
  }

  getStats(label?: string): Promise<EvalStats> {
    const suffix = label ? `?label=${encodeURIComponent(label)}` : "";
    return this.get(`/api/v1/eval/stats${suffix}`) as Promise<EvalStats>;
  }

  imageUrl(imageId: number, label?: string): string {
    const suffix = label ? `?label=${encodeURIComponent(label)}` : "";
    return `${this.baseUrl}/images/${imageId}${suffix}`;
  }
}
