import { afterEach, describe, expect, it } from "vitest";

import {
  ApiClient,
  ApiError,
  LeakError,
  parseAnnotatorQuestion,
} from "../src/api.js";

interface Captured {
  url: string;
  init?: RequestInit;
}

const realFetch = globalThis.fetch;

function stubFetch(status: number, body: unknown): Captured[] {
  const calls: Captured[] = [];
  globalThis.fetch = (async (input: RequestInfo | URL, init?: RequestInit) => {
    calls.push({ url: String(input), init });
    return new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  }) as typeof fetch;
  return calls;
}

afterEach(() => {
  globalThis.fetch = realFetch;
});

const CLEAN_QUESTION = {
  done: false,
  question: { question_id: "q-003", images: [4, 9, 1, 7, 2], index: 3, total: 25 },
};

describe("ApiClient urls and decoding", () => {
  it("lists runs from /api/v1/runs", async () => {
    const calls = stubFetch(200, [{ label: "a", n_images: 5, stats: {} }]);
    const runs = await new ApiClient().listRuns();
    expect(calls[0].url).toBe("/api/v1/runs");
    expect(runs[0].label).toBe("a");
  });

  it("escapes run labels in paths", async () => {
    const calls = stubFetch(200, { label: "a b", stats: {}, motifs: [] });
    const api = new ApiClient("http://h:1");
    await api.getMotifs("a b");
    expect(calls[0].url).toBe("http://h:1/api/v1/runs/a%20b/motifs");
    await api.getMotifDetail("a b", 7);
    expect(calls[1].url).toBe("http://h:1/api/v1/runs/a%20b/motifs/7");
  });

  it("falls back to the default run when no label is given", async () => {
    const calls = stubFetch(200, { label: "x", stats: {}, motifs: [] });
    await new ApiClient().getMotifs();
    expect(calls[0].url).toBe("/api/v1/motifs");
  });

  it("posts session creation parameters as json", async () => {
    const calls = stubFetch(201, { session_id: "s1", label: "x", n_questions: 25 });
    const created = await new ApiClient().createSession("x", 7);
    expect(created.session_id).toBe("s1");
    expect(calls[0].init?.method).toBe("POST");
    expect(JSON.parse(String(calls[0].init?.body))).toEqual({ label: "x", seed: 7 });
  });

  it("omits unset session parameters", async () => {
    const calls = stubFetch(201, { session_id: "s1", label: "x", n_questions: 25 });
    await new ApiClient().createSession();
    expect(JSON.parse(String(calls[0].init?.body))).toEqual({});
  });

  it("posts answers with the annotator id", async () => {
    const calls = stubFetch(200, { status: "ok", remaining: 24 });
    const ack = await new ApiClient().submitAnswer("s1", "q-000", 3, "me");
    expect(ack.remaining).toBe(24);
    expect(JSON.parse(String(calls[0].init?.body))).toEqual({
      session_id: "s1",
      question_id: "q-000",
      chosen_position: 3,
      annotator_id: "me",
    });
  });

  it("maps service errors to ApiError with status", async () => {
    stubFetch(404, { error: "no such run: nope" });
    const err = await new ApiClient().listRuns().catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(404);
    expect(err.message).toBe("no such run: nope");
  });

  it("builds image urls with optional label", () => {
    const api = new ApiClient("http://h:1");
    expect(api.imageUrl(12)).toBe("http://h:1/images/12");
    expect(api.imageUrl(12, "a b")).toBe("http://h:1/images/12?label=a%20b");
  });

  it("guards the next-question payload", async () => {
    stubFetch(200, {
      done: false,
      question: { ...CLEAN_QUESTION.question, imposter_image: 4 },
    });
    await expect(new ApiClient().nextQuestion("s1")).rejects.toBeInstanceOf(LeakError);
  });
});

describe("parseAnnotatorQuestion", () => {
  it("accepts a clean question", () => {
    const next = parseAnnotatorQuestion(CLEAN_QUESTION);
    if (next.done) throw new Error("expected a question");
    expect(next.question.question_id).toBe("q-003");
    expect(next.question.images).toEqual([4, 9, 1, 7, 2]);
    expect(next.question.index).toBe(3);
    expect(next.question.total).toBe(25);
  });

  it("accepts the completion payload", () => {
    expect(parseAnnotatorQuestion({ done: true, total: 25 })).toEqual({
      done: true,
      total: 25,
    });
  });

  it.each([
    "imposter_image",
    "is_control",
    "host_images",
    "correct_position",
    "answer_key",
  ])("rejects a question leaking %s", (key) => {
    const dirty = {
      done: false,
      question: { ...CLEAN_QUESTION.question, [key]: 1 },
    };
    expect(() => parseAnnotatorQuestion(dirty)).toThrow(LeakError);
  });

  it("rejects answer fields on the envelope too", () => {
    const dirty = { ...CLEAN_QUESTION, control_pass: true };
    expect(() => parseAnnotatorQuestion(dirty)).toThrow(LeakError);
  });

  it("rejects unknown extra fields outright", () => {
    const dirty = {
      done: false,
      question: { ...CLEAN_QUESTION.question, hint: "left" },
    };
    expect(() => parseAnnotatorQuestion(dirty)).toThrow(LeakError);
  });

  it("requires exactly five image ids", () => {
    const short = {
      done: false,
      question: { ...CLEAN_QUESTION.question, images: [1, 2, 3, 4] },
    };
    expect(() => parseAnnotatorQuestion(short)).toThrow(ApiError);
  });

  it("rejects a payload with no question", () => {
    expect(() => parseAnnotatorQuestion({ done: false })).toThrow(ApiError);
    expect(() => parseAnnotatorQuestion(null)).toThrow(ApiError);
  });
});
