/**
 * End-to-end: a scripted browser session against a real service process.
 *
 * Builds a corpus and a pipeline run, starts the Python service, answers all
 * 25 questions through the session flow with a fixed pattern, then checks
 * that the server-side evaluation stats equal the score this test computes
 * independently from the persisted session definitions. Every payload the
 * annotator flow consumed is also scanned to prove the imposter identity and
 * control flags never crossed the wire.
 */
import { execFileSync, spawn, ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { SessionFlow } from "../src/session.js";

const LABEL = "phash-er-louvain";
const FORBIDDEN = /imposter|control|host/i;

interface StoredQuestion {
  question_id: string;
  display_order: number[];
  imposter_image: number;
  is_control: boolean;
}

interface StoredSession {
  session_id: string;
  questions: StoredQuestion[];
}

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const probe = createServer();
    probe.listen(0, "127.0.0.1", () => {
      const addr = probe.address();
      if (addr === null || typeof addr === "string") {
        reject(new Error("could not allocate a port"));
        return;
      }
      probe.close(() => resolve(addr.port));
    });
  });
}

async function waitForService(base: string): Promise<void> {
  for (let attempt = 0; attempt < 100; attempt++) {
    try {
      const resp = await fetch(`${base}/api/v1/runs`);
      if (resp.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error(`service at ${base} never came up`);
}

let workDir: string;
let runsDir: string;
let server: ChildProcess | null = null;
let base: string;

beforeAll(async () => {
  workDir = mkdtempSync(join(tmpdir(), "review-ui-"));
  const corpus = join(workDir, "corpus");
  runsDir = join(workDir, "runs");

  execFileSync("python3", ["-m", "motifmine.toydata", corpus, "--seed", "0"]);
  const config = {
    feature: { type: "phash", name: "phash" },
    index: { n_centroids: 8, m_subquantizers: 4, n_bits: 4, seed: 0 },
    graph: { k: 50, nprobe: 1, seed: 0 },
    connection: { strategy: "er", c: 1.0, seed: 0 },
    cluster: { method: "louvain", seed: 0 },
    paths: { corpus, out: runsDir },
  };
  const configPath = join(workDir, "config.json");
  writeFileSync(configPath, JSON.stringify(config));
  execFileSync("python3", ["-m", "motifmine.cli", "run", configPath]);

  const port = await freePort();
  base = `http://127.0.0.1:${port}`;
  server = spawn(
    "python3",
    ["-m", "motifmine.cli", "serve", "--runs", runsDir, "--host", "127.0.0.1", "--port", String(port)],
    { stdio: ["ignore", "ignore", "inherit"] },
  );
  await waitForService(base);
});

afterAll(() => {
  if (server !== null) server.kill();
  rmSync(workDir, { recursive: true, force: true });
});

describe("scripted annotation session", () => {
  it("matches the server's score exactly and sees no answer information", async () => {
    // capture the raw bytes of every payload the annotator flow touches
    const consumed: string[] = [];
    const realFetch = globalThis.fetch;
    globalThis.fetch = (async (input: RequestInfo | URL, init?: RequestInit) => {
      const resp = await realFetch(input, init);
      if (String(input).includes("/api/v1/eval/")) {
        consumed.push(await resp.clone().text());
      }
      return resp;
    }) as typeof fetch;

    const api = new ApiClient(base);
    let sessionId = "";
    const chosen = new Map<string, number>();
    try {
      const flow = new SessionFlow(api, "scripted");
      let state = await flow.start(LABEL, 20260825);
      sessionId = state.sessionId;
      expect(state.total).toBe(25);

      // fixed, known pattern: question i gets position i mod 5
      while (!state.done) {
        const q = state.question;
        if (q === null) throw new Error("flow lost its question");
        const pick = q.index % 5;
        chosen.set(q.question_id, pick);
        flow.choose(pick);
        state = await flow.submit();
        expect(state.error).toBeNull();

        // hand over to a fresh flow once, as a reload would
        if (q.index === 2) {
          const resumed = new SessionFlow(api, "scripted");
          state = await resumed.resume(sessionId, 25);
          expect(state.question?.index).toBe(3);
          while (!state.done) {
            const rq = state.question;
            if (rq === null) throw new Error("resumed flow lost its question");
            const rpick = rq.index % 5;
            chosen.set(rq.question_id, rpick);
            resumed.choose(rpick);
            state = await resumed.submit();
            expect(state.error).toBeNull();
          }
          break;
        }
      }
      expect(state.done).toBe(true);
      expect(chosen.size).toBe(25);
    } finally {
      globalThis.fetch = realFetch;
    }

    expect(consumed.length).toBeGreaterThanOrEqual(27); // create + 26 nexts + 25 acks
    for (const payload of consumed) {
      expect(payload).not.toMatch(FORBIDDEN);
    }

    // score the answer pattern ourselves from the persisted definitions
    const sessionsPath = join(runsDir, LABEL, "eval", "sessions.json");
    const stored = JSON.parse(readFileSync(sessionsPath, "utf8")) as Record<string, StoredSession>;
    const session = stored[sessionId];
    expect(session).toBeDefined();
    expect(session.questions).toHaveLength(25);

    let controlsRight = 0;
    let nonControl = 0;
    let nonControlRight = 0;
    session.questions.forEach((q) => {
      const pick = chosen.get(q.question_id);
      expect(pick).toBeDefined();
      const right = q.display_order[pick as number] === q.imposter_image;
      if (q.is_control) {
        controlsRight += right ? 1 : 0;
      } else {
        nonControl += 1;
        nonControlRight += right ? 1 : 0;
      }
    });
    const passed = controlsRight >= 4;
    const expected = {
      config_label: LABEL,
      n_sessions: 1,
      n_scored: passed ? nonControl : 0,
      accuracy: passed && nonControl > 0 ? nonControlRight / nonControl : 0.0,
      sessions_discarded: passed ? 0 : 1,
      control_pass: { [sessionId]: passed },
    };

    const stats = await api.getStats(LABEL);
    expect(stats).toEqual(expected);
  });
});
