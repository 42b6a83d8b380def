/**
 * Annotation session state machine.
 *
 * The server is the source of truth for progress: the UI always renders the
 * question the server says is next, a question cannot be skipped, and a 409
 * on submit (answered elsewhere) is resolved by refetching. Reducers are
 * pure so the invariants are unit-testable without a DOM or a server.
 */

import { AnnotatorQuestion, AnswerAck, ApiClient, ApiError, NextQuestion } from "./api.js";

export interface UiSessionState {
  sessionId: string;
  total: number;
  question: AnnotatorQuestion | null;
  selection: number | null;
  submitting: boolean;
  done: boolean;
  error: string | null;
}

export function initialState(sessionId: string, total: number): UiSessionState {
  return {
    sessionId,
    total,
    question: null,
    selection: null,
    submitting: false,
    done: false,
    error: null,
  };
}

/** Install the server's next question; any stale selection is discarded. */
export function withQuestion(state: UiSessionState, next: NextQuestion): UiSessionState {
  if (next.done) {
    return { ...state, question: null, selection: null, submitting: false, done: true, error: null };
  }
  return {
    ...state,
    question: next.question,
    selection: null,
    submitting: false,
    done: false,
    error: null,
  };
}

export function select(state: UiSessionState, position: number): UiSessionState {
  if (state.question === null || state.submitting || state.done) {
    return state;
  }
  if (!Number.isInteger(position) || position < 0 || position >= state.question.images.length) {
    return state;
  }
  return { ...state, selection: position, error: null };
}

/** Submit is allowed only with a live question, a selection, and no send in flight. */
export function canSubmit(state: UiSessionState): boolean {
  return state.question !== null && state.selection !== null && !state.submitting && !state.done;
}

export function beginSubmit(state: UiSessionState): UiSessionState {
  if (!canSubmit(state)) {
    return state;
  }
  return { ...state, submitting: true };
}

export function answeredCount(state: UiSessionState): number {
  if (state.done) return state.total;
  return state.question === null ? 0 : state.question.index;
}

export function progressLabel(state: UiSessionState): string {
  return `${answeredCount(state)} / ${state.total}`;
}

export function withError(state: UiSessionState, message: string): UiSessionState {
  return { ...state, submitting: false, error: message };
}

/**
 * Drives one annotator through a session. All transitions go through the
 * reducers above; the only way to advance is a server-acknowledged answer.
 */
export class SessionFlow {
  state: UiSessionState;
  readonly annotatorId: string;

  constructor(readonly api: ApiClient, annotatorId: string = "ui") {
    this.annotatorId = annotatorId;
    this.state = initialState("", 0);
  }

  async start(label?: string, seed?: number): Promise<UiSessionState> {
    const created = await this.api.createSession(label, seed);
    this.state = initialState(created.session_id, created.n_questions);
    return this.refresh();
  }

  /** Attach to an existing session; the server hands back the first unanswered question. */
  async resume(sessionId: string, total: number): Promise<UiSessionState> {
    this.state = initialState(sessionId, total);
    return this.refresh();
  }

  async refresh(): Promise<UiSessionState> {
    const next = await this.api.nextQuestion(this.state.sessionId);
    this.state = withQuestion(this.state, next);
    if (!next.done) {
      this.state = { ...this.state, total: next.question.total };
    }
    return this.state;
  }

  choose(position: number): UiSessionState {
    this.state = select(this.state, position);
    return this.state;
  }

  async submit(): Promise<UiSessionState> {
    if (!canSubmit(this.state)) {
      return this.state;
    }
    const question = this.state.question as AnnotatorQuestion;
    const selection = this.state.selection as number;
    this.state = beginSubmit(this.state);
    try {
      const ack: AnswerAck = await this.api.submitAnswer(
        this.state.sessionId,
        question.question_id,
        selection,
        this.annotatorId,
      );
      if (ack.status !== "ok") {
        this.state = withError(this.state, `unexpected ack: ${ack.status}`);
        return this.state;
      }
      return this.refresh();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // Answered elsewhere: the server already has a record, move on.
        return this.refresh();
      }
      this.state = withError(this.state, err instanceof Error ? err.message : String(err));
      return this.state;
    }
  }
}
