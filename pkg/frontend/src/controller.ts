import { ApiError } from "./api.js";
import type {
  AnswerResponse,
  CreateSessionResponse,
  ModelSummary,
  OutlierPayload,
  Policy,
  PredictionPayload,
  QuestionPayload,
} from "./types.js";

/** Structural view of the API client, so tests can stub it. */
export interface ApiLike {
  getModel(): Promise<ModelSummary>;
  createSession(policy: Policy): Promise<CreateSessionResponse>;
  submitAnswer(sessionId: string, outcomeId: number, value: number): Promise<AnswerResponse>;
  getPredictions(sessionId: string): Promise<PredictionPayload[]>;
}

export type Phase = "idle" | "starting" | "active" | "completed" | "failed";

export interface AnswerRecord {
  outcomeId: number;
  value: number;
}

/** Everything the screens need. All numbers are verbatim API payload values;
 * the controller performs no statistical computation of its own. */
export interface ConsoleState {
  phase: Phase;
  policy: Policy;
  sessionId: string | null;
  model: ModelSummary | null;
  question: QuestionPayload | null;
  answered: AnswerRecord[];
  typeWeights: number[];
  outlier: OutlierPayload | null;
  stopSuggested: boolean;
  predictions: PredictionPayload[];
  expectedQuestions: number;
  /** set while a redundant check question is on screen after stopping */
  redundantCheck: { prediction: PredictionPayload; answer: number | null } | null;
  errorMessage: string | null;
  busy: boolean;
}

function initialState(policy: Policy): ConsoleState {
  return {
    phase: "idle",
    policy,
    sessionId: null,
    model: null,
    question: null,
    answered: [],
    typeWeights: [],
    outlier: null,
    stopSuggested: false,
    predictions: [],
    expectedQuestions: 0,
    redundantCheck: null,
    errorMessage: null,
    busy: false,
  };
}

/** Session state machine: idle -> starting -> active -> completed, with
 * failed reachable from anywhere (retry restores the previous flow). */
export class SessionController {
  state: ConsoleState;
  private listeners: Array<(s: ConsoleState) => void> = [];

  constructor(private api: ApiLike, policy: Policy = "rref") {
    this.state = initialState(policy);
  }

  onChange(listener: (s: ConsoleState) => void): void {
    this.listeners.push(listener);
  }

  private update(patch: Partial<ConsoleState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }

  setPolicy(policy: Policy): void {
    if (this.state.phase === "idle" || this.state.phase === "failed") {
      this.update({ policy });
    }
  }

  /** Expected question count: the basis size of the currently most probable
   * type, straight from the model summary (no client-side math). */
  private expectedFor(weights: number[], model: ModelSummary | null): number {
    if (!model || model.types.length === 0) return 0;
    let best = 0;
    for (let i = 1; i < weights.length; i++) {
      if (weights[i] > weights[best]) best = i;
    }
    return model.types[best]?.basis_size ?? 0;
  }

  async start(): Promise<void> {
    this.update({ ...initialState(this.state.policy), phase: "starting", busy: true });
    try {
      const model = await this.api.getModel();
      const created = await this.api.createSession(this.state.policy);
      const weights = model.type_probs;
      this.update({
        phase: created.question === null ? "completed" : "active",
        sessionId: created.session_id,
        model,
        question: created.question,
        typeWeights: weights,
        expectedQuestions: this.expectedFor(weights, model),
        busy: false,
      });
      await this.refreshPredictions();
    } catch (err) {
      this.fail(err);
    }
  }

  /** Submit a value for the current question. */
  async submit(value: number): Promise<void> {
    const { sessionId, question } = this.state;
    if (sessionId === null || question === null || this.state.busy) return;
    await this.answerOutcome(question.outcome_id, value);
  }

  /** Answer an arbitrary unanswered outcome (drives the redundant-check flow
   * too, where the outcome comes from the predictions table). */
  async answerOutcome(outcomeId: number, value: number): Promise<void> {
    const { sessionId } = this.state;
    if (sessionId === null || this.state.busy) return;
    this.update({ busy: true, errorMessage: null });
    try {
      const result = await this.api.submitAnswer(sessionId, outcomeId, value);
      const answered = [...this.state.answered, { outcomeId, value }];
      const redundant =
        this.state.redundantCheck !== null
          ? { prediction: this.state.redundantCheck.prediction, answer: value }
          : null;
      this.update({
        answered,
        typeWeights: result.type_weights,
        outlier: result.outlier,
        stopSuggested: result.stop_suggested,
        question: result.next_question,
        phase: result.next_question === null ? "completed" : "active",
        expectedQuestions: this.expectedFor(result.type_weights, this.state.model),
        redundantCheck: redundant,
        busy: false,
      });
      await this.refreshPredictions();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // already answered: surface inline, session state is still valid
        this.update({ busy: false, errorMessage: "This outcome was already answered." });
        return;
      }
      this.fail(err);
    }
  }

  async refreshPredictions(): Promise<void> {
    const { sessionId } = this.state;
    if (sessionId === null) return;
    try {
      const predictions = await this.api.getPredictions(sessionId);
      this.update({ predictions });
    } catch (err) {
      this.fail(err);
    }
  }

  /** After stopping: offer the unanswered outcome the model is most sure
   * about, so the respondent can sanity-check the fitted utility.  Selection
   * only; the numbers come from the predictions payload. */
  startRedundantCheck(): void {
    if (this.state.predictions.length === 0) return;
    let best = this.state.predictions[0];
    for (const p of this.state.predictions) {
      if (p.stddev < best.stddev) best = p;
    }
    this.update({ redundantCheck: { prediction: best, answer: null } });
  }

  dismissRedundantCheck(): void {
    this.update({ redundantCheck: null });
  }

  private fail(err: unknown): void {
    const message =
      err instanceof ApiError
        ? err.status === 0
          ? err.message
          : `API error ${err.status}: ${err.message}`
        : String(err);
    this.update({ phase: "failed", errorMessage: message, busy: false });
  }
}
