/** Payload shapes of the session API. The console never recomputes any of
 * these values; it renders them verbatim (formatting only). */

export interface QuestionPayload {
  outcome_id: number;
  description: string;
  score: number;
}

export interface OutlierPayload {
  score: number;
  flagged: boolean;
}

export interface CreateSessionResponse {
  session_id: string;
  question: QuestionPayload | null;
}

export interface AnswerResponse {
  type_weights: number[];
  next_question: QuestionPayload | null;
  outlier: OutlierPayload | null;
  stop_suggested: boolean;
}

export interface PredictionPayload {
  outcome_id: number;
  mean: number;
  stddev: number;
}

export interface TypeSummary {
  structure: { clusters: string[][] };
  basis_size: number;
}

export interface ModelSummary {
  model_id: string;
  domain: { variables: { name: string; levels: string[] }[] };
  n_outcomes: number;
  outcome_keys: string[];
  types: TypeSummary[];
  type_probs: number[];
}

export interface SessionSummary {
  session_id: string;
  model_id: string;
  policy: string;
  answers: { outcome_id: number; value: number }[];
  type_weights: number[];
  expected_questions: number;
  stop_suggested: boolean;
  outlier: OutlierPayload | null;
  next_question: QuestionPayload | null;
}

export type Policy = "rref" | "variance";
