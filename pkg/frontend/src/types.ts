import type { QueueStatus, TriageLevel } from "./schema.js";

export interface Verdict {
  level: TriageLevel;
  scores: Record<TriageLevel, number>;
  neighbors: { node: number; weight: number }[];
  clamped_features: number;
}

export interface TriageResponse {
  entry_id: number;
  verdict: Verdict;
  model_config_hash: string;
}

export interface QueueEntry {
  entry_id: number;
  patient: Record<string, number | string>;
  verdict: Verdict;
  arrival: number;
  status: QueueStatus;
}

export interface ApiError {
  error: string;
  field?: string;
}

export interface ModelCard {
  preset: string;
  metric: string;
  threshold: number;
  config_hash: string;
  nodes: number;
  undirected_edges: number;
  training: { final_train_loss: number | null; best_eval_accuracy: number | null; epochs: number | null };
  label_codes: Record<string, number>;
}
