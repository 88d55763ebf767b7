// Thin typed client for the /api/v1 endpoints.
import type { ApiError, ModelCard, QueueEntry, TriageResponse } from "./types.js";
import type { QueueStatus } from "./schema.js";

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly body: ApiError,
  ) {
    super(body.error);
  }
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(path, {
    headers: { "content-type": "application/json" },
    ...init,
  });
  const body = await resp.json();
  if (!resp.ok) {
    throw new ServiceError(resp.status, body as ApiError);
  }
  return body as T;
}

export function submitPatient(body: Record<string, number | string>): Promise<TriageResponse> {
  return request<TriageResponse>("/api/v1/triage", { method: "POST", body: JSON.stringify(body) });
}

export async function fetchQueue(): Promise<QueueEntry[]> {
  const payload = await request<{ entries: QueueEntry[] }>("/api/v1/queue");
  return payload.entries;
}

export function setStatus(entryId: number, status: QueueStatus): Promise<QueueEntry> {
  return request<QueueEntry>(`/api/v1/queue/${entryId}/status`, {
    method: "POST",
    body: JSON.stringify({ status }),
  });
}

export function fetchModelCard(): Promise<ModelCard> {
  return request<ModelCard>("/api/v1/model");
}
