// Client-side intake validation. Field names and enumerations mirror the
// service schema exactly, so an inline error always anchors to the same
// field name a 400 response would report.
import { SCHEMA, type FeatureName } from "./schema.js";

export interface FieldIssue {
  field: FeatureName;
  message: string;
}

const BINARY_FIELDS = new Set(["gender", "exercise_angina", "hypertension", "heart_disease"]);

// sanity bounds for obviously impossible entries; the server's fitted
// ranges remain authoritative
const NUMERIC_BOUNDS: Partial<Record<FeatureName, [number, number]>> = {
  age: [0, 130],
  chest_pain_type: [1, 4],
  blood_pressure: [30, 400],
  cholesterol: [50, 1000],
  max_heart_rate: [30, 300],
  plasma_glucose: [10, 1000],
  skin_thickness: [0, 150],
  insulin: [0, 1000],
  bmi: [8, 100],
  diabetes_pedigree: [0, 5],
};

export function validateField(field: FeatureName, raw: string): FieldIssue | null {
  const value = raw.trim();
  if (value === "") {
    return { field, message: `missing field '${field}'` };
  }
  if ((SCHEMA.numeric_features as readonly string[]).includes(field)) {
    const parsed = Number(value);
    if (!Number.isFinite(parsed)) {
      return { field, message: `field '${field}' must be a number` };
    }
    if (BINARY_FIELDS.has(field) && parsed !== 0 && parsed !== 1) {
      return { field, message: `field '${field}' must be 0 or 1` };
    }
    const bounds = NUMERIC_BOUNDS[field];
    if (bounds && (parsed < bounds[0] || parsed > bounds[1])) {
      return { field, message: `field '${field}' must be between ${bounds[0]} and ${bounds[1]}` };
    }
    return null;
  }
  const allowed = SCHEMA.categorical_values[field as keyof typeof SCHEMA.categorical_values];
  if (!(allowed as readonly string[]).includes(value)) {
    return { field, message: `field '${field}' has invalid value '${value}'` };
  }
  return null;
}

export function validateForm(values: Record<string, string>): FieldIssue[] {
  const issues: FieldIssue[] = [];
  for (const field of SCHEMA.features) {
    const issue = validateField(field, values[field] ?? "");
    if (issue) {
      issues.push(issue);
    }
  }
  return issues;
}

export function toRequestBody(values: Record<string, string>): Record<string, number | string> {
  const body: Record<string, number | string> = {};
  for (const field of SCHEMA.features) {
    const raw = (values[field] ?? "").trim();
    body[field] = (SCHEMA.numeric_features as readonly string[]).includes(field) ? Number(raw) : raw;
  }
  return body;
}
