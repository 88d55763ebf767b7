// Mirror of the service's patient schema. The adjacent schema.json is the
// cross-language contract file: a vitest test asserts this module matches
// it, and a test on the service side asserts the json matches the server.
export const SCHEMA = {
  features: [
    "age",
    "gender",
    "chest_pain_type",
    "blood_pressure",
    "cholesterol",
    "max_heart_rate",
    "exercise_angina",
    "plasma_glucose",
    "skin_thickness",
    "insulin",
    "bmi",
    "diabetes_pedigree",
    "hypertension",
    "heart_disease",
    "residence_type",
    "smoking_status",
  ],
  numeric_features: [
    "age",
    "gender",
    "chest_pain_type",
    "blood_pressure",
    "cholesterol",
    "max_heart_rate",
    "exercise_angina",
    "plasma_glucose",
    "skin_thickness",
    "insulin",
    "bmi",
    "diabetes_pedigree",
    "hypertension",
    "heart_disease",
  ],
  categorical_values: {
    residence_type: ["Rural", "Urban"],
    smoking_status: ["never smoked", "previously smoked", "smoke", "Unknown"],
  },
  levels: ["Red", "Orange", "Yellow", "Green"],
  statuses: ["waiting", "in-treatment", "discharged"],
} as const;

export type TriageLevel = (typeof SCHEMA.levels)[number];
export type QueueStatus = (typeof SCHEMA.statuses)[number];
export type FeatureName = (typeof SCHEMA.features)[number];
