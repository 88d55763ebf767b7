"""Domain types for patient rows and triage levels."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Optional

# Canonical feature order. Everything downstream (encoders, scaler, model
# input) indexes columns by this tuple, so it must never be reordered.
FEATURE_NAMES = (
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
)

NUMERIC_FEATURES = FEATURE_NAMES[:14]
CATEGORICAL_FEATURES = ("residence_type", "smoking_status")
LABEL_COLUMN = "triage"

RESIDENCE_VALUES = ("Rural", "Urban")
SMOKING_VALUES = ("never smoked", "previously smoked", "smoke")
SMOKING_UNKNOWN = "Unknown"


class TriageLevel(IntEnum):
    """Four-level urgency scale; RED is the most urgent.

    The integer codes are part of the persisted model contract and must
    stay stable across runs.
    """

    RED = 0
    ORANGE = 1
    YELLOW = 2
    GREEN = 3

    @classmethod
    def from_name(cls, name: str) -> "TriageLevel":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown triage level: {name!r}") from None

    @property
    def display(self) -> str:
        return self.name.capitalize()


LABEL_CODES = {level.display: int(level) for level in TriageLevel}


@dataclass(frozen=True)
class PatientRecord:
    """One raw patient row: 16 clinical features plus an optional label.

    Numeric fields may be None straight after loading (null cells); such
    records are removed by :func:`triagegraph.ingest.clean` before any
    invariant applies.
    """

    age: Optional[float] = None
    gender: Optional[float] = None
    chest_pain_type: Optional[float] = None
    blood_pressure: Optional[float] = None
    cholesterol: Optional[float] = None
    max_heart_rate: Optional[float] = None
    exercise_angina: Optional[float] = None
    plasma_glucose: Optional[float] = None
    skin_thickness: Optional[float] = None
    insulin: Optional[float] = None
    bmi: Optional[float] = None
    diabetes_pedigree: Optional[float] = None
    hypertension: Optional[float] = None
    heart_disease: Optional[float] = None
    residence_type: Optional[str] = None
    smoking_status: Optional[str] = None
    label: Optional[TriageLevel] = None

    def numeric_values(self) -> tuple:
        return tuple(getattr(self, name) for name in NUMERIC_FEATURES)

    def has_null(self) -> bool:
        return any(getattr(self, name) is None for name in FEATURE_NAMES)

    def identity_key(self) -> tuple:
        """Equality key for duplicate detection: all 16 features + label."""
        return tuple(getattr(self, name) for name in FEATURE_NAMES) + (self.label,)

    def validate(self) -> None:
        """Raise ValueError on any invariant violation."""
        for name in NUMERIC_FEATURES:
            value = getattr(self, name)
            if value is None:
                raise ValueError(f"field {name!r} is null")
            if not math.isfinite(value):
                raise ValueError(f"field {name!r} is not finite: {value!r}")
        if self.residence_type not in RESIDENCE_VALUES:
            raise ValueError(f"field 'residence_type' has invalid value {self.residence_type!r}")
        allowed_smoking = SMOKING_VALUES + (SMOKING_UNKNOWN,)
        if self.smoking_status not in allowed_smoking:
            raise ValueError(f"field 'smoking_status' has invalid value {self.smoking_status!r}")

    def with_smoking(self, value: str) -> "PatientRecord":
        return replace(self, smoking_status=value)
