"""Deterministic synthetic patient datasets.

The public Kaggle triage dump cannot be redistributed, so this module
synthesizes a stand-in with the same documented shape: configurable row
count, null/duplicate contamination, Unknown smoking-status count, and an
unbalanced four-level label distribution whose classes are separable from
the features. Class means follow a severity gradient and each class is
spread over several sub-archetypes so that similarity graphs develop
cluster structure instead of near-complete connectivity.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .records import (
    FEATURE_NAMES,
    LABEL_COLUMN,
    RESIDENCE_VALUES,
    SMOKING_UNKNOWN,
    SMOKING_VALUES,
    PatientRecord,
    TriageLevel,
)

# Default label distribution for the full-size replica: unbalanced with the
# intermediate level dominating, totalling 6551 clean rows.
DEFAULT_CLASS_COUNTS = {"Red": 940, "Orange": 1262, "Yellow": 2620, "Green": 1729}

# (mean at severity 0, per-severity-step shift, noise sigma, decimals, lo, hi)
_CONTINUOUS = {
    "age": (38.0, 11.0, 6.0, 1, 18.0, 95.0),
    "blood_pressure": (112.0, 17.0, 7.0, 1, 80.0, 230.0),
    "cholesterol": (175.0, 33.0, 14.0, 1, 100.0, 430.0),
    "max_heart_rate": (172.0, -20.0, 8.0, 1, 60.0, 220.0),
    "plasma_glucose": (92.0, 38.0, 11.0, 1, 55.0, 320.0),
    "skin_thickness": (16.0, 4.5, 3.0, 1, 4.0, 60.0),
    "insulin": (55.0, 42.0, 14.0, 1, 10.0, 420.0),
    "bmi": (23.5, 3.4, 1.8, 2, 15.0, 55.0),
    "diabetes_pedigree": (0.28, 0.34, 0.11, 3, 0.05, 2.5),
}

# severity = 3 for Red down to 0 for Green
_SEVERITY = {TriageLevel.RED: 3, TriageLevel.ORANGE: 2, TriageLevel.YELLOW: 1, TriageLevel.GREEN: 0}


def _bernoulli_prob(base: float, step: float, severity: int) -> float:
    return min(0.95, max(0.03, base + step * severity))


def _make_row(rng: np.random.Generator, level: TriageLevel, offsets: np.ndarray, separation: float = 1.0) -> dict:
    """One formatted patient row for the given class and sub-archetype."""
    s = _SEVERITY[level]
    row = {}
    for i, (name, (mean, shift, sigma, dec, lo, hi)) in enumerate(_CONTINUOUS.items()):
        value = mean + shift * separation * s + offsets[i] * sigma + rng.normal(0.0, sigma)
        row[name] = f"{np.clip(value, lo, hi):.{dec}f}"
    row["gender"] = str(int(rng.random() < 0.5))
    pain = int(np.clip(round(1 + 0.9 * s + rng.normal(0.0, 0.7)), 1, 4))
    row["chest_pain_type"] = str(pain)
    row["exercise_angina"] = str(int(rng.random() < _bernoulli_prob(0.12, 0.22, s)))
    row["hypertension"] = str(int(rng.random() < _bernoulli_prob(0.15, 0.20, s)))
    row["heart_disease"] = str(int(rng.random() < _bernoulli_prob(0.08, 0.25, s)))
    row["residence_type"] = RESIDENCE_VALUES[int(rng.random() < 0.62)]
    smoke_p = np.array([0.55 - 0.08 * s, 0.25 + 0.03 * s, 0.20 + 0.05 * s])
    row["smoking_status"] = SMOKING_VALUES[int(rng.choice(3, p=smoke_p / smoke_p.sum()))]
    row[LABEL_COLUMN] = level.display
    return row


def _row_key(row: dict) -> tuple:
    return tuple(row[name] for name in FEATURE_NAMES) + (row[LABEL_COLUMN],)


@dataclass
class SynthSummary:
    rows_written: int
    rows_clean: int
    null_rows: int
    duplicate_rows: int
    unknown_smoking: int
    class_counts: dict


def synth_rows(
    class_counts: dict,
    seed: int = 0,
    subclusters: int = 10,
    cluster_spread: float = 2.4,
    separation: float = 1.0,
) -> list[dict]:
    """Unique, fully-populated formatted rows per the class distribution.

    ``separation`` scales the per-severity mean shifts; values above 1 make
    the classes easier to tell apart (used by well-separated fixtures).
    """
    rng = np.random.default_rng(seed)
    rows = []
    seen = set()
    n_cont = len(_CONTINUOUS)
    for display, count in class_counts.items():
        level = TriageLevel.from_name(display)
        centers = rng.normal(0.0, cluster_spread, size=(subclusters, n_cont))
        for _ in range(count):
            offsets = centers[rng.integers(0, subclusters)]
            for _attempt in range(64):
                row = _make_row(rng, level, offsets, separation)
                key = _row_key(row)
                if key not in seen:
                    break
            else:  # pragma: no cover - astronomically unlikely
                raise RuntimeError("could not generate a unique synthetic row")
            seen.add(key)
            rows.append(row)
    return rows


def synth_patient_dataset(
    path,
    *,
    class_counts: dict | None = None,
    unknown_smoking: int = 1886,
    n_null_rows: int = 340,
    n_duplicate_rows: int = 71,
    seed: int = 7,
    subclusters: int = 10,
    delimiter: str = ",",
) -> SynthSummary:
    """Write a replica CSV: clean unique rows plus null and duplicate noise.

    Cleaning the output drops exactly ``n_null_rows + n_duplicate_rows``
    rows, and exactly ``unknown_smoking`` of the surviving rows carry the
    Unknown smoking status.
    """
    class_counts = dict(class_counts or DEFAULT_CLASS_COUNTS)
    rng = np.random.default_rng(seed + 1)
    rows = synth_rows(class_counts, seed=seed, subclusters=subclusters)
    n_clean = len(rows)
    if unknown_smoking >= n_clean:
        raise ValueError("unknown_smoking must be smaller than the clean row count")

    for idx in rng.choice(n_clean, size=unknown_smoking, replace=False):
        rows[idx]["smoking_status"] = SMOKING_UNKNOWN

    noise = []
    for _ in range(n_null_rows):
        base = dict(rows[rng.integers(0, n_clean)])
        blank = rng.choice(len(FEATURE_NAMES), size=int(rng.integers(1, 4)), replace=False)
        for b in blank:
            base[FEATURE_NAMES[b]] = ""
        noise.append(base)
    for idx in rng.choice(n_clean, size=n_duplicate_rows, replace=False):
        noise.append(dict(rows[idx]))

    all_rows = rows + noise
    order = rng.permutation(len(all_rows))
    header = list(FEATURE_NAMES) + [LABEL_COLUMN]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow(header)
        for i in order:
            writer.writerow([all_rows[i][name] for name in header])
    return SynthSummary(
        rows_written=len(all_rows),
        rows_clean=n_clean,
        null_rows=n_null_rows,
        duplicate_rows=n_duplicate_rows,
        unknown_smoking=unknown_smoking,
        class_counts=class_counts,
    )


def synth_records(
    class_counts: dict, seed: int = 0, subclusters: int = 6, separation: float = 1.0
) -> list[PatientRecord]:
    """Fully-populated PatientRecords with the given class distribution."""
    rows = synth_rows(class_counts, seed=seed, subclusters=subclusters, separation=separation)
    records = []
    for row in rows:
        kwargs = {}
        for name in FEATURE_NAMES:
            if name in ("residence_type", "smoking_status"):
                kwargs[name] = row[name]
            else:
                kwargs[name] = float(row[name])
        kwargs["label"] = TriageLevel.from_name(row[LABEL_COLUMN])
        records.append(PatientRecord(**kwargs))
    return records


def two_cluster_features(n: int = 200, seed: int = 0, dim: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Two well-separated Gaussian blobs in [0,1]^dim with binary labels."""
    rng = np.random.default_rng(seed)
    half = n // 2
    center_a = np.full(dim, 0.22)
    center_b = np.full(dim, 0.78)
    center_a[::2], center_b[::2] = 0.72, 0.28  # alternate so directions differ
    X = np.vstack(
        [
            center_a + rng.normal(0.0, 0.05, size=(half, dim)),
            center_b + rng.normal(0.0, 0.05, size=(n - half, dim)),
        ]
    )
    np.clip(X, 0.01, 0.99, out=X)
    y = np.concatenate([np.zeros(half, dtype=np.int64), np.ones(n - half, dtype=np.int64)])
    return X, y
