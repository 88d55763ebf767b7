"""Dataset loading and the five-step preprocessing pipeline.

Steps, in fixed order: null/duplicate removal, smoking-status mode
imputation, label encoding of the categorical features, SMOTE class
balancing, min-max scaling to [0, 1]. Stratified train/test/eval splitting
lives here too so every model consumes identical masks.
"""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .records import (
    CATEGORICAL_FEATURES,
    FEATURE_NAMES,
    LABEL_CODES,
    LABEL_COLUMN,
    NUMERIC_FEATURES,
    SMOKING_UNKNOWN,
    SMOKING_VALUES,
    PatientRecord,
    TriageLevel,
)


class IngestError(ValueError):
    """Base class for dataset loading/preprocessing failures."""


class SchemaError(IngestError):
    def __init__(self, column: str):
        super().__init__(f"missing required column: {column!r}")
        self.column = column


class RowError(IngestError):
    def __init__(self, row_index: int, message: str):
        super().__init__(f"row {row_index}: {message}")
        self.row_index = row_index


class UnseenCategoryError(IngestError):
    def __init__(self, feature: str, value: str):
        super().__init__(f"unseen category for {feature!r}: {value!r}")
        self.feature = feature
        self.value = value


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------

def load_dataset(path, header_map=None, delimiter=",") -> list[PatientRecord]:
    """Read a delimited patient file into records, preserving row order.

    ``header_map`` translates raw file headers to the canonical feature
    names; canonical headers pass through unmapped. Empty cells become None
    fields (removed later by :func:`clean`); unparseable numeric cells raise
    :class:`RowError` with the 0-based data row index.
    """
    header_map = dict(header_map or {})
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            raw_header = next(reader)
        except StopIteration:
            raise SchemaError(FEATURE_NAMES[0]) from None
        columns = [header_map.get(h.strip(), h.strip()) for h in raw_header]
        position = {name: i for i, name in enumerate(columns)}
        for name in FEATURE_NAMES + (LABEL_COLUMN,):
            if name not in position:
                raise SchemaError(name)
        records = []
        for row_index, row in enumerate(reader):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(columns):
                raise RowError(row_index, f"expected {len(columns)} cells, got {len(row)}")
            records.append(_parse_row(row, position, row_index))
    return records


def _parse_row(row, position, row_index) -> PatientRecord:
    values = {}
    for name in NUMERIC_FEATURES:
        cell = row[position[name]].strip()
        if cell == "":
            values[name] = None
            continue
        try:
            values[name] = float(cell)
        except ValueError:
            raise RowError(row_index, f"unparseable numeric cell for {name!r}: {cell!r}") from None
    for name in CATEGORICAL_FEATURES:
        cell = row[position[name]].strip()
        values[name] = cell if cell else None
    label_cell = row[position[LABEL_COLUMN]].strip()
    if label_cell:
        try:
            values["label"] = TriageLevel.from_name(label_cell)
        except ValueError:
            raise RowError(row_index, f"unknown triage label: {label_cell!r}") from None
    else:
        values["label"] = None
    return PatientRecord(**values)


# ---------------------------------------------------------------------------
# step 1: nulls + duplicates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CleanStats:
    dropped_null: int
    dropped_duplicate: int


def clean(records: Sequence[PatientRecord]) -> tuple[list[PatientRecord], CleanStats]:
    """Drop records with any null field, then exact duplicates (keep first)."""
    non_null = [r for r in records if not r.has_null()]
    seen = set()
    out = []
    for r in non_null:
        key = r.identity_key()
        if key in seen:
            continue
        seen.add(key)
        out.append(r)
    return out, CleanStats(
        dropped_null=len(records) - len(non_null),
        dropped_duplicate=len(non_null) - len(out),
    )


# ---------------------------------------------------------------------------
# step 2: smoking-status imputation
# ---------------------------------------------------------------------------

def impute_smoking_unknown(records: Sequence[PatientRecord]) -> tuple[list[PatientRecord], int, str]:
    """Rewrite 'Unknown' smoking status to the mode of the known values.

    Mode ties break by the fixed value order never < previously < smoke.
    """
    counts = Counter(r.smoking_status for r in records if r.smoking_status != SMOKING_UNKNOWN)
    if not counts:
        raise IngestError("cannot impute smoking status: every value is Unknown")
    best = max(counts.values())
    mode = next(v for v in SMOKING_VALUES if counts.get(v) == best)
    out = []
    imputed = 0
    for r in records:
        if r.smoking_status == SMOKING_UNKNOWN:
            out.append(r.with_smoking(mode))
            imputed += 1
        else:
            out.append(r)
    return out, imputed, mode


# ---------------------------------------------------------------------------
# step 3: label encoding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EncoderState:
    """Fitted value→code maps for the two categorical features and the label.

    Feature codes are assigned in lexicographic value order; the label map
    is the fixed triage encoding (Red=0 … Green=3).
    """

    residence_codes: dict
    smoking_codes: dict
    label_codes: dict = field(default_factory=lambda: dict(LABEL_CODES))

    def codes_for(self, feature: str) -> dict:
        if feature == "residence_type":
            return self.residence_codes
        if feature == "smoking_status":
            return self.smoking_codes
        raise KeyError(feature)

    def encode_value(self, feature: str, value) -> int:
        codes = self.codes_for(feature)
        if value not in codes:
            raise UnseenCategoryError(feature, value)
        return codes[value]

    def decode_value(self, feature: str, code: int):
        for value, c in self.codes_for(feature).items():
            if c == code:
                return value
        raise KeyError(f"no {feature} value with code {code}")

    def to_dict(self) -> dict:
        return {
            "residence_codes": dict(self.residence_codes),
            "smoking_codes": dict(self.smoking_codes),
            "label_codes": dict(self.label_codes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderState":
        return cls(
            residence_codes=dict(d["residence_codes"]),
            smoking_codes=dict(d["smoking_codes"]),
            label_codes={k: int(v) for k, v in d["label_codes"].items()},
        )


def fit_encoders(records: Sequence[PatientRecord]) -> EncoderState:
    residence = sorted({r.residence_type for r in records})
    smoking = sorted({r.smoking_status for r in records})
    return EncoderState(
        residence_codes={v: i for i, v in enumerate(residence)},
        smoking_codes={v: i for i, v in enumerate(smoking)},
    )


def encode_record(record: PatientRecord, enc: EncoderState) -> np.ndarray:
    row = np.empty(len(FEATURE_NAMES))
    for i, name in enumerate(NUMERIC_FEATURES):
        row[i] = getattr(record, name)
    row[14] = enc.encode_value("residence_type", record.residence_type)
    row[15] = enc.encode_value("smoking_status", record.smoking_status)
    return row


def apply_encoders(records: Sequence[PatientRecord], enc: EncoderState) -> tuple[np.ndarray, np.ndarray]:
    """Encode records to a numeric matrix and a label vector (-1 = missing)."""
    X = np.empty((len(records), len(FEATURE_NAMES)))
    y = np.full(len(records), -1, dtype=np.int64)
    for i, r in enumerate(records):
        X[i] = encode_record(r, enc)
        if r.label is not None:
            y[i] = int(r.label)
    return X, y


# ---------------------------------------------------------------------------
# feature matrix + step 4: SMOTE
# ---------------------------------------------------------------------------

@dataclass
class FeatureMatrix:
    """Row-major design matrix with aligned labels and provenance flags."""

    X: np.ndarray
    y: np.ndarray
    synthetic: np.ndarray

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.int64)
        self.synthetic = np.ascontiguousarray(self.synthetic, dtype=bool)
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],) or self.synthetic.shape != self.y.shape:
            raise IngestError("misaligned feature matrix fields")
        if not np.all(np.isfinite(self.X)):
            raise IngestError("feature matrix contains non-finite values")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @classmethod
    def from_arrays(cls, X, y) -> "FeatureMatrix":
        return cls(X=X, y=y, synthetic=np.zeros(len(y), dtype=bool))

    def class_counts(self) -> dict:
        counts = {}
        for level in TriageLevel:
            counts[level.display] = int(np.sum(self.y == int(level)))
        return counts


def smote_oversample(matrix: FeatureMatrix, k: int = 5, seed: int = 0) -> FeatureMatrix:
    """Balance every class up to the majority count with SMOTE interpolation.

    Each synthetic row is x + u * (x_nn - x) for a same-class row x, one of
    its k nearest same-class neighbors x_nn (Euclidean), and u ~ U[0, 1).
    Original rows are preserved unchanged ahead of the synthetic block.
    """
    if np.any(matrix.y < 0):
        raise IngestError("SMOTE requires labels on every row")
    rng = np.random.default_rng(seed)
    present = [int(c) for c in np.unique(matrix.y)]
    counts = {c: int(np.sum(matrix.y == c)) for c in present}
    target = max(counts.values())
    new_X = [matrix.X]
    new_y = [matrix.y]
    new_syn = [matrix.synthetic]
    for c in present:
        n_c = counts[c]
        if n_c == target:
            continue
        if n_c < 2:
            raise IngestError(f"class {c} has fewer than 2 members; cannot oversample")
        if k >= n_c:
            raise IngestError(f"SMOTE k={k} must be smaller than class size {n_c}")
        class_idx = np.nonzero(matrix.y == c)[0]
        Xc = matrix.X[class_idx]
        neighbors = kernels.knn_indices(Xc, k)
        need = target - n_c
        syn = np.empty((need, matrix.X.shape[1]))
        for t in range(need):
            base = t % n_c
            pick = neighbors[base, rng.integers(0, k)]
            u = rng.random()
            syn[t] = Xc[base] + u * (Xc[pick] - Xc[base])
        new_X.append(syn)
        new_y.append(np.full(need, c, dtype=np.int64))
        new_syn.append(np.ones(need, dtype=bool))
    return FeatureMatrix(
        X=np.vstack(new_X), y=np.concatenate(new_y), synthetic=np.concatenate(new_syn)
    )


# ---------------------------------------------------------------------------
# step 5: min-max scaling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalerState:
    """Per-column fitted min/max; never applied to the label."""

    col_min: np.ndarray
    col_max: np.ndarray

    def transform(self, X: np.ndarray) -> tuple[np.ndarray, int]:
        """Scale to [0,1]; out-of-range values clamp and are tallied."""
        span = self.col_max - self.col_min
        safe = np.where(span > 0, span, 1.0)
        scaled = (X - self.col_min) / safe
        scaled[:, span == 0] = 0.0
        clamped = int(np.sum((scaled < 0.0) | (scaled > 1.0)))
        np.clip(scaled, 0.0, 1.0, out=scaled)
        return scaled, clamped

    def transform_vector(self, x: np.ndarray) -> tuple[np.ndarray, int]:
        scaled, clamped = self.transform(x[None, :])
        return scaled[0], clamped

    def to_dict(self) -> dict:
        return {"col_min": self.col_min.tolist(), "col_max": self.col_max.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerState":
        return cls(col_min=np.asarray(d["col_min"]), col_max=np.asarray(d["col_max"]))


def fit_scaler(matrix: FeatureMatrix) -> ScalerState:
    return ScalerState(col_min=matrix.X.min(axis=0), col_max=matrix.X.max(axis=0))


def apply_scaler(matrix: FeatureMatrix, scaler: ScalerState) -> tuple[FeatureMatrix, int]:
    scaled, clamped = scaler.transform(matrix.X)
    return FeatureMatrix(X=scaled, y=matrix.y, synthetic=matrix.synthetic), clamped


# ---------------------------------------------------------------------------
# stratified splitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitMasks:
    train: np.ndarray
    test: np.ndarray
    eval_: np.ndarray

    def as_dict(self) -> dict:
        return {"train": self.train, "test": self.test, "eval": self.eval_}


def _apportion(quotas: np.ndarray, total: int) -> np.ndarray:
    """Largest-remainder apportionment; ties go to the lower class code."""
    floors = np.floor(quotas).astype(np.int64)
    remaining = total - int(floors.sum())
    if remaining < 0:
        raise IngestError("apportionment underflow")
    fractions = quotas - floors
    order = np.lexsort((np.arange(len(quotas)), -fractions))
    out = floors.copy()
    for i in range(remaining):
        out[order[i % len(quotas)]] += 1
    return out


def split_stratified(matrix: FeatureMatrix, test_frac: float, eval_frac_of_test: float, seed: int = 0) -> SplitMasks:
    """Disjoint train/test/eval masks covering all rows, stratified per class.

    The eval partition is carved out of the test allocation, mirroring the
    evaluation protocol of the training regime (30% test, 30% of it eval).
    """
    if not (0.0 < test_frac < 1.0) or not (0.0 < eval_frac_of_test < 1.0):
        raise IngestError("test_frac and eval_frac_of_test must be in (0,1)")
    if np.any(matrix.y < 0):
        raise IngestError("splitting requires labels on every row")
    n = matrix.n
    rng = np.random.default_rng(seed)
    classes = [int(c) for c in np.unique(matrix.y)]
    class_sizes = np.array([int(np.sum(matrix.y == c)) for c in classes], dtype=np.float64)

    n_test = int(np.floor(test_frac * n + 0.5))
    test_counts = _apportion(test_frac * class_sizes, n_test)
    n_eval = int(np.floor(eval_frac_of_test * n_test + 0.5))
    eval_counts = _apportion(eval_frac_of_test * test_counts, n_eval)

    train = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    eval_ = np.zeros(n, dtype=bool)
    for ci, c in enumerate(classes):
        idx = np.nonzero(matrix.y == c)[0]
        rng.shuffle(idx)
        t_c, e_c = int(test_counts[ci]), int(eval_counts[ci])
        n_train = len(idx) - t_c
        n_test_only = t_c - e_c
        if n_train <= 0 or n_test_only <= 0 or e_c <= 0:
            raise IngestError(f"class {c} too small to appear in every partition")
        train[idx[:n_train]] = True
        test[idx[n_train : n_train + n_test_only]] = True
        eval_[idx[n_train + n_test_only :]] = True
    return SplitMasks(train=train, test=test, eval_=eval_)


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------

@dataclass
class IngestReport:
    rows_in: int = 0
    dropped_null: int = 0
    dropped_duplicate: int = 0
    rows_clean: int = 0
    unknown_imputed: int = 0
    smoking_mode: str = ""
    class_counts_clean: dict = field(default_factory=dict)
    class_counts_final: dict = field(default_factory=dict)
    scaler_clamped: int = 0
    smote_scope: str = "all"
    smote_k: int = 5
    seed: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class PreprocessResult:
    matrix: FeatureMatrix
    masks: SplitMasks
    encoders: EncoderState
    scaler: ScalerState
    report: IngestReport


def run_preprocess(
    records: Sequence[PatientRecord],
    *,
    smote_k: int = 5,
    smote_scope: str = "all",
    test_frac: float = 0.3,
    eval_frac_of_test: float = 0.3,
    seed: int = 0,
) -> PreprocessResult:
    """Execute the five preprocessing steps and split, in the fixed order.

    ``smote_scope='all'`` oversamples before splitting (faithful default);
    ``'train_only'`` splits first and oversamples/fits the scaler on the
    train partition only, to avoid evaluation leakage.
    """
    if smote_scope not in ("all", "train_only"):
        raise IngestError(f"smote_scope must be all|train_only, got {smote_scope!r}")
    report = IngestReport(rows_in=len(records), smote_scope=smote_scope, smote_k=smote_k, seed=seed)

    cleaned, stats = clean(records)
    report.dropped_null = stats.dropped_null
    report.dropped_duplicate = stats.dropped_duplicate
    report.rows_clean = len(cleaned)

    imputed, n_imputed, mode = impute_smoking_unknown(cleaned)
    report.unknown_imputed = n_imputed
    report.smoking_mode = mode

    encoders = fit_encoders(imputed)
    X, y = apply_encoders(imputed, encoders)
    if np.any(y < 0):
        raise IngestError("preprocessing requires a label on every row")
    matrix = FeatureMatrix.from_arrays(X, y)
    report.class_counts_clean = matrix.class_counts()

    if smote_scope == "all":
        matrix = smote_oversample(matrix, k=smote_k, seed=seed)
        scaler = fit_scaler(matrix)
        matrix, clamped = apply_scaler(matrix, scaler)
        masks = split_stratified(matrix, test_frac, eval_frac_of_test, seed=seed)
    else:
        masks0 = split_stratified(matrix, test_frac, eval_frac_of_test, seed=seed)
        train_matrix = FeatureMatrix(
            X=matrix.X[masks0.train], y=matrix.y[masks0.train], synthetic=matrix.synthetic[masks0.train]
        )
        balanced = smote_oversample(train_matrix, k=smote_k, seed=seed)
        n_extra = balanced.n - train_matrix.n
        matrix = FeatureMatrix(
            X=np.vstack([matrix.X, balanced.X[train_matrix.n :]]),
            y=np.concatenate([matrix.y, balanced.y[train_matrix.n :]]),
            synthetic=np.concatenate([matrix.synthetic, np.ones(n_extra, dtype=bool)]),
        )
        scaler = ScalerState(
            col_min=balanced.X.min(axis=0),
            col_max=balanced.X.max(axis=0),
        )
        matrix, clamped = apply_scaler(matrix, scaler)
        masks = SplitMasks(
            train=np.concatenate([masks0.train, np.ones(n_extra, dtype=bool)]),
            test=np.concatenate([masks0.test, np.zeros(n_extra, dtype=bool)]),
            eval_=np.concatenate([masks0.eval_, np.zeros(n_extra, dtype=bool)]),
        )

    report.scaler_clamped = clamped
    report.class_counts_final = matrix.class_counts()
    return PreprocessResult(matrix=matrix, masks=masks, encoders=encoders, scaler=scaler, report=report)
