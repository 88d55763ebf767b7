"""Classification metrics and versioned run reports."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

REPORT_SCHEMA_VERSION = 1


class ReportError(ValueError):
    pass


class ReportVersionError(ReportError):
    def __init__(self, found, expected):
        super().__init__(f"report schema version {found} not supported (expected <= {expected})")
        self.found = found
        self.expected = expected


@dataclass(frozen=True)
class Metrics:
    """Accuracy, confusion matrix (rows=true, cols=pred) and per-class P/R/F1.

    Undefined precision/recall (zero denominator) is reported as 0 and the
    affected classes are flagged.
    """

    accuracy: float
    confusion: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    zero_division_classes: tuple

    @property
    def macro_f1(self) -> float:
        return float(self.f1.mean())

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "confusion": self.confusion.tolist(),
            "precision": self.precision.tolist(),
            "recall": self.recall.tolist(),
            "f1": self.f1.tolist(),
            "support": self.support.tolist(),
            "macro_f1": self.macro_f1,
            "zero_division_classes": list(self.zero_division_classes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Metrics":
        return cls(
            accuracy=float(d["accuracy"]),
            confusion=np.asarray(d["confusion"], dtype=np.int64),
            precision=np.asarray(d["precision"]),
            recall=np.asarray(d["recall"]),
            f1=np.asarray(d["f1"]),
            support=np.asarray(d["support"], dtype=np.int64),
            zero_division_classes=tuple(d["zero_division_classes"]),
        )


def compute_metrics(y_true, y_pred, n_classes: int = 4) -> Metrics:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ReportError("y_true and y_pred must be 1-D and equally long")
    if y_true.size == 0:
        raise ReportError("cannot compute metrics on an empty sample")
    if y_true.min() < 0 or y_true.max() >= n_classes or y_pred.min() < 0 or y_pred.max() >= n_classes:
        raise ReportError("labels out of class range")

    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (y_true, y_pred), 1)
    support = confusion.sum(axis=1)
    predicted = confusion.sum(axis=0)
    diag = np.diag(confusion).astype(np.float64)

    flagged = []
    precision = np.zeros(n_classes)
    recall = np.zeros(n_classes)
    for c in range(n_classes):
        if predicted[c] > 0:
            precision[c] = diag[c] / predicted[c]
        else:
            flagged.append(c)
        if support[c] > 0:
            recall[c] = diag[c] / support[c]
        elif c not in flagged:
            flagged.append(c)
    denom = precision + recall
    f1 = np.where(denom > 0, 2.0 * precision * recall / np.where(denom > 0, denom, 1.0), 0.0)

    return Metrics(
        accuracy=float(diag.sum() / y_true.size),
        confusion=confusion,
        precision=precision,
        recall=recall,
        f1=f1,
        support=support,
        zero_division_classes=tuple(sorted(flagged)),
    )


def config_hash(config: dict) -> str:
    """Stable hex digest of a JSON-serializable configuration."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


@dataclass
class RunReport:
    model_id: str
    graph_id: str
    config_hash: str
    config: dict = field(default_factory=dict)
    epoch_series: dict = field(default_factory=dict)
    split_metrics: dict = field(default_factory=dict)  # split -> Metrics
    ingest_tallies: dict = field(default_factory=dict)
    started_at: str = ""
    finished_at: str = ""
    error: str = ""

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "model_id": self.model_id,
            "graph_id": self.graph_id,
            "config_hash": self.config_hash,
            "config": self.config,
            "epoch_series": self.epoch_series,
            "split_metrics": {k: m.to_dict() for k, m in self.split_metrics.items()},
            "ingest_tallies": self.ingest_tallies,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        version = d.get("schema_version")
        if not isinstance(version, int) or version > REPORT_SCHEMA_VERSION:
            raise ReportVersionError(version, REPORT_SCHEMA_VERSION)
        return cls(
            model_id=d["model_id"],
            graph_id=d["graph_id"],
            config_hash=d["config_hash"],
            config=d.get("config", {}),
            epoch_series=d.get("epoch_series", {}),
            split_metrics={k: Metrics.from_dict(m) for k, m in d.get("split_metrics", {}).items()},
            ingest_tallies=d.get("ingest_tallies", {}),
            started_at=d.get("started_at", ""),
            finished_at=d.get("finished_at", ""),
            error=d.get("error", ""),
        )


def write_report(report: RunReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_report(path) -> RunReport:
    with open(path, "r", encoding="utf-8") as fh:
        return RunReport.from_dict(json.load(fh))


def summary_table(reports: list, delimiter: str = "\t") -> str:
    """Delimited model-comparison table sorted by test accuracy (desc)."""
    header = delimiter.join(["model", "graph", "test_accuracy", "eval_accuracy", "train_accuracy", "macro_f1", "error"])
    rows = []
    for r in reports:
        test = r.split_metrics.get("test")
        eval_m = r.split_metrics.get("eval")
        train = r.split_metrics.get("train")
        rows.append(
            (
                -(test.accuracy if test else -1.0),
                delimiter.join(
                    [
                        r.model_id,
                        r.graph_id,
                        f"{test.accuracy:.4f}" if test else "-",
                        f"{eval_m.accuracy:.4f}" if eval_m else "-",
                        f"{train.accuracy:.4f}" if train else "-",
                        f"{test.macro_f1:.4f}" if test else "-",
                        r.error or "-",
                    ]
                ),
            )
        )
    rows.sort(key=lambda t: t[0])
    return "\n".join([header] + [row for _, row in rows]) + "\n"
