"""HTTP triage service: inductive classification plus a priority queue.

The classification path is read-only against the loaded bundle (each
request gets its own ephemeral graph extension), so concurrent triage
requests cannot affect each other. All queue mutations serialize through
one lock and append to a JSON-lines event log for crash recovery.
"""
from __future__ import annotations

import json
import math
import os
import threading
import time
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, Request, Response

from . import gnn
from .evalmetrics import config_hash
from .ingest import UnseenCategoryError
from .records import (
    FEATURE_NAMES,
    NUMERIC_FEATURES,
    RESIDENCE_VALUES,
    SMOKING_UNKNOWN,
    SMOKING_VALUES,
    PatientRecord,
    TriageLevel,
)
from .simgraph import SimgraphError

QUEUE_STATUSES = ("waiting", "in-treatment", "discharged")
_TRANSITIONS = {"waiting": "in-treatment", "in-treatment": "discharged"}

# Served to clients (and mirrored by the console) so that client-side
# validation uses exactly the field names and enumerations enforced here.
PATIENT_SCHEMA = {
    "features": list(FEATURE_NAMES),
    "numeric_features": list(NUMERIC_FEATURES),
    "categorical_values": {
        "residence_type": list(RESIDENCE_VALUES),
        "smoking_status": list(SMOKING_VALUES) + [SMOKING_UNKNOWN],
    },
    "levels": [level.display for level in TriageLevel],
    "statuses": list(QUEUE_STATUSES),
}


class QueueError(Exception):
    pass


@dataclass
class QueueEntry:
    entry_id: int
    patient: dict
    verdict: dict
    arrival: float
    status: str = "waiting"

    def sort_key(self) -> tuple:
        # urgency rank first (Red=0 most urgent), then arrival, then id
        return (PATIENT_SCHEMA["levels"].index(self.verdict["level"]), self.arrival, self.entry_id)

    def to_dict(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "patient": self.patient,
            "verdict": self.verdict,
            "arrival": self.arrival,
            "status": self.status,
        }


class TriageQueue:
    """In-memory priority queue with a single-writer event log."""

    def __init__(self, event_log: str | None = None):
        self._lock = threading.Lock()
        self._entries: dict[int, QueueEntry] = {}
        self._next_id = 1
        self._event_log = event_log
        if event_log and os.path.exists(event_log):
            self._replay(event_log)

    def _replay(self, path: str) -> None:
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                event = json.loads(line)
                if event["op"] == "enqueue":
                    entry = QueueEntry(**event["entry"])
                    self._entries[entry.entry_id] = entry
                    self._next_id = max(self._next_id, entry.entry_id + 1)
                elif event["op"] == "status":
                    self._entries[event["entry_id"]].status = event["status"]

    def _append_event(self, event: dict) -> None:
        if not self._event_log:
            return
        with open(self._event_log, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    def enqueue(self, patient: dict, verdict: dict, arrival: float) -> QueueEntry:
        with self._lock:
            entry = QueueEntry(
                entry_id=self._next_id, patient=patient, verdict=verdict, arrival=arrival
            )
            self._next_id += 1
            self._entries[entry.entry_id] = entry
            self._append_event({"op": "enqueue", "entry": entry.to_dict()})
            return entry

    def ordered(self) -> list:
        with self._lock:
            return sorted(self._entries.values(), key=QueueEntry.sort_key)

    def set_status(self, entry_id: int, status: str) -> QueueEntry:
        if status not in QUEUE_STATUSES:
            raise QueueError(f"unknown status {status!r}")
        with self._lock:
            if entry_id not in self._entries:
                raise KeyError(entry_id)
            entry = self._entries[entry_id]
            if _TRANSITIONS.get(entry.status) != status:
                raise QueueError(f"illegal transition {entry.status} -> {status}")
            entry.status = status
            self._append_event({"op": "status", "entry_id": entry_id, "status": status})
            return entry


# ---------------------------------------------------------------------------
# request validation
# ---------------------------------------------------------------------------

class FieldError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(message)
        self.field_name = field_name


def parse_patient(body) -> PatientRecord:
    if not isinstance(body, dict):
        raise FieldError("body", "request body must be a JSON object")
    values = {}
    for name in NUMERIC_FEATURES:
        if name not in body:
            raise FieldError(name, f"missing field {name!r}")
        value = body[name]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise FieldError(name, f"field {name!r} must be a number")
        if not math.isfinite(float(value)):
            raise FieldError(name, f"field {name!r} must be finite")
        values[name] = float(value)
    for name in ("residence_type", "smoking_status"):
        if name not in body:
            raise FieldError(name, f"missing field {name!r}")
        if not isinstance(body[name], str):
            raise FieldError(name, f"field {name!r} must be a string")
        values[name] = body[name]
    record = PatientRecord(**values)
    try:
        record.validate()
    except ValueError as exc:
        for name in FEATURE_NAMES:
            if f"{name!r}" in str(exc):
                raise FieldError(name, str(exc)) from exc
        raise FieldError("body", str(exc)) from exc
    return record


# ---------------------------------------------------------------------------
# application
# ---------------------------------------------------------------------------

def _json_response(payload, status_code: int = 200) -> Response:
    return Response(
        content=json.dumps(payload, sort_keys=True, separators=(",", ":")),
        status_code=status_code,
        media_type="application/json",
    )


def _error(status_code: int, message: str, field_name: str | None = None) -> Response:
    payload = {"error": message}
    if field_name is not None:
        payload["field"] = field_name
    return _json_response(payload, status_code)


def create_app(
    bundle: gnn.ModelBundle | None,
    *,
    bundle_path: str | None = None,
    clamp: bool = True,
    static_dir: str | None = None,
    event_log: str | None = None,
    dev_cors: bool = False,
    clock=time.time,
) -> FastAPI:
    app = FastAPI(title="triagegraph service", docs_url=None, redoc_url=None)
    queue = TriageQueue(event_log)
    model_hash = ""
    if bundle is not None:
        # CLI-trained bundles carry their run hash; fixtures fall back to
        # hashing the training configuration
        model_hash = bundle.train_config.get("run_hash") or config_hash(bundle.train_config)
    checksum = ""
    if bundle_path:
        from .bundle import bundle_checksum

        checksum = bundle_checksum(bundle_path)

    if dev_cors:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(
            CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
        )

    app.state.bundle = bundle
    app.state.queue = queue

    @app.get("/healthz")
    def healthz():
        if bundle is None:
            return _error(503, "model bundle not loaded")
        return _json_response({"status": "ok", "bundle_checksum": checksum, "config_hash": model_hash})

    @app.get("/api/v1/schema")
    def schema():
        return _json_response(PATIENT_SCHEMA)

    @app.get("/api/v1/model")
    def model_card():
        if bundle is None:
            return _error(503, "model bundle not loaded")
        history = bundle.history
        summary = {
            "final_train_loss": history["train_loss"][-1] if history.get("train_loss") else None,
            "best_eval_accuracy": max(history["eval_accuracy"]) if history.get("eval_accuracy") else None,
            "epochs": bundle.train_config.get("epochs"),
        }
        return _json_response(
            {
                "preset": bundle.spec.preset,
                "metric": bundle.graph.metric.value,
                "threshold": bundle.graph.threshold,
                "config_hash": model_hash,
                "nodes": bundle.graph.n,
                "undirected_edges": bundle.graph.n_edges,
                "training": summary,
                "label_codes": bundle.label_codes,
            }
        )

    @app.post("/api/v1/triage")
    async def triage(request: Request):
        if bundle is None:
            return _error(503, "model bundle not loaded")
        try:
            body = await request.json()
        except Exception:
            return _error(400, "request body is not valid JSON", "body")
        try:
            record = parse_patient(body)
        except FieldError as exc:
            return _error(400, str(exc), exc.field_name)

        if not clamp:
            raw = np.array([getattr(record, n) for n in NUMERIC_FEATURES])
            lo = bundle.scaler.col_min[: len(NUMERIC_FEATURES)]
            hi = bundle.scaler.col_max[: len(NUMERIC_FEATURES)]
            bad = np.nonzero((raw < lo) | (raw > hi))[0]
            if bad.size:
                name = NUMERIC_FEATURES[int(bad[0])]
                return _error(422, f"field {name!r} outside the fitted range and clamping is disabled", name)

        try:
            verdict = gnn.predict_inductive(bundle, record)
        except UnseenCategoryError as exc:
            return _error(400, str(exc), exc.feature)
        except SimgraphError as exc:
            return _error(422, str(exc))

        entry = queue.enqueue(
            patient={name: getattr(record, name) for name in FEATURE_NAMES},
            verdict=verdict.to_dict(),
            arrival=float(clock()),
        )
        return _json_response(
            {"entry_id": entry.entry_id, "verdict": entry.verdict, "model_config_hash": model_hash},
            status_code=201,
        )

    @app.get("/api/v1/queue")
    def queue_list():
        return _json_response({"entries": [e.to_dict() for e in queue.ordered()]})

    @app.post("/api/v1/queue/{entry_id}/status")
    async def queue_status(entry_id: int, request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(400, "request body is not valid JSON", "body")
        status = body.get("status") if isinstance(body, dict) else None
        if status not in QUEUE_STATUSES:
            return _error(400, f"status must be one of {list(QUEUE_STATUSES)}", "status")
        try:
            entry = queue.set_status(entry_id, status)
        except KeyError:
            return _error(404, f"no queue entry {entry_id}")
        except QueueError as exc:
            return _error(409, str(exc))
        return _json_response(entry.to_dict())

    if static_dir and os.path.isdir(static_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="console")
    else:

        @app.get("/")
        def index():
            return _json_response(
                {"service": "triagegraph", "console": "not built", "api": "/api/v1"}
            )

    return app
