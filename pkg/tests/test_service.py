"""HTTP service contract: endpoints, error codes, queue semantics,
concurrency determinism, and golden-file response schemas.

Golden files regenerate with UPDATE_GOLDENS=1; the comparison is exact for
structure, keys, and non-float values, and 1e-9-relative for floats.
"""
import json
import os
import threading
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from triagegraph import service
from triagegraph.records import FEATURE_NAMES

GOLDEN_DIR = Path(__file__).parent / "golden"


def record_body(record, **overrides):
    body = {name: getattr(record, name) for name in FEATURE_NAMES}
    body.update(overrides)
    return body


class FixedClock:
    def __init__(self, start=1_700_000_000.0):
        self.t = start
        self.lock = threading.Lock()

    def __call__(self):
        with self.lock:
            self.t += 1.0
            return self.t


@pytest.fixture()
def app_client(service_bundle):
    app = service.create_app(
        service_bundle["bundle"], bundle_path=str(service_bundle["path"]), clock=FixedClock()
    )
    with TestClient(app) as client:
        yield client, service_bundle


def assert_matches_golden(name, payload):
    path = GOLDEN_DIR / name
    if os.environ.get("UPDATE_GOLDENS") == "1":
        GOLDEN_DIR.mkdir(exist_ok=True)
        path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    golden = json.loads(path.read_text(encoding="utf-8"))
    _compare(golden, payload, name)


def _compare(expect, got, where):
    assert type(expect) is type(got) or (isinstance(expect, (int, float)) and isinstance(got, (int, float))), where
    if isinstance(expect, dict):
        assert sorted(expect) == sorted(got), f"{where}: keys {sorted(got)} != {sorted(expect)}"
        for key in expect:
            _compare(expect[key], got[key], f"{where}.{key}")
    elif isinstance(expect, list):
        assert len(expect) == len(got), f"{where}: length"
        for i, (e, g) in enumerate(zip(expect, got)):
            _compare(e, g, f"{where}[{i}]")
    elif isinstance(expect, float):
        assert got == pytest.approx(expect, rel=1e-9, abs=1e-12), where
    else:
        assert expect == got, f"{where}: {got!r} != {expect!r}"


# ---------------------------------------------------------------------------
# happy paths + goldens
# ---------------------------------------------------------------------------

def test_healthz_golden(app_client):
    client, _ = app_client
    resp = client.get("/healthz")
    assert resp.status_code == 200
    assert_matches_golden("healthz.json", resp.json())


def test_model_card_golden(app_client):
    client, _ = app_client
    resp = client.get("/api/v1/model")
    assert resp.status_code == 200
    card = resp.json()
    assert card["preset"] in ("GCN_COS_MAN", "GCN_EUC", "GAT", "SAGE")
    assert_matches_golden("model_card.json", card)


def test_schema_endpoint(app_client):
    client, _ = app_client
    resp = client.get("/api/v1/schema")
    assert resp.status_code == 200
    assert resp.json() == service.PATIENT_SCHEMA


def test_triage_golden_and_queue_golden(app_client):
    client, fixture = app_client
    body = record_body(fixture["records"][0])
    resp = client.post("/api/v1/triage", json=body)
    assert resp.status_code == 201
    payload = resp.json()
    scores = payload["verdict"]["scores"]
    assert sum(scores.values()) == pytest.approx(1.0, abs=1e-9)
    assert payload["verdict"]["level"] in scores
    assert_matches_golden("triage_response.json", payload)

    queue_resp = client.get("/api/v1/queue")
    assert queue_resp.status_code == 200
    assert_matches_golden("queue_response.json", queue_resp.json())


def test_model_card_hash_matches_triage_hash(app_client):
    client, fixture = app_client
    card = client.get("/api/v1/model").json()
    resp = client.post("/api/v1/triage", json=record_body(fixture["records"][1]))
    assert resp.json()["model_config_hash"] == card["config_hash"]


# ---------------------------------------------------------------------------
# validation errors
# ---------------------------------------------------------------------------

def test_missing_field_names_it(app_client):
    client, fixture = app_client
    body = record_body(fixture["records"][0])
    del body["bmi"]
    resp = client.post("/api/v1/triage", json=body)
    assert resp.status_code == 400
    assert resp.json()["field"] == "bmi"


def test_unseen_category_names_field(app_client):
    client, fixture = app_client
    body = record_body(fixture["records"][0], residence_type="Suburban")
    resp = client.post("/api/v1/triage", json=body)
    assert resp.status_code == 400
    assert resp.json()["field"] == "residence_type"


def test_non_numeric_field_rejected(app_client):
    client, fixture = app_client
    body = record_body(fixture["records"][0], age="old")
    resp = client.post("/api/v1/triage", json=body)
    assert resp.status_code == 400
    assert resp.json()["field"] == "age"


def test_out_of_range_with_clamp_disabled_is_422(service_bundle):
    app = service.create_app(service_bundle["bundle"], clamp=False, clock=FixedClock())
    with TestClient(app) as client:
        body = record_body(service_bundle["records"][0], age=5000.0)
        resp = client.post("/api/v1/triage", json=body)
        assert resp.status_code == 422
        assert resp.json()["field"] == "age"
        # in-range body still accepted with clamping disabled
        ok = client.post("/api/v1/triage", json=record_body(service_bundle["records"][0]))
        assert ok.status_code == 201


def test_out_of_range_clamps_by_default(app_client):
    client, fixture = app_client
    body = record_body(fixture["records"][0], age=5000.0)
    resp = client.post("/api/v1/triage", json=body)
    assert resp.status_code == 201
    assert resp.json()["verdict"]["clamped_features"] >= 1


def test_service_without_bundle_returns_503():
    app = service.create_app(None)
    with TestClient(app) as client:
        assert client.get("/healthz").status_code == 503
        assert client.get("/api/v1/model").status_code == 503
        assert client.post("/api/v1/triage", json={}).status_code == 503


# ---------------------------------------------------------------------------
# queue semantics
# ---------------------------------------------------------------------------

def _queue_with_levels(levels):
    clock = FixedClock()
    q = service.TriageQueue()
    for lvl in levels:
        q.enqueue(patient={}, verdict={"level": lvl}, arrival=clock())
    return q


def test_queue_orders_by_urgency_then_arrival():
    q = _queue_with_levels(["Yellow", "Red"])
    ordered = [e.verdict["level"] for e in q.ordered()]
    assert ordered == ["Red", "Yellow"]

    q2 = _queue_with_levels(["Red", "Red", "Green"])
    entries = q2.ordered()
    assert [e.entry_id for e in entries[:2]] == [1, 2]  # earlier Red first


def test_queue_status_transitions():
    q = _queue_with_levels(["Red"])
    assert q.set_status(1, "in-treatment").status == "in-treatment"
    assert q.set_status(1, "discharged").status == "discharged"
    with pytest.raises(service.QueueError):
        q.set_status(1, "waiting")  # discharged -> waiting is illegal
    with pytest.raises(KeyError):
        q.set_status(99, "in-treatment")


def test_queue_api_transitions(app_client):
    client, fixture = app_client
    entry_id = client.post("/api/v1/triage", json=record_body(fixture["records"][0])).json()["entry_id"]
    ok = client.post(f"/api/v1/queue/{entry_id}/status", json={"status": "in-treatment"})
    assert ok.status_code == 200 and ok.json()["status"] == "in-treatment"
    conflict = client.post(f"/api/v1/queue/{entry_id}/status", json={"status": "waiting"})
    assert conflict.status_code == 409
    missing = client.post("/api/v1/queue/424242/status", json={"status": "in-treatment"})
    assert missing.status_code == 404
    bad = client.post(f"/api/v1/queue/{entry_id}/status", json={"status": "lost"})
    assert bad.status_code == 400


def test_event_log_replay(tmp_path, service_bundle):
    log = tmp_path / "events.jsonl"
    clock = FixedClock()
    app = service.create_app(service_bundle["bundle"], event_log=str(log), clock=clock)
    with TestClient(app) as client:
        body = record_body(service_bundle["records"][0])
        first = client.post("/api/v1/triage", json=body).json()["entry_id"]
        client.post("/api/v1/triage", json=record_body(service_bundle["records"][2]))
        client.post(f"/api/v1/queue/{first}/status", json={"status": "in-treatment"})
        before = client.get("/api/v1/queue").json()

    revived = service.create_app(service_bundle["bundle"], event_log=str(log), clock=clock)
    with TestClient(revived) as client:
        after = client.get("/api/v1/queue").json()
        assert after == before
        # ids continue monotonically after replay
        third = client.post("/api/v1/triage", json=record_body(service_bundle["records"][4]))
        assert third.json()["entry_id"] == 3


# ---------------------------------------------------------------------------
# concurrency determinism
# ---------------------------------------------------------------------------

def test_100_concurrent_identical_triage_requests_byte_identical(app_client):
    client, fixture = app_client
    body = record_body(fixture["records"][3])
    results = [None] * 100
    errors = []

    def fire(i):
        try:
            resp = client.post("/api/v1/triage", json=body)
            assert resp.status_code == 201
            results[i] = resp.json()
        except Exception as exc:  # surface thread failures in the main thread
            errors.append(exc)

    threads = [threading.Thread(target=fire, args=(i,)) for i in range(100)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    canonical = {json.dumps(r["verdict"], sort_keys=True, separators=(",", ":")) for r in results}
    assert len(canonical) == 1  # byte-identical verdict bodies
    assert len({r["entry_id"] for r in results}) == 100  # ids unique
    assert len(client.get("/api/v1/queue").json()["entries"]) == 100


# ---------------------------------------------------------------------------
# static console hosting
# ---------------------------------------------------------------------------

def test_static_dir_served_when_present(tmp_path, service_bundle):
    static = tmp_path / "dist"
    static.mkdir()
    (static / "index.html").write_text("<html><body>console</body></html>", encoding="utf-8")
    app = service.create_app(service_bundle["bundle"], static_dir=str(static))
    with TestClient(app) as client:
        resp = client.get("/")
        assert resp.status_code == 200
        assert "console" in resp.text


def test_placeholder_root_without_console(service_bundle):
    app = service.create_app(service_bundle["bundle"])
    with TestClient(app) as client:
        resp = client.get("/")
        assert resp.status_code == 200
        assert resp.json()["api"] == "/api/v1"


def test_frontend_schema_contract():
    """The console mirrors the service schema via a checked-in copy."""
    schema_path = Path(__file__).parent.parent / "frontend" / "src" / "schema.json"
    if not schema_path.exists():
        pytest.skip("console not built in this checkout")
    assert json.loads(schema_path.read_text(encoding="utf-8")) == service.PATIENT_SCHEMA
