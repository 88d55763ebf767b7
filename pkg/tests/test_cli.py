"""CLI stages: artifact caching, rerun determinism, exit codes, the grid."""
import hashlib
import json
from pathlib import Path

import pytest

from triagegraph import cli, datagen
from triagegraph.records import FEATURE_NAMES, LABEL_COLUMN

MICRO_COUNTS = {"Red": 18, "Orange": 18, "Yellow": 30, "Green": 24}


@pytest.fixture(scope="module")
def micro_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "micro.csv"
    datagen.synth_patient_dataset(
        path,
        class_counts=MICRO_COUNTS,
        unknown_smoking=25,
        n_null_rows=6,
        n_duplicate_rows=3,
        seed=13,
    )
    return path


def _run(argv):
    return cli.main([str(a) for a in argv])


def _tree_digest(root: Path) -> str:
    h = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.is_file():
            h.update(path.relative_to(root).as_posix().encode())
            h.update(path.read_bytes())
    return h.hexdigest()


def test_preprocess_reports_counts_and_reruns_identically(micro_csv, tmp_path, capsys):
    out = tmp_path / "out"
    assert _run(["preprocess", "--dataset", micro_csv, "--out-dir", out, "--seed", 1]) == cli.EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    report = payload["report"]
    assert report["rows_in"] == 90 + 6 + 3
    assert report["dropped_null"] == 6
    assert report["dropped_duplicate"] == 3
    assert report["rows_clean"] == 90
    assert report["unknown_imputed"] == 25
    first = _tree_digest(out)

    assert _run(["preprocess", "--dataset", micro_csv, "--out-dir", out, "--seed", 1]) == cli.EXIT_OK
    assert _tree_digest(out) == first  # cache hit, bit-identical artifacts


def test_preprocess_missing_column_exits_3(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    header = [c for c in FEATURE_NAMES if c != "insulin"] + [LABEL_COLUMN]
    bad.write_text(",".join(header) + "\n", encoding="utf-8")
    code = _run(["preprocess", "--dataset", bad, "--out-dir", tmp_path / "o"])
    assert code == cli.EXIT_DATA
    assert "insulin" in capsys.readouterr().err


def test_missing_dataset_exits_2(tmp_path, capsys):
    assert _run(["preprocess", "--dataset", tmp_path / "nope.csv", "--out-dir", tmp_path]) == cli.EXIT_CONFIG


def test_unknown_config_key_rejected(tmp_path, micro_csv):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"dataset": str(micro_csv), "bogus_key": 1}), encoding="utf-8")
    assert _run(["preprocess", "--config", cfg, "--out-dir", tmp_path / "o"]) == cli.EXIT_CONFIG


def test_graph_command_caches(micro_csv, tmp_path, capsys):
    out = tmp_path / "out"
    assert _run(["graph", "--dataset", micro_csv, "--out-dir", out, "--metric", "euclidean"]) == cli.EXIT_OK
    first = json.loads(capsys.readouterr().out)
    assert first["n"] == 120  # 4 x 30 after SMOTE
    assert first["undirected_edges"] > 0
    assert _run(["graph", "--dataset", micro_csv, "--out-dir", out, "--metric", "euclidean"]) == cli.EXIT_OK
    second = json.loads(capsys.readouterr().out)
    assert first == second


def test_train_then_eval(micro_csv, tmp_path, capsys):
    out = tmp_path / "out"
    code = _run([
        "train", "--dataset", micro_csv, "--out-dir", out,
        "--metric", "cosine", "--preset", "GCN_EUC", "--epochs", 8,
    ])
    assert code == cli.EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    bundle_path = payload["bundle"]
    assert Path(bundle_path).exists()
    assert 0.0 <= payload["test_accuracy"] <= 1.0

    code = _run(["eval", "--dataset", micro_csv, "--out-dir", out, "--bundle", bundle_path])
    assert code == cli.EXIT_OK
    metrics = json.loads(capsys.readouterr().out)
    assert set(metrics) == {"train", "test", "eval"}
    assert metrics["test"]["accuracy"] == pytest.approx(payload["test_accuracy"])


def test_train_default_epochs_follow_pairing(micro_csv, tmp_path, capsys):
    out = tmp_path / "out"
    code = _run([
        "train", "--dataset", micro_csv, "--out-dir", out, "--metric", "euclidean", "--preset", "GCN_EUC",
    ])
    assert code == cli.EXIT_OK
    bundle_path = json.loads(capsys.readouterr().out)["bundle"]
    from triagegraph import bundle as bundle_io

    loaded = bundle_io.load_bundle(bundle_path)
    assert loaded.train_config["epochs"] == 200
    assert len(loaded.history["train_loss"]) == 200
    # the hash a serving model card reports equals the CLI-reported one
    assert loaded.train_config["run_hash"] == Path(bundle_path).stem.split("_")[-1]


def test_grid_produces_full_summary(micro_csv, tmp_path, capsys):
    out = tmp_path / "out"
    code = _run(["grid", "--dataset", micro_csv, "--out-dir", out, "--epochs", 3, "--seed", 2])
    assert code == cli.EXIT_OK
    table = capsys.readouterr().out
    lines = [l for l in table.strip().splitlines() if l]
    assert len(lines) == 1 + 12 + 2  # header + 3 metrics x 4 presets + 2 baselines
    assert (out / "summary.tsv").exists()
    accs = []
    for line in lines[1:]:
        cells = line.split("\t")
        if cells[2] != "-":
            accs.append(float(cells[2]))
    assert accs == sorted(accs, reverse=True)
    models = {line.split("\t")[0] for line in lines[1:]}
    assert {"KNN", "SVM"} <= models


def test_synth_command(tmp_path, capsys):
    out_csv = tmp_path / "synth.csv"
    assert _run(["synth", "--out", out_csv, "--scale", "small"]) == cli.EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["rows_clean"] == 60 + 81 + 168 + 111
    assert out_csv.exists()


def test_serve_rejects_corrupt_bundle(tmp_path, capsys, service_bundle):
    blob = bytearray(Path(service_bundle["path"]).read_bytes())
    blob[len(blob) // 3] ^= 0xFF
    bad = tmp_path / "corrupt.tgb"
    bad.write_bytes(bytes(blob))
    code = _run(["serve", "--bundle", bad])
    assert code == cli.EXIT_RUNTIME
    assert "checksum" in capsys.readouterr().err.lower()
