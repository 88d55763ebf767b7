"""Operator command line: preprocess -> graph -> train -> eval -> grid -> serve.

Stage artifacts are cached on disk keyed by a hash of the contributing
configuration, so reruns with identical inputs are no-ops and the grid
reuses one graph per metric across architectures.

Exit codes: 0 success, 2 configuration error, 3 dataset/schema error,
4 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import baselines, bundle as bundle_io, datagen, evalmetrics, gnn, ingest, simgraph

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4

PRESETS = ("GCN_COS_MAN", "GCN_EUC", "GAT", "SAGE")
METRICS = ("cosine", "euclidean", "manhattan")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    dataset: str = ""
    header_map: dict = field(default_factory=dict)
    delimiter: str = ","
    seed: int = 0
    smote_k: int = 5
    smote_scope: str = "all"
    test_frac: float = 0.3
    eval_frac: float = 0.3
    metric: str = "cosine"
    threshold: float | None = None
    preset: str = "GCN_COS_MAN"
    epochs: int | None = None
    lr: float = 0.01
    edge_weighting: str = "affinity"
    out_dir: str = "out"
    bind: str = "127.0.0.1:8000"
    jobs: int = 1

    def validate(self) -> None:
        if self.smote_scope not in ("all", "train_only"):
            raise ConfigError(f"smote_scope must be all|train_only, got {self.smote_scope!r}")
        if self.metric not in METRICS:
            raise ConfigError(f"metric must be one of {METRICS}, got {self.metric!r}")
        if self.preset not in PRESETS:
            raise ConfigError(f"preset must be one of {PRESETS}, got {self.preset!r}")
        if self.edge_weighting not in ("affinity", "unweighted"):
            raise ConfigError(f"edge_weighting must be affinity|unweighted, got {self.edge_weighting!r}")
        if not (0.0 < self.test_frac < 1.0) or not (0.0 < self.eval_frac < 1.0):
            raise ConfigError("test_frac and eval_frac must be in (0,1)")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    @classmethod
    def load(cls, config_path: str | None, overrides: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        values: dict = {}
        if config_path:
            try:
                with open(config_path, "r", encoding="utf-8") as fh:
                    raw = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config file {config_path}: {exc}") from exc
            unknown = set(raw) - known
            if unknown:
                raise ConfigError(f"unknown config keys: {sorted(unknown)}")
            values.update(raw)
        values.update({k: v for k, v in overrides.items() if v is not None})
        cfg = cls(**{k: v for k, v in values.items() if k in known})
        cfg.validate()
        return cfg

    def preprocess_dict(self) -> dict:
        return {
            "dataset": os.path.abspath(self.dataset),
            "header_map": self.header_map,
            "delimiter": self.delimiter,
            "seed": self.seed,
            "smote_k": self.smote_k,
            "smote_scope": self.smote_scope,
            "test_frac": self.test_frac,
            "eval_frac": self.eval_frac,
        }


# ---------------------------------------------------------------------------
# artifact store
# ---------------------------------------------------------------------------

def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _save_arrays(directory: Path, arrays: dict) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for name, arr in arrays.items():
        np.save(directory / f"{name}.npy", arr)


def _load_arrays(directory: Path, names) -> dict:
    return {name: np.load(directory / f"{name}.npy") for name in names}


def preprocess_stage(config: RunConfig) -> tuple[Path, str]:
    """Run (or reuse) the preprocessing stage; returns (artifact dir, hash)."""
    phash = evalmetrics.config_hash(config.preprocess_dict())
    art = Path(config.out_dir) / "preprocess" / phash
    meta_path = art / "meta.json"
    if meta_path.exists():
        return art, phash

    records = ingest.load_dataset(config.dataset, header_map=config.header_map, delimiter=config.delimiter)
    result = ingest.run_preprocess(
        records,
        smote_k=config.smote_k,
        smote_scope=config.smote_scope,
        test_frac=config.test_frac,
        eval_frac_of_test=config.eval_frac,
        seed=config.seed,
    )
    _save_arrays(
        art,
        {
            "X": result.matrix.X,
            "y": result.matrix.y,
            "synthetic": result.matrix.synthetic,
            "mask_train": result.masks.train,
            "mask_test": result.masks.test,
            "mask_eval": result.masks.eval_,
        },
    )
    _write_json(
        meta_path,
        {
            "config": config.preprocess_dict(),
            "config_hash": phash,
            "encoders": result.encoders.to_dict(),
            "scaler": result.scaler.to_dict(),
            "report": result.report.to_dict(),
        },
    )
    return art, phash


def load_preprocess(art: Path):
    with open(art / "meta.json", "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    arrays = _load_arrays(art, ["X", "y", "synthetic", "mask_train", "mask_test", "mask_eval"])
    matrix = ingest.FeatureMatrix(X=arrays["X"], y=arrays["y"], synthetic=arrays["synthetic"])
    masks = ingest.SplitMasks(train=arrays["mask_train"], test=arrays["mask_test"], eval_=arrays["mask_eval"])
    return matrix, masks, ingest.EncoderState.from_dict(meta["encoders"]), ingest.ScalerState.from_dict(meta["scaler"]), meta


def graph_stage(config: RunConfig, art: Path, phash: str, metric_name: str) -> tuple[simgraph.SimilarityGraph, str, Path]:
    """Build (or reuse) one metric's similarity graph over the matrix."""
    ghash = evalmetrics.config_hash({"preprocess": phash, "metric": metric_name, "threshold": config.threshold})
    gdir = Path(config.out_dir) / "graphs" / f"{metric_name}_{ghash}"
    matrix, _, _, _, _ = load_preprocess(art)
    metric = simgraph.Metric.from_name(metric_name)
    meta_path = gdir / "meta.json"
    if meta_path.exists():
        arrays = _load_arrays(gdir, ["indptr", "indices", "weights"])
        with open(meta_path, "r", encoding="utf-8") as fh:
            gmeta = json.load(fh)
        graph = simgraph.SimilarityGraph(
            features=matrix.X,
            indptr=arrays["indptr"],
            indices=arrays["indices"],
            weights=arrays["weights"],
            metric=metric,
            threshold=gmeta["threshold"],
        )
        return graph, ghash, gdir

    if config.threshold is not None:
        tau = simgraph.Threshold(value=config.threshold, provenance="user-supplied")
    else:
        tau = simgraph.mean_pairwise(matrix.X, metric)
    graph = simgraph.build_graph(matrix.X, metric, tau)
    _save_arrays(gdir, {"indptr": graph.indptr, "indices": graph.indices, "weights": graph.weights})
    _write_json(
        meta_path,
        {
            "metric": metric_name,
            "threshold": graph.threshold,
            "threshold_provenance": tau.provenance,
            "n": graph.n,
            "undirected_edges": graph.n_edges,
            "graph_hash": ghash,
        },
    )
    return graph, ghash, gdir


def train_stage(config: RunConfig, preset: str, metric_name: str) -> tuple[Path, evalmetrics.RunReport]:
    art, phash = preprocess_stage(config)
    matrix, masks, encoders, scaler, meta = load_preprocess(art)
    graph, ghash, _ = graph_stage(config, art, phash, metric_name)

    spec = gnn.preset_architectures()[preset]
    tcfg = gnn.TrainConfig(
        epochs=config.epochs, lr=config.lr, seed=config.seed, edge_weighting=config.edge_weighting
    )
    started = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    trained = gnn.train(spec, graph, matrix.y, masks, tcfg, encoders=encoders, scaler=scaler, synthetic=matrix.synthetic)
    metrics = gnn.evaluate(trained, masks)

    run_hash = evalmetrics.config_hash({"preprocess": phash, "graph": ghash, "train": trained.train_config})
    trained.train_config["run_hash"] = run_hash  # model card reports the same hash
    out = Path(config.out_dir)
    bundle_path = out / "bundles" / f"{preset}_{metric_name}_{run_hash}.tgb"
    bundle_path.parent.mkdir(parents=True, exist_ok=True)
    bundle_io.save_bundle(trained, bundle_path)

    report = evalmetrics.RunReport(
        model_id=preset,
        graph_id=metric_name,
        config_hash=run_hash,
        config={"preprocess": meta["config"], "train": trained.train_config},
        epoch_series=trained.history,
        split_metrics=metrics,
        ingest_tallies=meta["report"],
        started_at=started,
        finished_at=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    )
    report_path = out / "reports" / f"{preset}_{metric_name}_{run_hash}.json"
    report_path.parent.mkdir(parents=True, exist_ok=True)
    evalmetrics.write_report(report, report_path)
    return bundle_path, report


def _baseline_report(name: str, pred_fn, matrix, masks, meta, seed: int) -> evalmetrics.RunReport:
    started = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    train_X = matrix.X[masks.train]
    train_y = matrix.y[masks.train]
    preds = pred_fn(train_X, train_y)
    split_metrics = {}
    for split, mask in (("train", masks.train), ("test", masks.test), ("eval", masks.eval_)):
        split_metrics[split] = evalmetrics.compute_metrics(matrix.y[mask], preds(matrix.X[mask]))
    run_hash = evalmetrics.config_hash({"baseline": name, "seed": seed, "preprocess": meta["config_hash"]})
    return evalmetrics.RunReport(
        model_id=name,
        graph_id="tabular",
        config_hash=run_hash,
        config={"preprocess": meta["config"], "baseline": name, "seed": seed},
        split_metrics=split_metrics,
        ingest_tallies=meta["report"],
        started_at=started,
        finished_at=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    )


def baseline_reports(matrix, masks, meta, seed: int) -> list:
    def knn_fn(train_X, train_y):
        model = baselines.knn_fit(train_X, train_y, k=5)
        return lambda Q: baselines.knn_predict_batch(model, Q)

    def svm_fn(train_X, train_y):
        model = baselines.svm_train(train_X, train_y, baselines.SvmConfig(seed=seed))
        return lambda Q: baselines.svm_predict_batch(model, Q)

    return [
        _baseline_report("KNN", knn_fn, matrix, masks, meta, seed),
        _baseline_report("SVM", svm_fn, matrix, masks, meta, seed),
    ]


def _grid_cell(args: tuple) -> dict:
    config_dict, preset, metric_name = args
    config = RunConfig(**config_dict)
    try:
        _, report = train_stage(config, preset, metric_name)
        return report.to_dict()
    except Exception as exc:  # cell failures must not kill the grid
        return evalmetrics.RunReport(
            model_id=preset,
            graph_id=metric_name,
            config_hash="",
            error=f"{type(exc).__name__}: {exc}",
        ).to_dict()


def grid_stage(config: RunConfig) -> tuple[list, str]:
    art, phash = preprocess_stage(config)
    matrix, masks, _, _, meta = load_preprocess(art)
    for metric_name in METRICS:  # build each graph once, cells reuse the cache
        graph_stage(config, art, phash, metric_name)

    cells = [(dict(config.__dict__), preset, metric_name) for metric_name in METRICS for preset in PRESETS]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            raw = list(pool.map(_grid_cell, cells))
    else:
        raw = [_grid_cell(cell) for cell in cells]
    reports = [evalmetrics.RunReport.from_dict(r) for r in raw]
    reports.extend(baseline_reports(matrix, masks, meta, config.seed))

    table = evalmetrics.summary_table(reports)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary_path = out / "summary.tsv"
    with open(summary_path, "w", encoding="utf-8") as fh:
        fh.write(table)
    return reports, table


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its keys")
    p.add_argument("--dataset", help="patient CSV path")
    p.add_argument("--out-dir", dest="out_dir", help="artifact directory")
    p.add_argument("--seed", type=int, help="single seed behind all randomness")
    p.add_argument("--delimiter", help="CSV delimiter (default ,)")
    p.add_argument("--header-map", dest="header_map_file", help="JSON file mapping raw headers to canonical names")
    p.add_argument("--smote-k", dest="smote_k", type=int, help="SMOTE neighbor count")
    p.add_argument("--smote-scope", dest="smote_scope", choices=["all", "train_only"])
    p.add_argument("--test-frac", dest="test_frac", type=float)
    p.add_argument("--eval-frac", dest="eval_frac", type=float)
    p.add_argument("--metric", choices=list(METRICS))
    p.add_argument("--threshold", type=float, help="override the dataset-mean threshold")
    p.add_argument("--preset", choices=list(PRESETS))
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--edge-weighting", dest="edge_weighting", choices=["affinity", "unweighted"])
    p.add_argument("--jobs", type=int, help="concurrent grid cells")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="triagegraph", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, desc in (
        ("preprocess", "load the dataset and run the five preprocessing steps"),
        ("graph", "build the similarity graph for one metric"),
        ("train", "train one architecture on one graph and save the bundle"),
        ("eval", "re-evaluate a saved bundle"),
        ("grid", "run every architecture on every graph plus the tabular baselines"),
        ("serve", "serve inductive triage over HTTP"),
        ("synth", "write a synthetic patient dataset"),
    ):
        p = sub.add_parser(name, help=desc)
        _add_common(p)
        if name in ("eval", "serve"):
            p.add_argument("--bundle", required=True, help="path to a .tgb model bundle")
        if name == "serve":
            p.add_argument("--bind", help="host:port (or env TRIAGE_BIND)")
            p.add_argument("--static-dir", dest="static_dir", help="built console UI directory")
            p.add_argument("--no-clamp", dest="no_clamp", action="store_true", help="reject out-of-range features with 422")
            p.add_argument("--event-log", dest="event_log", help="queue event log path (JSON lines)")
            p.add_argument("--dev-cors", dest="dev_cors", action="store_true")
        if name == "synth":
            p.add_argument("--out", required=True, help="CSV output path")
            p.add_argument("--scale", choices=["full", "small"], default="full")
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {
        k: getattr(args, k, None)
        for k in (
            "dataset", "out_dir", "seed", "delimiter", "smote_k", "smote_scope", "test_frac",
            "eval_frac", "metric", "threshold", "preset", "epochs", "lr", "edge_weighting", "jobs",
        )
    }
    header_map_file = getattr(args, "header_map_file", None)
    if header_map_file:
        try:
            with open(header_map_file, "r", encoding="utf-8") as fh:
                overrides["header_map"] = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read header map {header_map_file}: {exc}") from exc
    return RunConfig.load(getattr(args, "config", None), overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _config_from_args(args)
        return _dispatch(args, config)
    except (ConfigError, simgraph.SimgraphError) as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ingest.IngestError as exc:
        print(f"error [data]: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:
        print(f"error [runtime]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def _require_dataset(config: RunConfig) -> None:
    if not config.dataset:
        raise ConfigError("--dataset is required for this command")
    if not os.path.exists(config.dataset):
        raise ConfigError(f"dataset file not found: {config.dataset}")


def _dispatch(args: argparse.Namespace, config: RunConfig) -> int:
    if args.command == "preprocess":
        _require_dataset(config)
        art, phash = preprocess_stage(config)
        with open(art / "meta.json", "r", encoding="utf-8") as fh:
            report = json.load(fh)["report"]
        print(json.dumps({"artifact_dir": str(art), "config_hash": phash, "report": report}, sort_keys=True, indent=2))
        return EXIT_OK

    if args.command == "graph":
        _require_dataset(config)
        art, phash = preprocess_stage(config)
        graph, ghash, gdir = graph_stage(config, art, phash, config.metric)
        print(json.dumps(
            {"graph_dir": str(gdir), "graph_hash": ghash, "n": graph.n,
             "undirected_edges": graph.n_edges, "threshold": graph.threshold},
            sort_keys=True, indent=2))
        return EXIT_OK

    if args.command == "train":
        _require_dataset(config)
        bundle_path, report = train_stage(config, config.preset, config.metric)
        print(json.dumps(
            {"bundle": str(bundle_path), "config_hash": report.config_hash,
             "test_accuracy": report.split_metrics["test"].accuracy}, sort_keys=True, indent=2))
        return EXIT_OK

    if args.command == "eval":
        _require_dataset(config)  # the split masks come from the preprocess stage
        loaded = bundle_io.load_bundle(args.bundle)
        art, _ = preprocess_stage(config)
        _, masks, _, _, _ = load_preprocess(art)
        metrics = gnn.evaluate(loaded, masks)
        print(json.dumps({k: m.to_dict() for k, m in metrics.items()}, sort_keys=True, indent=2))
        return EXIT_OK

    if args.command == "grid":
        _require_dataset(config)
        reports, table = grid_stage(config)
        failures = [r for r in reports if r.error]
        print(table, end="")
        print(f"grid complete: {len(reports)} runs, {len(failures)} failed", file=sys.stderr)
        return EXIT_OK

    if args.command == "serve":
        from . import service

        try:
            loaded = bundle_io.load_bundle(args.bundle)
        except bundle_io.BundleError as exc:
            print(f"error [runtime]: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        bind = args.bind or os.environ.get("TRIAGE_BIND") or config.bind
        host, _, port = bind.partition(":")
        app = service.create_app(
            loaded,
            bundle_path=args.bundle,
            clamp=not getattr(args, "no_clamp", False),
            static_dir=getattr(args, "static_dir", None),
            event_log=getattr(args, "event_log", None),
            dev_cors=getattr(args, "dev_cors", False),
        )
        import uvicorn

        uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000), log_level="info")
        return EXIT_OK

    if args.command == "synth":
        if args.scale == "full":
            summary = datagen.synth_patient_dataset(args.out, seed=config.seed or 7)
        else:
            summary = datagen.synth_patient_dataset(
                args.out,
                class_counts={"Red": 60, "Orange": 81, "Yellow": 168, "Green": 111},
                unknown_smoking=120,
                n_null_rows=20,
                n_duplicate_rows=9,
                seed=config.seed or 7,
            )
        print(json.dumps(summary.__dict__, sort_keys=True, indent=2))
        return EXIT_OK

    raise ConfigError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
