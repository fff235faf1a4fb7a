"""Command-line pipeline: generate -> impute -> train -> evaluate -> report.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 numerical
failure. Every stage is deterministic given its config seeds, so repeated
invocations with the same flags produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import csinlf, metrics, synth, training
from .csinlf import CsinlfError, KnownEntrySet
from .errors import NumericalError
from .graph import (
    FEATURES_FILE,
    GraphError,
    HeteroGraph,
    load_graph_dir,
    make_graph,
    read_feature_matrix,
    save_graph,
    write_feature_matrix,
)
from .metrics import MetricError, MetricTable, PredictionSet
from .model import ModelError, forward_full, GraphTensors, classify, load_params
from .synth import GenError
from .training import TrainError

IMPUTED_FILE = "features_imputed.csv"
IMPUTE_TRACE_FILE = "csinlf_trace.csv"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

_DATA_ERRORS = (GraphError, GenError, TrainError, CsinlfError, MetricError,
                ModelError, FileNotFoundError)

TRAIN_DEFAULTS_NOTE = (
    "training config defaults: lambda=0.005, lr=0.02, hidden=64, epochs=200, "
    "split=0.6/0.2/0.2, runs=5, patience=30, seed=0"
)


class _Parser(argparse.ArgumentParser):
    # usage problems must exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="chgrl", description=__doc__,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="emit a synthetic comorbidity network",
                       description="Generate a synthetic heterogeneous graph with "
                                   "planted causal structure (defaults: 516 patients, "
                                   "9256 patient-patient edges, 386 diseases, 5299 "
                                   "disease-disease edges, 68 features).")
    g.add_argument("--config", required=True, help="generator config JSON")
    g.add_argument("--out", required=True, help="output directory for graph CSVs")

    i = sub.add_parser("impute", help="fill missing lab features by factorization",
                       description="Fit nonnegative latent factors to the known "
                                   "feature cells and write a complete matrix.")
    i.add_argument("--data", required=True, help="graph directory")
    i.add_argument("--d", type=int, default=8, help="latent dimension (default 8)")
    i.add_argument("--mu", type=float, default=0.01, help="ridge weight (default 0.01)")
    i.add_argument("--gamma", type=float, default=0.1,
                   help="causal-alignment weight (default 0.1; inert without --prior)")
    i.add_argument("--epochs", type=int, default=1500, help="descent epochs (default 1500)")
    i.add_argument("--lr", type=float, default=0.001, help="learning rate (default 0.001)")
    i.add_argument("--prior", default=None,
                   help="optional CSV of causally linked row_index,col_index pairs")
    i.add_argument("--seed", type=int, default=0, help="init seed (default 0)")
    i.add_argument("--out", required=True, help="output directory")

    t = sub.add_parser("train", help="train a model on an imputed graph",
                       description="Full-batch gradient-descent training with "
                                   f"validation-AUC early stopping. {TRAIN_DEFAULTS_NOTE}.")
    t.add_argument("--data", required=True, help="graph directory (needs complete features)")
    t.add_argument("--config", required=True, help="training config JSON")
    t.add_argument("--model", choices=training.MODEL_CHOICES, default="chgrl",
                   help="chgrl = full causal model, rgcn = causal branch disabled")
    t.add_argument("--out", required=True, help="output directory for runs")

    e = sub.add_parser("evaluate", help="evaluate a checkpoint",
                       description="Score a saved checkpoint on its stored test "
                                   "split (or on all labeled patients for bare "
                                   "parameter files).")
    e.add_argument("--data", required=True, help="graph directory")
    e.add_argument("--checkpoint", required=True, help="checkpoint JSON")
    e.add_argument("--out", required=True, help="output directory")

    r = sub.add_parser("report", help="aggregate runs into a comparison table",
                       description="Collect summary.json files from per-method "
                                   "subdirectories and emit results.csv/results.md, "
                                   "ROC curves, and embedding projections.")
    r.add_argument("--runs", required=True, help="directory containing method subdirectories")
    r.add_argument("--out", required=True, help="output directory")

    pl = sub.add_parser("pipeline", help="run every stage for both models",
                        description="generate -> impute -> train (chgrl and rgcn) "
                                    f"-> report, under one output directory. "
                                    f"{TRAIN_DEFAULTS_NOTE}.")
    pl.add_argument("--gen", required=True, help="generator config JSON")
    pl.add_argument("--train", required=True, help="training config JSON")
    pl.add_argument("--out", required=True, help="output directory")
    return p


def _load_graph_with_imputed(data_dir: str | Path) -> HeteroGraph:
    """Graph with features_imputed.csv swapped in when present."""
    data_dir = Path(data_dir)
    g = load_graph_dir(data_dir)
    imputed = data_dir / IMPUTED_FILE
    if imputed.exists():
        values, mask = read_feature_matrix(imputed)
        if mask.any():
            raise GraphError(f"{imputed} still contains missing cells")
        if values.shape != g.patient_features.shape:
            raise GraphError(
                f"{imputed} shape {values.shape} does not match "
                f"features.csv shape {g.patient_features.shape}"
            )
        g = make_graph(
            num_patients=g.num_patients,
            num_diseases=g.num_diseases,
            edge_pairs=g.edge_pairs,
            relations=g.relations,
            patient_features=values,
            missing_mask=np.zeros_like(mask),
            labels=g.labels,
        )
    elif g.missing_mask.any():
        raise GraphError(
            f"{data_dir / FEATURES_FILE} has missing cells and no "
            f"{IMPUTED_FILE} was found; run `chgrl impute` first"
        )
    return g


def cmd_generate(args) -> int:
    config = synth.load_gen_config(args.config)
    g, gt = synth.generate(config)
    out = Path(args.out)
    save_graph(g, out)
    synth.save_ground_truth(gt, out)
    print(f"generated {g.num_patients} patients / {g.num_diseases} diseases -> {out}")
    return EXIT_OK


def cmd_impute(args) -> int:
    data_dir = Path(args.data)
    g = load_graph_dir(data_dir)
    known = KnownEntrySet.from_matrix(g.patient_features, g.missing_mask)
    prior = csinlf.load_prior_pairs(args.prior) if args.prior else None
    m, trace = csinlf.fit(
        known, d=args.d, mu=args.mu, gamma=args.gamma, prior_pairs=prior,
        epochs=args.epochs, lr=args.lr, seed=args.seed,
    )
    dense = csinlf.impute(m, g.patient_features, g.missing_mask)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_feature_matrix(out / IMPUTED_FILE, dense)
    csinlf.write_objective_trace(out / IMPUTE_TRACE_FILE, trace)
    print(f"imputed {int(g.missing_mask.sum())} missing cells; "
          f"objective {trace[0]:.6g} -> {trace[-1]:.6g}")
    return EXIT_OK


def cmd_train(args) -> int:
    g = _load_graph_with_imputed(args.data)
    config = training.load_train_config(args.config)
    results = training.train(g, config, args.out, model=args.model)
    completed = [r for r in results if not r.failed]
    for r in results:
        if r.failed:
            print(f"run {r.run_index}: FAILED ({r.error})")
        else:
            print(f"run {r.run_index}: best epoch {r.best_epoch} "
                  f"auc {r.auc:.4f} acc {r.acc:.4f} f1 {r.f1:.4f}")
    if not completed:
        raise NumericalError("all runs diverged")
    agg = metrics.aggregate(results)
    print(f"{args.model}: auc {metrics.format_mean_std(*agg['auc'])}  "
          f"acc {metrics.format_mean_std(*agg['acc'])}  "
          f"f1 {metrics.format_mean_std(*agg['f1'])}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    g = _load_graph_with_imputed(args.data)
    params, extra = load_params(args.checkpoint)
    model = extra.get("model", "chgrl")
    if extra.get("config"):
        config = training.train_config_from_dict(extra["config"])
        _, _, idx = training.split_nodes(g, config, extra["seed"])
    else:
        idx = g.labeled_patients()
    gt = GraphTensors(g)
    cache = forward_full(gt, training.build_inputs(g), params, causal=model == "chgrl")
    scores = classify(cache.h_f["patient"][idx], params)[:, 1]
    labels = g.labels[idx]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    values = {
        "auc": metrics.auc(labels, scores),
        "acc": metrics.accuracy(labels, scores),
        "f1": metrics.f1_weighted(labels, scores),
    }
    with open(out / "metrics.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["metric", "value"])
        for k, v in values.items():
            w.writerow([k, repr(float(v))])
    metrics.write_embeddings(
        out / "embeddings.csv", np.arange(g.num_patients), g.labels,
        cache.h_f["patient"],
    )
    print(f"{model} on {len(idx)} patients: "
          + "  ".join(f"{k} {v:.4f}" for k, v in values.items()))
    return EXIT_OK


def _collect_summaries(runs_dir: Path) -> dict[str, dict]:
    summaries = {}
    for child in sorted(runs_dir.iterdir()):
        summary_path = child / "summary.json"
        if child.is_dir() and summary_path.exists():
            doc = json.loads(summary_path.read_text())
            summaries[doc["method"]] = {"doc": doc, "dir": child}
    if not summaries:
        raise TrainError(f"no summary.json found under {runs_dir}")
    return summaries


def cmd_report(args) -> int:
    runs_dir = Path(args.runs)
    summaries = _collect_summaries(runs_dir)
    table = MetricTable.empty()
    predictions = {}
    for method in sorted(summaries):
        doc = summaries[method]["doc"]
        completed = [r for r in doc["runs"] if not r["failed"]]
        if not completed:
            continue
        table.add(
            method,
            [r["auc"] for r in completed],
            [r["acc"] for r in completed],
            [r["f1"] for r in completed],
        )
        labels = np.concatenate([np.asarray(r["test_labels"]) for r in completed])
        scores = np.concatenate([np.asarray(r["test_scores"]) for r in completed])
        predictions[method] = PredictionSet(labels, scores)
    embeddings = None
    emb_source = "chgrl" if "chgrl" in summaries else sorted(summaries)[0]
    emb_path = summaries[emb_source]["dir"] / "embeddings.csv"
    if emb_path.exists():
        embeddings = metrics.read_embeddings(emb_path)
    metrics.emit_report(table, args.out, predictions=predictions, embeddings=embeddings)
    print((Path(args.out) / "results.md").read_text(), end="")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    out = Path(args.out)
    data_dir = out / "data"
    gen_ns = argparse.Namespace(config=args.gen, out=str(data_dir))
    cmd_generate(gen_ns)
    impute_ns = argparse.Namespace(
        data=str(data_dir), d=8, mu=0.01, gamma=0.1, epochs=1500, lr=0.001,
        prior=None, seed=0, out=str(data_dir),
    )
    cmd_impute(impute_ns)
    for model in training.MODEL_CHOICES:
        train_ns = argparse.Namespace(
            data=str(data_dir), config=args.train, model=model,
            out=str(out / model),
        )
        cmd_train(train_ns)
    report_ns = argparse.Namespace(runs=str(out), out=str(out / "report"))
    return cmd_report(report_ns)


_COMMANDS = {
    "generate": cmd_generate,
    "impute": cmd_impute,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except NumericalError as e:
        print(f"chgrl {args.command}: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except _DATA_ERRORS as e:
        print(f"chgrl {args.command}: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
