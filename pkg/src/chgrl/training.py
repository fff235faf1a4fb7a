"""End-to-end training: stratified splits, full-batch gradient descent,
validation-AUC early stopping, checkpoint/resume, and the repeated-run
protocol (five runs by default, reported as mean +/- std downstream).

Each run k uses seed = base_seed + k for both its split and its parameter
init, so run k of two models trains against the same split. Epoch rows log
the loss components and validation AUC measured at the same parameter
state (after k updates, before update k+1); the best-validation snapshot
is restored before test evaluation.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .errors import NumericalError
from .graph import DISEASE, PATIENT, HeteroGraph
from .model import (
    ChgrlParams,
    GraphTensors,
    apply_update,
    backward,
    check_shapes,
    classify,
    forward_full,
    init_params,
    load_params,
    params_from_dict,
    params_to_dict,
    save_params,
    total_loss,
)

MODEL_CHOICES = ("chgrl", "rgcn")


class TrainError(ValueError):
    pass


@dataclass
class TrainConfig:
    lam: float = 0.005  # weight of the causal-regularization loss term
    lr: float = 0.02
    hidden: int = 64
    epochs: int = 200
    split: tuple[float, float, float] = (0.6, 0.2, 0.2)
    runs: int = 5
    patience: int = 30
    seed: int = 0

    def __post_init__(self):
        self.split = tuple(float(f) for f in self.split)
        if len(self.split) != 3 or any(f < 0 for f in self.split):
            raise TrainError("split must be three nonnegative fractions")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise TrainError(f"split fractions sum to {sum(self.split)}, expected 1")
        if self.lam <= 0:
            raise TrainError("lambda must be positive")
        if self.lr <= 0:
            raise TrainError("learning rate must be positive")
        if self.hidden < 1 or self.epochs < 1 or self.runs < 1:
            raise TrainError("hidden, epochs and runs must be >= 1")
        if self.patience < 0:
            raise TrainError("patience must be >= 0")


# JSON field names; `lambda` is a Python keyword, hence the lam/lambda mapping.
_CONFIG_KEYS = {
    "lambda": "lam", "lr": "lr", "hidden": "hidden", "epochs": "epochs",
    "split": "split", "runs": "runs", "patience": "patience", "seed": "seed",
}


def train_config_to_dict(cfg: TrainConfig) -> dict:
    return {
        "lambda": cfg.lam, "lr": cfg.lr, "hidden": cfg.hidden,
        "epochs": cfg.epochs, "split": list(cfg.split), "runs": cfg.runs,
        "patience": cfg.patience, "seed": cfg.seed,
    }


def train_config_from_dict(d: dict) -> TrainConfig:
    unknown = sorted(set(d) - set(_CONFIG_KEYS))
    if unknown:
        raise TrainError(f"unknown training config keys: {', '.join(unknown)}")
    kwargs = {_CONFIG_KEYS[k]: v for k, v in d.items()}
    if "split" in kwargs:
        kwargs["split"] = tuple(kwargs["split"])
    return TrainConfig(**kwargs)


def load_train_config(path: str | Path) -> TrainConfig:
    try:
        return train_config_from_dict(json.loads(Path(path).read_text()))
    except (OSError, json.JSONDecodeError) as e:
        raise TrainError(f"cannot read training config {path}: {e}") from e


@dataclass
class RunResult:
    run_index: int
    best_epoch: int
    auc: float
    acc: float
    f1: float
    trace: list = field(default_factory=list)  # (epoch, L_t, L_m, L_cf, L_cr, val_auc)
    checkpoint_path: str = ""
    failed: bool = False
    error: str = ""


def split_nodes(
    g: HeteroGraph, config: TrainConfig, seed: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Label-stratified (train, val, test) patient indices, sorted ascending."""
    labeled = g.labeled_patients()
    if labeled.size < 10:
        raise TrainError(f"need at least 10 labeled patients, got {labeled.size}")
    rng = np.random.default_rng(seed)
    parts = ([], [], [])
    for cls in (0, 1):
        members = labeled[g.labels[labeled] == cls]
        if members.size == 0:
            raise TrainError(f"class {cls} is absent from the labels")
        members = members[rng.permutation(members.size)]
        n = members.size
        n_tr = int(np.floor(config.split[0] * n + 0.5))
        n_va = int(np.floor(config.split[1] * n + 0.5))
        n_te = n - n_tr - n_va
        if n_te < 0:
            n_va += n_te
            n_te = 0
        parts[0].append(members[:n_tr])
        parts[1].append(members[n_tr : n_tr + n_va])
        parts[2].append(members[n_tr + n_va :])
    out = tuple(np.sort(np.concatenate(p)) for p in parts)
    if any(part.size == 0 for part in out):
        raise TrainError("a split part came out empty; adjust fractions")
    return out


def build_inputs(g: HeteroGraph) -> dict[str, np.ndarray]:
    """Per-type model inputs: standardized patient features and one-hot
    disease identity, both scaled by the inverse mean degree.

    The convolution is an unnormalized neighbor sum, so raw inputs blow up
    states (and first-step updates) by a degree factor; dividing the inputs
    by the mean number of incoming edges per node keeps initial logits at
    unit scale without touching the model formulas.
    """
    if g.missing_mask.any():
        raise TrainError(
            "patient features contain missing cells; run imputation first"
        )
    x = g.patient_features
    std = x.std(axis=0)
    std[std == 0] = 1.0
    x = (x - x.mean(axis=0)) / std
    n_nodes = max(1, g.num_patients + g.num_diseases)
    n_edges = sum(len(g.directed[r.name]) for r in g.relations)
    scale = 1.0 / max(1.0, n_edges / n_nodes)
    return {
        PATIENT: x * scale,
        DISEASE: np.eye(g.num_diseases) * scale,
    }


def input_dims(g: HeteroGraph) -> dict[str, int]:
    return {PATIENT: g.feature_dim, DISEASE: g.num_diseases}


STATE_VERSION = 1


def _state_extra(model, config, run_index, seed, next_epoch, best_auc, best_epoch,
                 bad_epochs, trace, finished, result, current=None):
    extra = {
        "state_version": STATE_VERSION,
        "model": model,
        "config": train_config_to_dict(config),
        "run_index": run_index,
        "seed": seed,
        "next_epoch": next_epoch,
        "best_val_auc": best_auc,
        "best_epoch": best_epoch,
        "bad_epochs": bad_epochs,
        "trace": [list(row) for row in trace],
        "finished": finished,
    }
    if result is not None:
        extra["result"] = result
    if current is not None:
        extra["current"] = params_to_dict(current)
    return extra


def write_run_log(path: str | Path, trace) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "L_t", "L_m", "L_cf", "L_cr", "val_auc"])
        for epoch, lt, lm, lcf, lcr, val_auc in trace:
            w.writerow([epoch] + [repr(float(v)) for v in (lt, lm, lcf, lcr, val_auc)])


def _train_run(
    gt: GraphTensors,
    inputs: dict,
    config: TrainConfig,
    model: str,
    run_index: int,
    out_dir: Path,
    state: dict | None = None,
    best_params: ChgrlParams | None = None,
    params: ChgrlParams | None = None,
    stop_after: int | None = None,
) -> RunResult | None:
    """One run; returns None if stopped early via stop_after (state saved)."""
    g = gt.graph
    causal = model == "chgrl"
    seed = config.seed + run_index
    ckpt_path = out_dir / f"run_{run_index}.json"
    log_path = out_dir / f"run_{run_index}_log.csv"
    train_idx, val_idx, test_idx = split_nodes(g, config, seed)

    if state is None:
        params = init_params(g.relations, input_dims(g), config.hidden, seed)
        best_params = params.copy()
        best_auc = -np.inf
        best_epoch = -1
        bad = 0
        trace: list = []
        start_epoch = 0
    else:
        best_auc = state["best_val_auc"]
        best_epoch = state["best_epoch"]
        bad = state["bad_epochs"]
        trace = [tuple(row) for row in state["trace"]]
        start_epoch = state["next_epoch"]

    failed = False
    error = ""
    for epoch in range(start_epoch, config.epochs):
        try:
            lb, cache = total_loss(
                gt, inputs, params, g.labels, train_idx, config.lam, causal=causal
            )
            if not np.isfinite(lb.total):
                raise NumericalError(f"non-finite loss {lb.total} at epoch {epoch}")
            val_scores = classify(cache.h_f[PATIENT][val_idx], params)[:, 1]
            val_auc = metrics.auc(g.labels[val_idx], val_scores)
            grads = backward(gt, params, cache, g.labels, config.lam)
        except NumericalError as e:
            failed = True
            error = f"run {run_index} diverged at epoch {epoch}: {e}"
            break
        trace.append((epoch, lb.total, lb.main, lb.counterfactual, lb.causal_reg, val_auc))
        if val_auc > best_auc:
            best_auc = val_auc
            best_epoch = epoch
            best_params = params.copy()
            bad = 0
        else:
            bad += 1
        apply_update(params, grads, config.lr)
        if stop_after is not None and epoch + 1 >= stop_after and epoch + 1 < config.epochs:
            save_params(
                best_params, ckpt_path,
                extra=_state_extra(model, config, run_index, seed, epoch + 1,
                                   best_auc, best_epoch, bad, trace,
                                   finished=False, result=None, current=params),
            )
            write_run_log(log_path, trace)
            return None
        if config.patience and bad >= config.patience:
            break

    if failed:
        result = RunResult(
            run_index=run_index, best_epoch=-1,
            auc=float("nan"), acc=float("nan"), f1=float("nan"),
            trace=trace, checkpoint_path="", failed=True, error=error,
        )
        write_run_log(log_path, trace)
        return result

    cache = forward_full(gt, inputs, best_params, causal=causal)
    test_scores = classify(cache.h_f[PATIENT][test_idx], best_params)[:, 1]
    test_labels = g.labels[test_idx]
    result = RunResult(
        run_index=run_index,
        best_epoch=best_epoch,
        auc=metrics.auc(test_labels, test_scores),
        acc=metrics.accuracy(test_labels, test_scores),
        f1=metrics.f1_weighted(test_labels, test_scores),
        trace=trace,
        checkpoint_path=str(ckpt_path),
    )
    save_params(
        best_params, ckpt_path,
        extra=_state_extra(
            model, config, run_index, seed, config.epochs, best_auc, best_epoch,
            bad, trace, finished=True,
            result={
                "best_epoch": best_epoch, "auc": result.auc,
                "acc": result.acc, "f1": result.f1,
                "test_indices": test_idx.tolist(),
                "test_labels": test_labels.tolist(),
                "test_scores": test_scores.tolist(),
            },
        ),
    )
    write_run_log(log_path, trace)
    return result


def train(
    g: HeteroGraph,
    config: TrainConfig,
    out_dir: str | Path,
    model: str = "chgrl",
    inputs: dict | None = None,
) -> list[RunResult]:
    """Run the repeated-training protocol; writes checkpoints, per-run logs,
    summary.json and the best run's embedding dump under out_dir."""
    if model not in MODEL_CHOICES:
        raise TrainError(f"model must be one of {MODEL_CHOICES}, got {model!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    gt = GraphTensors(g)
    if inputs is None:
        inputs = build_inputs(g)
    results = []
    for k in range(config.runs):
        res = _train_run(gt, inputs, config, model, k, out_dir)
        results.append(res)
    _write_summary(out_dir, g, gt, inputs, config, model, results)
    return results


def resume(checkpoint: str | Path, g: HeteroGraph, config: TrainConfig,
           out_dir: str | Path | None = None) -> RunResult:
    """Continue an interrupted run from its saved state."""
    checkpoint = Path(checkpoint)
    best_params, extra = load_params(checkpoint)
    if not extra or "next_epoch" not in extra:
        raise TrainError(f"{checkpoint} is not a training checkpoint")
    check_shapes(best_params, g.relations, input_dims(g), config.hidden)
    model = extra["model"]
    run_index = extra["run_index"]
    if extra.get("finished"):
        stored = extra["result"]
        return RunResult(
            run_index=run_index, best_epoch=stored["best_epoch"],
            auc=stored["auc"], acc=stored["acc"], f1=stored["f1"],
            trace=[tuple(row) for row in extra["trace"]],
            checkpoint_path=str(checkpoint),
        )
    params = params_from_dict(extra["current"])
    check_shapes(params, g.relations, input_dims(g), config.hidden)
    gt = GraphTensors(g)
    inputs = build_inputs(g)
    out_dir = Path(out_dir) if out_dir is not None else checkpoint.parent
    result = _train_run(
        gt, inputs, config, model, run_index, out_dir,
        state=extra, best_params=best_params, params=params,
    )
    assert result is not None
    return result


def train_one_interruptible(
    g: HeteroGraph, config: TrainConfig, out_dir: str | Path,
    model: str = "chgrl", run_index: int = 0, stop_after: int | None = None,
) -> RunResult | None:
    """Single run with an optional epoch cutoff (state saved for resume)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    gt = GraphTensors(g)
    return _train_run(
        gt, build_inputs(g), config, model, run_index, out_dir,
        stop_after=stop_after,
    )


def _write_summary(out_dir, g, gt, inputs, config, model, results) -> None:
    runs_doc = []
    for r in results:
        doc = {
            "run_index": r.run_index, "best_epoch": r.best_epoch,
            "auc": r.auc, "acc": r.acc, "f1": r.f1,
            "failed": r.failed, "error": r.error,
            "checkpoint": r.checkpoint_path,
        }
        if not r.failed:
            _, extra = load_params(r.checkpoint_path)
            doc["test_labels"] = extra["result"]["test_labels"]
            doc["test_scores"] = extra["result"]["test_scores"]
        runs_doc.append(doc)
    completed = [r for r in results if not r.failed]
    summary = {
        "method": model,
        "config": train_config_to_dict(config),
        "failures": len(results) - len(completed),
        "runs": runs_doc,
    }
    (Path(out_dir) / "summary.json").write_text(json.dumps(summary))

    if completed:
        best = max(completed, key=lambda r: (r.auc, -r.run_index))
        params, _ = load_params(best.checkpoint_path)
        causal = model == "chgrl"
        cache = forward_full(gt, inputs, params, causal=causal)
        h_f = cache.h_f[PATIENT]
        metrics.write_embeddings(
            Path(out_dir) / "embeddings.csv",
            np.arange(g.num_patients), g.labels, h_f,
        )
