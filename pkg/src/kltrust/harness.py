"""Benchmark runner: (task x optimizer x seed) grids with CSV/JSON output.

One CSV row per (seed, epoch); a summary JSON with per-epoch means and the
doubled standard error (2 * sample sd / sqrt(#seeds)) of test accuracy.
Floats are written with full repr so summaries recomputed from the raw CSV
reproduce the shipped summary exactly. A diverging seed is recorded as a
failure and the rest of the grid continues.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import presets
from .baselines import BaselineConfig, make_baseline
from .data import (
    Dataset,
    SyntheticQuadraticTask,
    load_cifar_binary,
    load_fashion_mnist,
    minibatches,
    synthetic_grad,
)
from .models import MLP, Batch, SmallCNN
from .optimizer import TrustRegionConfig, TrustRegionOptimizer
from .trust_region import DualSolverError

DATA_DIR_ENV = "KLTRUST_DATA_DIR"

OPTIMIZERS = ("trust_region", "sgd", "adam", "adamw")
VARIANTS = {"standard": "standard", "fixed-eta": "fixed_eta", "adam-surrogate": "adam_surrogate"}
TASKS = (
    "synthetic_quadratic",
    "fashion_mnist_mlp",
    "fashion_mnist_cnn",
    "cifar10_cnn",
    "cifar100_cnn",
)

CSV_COLUMNS = (
    "seed",
    "epoch",
    "train_loss",
    "test_accuracy",
    "wall_seconds",
    "eta_star",
    "c_mu",
    "bisect_iters",
    "variant",
)


@dataclass(frozen=True)
class MetricsRecord:
    seed: int
    epoch: int
    train_loss: float
    test_accuracy: float | None
    wall_seconds: float
    eta_star: float | None
    c_mu: float | None
    bisect_iters: float | None
    variant: str


@dataclass
class RunConfig:
    task: str
    optimizer: str
    hyperparams: dict = field(default_factory=dict)
    preset: str | None = None
    task_params: dict = field(default_factory=dict)
    epochs: int = 5
    batch_size: int = 128
    seeds: tuple[int, ...] = (0,)
    milestones: tuple[int, ...] | None = None
    variant: str = "standard"
    eval_every: int = 1
    out_dir: str = "runs"
    data_dir: str | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; known: {TASKS}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}; known: {OPTIMIZERS}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; known: {tuple(VARIANTS)}")
        if self.variant != "standard" and self.optimizer != "trust_region":
            raise ValueError("ablation variants only apply to the trust_region optimizer")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.milestones is not None:
            self.milestones = tuple(int(m) for m in self.milestones)

    @property
    def effective_milestones(self) -> tuple[int, ...]:
        if self.milestones is not None:
            return self.milestones
        half, three_quarters = self.epochs // 2, (3 * self.epochs) // 4
        return tuple(sorted({m for m in (half, three_quarters) if m >= 1}))

    def resolved_hyperparams(self) -> dict:
        out = {}
        if self.preset is not None:
            out.update(presets.get_preset(self.optimizer, self.preset))
        out.update(self.hyperparams)
        return out

    def resolved_data_dir(self) -> Path:
        return Path(self.data_dir or os.environ.get(DATA_DIR_ENV, "data"))

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        raw = json.loads(Path(path).read_text())
        known = cls.__dataclass_fields__
        unknown = set(raw) - set(known)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key in ("seeds", "milestones"):
            if raw.get(key) is not None:
                raw[key] = tuple(raw[key])
        return cls(**raw)


@dataclass(frozen=True)
class RunResult:
    csv_path: Path
    summary_path: Path
    summary: dict


class _SeedFailure(Exception):
    pass


# ---------------------------------------------------------------------------
# task assembly
# ---------------------------------------------------------------------------

def _with_channel(ds: Dataset) -> Dataset:
    return Dataset(ds.inputs[:, None, :, :], ds.labels, ds.split, ds.normalization)


def _build_dataset_task(config: RunConfig):
    root = config.resolved_data_dir()
    if config.task == "fashion_mnist_mlp":
        train, test = load_fashion_mnist(root / "fashion_mnist")
        return MLP((784, 256, 10)), train, test
    if config.task == "fashion_mnist_cnn":
        train, test = load_fashion_mnist(root / "fashion_mnist")
        return SmallCNN((1, 28, 28), 10), _with_channel(train), _with_channel(test)
    if config.task == "cifar10_cnn":
        train, test = load_cifar_binary(root / "cifar10", 10)
        return SmallCNN((3, 32, 32), 10), train, test
    if config.task == "cifar100_cnn":
        train, test = load_cifar_binary(root / "cifar100", 100)
        return SmallCNN((3, 32, 32), 100), train, test
    raise ValueError(config.task)


def _build_synthetic_task(config: RunConfig, seed: int) -> SyntheticQuadraticTask:
    p = config.task_params
    n = int(p.get("n", 10))
    d_lo, d_hi = p.get("diag_range", (0.1, 10.0))
    diag = np.logspace(np.log10(d_lo), np.log10(d_hi), n)
    theta_star = np.resize([0.5, -0.5], n)
    return SyntheticQuadraticTask(
        theta_star=theta_star,
        diag=diag,
        noise_scale=float(p.get("noise_scale", 1.0)),
        seed=seed,
    )


def _make_optimizer(config: RunConfig, n: int, mu0: np.ndarray):
    hp = config.resolved_hyperparams()
    milestones = config.effective_milestones
    if config.optimizer == "trust_region":
        mode = VARIANTS[config.variant]
        if mode == "fixed_eta" and "fixed_eta" not in hp:
            raise ValueError("fixed-eta variant requires hyperparams.fixed_eta")
        cfg = TrustRegionConfig(mode=mode, schedule_milestones=milestones, **hp)
        return TrustRegionOptimizer(n, cfg, mu0)
    kind = "sgd_momentum" if config.optimizer == "sgd" else config.optimizer
    cfg = BaselineConfig(kind=kind, schedule_milestones=milestones, **hp)
    return make_baseline(n, cfg)


# ---------------------------------------------------------------------------
# training loops
# ---------------------------------------------------------------------------

def _evaluate_accuracy(model, params: np.ndarray, test: Dataset, chunk: int = 512) -> float:
    correct = 0
    for start in range(0, len(test), chunk):
        batch = Batch(test.inputs[start : start + chunk], test.labels[start : start + chunk])
        _, logits = model.forward_loss(params, batch)
        correct += int(np.sum(logits.argmax(axis=1) == batch.targets))
    return correct / len(test)


def _check_finite_loss(loss: float, seed: int, epoch: int) -> None:
    if not math.isfinite(loss):
        raise _SeedFailure(f"non-finite loss (seed {seed}, epoch {epoch})")


def _run_dataset_seed(
    config: RunConfig, model, train, test, seed: int, rows: list[MetricsRecord]
) -> None:
    params = model.init_params(seed)
    opt = _make_optimizer(config, model.n_params, params)
    is_tr = config.optimizer == "trust_region"
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        losses, etas, cmus, iters = [], [], [], []
        for batch in minibatches(train, config.batch_size, seed, epoch):
            point = opt.mean if is_tr else params
            loss, grad = model.loss_and_grad(point, batch)
            _check_finite_loss(loss, seed, epoch)
            losses.append(loss)
            if is_tr:
                diag = opt.step(grad)
                etas.append(diag.eta_star)
                cmus.append(diag.c_mu)
                iters.append(diag.bisect_iters)
            else:
                params = opt.step(params, grad)
        opt.on_epoch_end()
        accuracy = None
        if (epoch + 1) % config.eval_every == 0 or epoch == config.epochs - 1:
            accuracy = _evaluate_accuracy(model, opt.mean if is_tr else params, test)
        rows.append(
            MetricsRecord(
                seed=seed,
                epoch=epoch,
                train_loss=float(np.mean(losses)),
                test_accuracy=accuracy,
                wall_seconds=time.perf_counter() - t0,
                eta_star=float(np.mean(etas)) if etas else None,
                c_mu=float(np.mean(cmus)) if cmus else None,
                bisect_iters=float(np.mean(iters)) if iters else None,
                variant=config.variant,
            )
        )


def _run_synthetic_seed(config: RunConfig, seed: int, rows: list[MetricsRecord]) -> None:
    task = _build_synthetic_task(config, seed)
    steps_per_epoch = int(config.task_params.get("steps_per_epoch", 100))
    mu = np.random.default_rng([seed, 90210]).normal(0.0, 1.0, task.n)
    opt = _make_optimizer(config, task.n, mu)
    is_tr = config.optimizer == "trust_region"
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        losses, etas, cmus, iters = [], [], [], []
        for k in range(steps_per_epoch):
            point = opt.mean if is_tr else mu
            base = (epoch * steps_per_epoch + k) * config.batch_size
            grad = np.mean(
                [synthetic_grad(task, point, base + i) for i in range(config.batch_size)],
                axis=0,
            )
            loss = task.loss(point)
            _check_finite_loss(loss, seed, epoch)
            losses.append(loss)
            if is_tr:
                diag = opt.step(grad)
                etas.append(diag.eta_star)
                cmus.append(diag.c_mu)
                iters.append(diag.bisect_iters)
            else:
                mu = opt.step(mu, grad)
        opt.on_epoch_end()
        rows.append(
            MetricsRecord(
                seed=seed,
                epoch=epoch,
                train_loss=float(np.mean(losses)),
                test_accuracy=None,
                wall_seconds=time.perf_counter() - t0,
                eta_star=float(np.mean(etas)) if etas else None,
                c_mu=float(np.mean(cmus)) if cmus else None,
                bisect_iters=float(np.mean(iters)) if iters else None,
                variant=config.variant,
            )
        )


# ---------------------------------------------------------------------------
# aggregation and serialization
# ---------------------------------------------------------------------------

def _two_se(values: list[float]) -> float | None:
    if len(values) < 2:
        return None
    sd = float(np.std(values, ddof=1))
    return 2.0 * sd / math.sqrt(len(values))


def aggregate(rows: list[MetricsRecord]) -> list[dict]:
    """Per-epoch mean train loss and mean +- doubled-SE test accuracy."""
    out = []
    for epoch in sorted({r.epoch for r in rows}):
        at_epoch = [r for r in rows if r.epoch == epoch]
        accs = [r.test_accuracy for r in at_epoch if r.test_accuracy is not None]
        out.append(
            {
                "epoch": epoch,
                "mean_train_loss": float(np.mean([r.train_loss for r in at_epoch])),
                "mean_test_accuracy": float(np.mean(accs)) if accs else None,
                "two_se_test_accuracy": _two_se(accs),
                "n_seeds": len(at_epoch),
            }
        )
    return out


def _csv_cell(value) -> str:
    if value is None:
        return ""
    return str(value)


def write_metrics_csv(path, rows: list[MetricsRecord]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow([_csv_cell(getattr(r, c)) for c in CSV_COLUMNS])


def read_metrics_csv(path) -> list[MetricsRecord]:
    rows = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        for rec in reader:
            rows.append(
                MetricsRecord(
                    seed=int(rec["seed"]),
                    epoch=int(rec["epoch"]),
                    train_loss=float(rec["train_loss"]),
                    test_accuracy=float(rec["test_accuracy"]) if rec["test_accuracy"] else None,
                    wall_seconds=float(rec["wall_seconds"]),
                    eta_star=float(rec["eta_star"]) if rec["eta_star"] else None,
                    c_mu=float(rec["c_mu"]) if rec["c_mu"] else None,
                    bisect_iters=float(rec["bisect_iters"]) if rec["bisect_iters"] else None,
                    variant=rec["variant"],
                )
            )
    return rows


# ---------------------------------------------------------------------------
# entry points
# ---------------------------------------------------------------------------

def run(config: RunConfig) -> RunResult:
    """Execute the (seed) grid for one (task, optimizer, variant) cell."""
    if config.task == "synthetic_quadratic":
        model = train = test = None
    else:
        model, train, test = _build_dataset_task(config)

    rows: list[MetricsRecord] = []
    failed: dict[str, str] = {}
    for seed in config.seeds:
        try:
            if config.task == "synthetic_quadratic":
                _run_synthetic_seed(config, seed, rows)
            else:
                _run_dataset_seed(config, model, train, test, seed, rows)
        except (_SeedFailure, DualSolverError) as exc:
            failed[str(seed)] = str(exc)

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{config.task}_{config.optimizer}_{config.variant}"
    csv_path = out_dir / f"{stem}.csv"
    summary_path = out_dir / f"{stem}_summary.json"
    write_metrics_csv(csv_path, rows)

    per_epoch = aggregate(rows)
    summary = {
        "task": config.task,
        "optimizer": config.optimizer,
        "variant": config.variant,
        "epochs": config.epochs,
        "batch_size": config.batch_size,
        "seeds": list(config.seeds),
        "milestones": list(config.effective_milestones),
        "eval_every": config.eval_every,
        "hyperparams": config.resolved_hyperparams(),
        "normalization": "pixel/255" if config.task != "synthetic_quadratic" else None,
        "failed_seeds": failed,
        "per_epoch": per_epoch,
        "final": per_epoch[-1] if per_epoch else None,
    }
    summary_path.write_text(json.dumps(summary, indent=2))
    return RunResult(csv_path, summary_path, summary)


def ablation_run(config: RunConfig, variant: str) -> RunResult:
    """run() with the trust-region mode swapped to an ablation variant."""
    cfg = RunConfig(**{**asdict(config), "variant": variant})
    return run(cfg)


def summarize(in_dir) -> dict:
    """Recompute per-epoch statistics from every metrics CSV in a directory."""
    in_dir = Path(in_dir)
    out = {}
    for csv_path in sorted(in_dir.glob("*.csv")):
        per_epoch = aggregate(read_metrics_csv(csv_path))
        out[csv_path.name] = {
            "per_epoch": per_epoch,
            "final": per_epoch[-1] if per_epoch else None,
        }
    if not out:
        raise FileNotFoundError(f"no metrics CSV files under {in_dir}")
    return out


# frozen copy of the tuned tables, laid out row-major per algorithm; guards
# the presets module against accidental edits
_EXPECTED_ROWS = {
    "trust_region": (
        ("epsilon", (0.085675, 0.085675, 0.002787, 0.007133, 0.002787, 0.007234)),
        ("rho", (0.058657, 0.058657, 0.296786, 1.597354, 0.296786, 1.676770)),
        ("r", (2.816791, 2.816791, 1.219750, 9.328440, 1.219750, 4.822032)),
        ("q", (0.017393, 0.017393, 0.002455, 0.089381, 0.002455, 0.009779)),
        ("weight_decay", (0.000002, 0.000002, 0.000000, 0.000703, 0.000000, 0.000000)),
    ),
    "sgd": (
        ("learning_rate", (0.071049, 0.137031, 0.017834, 0.056480, 0.017834, 0.067994)),
        ("momentum", (0.865730, 0.854087, 0.946762, 0.866487, 0.946762, 0.867370)),
        ("weight_decay", (0.000225, 0.001963, 0.000163, 0.001697, 0.000163, 0.001800)),
    ),
    "adam": (
        ("learning_rate", (0.001012, 0.045115, 0.001129, 0.006652, 0.001129, 0.001612)),
        ("beta1", (0.945256, 0.907895, 0.851157, 0.890313, 0.851157, 0.864582)),
        ("beta2", (0.990342, 0.999999, 0.998940, 0.999387, 0.998940, 0.999953)),
        ("weight_decay", (0.000000, 0.000002, 0.001090, 0.000447, 0.001090, 0.001941)),
    ),
    "adamw": (
        ("learning_rate", (0.001004, 0.018744, 0.001129, 0.006652, 0.001129, 0.001245)),
        ("beta1", (0.922247, 0.862748, 0.851157, 0.890313, 0.851157, 0.858643)),
        ("beta2", (0.999945, 0.999999, 0.998940, 0.999387, 0.998940, 0.998802)),
        ("weight_decay", (0.000142, 0.000040, 0.001090, 0.000447, 0.001090, 0.001804)),
    ),
}


def verify_hparams() -> dict:
    """Cross-check the shipped presets against the frozen tuned tables."""
    mismatches = []
    for algorithm, spec_rows in _EXPECTED_ROWS.items():
        for param, values in spec_rows:
            for task, expected in zip(presets.TASKS, values):
                shipped = presets.TUNED.get(algorithm, {}).get(task, {}).get(param)
                if shipped != expected:
                    mismatches.append(
                        {
                            "key": f"{algorithm}.{task}.{param}",
                            "expected": expected,
                            "shipped": shipped,
                        }
                    )
    return {"ok": not mismatches, "checked": sum(
        len(values) for rows in _EXPECTED_ROWS.values() for _, values in rows
    ), "mismatches": mismatches}
