"""Joint training of the permutation operator and the CNN-LSTM.

One epoch: recompute the relaxed permutations from the current logits,
permute each window timestep, run the network, combine task loss and the
soft regularizer, step the optimizer on logits and network weights
together, then multiply the temperature by 0.9.  Annealing is per epoch;
batching is a desk-scale convenience with a full-batch mode retained for
the convergence checks.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import cube
from . import losses as lm
from . import tensor as tk
from .autodiff import Var
from .cube import RcoState
from .dataflow import WindowedDataset
from .errors import ContractError, ParameterError, TrainingDiverged
from .layers import CnnLstm
from .optim import make_optimizer

log = logging.getLogger("rco.trainer")

CHECKPOINT_FORMAT = "rco-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Everything that determines a run; identical configs give identical runs."""

    epochs: int = 30
    batch_size: int = 32
    lr: float = 0.01
    optimizer: str = "adam"
    lambda_: float = 1.0
    gamma: float = 1.0
    tau_min: float = 1e-3
    t: int = 10
    s: int = 2
    conv_channels: tuple[int, int] = (8, 16)
    lstm_hidden: int = 32
    seed: int = 0
    axis_enabled: tuple[bool, bool] = (True, True)
    rco_enabled: bool = True
    rco_lr: float | None = None  # None: logits share lr with the network
    fixed_perms: tuple | None = None  # constant gather indices per grid axis
    full_batch: bool = False
    target_turbine: int = 0
    target_attribute: int = 0
    splits: tuple[float, float, float] = (0.7, 0.1, 0.2)
    normalize: bool = True
    log_val: bool = True

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ParameterError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.lambda_ < 0:
            raise ParameterError(f"lambda must be >= 0, got {self.lambda_}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ParameterError("epochs and batch_size must be >= 1")
        if self.lr <= 0:
            raise ParameterError(f"lr must be > 0, got {self.lr}")
        if self.optimizer not in ("adam", "sgd"):
            raise ParameterError(f"optimizer must be adam or sgd, got {self.optimizer!r}")

    _JSON_ALIASES = {"lambda": "lambda_"}

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in raw.items():
            name = cls._JSON_ALIASES.get(key, key)
            if name not in known:
                raise ParameterError(f"unknown config key {key!r}")
            if isinstance(value, list):
                value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
            kwargs[name] = value
        return cls(**kwargs)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["lambda"] = out.pop("lambda_")
        return out


@dataclass
class TrainedModel:
    model: CnnLstm
    rco: RcoState | None
    config: TrainConfig
    metrics: list[lm.LossReport]
    tau_history: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)


def _prep_windows(x: np.ndarray, fixed_perms) -> np.ndarray:
    """Apply constant gather permutations to the grid axes of (n, t, G, A)."""
    if fixed_perms is None:
        return x
    out = x
    for axis, idx in enumerate(fixed_perms, start=2):
        if idx is not None:
            out = np.take(out, np.asarray(idx, dtype=np.int64), axis=axis)
    return out


def _soft_gaps(state: RcoState | None, n_axes: int) -> tuple[float, ...]:
    if state is None:
        return (0.0,) * n_axes
    gaps = []
    for w, on in zip(state.W, state.axis_enabled):
        if on:
            gaps.append(cube.doubly_stochastic_gap(tk.softmax_rows(w.value / state.tau)))
        else:
            gaps.append(0.0)
    return tuple(gaps)


def _hard_gaps(state: RcoState | None, n_axes: int) -> tuple[float, ...]:
    if state is None:
        return (0.0,) * n_axes
    gaps = []
    for w, on in zip(state.W, state.axis_enabled):
        if on:
            gaps.append(
                cube.doubly_stochastic_gap(cube.harden(tk.softmax_rows(w.value / state.tau)))
            )
        else:
            gaps.append(0.0)
    return tuple(gaps)


def train(config: TrainConfig, dataset: WindowedDataset) -> TrainedModel:
    """Run the full joint optimization and return the trained bundle.

    Aborts with :class:`TrainingDiverged` on a non-finite loss rather than
    clamping, so convergence claims are never masked.
    """
    if dataset.t != config.t or dataset.s != config.s:
        raise ContractError(
            f"dataset windows (t={dataset.t}, s={dataset.s}) do not match "
            f"config (t={config.t}, s={config.s})"
        )
    x_train, y_train = dataset.split("train")
    if len(x_train) == 0:
        raise ContractError("training split is empty")
    x_train = _prep_windows(x_train, config.fixed_perms)
    grid = x_train.shape[2], x_train.shape[3]

    seq = np.random.SeedSequence(config.seed)
    rng_init, rng_shuffle = [np.random.default_rng(s) for s in seq.spawn(2)]
    model = CnnLstm(grid, config.s, config.conv_channels, config.lstm_hidden, rng_init)

    state = None
    if config.rco_enabled:
        state = RcoState.create(
            grid, config.gamma, config.lambda_,
            axis_enabled=config.axis_enabled, tau_min=config.tau_min,
        )
    rco_params = state.trainable() if state is not None else []
    groups = []
    if rco_params and config.rco_lr is not None:
        groups = [(rco_params, config.rco_lr)]
        opt = make_optimizer(config.optimizer, model.params(), config.lr, groups=groups)
    else:
        opt = make_optimizer(config.optimizer, model.params() + rco_params, config.lr)

    n_train = len(x_train)
    batch = n_train if config.full_batch else min(config.batch_size, n_train)
    reports: list[lm.LossReport] = []
    trained = TrainedModel(model=model, rco=state, config=config, metrics=reports)

    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        tau_used = state.tau if state is not None else float("nan")
        if config.full_batch:
            order = np.arange(n_train)
        else:
            order = rng_shuffle.permutation(n_train)
        task_sum = 0.0
        reg_sum = 0.0
        n_batches = 0
        for lo in range(0, n_train, batch):
            idx = order[lo : lo + batch]
            with ad.new_tape():
                perms = state.soft_matrices() if state is not None else None
                lt_sum = None
                for i in idx:
                    pred = model.forward_window(x_train[i], perms=perms)
                    li = lm.task_loss(pred, y_train[i])
                    lt_sum = li if lt_sum is None else ad.add(lt_sum, li)
                lt = ad.scale(lt_sum, 1.0 / len(idx))
                if state is not None:
                    lp = cube.regularization_loss(perms, config.gamma)
                    loss = lm.total_loss(lt, lp, config.lambda_)
                else:
                    lp = None
                    loss = lt
                if not np.isfinite(loss.value):
                    max_w = max(
                        (float(np.max(np.abs(w.value))) for w in (state.W if state else [])),
                        default=0.0,
                    )
                    raise TrainingDiverged(epoch, tau_used, max_w)
                ad.backward(loss)
            opt.step()
            task_sum += float(lt.value) * len(idx)
            reg_sum += float(lp.value) if lp is not None else 0.0
            n_batches += 1

        task_epoch = task_sum / n_train
        reg_epoch = reg_sum / n_batches
        gaps = _soft_gaps(state, len(grid))
        hard_gaps = _hard_gaps(state, len(grid))
        reports.append(
            lm.LossReport(
                epoch=epoch,
                split="train",
                task_loss=task_epoch,
                reg_loss=reg_epoch,
                total_loss=task_epoch + config.lambda_ * reg_epoch,
                rmse=float(np.sqrt(task_epoch)),
                tau=tau_used,
                gaps=gaps,
                hard_gaps=hard_gaps,
            )
        )
        if config.log_val and dataset.n_val > 0:
            val_rmse, _ = evaluate(trained, dataset, "val")
            reports.append(
                lm.LossReport(
                    epoch=epoch,
                    split="val",
                    task_loss=val_rmse**2,
                    reg_loss=reg_epoch,
                    total_loss=val_rmse**2 + config.lambda_ * reg_epoch,
                    rmse=val_rmse,
                    tau=tau_used,
                    gaps=gaps,
                    hard_gaps=hard_gaps,
                )
            )
        if state is not None:
            cube.anneal(state)
            trained.tau_history.append(state.tau)
        trained.epoch_seconds.append(time.perf_counter() - t0)
        log.info(
            "epoch %d: task=%.6f reg=%.6f tau=%.4f", epoch, task_epoch, reg_epoch, tau_used
        )
    return trained


def predictions_for(
    trained: TrainedModel, x: np.ndarray, hard: bool = False
) -> np.ndarray:
    """Model outputs for raw windows (n, t, G, A); no tape is recorded.

    Hard mode replaces each relaxed matrix by a row-argmax gather, applied
    to the raw arrays, which is exact and adds near-zero inference cost.
    """
    x = _prep_windows(x, trained.config.fixed_perms)
    state = trained.rco
    perms = None
    hard_idx = None
    if state is not None:
        if hard:
            hard_idx = state.hard_indices()
        else:
            perms = state.soft_matrices()
    out = np.empty((len(x), trained.config.s))
    for i in range(len(x)):
        window = x[i]
        if hard_idx is not None:
            window = cube.apply_hard(window, [None] + list(hard_idx))
        out[i] = trained.model.forward_window(window, perms=perms).value
    return out


def evaluate(
    trained: TrainedModel, dataset: WindowedDataset, split: str, hard: bool = False
) -> tuple[float, np.ndarray]:
    """RMSE and per-window predictions over one split."""
    x, y = dataset.split(split)
    if len(x) == 0:
        raise ContractError(f"split {split!r} is empty")
    preds = predictions_for(trained, x, hard=hard)
    return lm.rmse(y, preds), preds


# ---------------------------------------------------------------------------
# Experiment drivers
# ---------------------------------------------------------------------------


@dataclass
class SweepResult:
    """Mean +/- std RMSE per column: one wide table row plus a long form."""

    labels: list[str]
    mean: list[float]
    std: list[float]
    runs: list[tuple[str, int, float]]  # (label, seed, rmse)

    def to_csv(self, path) -> None:
        cells = [f"{m:.4f}±{s:.4f}" for m, s in zip(self.mean, self.std)]
        Path(path).write_text(
            ",".join(self.labels) + "\n" + ",".join(cells) + "\n"
        )

    def to_runs_csv(self, path) -> None:
        lines = ["label,seed,rmse"]
        lines += [f"{label},{seed},{repr(v)}" for label, seed, v in self.runs]
        Path(path).write_text("\n".join(lines) + "\n")


def sweep_gamma(
    config: TrainConfig,
    dataset: WindowedDataset,
    gammas: Sequence[float],
    n_seeds: int = 3,
    split: str = "test",
    hard: bool = False,
) -> SweepResult:
    """Train one model per gamma (plus a no-operator baseline), n_seeds each."""
    columns: list[tuple[str, TrainConfig]] = [
        ("baseline", replace(config, rco_enabled=False))
    ]
    for gamma in gammas:
        columns.append((f"gamma={gamma:g}", replace(config, rco_enabled=True, gamma=gamma)))
    labels, means, stds, runs = [], [], [], []
    for label, col_config in columns:
        vals = []
        for i in range(n_seeds):
            run_config = replace(col_config, seed=config.seed + i)
            trained = train(run_config, dataset)
            score, _ = evaluate(trained, dataset, split, hard=hard)
            vals.append(score)
            runs.append((label, run_config.seed, score))
            log.info("sweep %s seed=%d rmse=%.5f", label, run_config.seed, score)
        labels.append(label)
        means.append(float(np.mean(vals)))
        stds.append(float(np.std(vals)))
    return SweepResult(labels=labels, mean=means, std=stds, runs=runs)


def timing_report(config: TrainConfig, dataset: WindowedDataset, epochs: int = 4,
                  repeats: int = 3) -> dict:
    """Wall-clock ratios with vs without the operator (training and inference).

    Minima over repeats are reported: under machine contention the fastest
    observation is the least biased estimate of the actual cost.
    """
    results = {}
    for label, on in (("rco", True), ("baseline", False)):
        run_config = replace(config, rco_enabled=on, epochs=epochs, log_val=False)
        trained = train(run_config, dataset)
        # Skip the first epoch (cache warmup).
        times = trained.epoch_seconds[1:] or trained.epoch_seconds
        results[f"train_epoch_seconds_{label}"] = float(np.min(times))
        x, _ = dataset.split("test")
        if len(x) == 0:
            x, _ = dataset.split("train")
        best = np.inf
        for _ in range(repeats + 1):  # first pass doubles as warmup
            t0 = time.perf_counter()
            predictions_for(trained, x, hard=on)
            best = min(best, time.perf_counter() - t0)
        results[f"infer_seconds_per_sample_{label}"] = best / len(x)
    results["train_ratio"] = (
        results["train_epoch_seconds_rco"] / results["train_epoch_seconds_baseline"]
    )
    results["infer_ratio"] = (
        results["infer_seconds_per_sample_rco"] / results["infer_seconds_per_sample_baseline"]
    )
    return results


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def _array_blob(value: np.ndarray) -> dict:
    return {"shape": list(value.shape), "data": value.reshape(-1).tolist()}


def _blob_array(blob: dict) -> np.ndarray:
    return np.asarray(blob["data"], dtype=np.float64).reshape(blob["shape"])


def save_checkpoint(path, trained: TrainedModel) -> None:
    state = trained.rco
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": trained.config.to_dict(),
        "grid": list(trained.model.grid),
        "params": {k: _array_blob(v.value) for k, v in trained.model.param_dict().items()},
        "rco": None
        if state is None
        else {
            "tau": state.tau,
            "gamma": state.gamma,
            "lambda": state.lambda_,
            "tau_min": state.tau_min,
            "axis_enabled": list(state.axis_enabled),
            "W": [_array_blob(w.value) for w in state.W],
        },
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_checkpoint(path) -> TrainedModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ContractError(f"not a checkpoint file: {path}")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ContractError(f"unsupported checkpoint version {doc.get('version')}")
    config = TrainConfig.from_dict(doc["config"])
    grid = tuple(doc["grid"])
    model = CnnLstm(grid, config.s, config.conv_channels, config.lstm_hidden,
                    np.random.default_rng(0))
    for name, var in model.param_dict().items():
        value = _blob_array(doc["params"][name])
        if value.shape != var.value.shape:
            raise ContractError(f"checkpoint param {name} has shape {value.shape}")
        var.value = value
    state = None
    if doc["rco"] is not None:
        raw = doc["rco"]
        state = RcoState(
            W=[Var(_blob_array(b), requires_grad=True) for b in raw["W"]],
            tau=raw["tau"],
            gamma=raw["gamma"],
            lambda_=raw["lambda"],
            axis_enabled=list(raw["axis_enabled"]),
            tau_min=raw["tau_min"],
        )
    return TrainedModel(model=model, rco=state, config=config, metrics=[])
