"""Task loss, combined loss, and evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .errors import ContractError, ShapeError


@dataclass(frozen=True)
class LossReport:
    """One epoch's loss breakdown; total == task + lambda * reg exactly.

    ``gaps`` are the per-axis doubly-stochastic gaps of the soft matrices;
    ``hard_gaps`` the same for their argmax-hardened forms.
    """

    epoch: int
    split: str
    task_loss: float
    reg_loss: float
    total_loss: float
    rmse: float
    tau: float
    gaps: tuple[float, ...]
    hard_gaps: tuple[float, ...] = ()


def task_loss(prediction: Var, label: np.ndarray) -> Var:
    """Mean squared error over the horizon entries."""
    label = np.asarray(label, dtype=np.float64)
    if prediction.value.shape != label.shape:
        raise ShapeError(f"prediction {prediction.value.shape} vs label {label.shape}")
    diff = ad.sub(prediction, Var(label))
    return ad.scale(ad.sum_all(ad.mul(diff, diff)), 1.0 / label.size)


def total_loss(lt: Var, lp: Var, lambda_: float) -> Var:
    """L = L_task + lambda * L_reg."""
    return ad.add(lt, ad.scale(lp, float(lambda_)))


def rmse(labels: np.ndarray, predictions: np.ndarray) -> float:
    """Root mean squared error over all entries of equally shaped arrays."""
    labels = np.asarray(labels, dtype=np.float64)
    predictions = np.asarray(predictions, dtype=np.float64)
    if labels.shape != predictions.shape:
        raise ShapeError(f"labels {labels.shape} vs predictions {predictions.shape}")
    if labels.size == 0:
        raise ContractError("rmse of empty arrays is undefined")
    return float(np.sqrt(np.mean((labels - predictions) ** 2)))


def metrics_header(n_axes: int, n_hard: int | None = None) -> list[str]:
    n_hard = n_axes if n_hard is None else n_hard
    return (["epoch", "split", "task_loss", "reg_loss", "total_loss", "rmse", "tau"]
            + [f"gap_axis{k}" for k in range(n_axes)]
            + [f"hard_gap_axis{k}" for k in range(n_hard)])


def metrics_rows(reports: list[LossReport]) -> list[list[str]]:
    """CSV cells with repr-formatted floats, so reruns compare bit-for-bit."""
    rows = []
    for r in reports:
        rows.append(
            [str(r.epoch), r.split, repr(float(r.task_loss)), repr(float(r.reg_loss)),
             repr(float(r.total_loss)), repr(float(r.rmse)), repr(float(r.tau))]
            + [repr(float(g)) for g in r.gaps]
            + [repr(float(g)) for g in r.hard_gaps]
        )
    return rows


def write_metrics_csv(path, reports: list[LossReport]) -> None:
    n_axes = len(reports[0].gaps) if reports else 0
    n_hard = len(reports[0].hard_gaps) if reports else 0
    lines = [",".join(metrics_header(n_axes, n_hard))]
    lines += [",".join(row) for row in metrics_rows(reports)]
    Path(path).write_text("\n".join(lines) + "\n")
