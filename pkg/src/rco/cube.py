"""The Rubik's Cube Operator: learnable axis-wise permutations.

One square logit matrix per tensor axis is relaxed to a right-stochastic
matrix by a tempered row softmax, applied to the data by swap/multiply/swap,
and sharpened over training by multiplying the temperature by 0.9 each
epoch.  A soft regularization loss penalizes column sums drifting from 1
beyond a slack of gamma * n per axis, and hardening snaps each row to a
one-hot at its argmax for inference.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import tensor as tk
from .autodiff import Var
from .errors import ParameterError, ShapeError

ANNEAL_FACTOR = 0.9


@dataclass
class RcoState:
    """Per-axis logit matrices plus the operator's hyperparameters.

    ``W[k]`` is an n_k x n_k requires-grad Var for axis k of the data
    tensor; disabled axes keep a fixed identity permutation and their W is
    still allocated (all ones) but receives no gradient path.
    """

    W: list[Var]
    tau: float
    gamma: float
    lambda_: float
    axis_enabled: list[bool]
    tau_min: float = 1e-3

    @classmethod
    def create(
        cls,
        axis_sizes: Sequence[int],
        gamma: float,
        lambda_: float,
        axis_enabled: Sequence[bool] | None = None,
        tau: float = 1.0,
        tau_min: float = 1e-3,
    ) -> "RcoState":
        """All logits start at one and tau at 1, so every P starts uniform."""
        _check_gamma(gamma)
        if lambda_ < 0:
            raise ParameterError(f"lambda must be >= 0, got {lambda_}")
        if tau <= 0:
            raise ParameterError(f"tau must be > 0, got {tau}")
        enabled = list(axis_enabled) if axis_enabled is not None else [True] * len(axis_sizes)
        if len(enabled) != len(axis_sizes):
            raise ShapeError("axis_enabled length must match number of axes")
        W = [Var(np.ones((n, n)), requires_grad=True) for n in axis_sizes]
        return cls(W=W, tau=tau, gamma=gamma, lambda_=lambda_,
                   axis_enabled=enabled, tau_min=tau_min)

    def trainable(self) -> list[Var]:
        return [w for w, on in zip(self.W, self.axis_enabled) if on]

    def soft_matrices(self, rng: np.random.Generator | None = None) -> list[Var | None]:
        """Current relaxed permutation per axis; None for disabled axes."""
        return [
            soft_permutation(w, self.tau, rng=rng) if on else None
            for w, on in zip(self.W, self.axis_enabled)
        ]

    def hard_indices(self) -> list[np.ndarray | None]:
        """Row-argmax selection index per enabled axis (for gather-style apply)."""
        out: list[np.ndarray | None] = []
        for w, on in zip(self.W, self.axis_enabled):
            if not on:
                out.append(None)
                continue
            p = tk.softmax_rows(w.value / self.tau)
            out.append(np.argmax(p, axis=1))
        return out


def _check_gamma(gamma: float) -> None:
    if not 0.0 <= gamma <= 1.0:
        raise ParameterError(f"gamma must be in [0, 1], got {gamma}")


def soft_permutation(w: Var, tau: float, rng: np.random.Generator | None = None) -> Var:
    """Tempered row softmax of the logits: P_ij = exp(W_ij/tau) / sum_u exp(W_iu/tau).

    Rows sum to 1 up to float64 rounding and every entry lies in (0, 1); as
    tau -> 0 each row approaches a one-hot at its largest logit.  Passing a
    generator adds standard Gumbel noise to the logits first (off by
    default: the deterministic tempered softmax is the reference form).
    """
    if tau <= 0:
        raise ParameterError(f"tau must be > 0, got {tau}")
    logits = w
    if rng is not None:
        u = rng.uniform(1e-12, 1.0, size=w.value.shape)
        logits = ad.add(w, Var(-np.log(-np.log(u))))
    return ad.softmax_rows(ad.scale(logits, 1.0 / tau))


def permute(x: Var, ps: Sequence[Var | None]) -> Var:
    """Apply one relaxed permutation per axis: swap axis k to the front,
    multiply, swap back.  ``None`` entries leave their axis untouched.

    Linear in x and differentiable w.r.t. x and every matrix.
    """
    if len(ps) != x.value.ndim:
        raise ShapeError(f"got {len(ps)} matrices for a {x.value.ndim}-axis tensor")
    out = x
    for k, p in enumerate(ps):
        if p is None:
            continue
        if p.value.shape != (x.value.shape[k], x.value.shape[k]):
            raise ShapeError(
                f"matrix for axis {k} has shape {p.value.shape}, "
                f"axis length is {x.value.shape[k]}"
            )
        if k == 0:
            out = ad.mode1_matmul(p, out)
        else:
            out = ad.swap_axes(ad.mode1_matmul(p, ad.swap_axes(out, 0, k)), 0, k)
    return out


def apply_hard(x: np.ndarray, indices: Sequence[np.ndarray | None]) -> np.ndarray:
    """Hardened permute on raw arrays: gather instead of matmul, bit-exact."""
    out = x
    for k, idx in enumerate(indices):
        if idx is not None:
            out = np.take(out, idx, axis=k)
    return np.ascontiguousarray(out)


def regularization_loss(ps: Sequence[Var | None], gamma: float) -> Var:
    """Soft feature-diversity penalty, summed over enabled axes.

    Per axis: ReLU( mean_j (colsum_j - 1)^2  -  gamma * n ).  Zero for any
    doubly stochastic matrix, and zero for every hard right-stochastic
    matrix once gamma = 1 because mean_j (colsum_j - 1)^2 <= n - 1 there.
    """
    _check_gamma(gamma)
    total: Var | None = None
    for p in ps:
        if p is None:
            continue
        n = p.value.shape[0]
        if p.value.shape != (n, n):
            raise ShapeError(f"permutation matrix must be square, got {p.value.shape}")
        colsum = ad.sum_axis(p, axis=0)
        dev = ad.add_scalar(colsum, -1.0)
        mean_sq = ad.scale(ad.sum_all(ad.mul(dev, dev)), 1.0 / n)
        term = ad.relu(ad.add_scalar(mean_sq, -gamma * n))
        total = term if total is None else ad.add(total, term)
    return total if total is not None else Var(0.0)


def anneal(state: RcoState) -> None:
    """Multiply tau by 0.9, floored at tau_min (once per epoch)."""
    state.tau = max(ANNEAL_FACTOR * state.tau, state.tau_min)


def harden(p: np.ndarray) -> np.ndarray:
    """One-hot each row at its argmax; ties go to the lowest index."""
    n = p.shape[1]
    out = np.zeros_like(p)
    out[np.arange(p.shape[0]), np.argmax(p, axis=1)] = 1.0
    return out


def doubly_stochastic_gap(p: np.ndarray) -> float:
    """Sum over columns of (colsum - 1)^2; zero iff all columns sum to 1."""
    return float(((p.sum(axis=0) - 1.0) ** 2).sum())


# ---------------------------------------------------------------------------
# Exports (heatmap-ready)
# ---------------------------------------------------------------------------


def perm_bundles(state: RcoState) -> list[dict]:
    """One JSON-ready dict per axis: soft matrix, hardened matrix, tau, gamma."""
    bundles = []
    for axis, (w, on) in enumerate(zip(state.W, state.axis_enabled)):
        n = w.value.shape[0]
        soft = tk.softmax_rows(w.value / state.tau) if on else np.eye(n)
        bundles.append(
            {
                "axis": axis,
                "n": n,
                "enabled": bool(on),
                "soft": soft.tolist(),
                "hard": harden(soft).tolist(),
                "tau": state.tau,
                "gamma": state.gamma,
            }
        )
    return bundles


def export_json(state: RcoState, path) -> None:
    Path(path).write_text(json.dumps(perm_bundles(state), indent=2) + "\n")


def export_csv(state: RcoState, out_dir, prefix: str = "perm") -> list[Path]:
    """Write one CSV per axis and per form (soft/hard), row-major."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for bundle in perm_bundles(state):
        for form in ("soft", "hard"):
            path = out_dir / f"{prefix}_axis{bundle['axis']}_{form}.csv"
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerows(bundle[form])
            written.append(path)
    return written
