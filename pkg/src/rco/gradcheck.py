"""Central finite-difference gradient checking.

The numeric side evaluates the loss function twice per parameter entry with
the parameter perturbed by +/- step, entirely outside any tape, so it is
independent of the backward rules it is used to check.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .autodiff import Var, backward, new_tape

# Entries whose analytic and numeric gradients are both below this floor are
# compared absolutely: central differences on an O(1) loss carry ~1e-10 of
# roundoff noise, which would swamp a relative comparison near zero.
REL_FLOOR = 1e-3


def numeric_gradient(fn: Callable[[], Var], param: Var, step: float = 1e-6) -> np.ndarray:
    """d(fn)/d(param) by central differences, one entry at a time."""
    flat = param.value.reshape(-1)
    out = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = float(fn().value)
        flat[i] = orig - step
        lo = float(fn().value)
        flat[i] = orig
        out[i] = (hi - lo) / (2.0 * step)
    return out.reshape(param.value.shape)


def max_relative_error(
    fn: Callable[[], Var], params: Sequence[Var], step: float = 1e-6
) -> float:
    """Worst relative error between analytic and numeric gradients.

    ``fn`` must rebuild the graph from the current parameter values on every
    call and return a scalar Var.  Error per entry is
    ``|a - n| / max(|a|, |n|, REL_FLOOR)``.
    """
    for p in params:
        p.zero_grad()
    with new_tape():
        loss = fn()
        backward(loss)
    worst = 0.0
    for p in params:
        analytic = p.grad.copy()
        p.zero_grad()
        numeric = numeric_gradient(fn, p, step=step)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_FLOOR)
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / denom)))
    return worst


def check_gradients(
    fn: Callable[[], Var],
    params: Sequence[Var],
    step: float = 1e-6,
    rtol: float = 1e-5,
) -> float:
    """Assert analytic gradients match central differences within ``rtol``."""
    err = max_relative_error(fn, params, step=step)
    if err > rtol:
        raise AssertionError(f"gradient check failed: max relative error {err:.3e} > {rtol:.1e}")
    return err
