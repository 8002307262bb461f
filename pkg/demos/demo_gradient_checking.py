"""Verify analytic gradients against central finite differences.

Builds the full chain softmax -> permute -> conv -> LSTM -> MSE on a tiny
grid and reports the worst relative error over every parameter entry.
"""
import numpy as np

from rco import Var
from rco.cube import permute, soft_permutation
from rco.gradcheck import max_relative_error
from rco.layers import CnnLstm
from rco.losses import task_loss

rng = np.random.default_rng(1)
net = CnnLstm(grid=(3, 3), horizon=2, conv_channels=(2, 2), lstm_hidden=3, rng=rng)
w_turbine = Var(rng.normal(size=(3, 3)) * 0.3, requires_grad=True)
w_attr = Var(rng.normal(size=(3, 3)) * 0.3, requires_grad=True)
window = rng.normal(size=(2, 3, 3))
label = rng.normal(size=2)


def loss():
    perms = [soft_permutation(w_turbine, 0.8), soft_permutation(w_attr, 0.8)]
    return task_loss(net.forward_window(window, perms=perms), label)


params = [w_turbine, w_attr] + net.params()
n_entries = sum(p.value.size for p in params)
err = max_relative_error(loss, params)
print(f"checked {n_entries} parameter entries through the full chain")
print(f"max relative error vs central differences: {err:.3e}  (tolerance 1e-5)")
assert err <= 1e-5
print("gradients verified")
