"""Tour of the permutation operator on toy matrices.

Shows the tempered softmax relaxation, temperature annealing driving rows
one-hot, hardening, the doubly-stochastic gap, and the soft regularization
loss at its two extremes.
"""
import numpy as np

from rco import Var
from rco.cube import (
    RcoState,
    anneal,
    doubly_stochastic_gap,
    harden,
    regularization_loss,
    soft_permutation,
)

rng = np.random.default_rng(0)

print("=== Tempered softmax relaxation ===")
w = Var(rng.normal(size=(4, 4)))
for tau in (1.0, 0.5, 0.1, 0.01):
    p = soft_permutation(w, tau).value
    print(f"tau={tau:<5} row sums={p.sum(axis=1)}  max entries={p.max(axis=1).round(4)}")

print("\n=== Annealing schedule (x0.9 per epoch, floored) ===")
state = RcoState.create([4, 3], gamma=1.0, lambda_=1.0, tau_min=1e-3)
taus = []
for _ in range(80):
    anneal(state)
    taus.append(state.tau)
print("tau after 1, 10, 40, 80 epochs:", taus[0], taus[9], taus[39], taus[79])

print("\n=== Hardening snaps rows to their argmax ===")
p_soft = soft_permutation(w, 0.3).value
p_hard = harden(p_soft)
print("soft:\n", p_soft.round(3))
print("hard:\n", p_hard)
print("hard rows sum to 1:", p_hard.sum(axis=1), " entries binary:", set(np.unique(p_hard)))

print("\n=== Doubly-stochastic gap ===")
print("identity:", doubly_stochastic_gap(np.eye(4)))
dup = np.zeros((4, 4))
dup[:, 0] = 1.0
print("all rows to column 0:", doubly_stochastic_gap(dup))

print("\n=== Soft regularization loss ===")
print("duplicating matrix, gamma=0 :", float(regularization_loss([Var(dup)], 0.0).value))
print("duplicating matrix, gamma=1 :", float(regularization_loss([Var(dup)], 1.0).value))
print("identity, any gamma         :", float(regularization_loss([Var(np.eye(4))], 0.5).value))
