"""Train the operator on a small planted-permutation task.

A smooth field advects across turbines in a hidden canonical order; the
table the model sees is shuffled on both axes.  Training the operator
jointly with the network should recover a useful reordering and beat the
no-operator baseline on validation RMSE.  Runs in about two minutes.
"""
from dataclasses import replace

import numpy as np

import rco.tensor as tk
from rco.cube import harden
from rco.dataflow import SyntheticTaskSpec, make_windows, synthesize
from rco.trainer import TrainConfig, evaluate, train

spec = SyntheticTaskSpec(turbines=5, attributes=3, n_steps=300, seed=3)
table, truth = synthesize(spec)
dataset = make_windows(table, t=8, s=1, target_turbine=truth["target_turbine"],
                       target_attribute=truth["target_attribute"])
print(f"windows: {len(dataset.x)}  hidden turbine perm: {truth['perm_turbine']}")

config = TrainConfig(epochs=30, batch_size=16, lr=0.02, rco_lr=0.1, t=8, s=1,
                     conv_channels=(4, 8), lstm_hidden=16, seed=3, log_val=False)

baseline = train(replace(config, rco_enabled=False), dataset)
rmse_base, _ = evaluate(baseline, dataset, "val")
print(f"baseline (no operator) val rmse: {rmse_base:.4f}")

learned = train(config, dataset)
rmse_soft, _ = evaluate(learned, dataset, "val")
rmse_hard, _ = evaluate(learned, dataset, "val", hard=True)
print(f"with operator          val rmse: {rmse_soft:.4f} (soft) / {rmse_hard:.4f} (hard)")

print("\nlearned turbine-axis matrix (hardened):")
p = tk.softmax_rows(learned.rco.W[0].value / learned.rco.tau)
print(harden(p).astype(int))
print("planted inverse turbine perm:", truth["inverse_perm_turbine"])
print("(at gamma=1 the rows are free to duplicate: the operator often copies")
print(" the most informative slots across the grid instead of recovering the")
print(" exact hidden bijection -- set gamma=0 to push it doubly stochastic)")
print(f"\nimprovement over baseline: {100 * (1 - rmse_soft / rmse_base):.1f}%")
