"""
How far do workers drift?
=========================

Peak consensus error across a run, median over seeds. It should grow
linearly in the step size and roughly like sqrt(K) in the number of local
steps, as long as K is long compared with the momentum memory 1/(1-beta1).
"""

import numpy as np

from localadam import GradientOracle, NoiseModel, OptimizerConfig, Quadratic, TrajectoryRecorder, run
from localadam.diagnostics import nearest_rank

obj = Quadratic(np.linspace(0.1, 1.0, 8))
oracle = GradientOracle(obj, NoiseModel("gaussian", np.ones(8)))


def peak(eta, K, beta1, seeds=40):
    vals = []
    for s in range(seeds):
        cfg = OptimizerConfig(eta=eta, beta1=beta1, M=4, K=K, R=20)
        rec = run(cfg, oracle, np.ones(8), s, recorder=TrajectoryRecorder(obj, moreau=False))
        vals.append(rec.consensus_err.max())
    return float(nearest_rank(np.array(vals), 0.5))


for beta1 in (0.0, 0.5, 0.9):
    base = peak(0.01, 8, beta1)
    print(f"beta1={beta1}: eta x2 -> x{peak(0.02, 8, beta1) / base:.2f}, "
          f"K 8->16 -> x{peak(0.01, 16, beta1) / base:.2f}, K 8->32 -> x{peak(0.01, 32, beta1) / base:.2f}")
