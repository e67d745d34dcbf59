"""
One communication round, step by step
=====================================

Four workers start from the same point, take K local Adam steps with
their own noisy gradients, then average x, u and v. The consensus error
measures how far apart they drift before averaging.
"""

import numpy as np

from localadam import ClipRule, GradientOracle, NoiseModel, OptimizerConfig, Quadratic, RngStream
from localadam.clipping import clip
from localadam.diagnostics import consensus_error
from localadam.optim import ClusterState, WorkerState, communicate, local_step

obj = Quadratic(np.array([0.2, 1.0]))
oracle = GradientOracle(obj, NoiseModel("student_t", np.array([1.0, 1.0]), dof=5.0))
cfg = OptimizerConfig(eta=0.1, beta1=0.9, beta2=0.99, lam=0.5, M=4, K=5,
                      clip=ClipRule("coordinate", 3.0))

cs = ClusterState.initial(np.array([2.0, -1.0]), cfg.M)
workers = cs.workers
for k in range(cfg.K):
    new = []
    for m, w in enumerate(workers):
        g = obj.grad(w.x) + oracle.noise_draw(RngStream(seed=0, m=m, r=0, k=k))
        new.append(local_step(w, clip(g, cfg.clip), cfg))
    workers = new
    print(f"k={k}  consensus error {consensus_error(workers):.4f}")

# the barrier: every worker gets the mean state
stacked = ClusterState(*(np.stack([getattr(w, a) for w in workers]) for a in "xuv"))
after = communicate(stacked)
print("after averaging:", after.x[0], "consensus", consensus_error(after.x))

# H_r for the next round comes from the averaged second moment
print("next preconditioner diag:", after.preconditioner(cfg.lam).diag)
