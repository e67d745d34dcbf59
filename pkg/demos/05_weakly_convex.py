"""
Stationarity on a nonconvex robust loss
=======================================

Geman-McClure is weakly convex, so the natural progress measure is the
gradient of its Moreau envelope under the round's preconditioner H_r.
We track its running average for Local Adam.
"""

import numpy as np

from localadam import ClipRule, GemanMcClure, GradientOracle, NoiseModel, OptimizerConfig, run

obj = GemanMcClure(np.linspace(0.5, 1.5, 8))
print(f"L={obj.L:.2f}  tau={obj.tau:.3f}")
oracle = GradientOracle(obj, NoiseModel("student_t", np.full(8, 0.5), dof=6.0))
for R in (16, 64):
    cfg = OptimizerConfig(eta=0.05, M=4, K=8, R=R, clip=ClipRule("coordinate", 3.0))
    rec = run(cfg, oracle, np.ones(8), seed=0)
    avg = rec.running_average("moreau_grad_nsq")
    marks = [avg[r * cfg.K - 1] for r in (1, R // 4, R // 2, R)]
    print(f"R={R:3d}: running average after rounds 1, R/4, R/2, R: " + ", ".join(f"{v:.4f}" for v in marks))
    print(f"       final gap {obj.gap(rec.final_x):.2e}")
