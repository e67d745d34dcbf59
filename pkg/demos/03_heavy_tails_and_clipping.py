"""
Heavy tails break plain SGD; clipping helps when it bites
=========================================================

On f(x) = x^2 / 2 the noise is zero except at the last step, where it is a
rare spike of size sigma*A. Without clipping the failure probability is
exactly 1/A^alpha. Clipping only helps once rho drops below the spike.
"""

from localadam.harness import AppendixDParams, run_appendix_d

base = AppendixDParams(x0=1.0, T=10, n_trials=100_000, seed=1)
print(run_appendix_d(base).text())
print()
for rho in (8.0, 6.0, 4.0, 3.0, 2.0, 1.5, 1.0):
    rep = run_appendix_d(AppendixDParams(x0=1.0, T=10, rho=rho, n_trials=100_000, seed=1))
    print(f"rho={rho:4.1f}  clipped failure {rep.clipped:.5f}  (unclipped {rep.unclipped:.5f})")
