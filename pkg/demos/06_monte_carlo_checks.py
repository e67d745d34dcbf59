"""
Monte-Carlo checks of the clipping and averaging bounds
=======================================================

Every row compares an estimate against its bound with a standard-error
allowance. Rows whose preconditions fail are skipped rather than failed.
Same as ``localadam lemmas``.
"""

from localadam.harness import run_lemma_suite

report = run_lemma_suite(seed=0, n_draws=100_000)
print(report.table())
print("all passed:", report.passed)
