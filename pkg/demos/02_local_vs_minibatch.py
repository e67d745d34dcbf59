"""
Local updates against the minibatch baseline
============================================

Both families spend K*M gradients per round for R rounds. The minibatch
baseline averages them into one step; local SGDM lets every worker take K
steps. Each family gets its own best learning rate from the same grid.

The same comparison runs from the command line with
``localadam compare demos/configs/compare.ini``.
"""

from pathlib import Path

from localadam.harness import compare, load_config, parse_config

cfg = load_config(Path(__file__).parent / "configs" / "compare.ini")
report = compare(cfg, write=False)
print(report.summary.table())
print()
print(report.table())

# noiseless runs isolate the optimization term: more local steps help more
for K in (4, 16, 64):
    text = (Path(__file__).parent / "configs" / "compare.ini").read_text()
    text = text.replace("sigma = 1.0", "sigma = 0.0").replace("K = 32", f"K = {K}")
    text = text.replace("seed_count = 20", "seed_count = 1")
    row = compare(parse_config(text), write=False).rows[0]
    print(f"sigma=0, K={K:3d}: local/minibatch gap ratio {row.ratio:.3e}")
