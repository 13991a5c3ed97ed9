# %% [markdown]
# A small comparison suite
#
# Every algorithm starts from the same initial factors for each
# (dataset, initialization) pair. Final errors are ranked per pair and the
# shifted error curves E(k) are written as CSV next to a JSON summary.

# %%
import json
import tempfile
from pathlib import Path

from extranmf import bench

spec = bench.synthetic_suite(
    "lowrank", n_datasets=2, inits=2, m=60, n=50, r=5, max_iterations=80,
    algorithms=["anls", "e-anls-hp1", "ahals", "e-ahals-hp3"],
)
result = bench.run_suite(spec)

# %%
table = result.ranking
for name in table.algorithms:
    print(f"{name:12s} mean {table.mean[name]:.3e}  ranks {table.ranking[name]}")

# %%
out = Path(tempfile.mkdtemp(prefix="extranmf-demo-"))
bench.emit(result, out)
print(sorted(p.name for p in out.iterdir())[:6], "...")
print(json.loads((out / "summary.json").read_text())["ranked_runs"], "ranked groups")

# %% [markdown]
# Curves are plain data; plot ``curve_<algo>.csv`` with any tool you like.

# %%
print((out / "curve_e-anls-hp1.csv").read_text().splitlines()[:4])
