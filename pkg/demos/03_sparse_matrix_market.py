# %% [markdown]
# Sparse input from a MatrixMarket file
#
# Term-document style data usually arrives as a sparse coordinate file. The
# reader returns CSR and the solvers never densify X.

# %%
import tempfile
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from extranmf import SolverConfig, run
from extranmf.data import random_init, read_matrix_market, write_matrix_market

rng = np.random.default_rng(3)
X = sp.random(300, 120, density=0.05, random_state=4, format="csr")
X.data = rng.poisson(3.0, X.nnz).astype(float) + 1.0

path = Path(tempfile.mkdtemp()) / "counts.mtx"
write_matrix_market(path, X)
Y = read_matrix_market(path)
print(Y.shape, Y.nnz, "entries; identical:", (Y != X).nnz == 0)

# %%
W0, H0 = random_init(300, 120, 8, seed=0)
rec = run(Y, W0, H0, SolverConfig.e_ahals(hp=3, max_outer_iterations=50))
print(f"relative error after {len(rec.iterations)} iterations: {rec.final_rel_error:.4f}")
