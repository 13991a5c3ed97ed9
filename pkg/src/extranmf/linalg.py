"""Dense and sparse kernels shared by the NNLS solvers and the error evaluation.

Dense matrices are plain ``float64`` :class:`numpy.ndarray` objects; sparse
matrices are :class:`scipy.sparse.csr_matrix` (row-compressed, sorted column
indices). Every function here is pure.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "GramCache",
    "as_dense",
    "as_sparse",
    "cross_wx",
    "cross_xht",
    "fingerprint",
    "frob_inner",
    "frob_norm_sq",
    "gram",
    "gram_cache_for_h",
    "gram_cache_for_w",
    "is_sparse",
]


def is_sparse(X) -> bool:
    return sp.issparse(X)


def as_dense(A, name: str = "matrix") -> np.ndarray:
    """Validate and return ``A`` as a finite 2-D float64 array (row-major)."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite values")
    return A


def as_sparse(X, name: str = "matrix") -> sp.csr_matrix:
    """Return ``X`` as a canonical CSR matrix with sorted indices and finite data."""
    X = sp.csr_matrix(X, dtype=np.float64)
    if X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError(f"{name} must have positive dimensions, got {X.shape}")
    if not X.has_sorted_indices:
        X = X.sorted_indices()
    if not np.all(np.isfinite(X.data)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def gram(A: np.ndarray) -> np.ndarray:
    """Return ``A.T @ A`` with bit-exact symmetry.

    The upper triangle is mirrored into the lower one so that downstream
    factorizations never see an asymmetric matrix.
    """
    G = A.T @ A
    iu = np.triu_indices(G.shape[0], 1)
    G.T[iu] = G[iu]
    return G


def cross_wx(W: np.ndarray, X) -> np.ndarray:
    """Return ``W.T @ X`` (r x n) for dense or CSR ``X``."""
    if W.shape[0] != X.shape[0]:
        raise ValueError(f"row mismatch: W has {W.shape[0]}, X has {X.shape[0]}")
    if sp.issparse(X):
        # (X^T W)^T touches each stored entry of X once.
        return np.asarray((X.T @ W).T)
    return W.T @ X


def cross_xht(X, H: np.ndarray) -> np.ndarray:
    """Return ``X @ H.T`` (m x r) for dense or CSR ``X``."""
    if X.shape[1] != H.shape[1]:
        raise ValueError(f"column mismatch: X has {X.shape[1]}, H has {H.shape[1]}")
    if sp.issparse(X):
        return np.asarray(X @ H.T)
    return X @ H.T


def frob_inner(A: np.ndarray, B: np.ndarray) -> float:
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {B.shape}")
    return float(np.dot(A.ravel(), B.ravel()))


def frob_norm_sq(X) -> float:
    if sp.issparse(X):
        data = X.data
    else:
        data = np.asarray(X).ravel()
    return float(np.dot(data, data))


def fingerprint(A: np.ndarray) -> str:
    """Content hash used to stamp caches with the factor they came from."""
    A = np.ascontiguousarray(A)
    h = hashlib.blake2b(digest_size=16)
    h.update(str(A.shape).encode())
    h.update(A.tobytes())
    return h.hexdigest()


@dataclass(frozen=True)
class GramCache:
    """Gram and cross products of one factor against ``X``.

    For a fixed ``W`` this holds ``gram = W^T W`` (r x r) and
    ``cross = W^T X`` (r x n); for a fixed ``H`` it holds ``gram = H H^T``
    and ``cross = X H^T`` (m x r). ``stamp`` identifies the factor.
    """

    gram: np.ndarray
    cross: np.ndarray
    stamp: str

    def check_symmetric(self, rtol: float = 1e-12) -> bool:
        G = self.gram
        scale = max(float(np.max(np.abs(G))), np.finfo(float).tiny)
        return bool(np.max(np.abs(G - G.T)) <= rtol * scale and np.all(np.diag(G) >= 0))


def gram_cache_for_w(W: np.ndarray, X, stamp: bool = True) -> GramCache:
    return GramCache(gram(W), cross_wx(W, X), fingerprint(W) if stamp else "")


def gram_cache_for_h(H: np.ndarray, X, stamp: bool = True) -> GramCache:
    return GramCache(gram(H.T), cross_xht(X, H), fingerprint(H) if stamp else "")
