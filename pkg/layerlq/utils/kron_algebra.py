"""Kronecker products, Kronecker sums and slot substitution.

Dense matrices throughout. Folds are left-associated:
kron_many([A, B, C]) == kron(kron(A, B), C).
"""
from __future__ import annotations

from functools import reduce
from typing import Sequence

import numpy as np

from layerlq.errors import DimensionError

MatrixList = Sequence[np.ndarray]


def _as_matrix(x) -> np.ndarray:
    m = np.atleast_2d(np.asarray(x, dtype=float))
    if m.ndim != 2:
        raise DimensionError(f"expected a matrix, got array of shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DimensionError("matrix has non-finite entries")
    return m


def _require_square(m: np.ndarray, name: str = "factor") -> None:
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")


def kron(a, b) -> np.ndarray:
    """Block (i, j) of the result is a[i, j] * b."""
    return np.kron(_as_matrix(a), _as_matrix(b))


def kron_sum(a, b) -> np.ndarray:
    """a ⊕ b = a ⊗ I_m + I_n ⊗ b."""
    a, b = _as_matrix(a), _as_matrix(b)
    _require_square(a, "left factor")
    _require_square(b, "right factor")
    n, m = a.shape[0], b.shape[0]
    return np.kron(a, np.eye(m)) + np.kron(np.eye(n), b)


def kron_many(factors: MatrixList) -> np.ndarray:
    if len(factors) == 0:
        raise DimensionError("kron_many of an empty list")
    return reduce(kron, [_as_matrix(f) for f in factors])


def kron_sum_many(factors: MatrixList) -> np.ndarray:
    if len(factors) == 0:
        raise DimensionError("kron_sum_many of an empty list")
    mats = [_as_matrix(f) for f in factors]
    for i, m in enumerate(mats, start=1):
        _require_square(m, f"factor {i}")
    return reduce(kron_sum, mats)


def slot_product(factors: MatrixList, k: int, d) -> np.ndarray:
    """C_1 ⊗ … ⊗ C_{k-1} ⊗ D ⊗ C_{k+1} ⊗ … ⊗ C_l, with 1-based slot k."""
    ell = len(factors)
    if not 1 <= k <= ell:
        raise DimensionError(f"slot {k} out of range 1..{ell}")
    mats = list(factors)
    mats[k - 1] = d
    return kron_many(mats)


def identities(dims: Sequence[int]) -> list[np.ndarray]:
    return [np.eye(n) for n in dims]


def kron_eigvalsh(factors: MatrixList) -> np.ndarray:
    """Eigenvalues of the Kronecker product of symmetric factors, ascending.

    They are all products of factor eigenvalues, so no product-sized matrix is formed.
    """
    if len(factors) == 0:
        raise DimensionError("kron_eigvalsh of an empty list")
    spectra = []
    for i, f in enumerate(factors, start=1):
        m = _as_matrix(f)
        _require_square(m, f"factor {i}")
        spectra.append(np.linalg.eigvalsh(0.5 * (m + m.T)))
    return np.sort(reduce(np.multiply.outer, spectra).ravel())
