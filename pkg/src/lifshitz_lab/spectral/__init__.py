"""Eigenvalue counting by inertia and a dense eigenvalue oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..assembly import SymmetricOperatorMatrix
from ..errors import NoConvergence, SingularShift, TooLarge
from . import _kernels

__all__ = [
    "CountingProfile",
    "count_at_or_below",
    "counting_profile",
    "eigenvalues_dense",
    "tie_guard",
    "DENSE_THRESHOLD",
]

DENSE_THRESHOLD = 2000
MAX_RETRIES = 3
MAX_QL_SWEEPS = 50


@dataclass(frozen=True)
class CountingProfile:
    energies: np.ndarray
    counts: np.ndarray
    n: int

    def __post_init__(self):
        c = self.counts
        if c.size and (c[0] < 0 or c[-1] > self.n or np.any(np.diff(c) < 0)):
            raise RuntimeError(f"counting profile violates 0 <= c monotone <= n: {c.tolist()}")


def tie_guard(A: SymmetricOperatorMatrix) -> float:
    return 1e-12 * max(1.0, A.scale)


def _raw_counts(A: SymmetricOperatorMatrix, sigmas: np.ndarray):
    sigmas = np.ascontiguousarray(sigmas, dtype=float)
    counts = np.empty(sigmas.shape[0], dtype=np.int64)
    status = np.empty(sigmas.shape[0], dtype=np.int64)
    if A.structure == "dense":
        _kernels.dense_profile(A.dense_full, sigmas, counts, status)
    else:
        _kernels.block_tridiagonal_profile(A.diag, A.lower, sigmas, counts, status)
    return counts, status


def _counts_with_retry(A: SymmetricOperatorMatrix, energies: np.ndarray) -> np.ndarray:
    tau = tie_guard(A)
    sigmas = np.asarray(energies, dtype=float) + tau
    counts, status = _raw_counts(A, sigmas)
    for q in np.flatnonzero(status):
        sigma = sigmas[q]
        for _ in range(MAX_RETRIES):
            sigma += 10 * tau
            c, st = _raw_counts(A, np.array([sigma]))
            if st[0] == _kernels.OK:
                counts[q] = c[0]
                break
        else:
            raise SingularShift(f"A - (E + tau) I stays singular near E = {energies[q]!r} after "
                                f"{MAX_RETRIES} perturbations")
    return counts


def count_at_or_below(A: SymmetricOperatorMatrix, E: float) -> int:
    """Number of eigenvalues below ``E + tau`` (tau = 1e-12 max(1, scale)).

    Computed as the negative inertia of a pivoted LDL^H factorization of
    ``A - (E + tau) I``; no eigenvalues are formed.
    """
    if not np.isfinite(E):
        raise ValueError("energy must be finite")
    return int(_counts_with_retry(A, np.array([E]))[0])


def counting_profile(A: SymmetricOperatorMatrix, energies) -> CountingProfile:
    """Counts at every energy of a strictly increasing grid, one factorization each."""
    energies = np.asarray(energies, dtype=float)
    if energies.ndim != 1 or np.any(np.diff(energies) <= 0):
        raise ValueError("energy grid must be one-dimensional and strictly increasing")
    counts = _counts_with_retry(A, energies)
    return CountingProfile(energies=energies, counts=counts, n=A.n)


def eigenvalues_dense(A: SymmetricOperatorMatrix | np.ndarray, max_n: int = DENSE_THRESHOLD) -> np.ndarray:
    """All eigenvalues, ascending, by Householder reduction and implicit QL."""
    a = A.dense_full if isinstance(A, SymmetricOperatorMatrix) else np.asarray(A)
    n = a.shape[0]
    if n > max_n:
        raise TooLarge(f"n = {n} exceeds the dense threshold {max_n}")
    work = np.array(a, dtype=np.result_type(a.dtype, np.float64), order="C")
    d = np.empty(n)
    e = np.empty(n)
    _kernels.householder_tridiagonal(work, d, e)
    if _kernels.tql_eigenvalues(d, e, MAX_QL_SWEEPS) != 0:
        raise NoConvergence(f"QL iteration exceeded {MAX_QL_SWEEPS} sweeps for one eigenvalue")
    return np.sort(d)
