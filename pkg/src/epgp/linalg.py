"""Dense complex linear algebra: Hermitian Cholesky with a jitter ladder,
triangular solves, and Gram-matrix sampling.

Everything here runs in double precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.linalg import blas

#: Jitter ladder, in units of ``trace(A) / n``.
DEFAULT_LADDER = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)


class NotPositiveDefinite(np.linalg.LinAlgError):
    pass


class NotHermitian(ValueError):
    pass


class SingularTriangular(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower factor ``L`` with ``L @ L^H = A + jitter_used * I``."""

    L: np.ndarray
    jitter_used: float
    log_det: float


def is_hermitian(A, rtol=1e-12):
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        return False
    return bool(np.all(np.abs(A - A.conj().T) <= rtol * (1.0 + np.abs(A))))


def outer_gram(B, adjoint=False):
    """Hermitian product ``B B^H`` (or ``B^H B`` with ``adjoint``), exactly
    Hermitian, via a rank-k update that computes one triangle."""
    B = np.asarray(B)
    if np.iscomplexobj(B):
        T = blas.zherk(1.0, B, trans=2 if adjoint else 0, lower=1)
    else:
        T = blas.dsyrk(1.0, np.asarray(B, dtype=float), trans=1 if adjoint else 0, lower=1)
    strict = np.tril(T, -1)
    out = strict + strict.conj().T
    out[np.diag_indices_from(out)] = np.real(np.diagonal(T))
    return out


def cholesky(A, ladder=DEFAULT_LADDER, check=True) -> CholeskyFactor:
    """Factor a Hermitian matrix, escalating diagonal jitter until it works.

    The ladder entries are relative to the mean diagonal ``trace(A)/n``
    (or 1 when that is not positive). The smallest entry that yields a
    factor wins.
    """
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if check and not is_hermitian(A):
        raise NotHermitian("matrix is not Hermitian within 1e-12 relative")
    A = 0.5 * (A + A.conj().T)
    n = A.shape[0]
    if n == 0:
        return CholeskyFactor(np.zeros((0, 0), dtype=A.dtype), 0.0, 0.0)
    scale = float(np.real(np.trace(A))) / n
    if not scale > 0:
        scale = 1.0
    eye = np.eye(n)
    for rung in ladder:
        jitter = rung * scale
        try:
            L = np.linalg.cholesky(A + jitter * eye if jitter else A)
        except np.linalg.LinAlgError:
            continue
        diag = np.real(np.diagonal(L))
        if not np.all(np.isfinite(L)) or np.any(diag <= 0):
            continue
        return CholeskyFactor(L, float(jitter), float(2.0 * np.sum(np.log(diag))))
    raise NotPositiveDefinite(
        f"Cholesky failed for all jitter levels up to {ladder[-1] * scale:.3g}"
    )


def solve_triangular(L, B, side="lower"):
    """Solve ``L X = B`` (side='lower') or ``L^H X = B`` (side='upper').

    ``L`` is always the lower factor; 'upper' refers to its conjugate
    transpose.
    """
    L = np.asarray(L)
    if np.any(np.diagonal(L) == 0):
        raise SingularTriangular("zero on the diagonal of a triangular factor")
    if side == "lower":
        return sla.solve_triangular(L, B, lower=True, check_finite=False)
    if side == "upper":
        return sla.solve_triangular(L, B, lower=True, trans="C", check_finite=False)
    raise ValueError(f"side must be 'lower' or 'upper', not {side!r}")


def cho_solve(factor: CholeskyFactor, B):
    """Solve ``(L L^H) X = B``."""
    return solve_triangular(factor.L, solve_triangular(factor.L, B, "lower"), "upper")


def standard_complex_normal(rng, shape):
    """Entries ``a + ib`` with ``a, b ~ N(0, 1)`` independent.

    With this convention ``Re(L xi)`` has covariance ``Re(L L^H)``.
    """
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def gram_cholesky_sample(K, seed, ladder=DEFAULT_LADDER):
    """Draw one real sample with covariance ``Re(K)``.

    Returns ``Re(L xi)``; an all-zero ``K`` gives the zero vector.
    """
    K = np.asarray(K)
    n = K.shape[0]
    rng = np.random.default_rng(seed)
    xi = standard_complex_normal(rng, n)
    if not np.any(K):
        return np.zeros(n)
    factor = cholesky(K, ladder)
    return np.real(factor.L @ xi)
