"""Closed-form covariance functions of the Gaussian-measure construction
for the free, heat and 1D wave cases, and exact GP regression with them.

Constant prefactors such as ``sqrt(2 pi)`` are kept so that each kernel is
exactly the spectral integral it comes from.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .sepgp import PosteriorResult

KINDS = ("se", "heat1d", "heat2d_scaled", "wave1d_4term", "wave1d_2term")

_SQRT_2PI = np.sqrt(2 * np.pi)


class DomainViolation(ValueError):
    pass


@dataclass(frozen=True)
class KernelHandle:
    """A closed-form kernel.

    ``n`` is the input dimension for ``se`` (fixed at 2 or 3 for the
    others) and ``sigma2`` the spectral scale of ``heat2d_scaled``.
    """

    kind: str
    n: int | None = None
    sigma2: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "se" and (self.n is None or self.n < 1):
            raise ValueError("se kernel needs an input dimension n >= 1")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    @property
    def dim(self):
        return {"se": self.n, "heat2d_scaled": 3}.get(self.kind, 2)


def se(n):
    return KernelHandle("se", n=n)


def heat2d_scaled(sigma2):
    return KernelHandle("heat2d_scaled", sigma2=float(sigma2))


def gram(k: KernelHandle, P, Q):
    """Kernel matrix between point sets P (N, dim) and Q (M, dim)."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if P.shape[1] != k.dim or Q.shape[1] != k.dim:
        raise ValueError(f"{k.kind} expects points of dimension {k.dim}")
    if k.kind == "se":
        r2 = np.sum((P[:, None, :] - Q[None, :, :]) ** 2, axis=-1)
        return _SQRT_2PI**k.n * np.exp(-0.5 * r2)
    if k.kind in ("heat1d", "heat2d_scaled"):
        T = P[:, None, -1] + Q[None, :, -1]
        s = 1.0 / k.sigma2 + 2.0 * T
        if np.any(s <= 0):
            raise DomainViolation(
                f"{k.kind} needs t + t' > {-0.5 / k.sigma2:g}, got {float(T.min()):g}"
            )
        r2 = np.sum((P[:, None, :-1] - Q[None, :, :-1]) ** 2, axis=-1)
        if k.kind == "heat1d":
            return _SQRT_2PI * np.exp(-r2 / (2 * s)) / np.sqrt(s)
        return np.exp(-r2 / (2 * s)) / s
    x, t = P[:, 0], P[:, 1]
    xq, tq = Q[:, 0], Q[:, 1]
    pairs = [(x - t, xq - tq), (x + t, xq + tq)]
    if k.kind == "wave1d_4term":
        pairs += [(x - t, xq + tq), (x + t, xq - tq)]
    K = sum(np.exp(-0.5 * (a[:, None] - b[None, :]) ** 2) for a, b in pairs)
    return _SQRT_2PI * K if k.kind == "wave1d_4term" else K


def eval_kernel(k: KernelHandle, p, q) -> float:
    return float(gram(k, p, q)[0, 0])


def gp_regress(k: KernelHandle, X, Y, noise, Xq, want_cov="full") -> PosteriorResult:
    """Exact GP posterior with Gaussian observation noise of variance
    ``noise``.

    Returns mean of shape (Q, 1) and the full (Q, Q) covariance (its
    diagonal as (Q, 1) for ``want_cov="diag"``, nothing for ``"none"``). ``nlml_at_fit`` omits the
    ``n/2 log(2 pi)`` constant.
    """
    if noise < 0:
        raise ValueError("noise variance must be nonnegative")
    if want_cov not in ("none", "diag", "full"):
        raise ValueError(f"want_cov must be none, diag or full, not {want_cov!r}")
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    Y = np.asarray(Y, dtype=float).ravel()
    X = np.asarray(X, dtype=float).reshape(len(Y), -1) if len(Y) else np.zeros((0, k.dim))
    if len(Y) == 0:
        Kqq = gram(k, Xq, Xq)
        cov = {"full": Kqq, "diag": np.diagonal(Kqq).copy()[:, None]}.get(want_cov)
        return PosteriorResult(np.zeros((len(Xq), 1)), cov, 0.0, 0.0)
    C = gram(k, X, X) + noise * np.eye(len(Y))
    factor = linalg.cholesky(C)
    alpha = linalg.solve_triangular(factor.L, Y, "lower")
    Kxq = gram(k, X, Xq)
    V = linalg.solve_triangular(factor.L, Kxq, "lower")
    mean = V.T @ alpha
    cov = None
    if want_cov == "full":
        cov = gram(k, Xq, Xq) - V.T @ V
    elif want_cov == "diag":
        prior = np.array([eval_kernel(k, p, p) for p in Xq])
        cov = (prior - np.sum(V**2, axis=0))[:, None]
    value = 0.5 * float(alpha @ alpha) + 0.5 * factor.log_det
    return PosteriorResult(mean[:, None], cov, value, factor.jitter_used)


def heat2d_grid_posterior(values, axis, sigma2, noise, times):
    """Exact ``heat2d_scaled`` posterior mean on a square grid.

    The data are ``values[i, j]`` at ``(axis[i], axis[j], 0)``. At equal
    times the kernel factors over the two space axes, so the Gram matrix is
    a Kronecker product and one eigendecomposition of the 1D factor solves
    the system. Returns an array (len(times), G, G) of posterior means on
    the same grid at each requested time and the NLML of the data (without
    the ``n/2 log 2 pi`` constant).
    """
    values = np.asarray(values, dtype=float)
    axis = np.asarray(axis, dtype=float)
    if values.shape != (len(axis), len(axis)):
        raise ValueError("values must be a square grid over axis")
    if any(t < 0 for t in times):
        raise DomainViolation("heat2d_grid_posterior needs t >= 0")
    d2 = (axis[:, None] - axis[None, :]) ** 2
    a0 = 1.0 / sigma2
    lam, Q = np.linalg.eigh(np.exp(-d2 / (2 * a0)))
    lam = np.clip(lam, 0.0, None)
    eig = np.outer(lam, lam) / a0 + noise
    coef = (Q.T @ values @ Q) / eig
    alpha = Q @ coef @ Q.T
    value = 0.5 * float(np.sum(values * alpha)) + 0.5 * float(np.sum(np.log(eig)))
    frames = []
    for t in times:
        # query time t against data time 0: t + t' = t
        a = a0 + 2.0 * t
        Kt = np.exp(-d2 / (2 * a))
        frames.append(Kt @ alpha @ Kt.T / a)
    return np.stack(frames), value
