"""Sparse EPGP: a weight-space GP ``f(x) = Re(w^H phi(x))`` whose features
``phi`` are branch-averaged exponential-polynomial solutions of the PDE.

With ``w ~ CN(0, Sigma)`` and observation noise ``sigma0^2`` the objective
and posterior only need one Cholesky factor of the F x F matrix

    A = Phi Phi^H + sigma0^2 Sigma^{-1}.

The usual ``1/(m r)`` prior normalization lives inside ``Sigma``: spectral
weights are initialized at ``log sigma_j^2 = -log F``.

The posterior variance uses the observation noise ``sigma0^2`` as its
prefactor, i.e. ``sigma0^2 * phi_*^H A^{-1} phi_*``, which is the exact
conditional covariance of the latent function under this model.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import linalg
from .systems import PdeSystemSpec, eval_features, features_and_vjp


@dataclass
class Dataset:
    """Input points plus a flat list of (point, component, value)
    observations. Vector-valued systems may observe any subset of
    components."""

    X: np.ndarray
    point: np.ndarray
    component: np.ndarray
    value: np.ndarray

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.point = np.asarray(self.point, dtype=int).ravel()
        self.component = np.asarray(self.component, dtype=int).ravel()
        self.value = np.asarray(self.value, dtype=float).ravel()
        if not (len(self.point) == len(self.component) == len(self.value)):
            raise ValueError("observation arrays differ in length")
        if len(self.point) and (self.point.min() < 0 or self.point.max() >= len(self.X)):
            raise ValueError("observation refers to a missing point")
        if not np.all(np.isfinite(self.value)):
            raise ValueError("observed values must be finite")

    @classmethod
    def from_values(cls, X, Y, components=None):
        """Observe every (or the listed) component at every point; ``Y`` has
        shape (P,) or (P, out_dim)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        comps = np.arange(Y.shape[1]) if components is None else np.asarray(components)
        P = len(X)
        point = np.repeat(np.arange(P), len(comps))
        component = np.tile(comps, P)
        return cls(X, point, component, Y[point, component])

    def __len__(self):
        return len(self.value)

    def columns(self, out_dim):
        """Column indices into a feature matrix with ``out_dim`` outputs."""
        if len(self.component) and self.component.max() >= out_dim:
            raise ValueError("observation component exceeds the system's outputs")
        return self.point * out_dim + self.component


@dataclass
class SpectralParams:
    """Trainable state of an S-EPGP model.

    ``Zre``/``Zim`` hold the free spectral coordinates of each feature
    (shape (F, d)); ``slot`` says which multiplier a feature belongs to.
    ``imaginary`` pins a feature's real part at zero and ``frozen`` fixes its
    spectral point and weight. When ``log_scale`` is set the stored
    coordinates are frozen base samples and the effective points are
    ``exp(log_scale) * (Zre + i Zim)``.
    """

    slot: np.ndarray
    Zre: np.ndarray
    Zim: np.ndarray
    log_sigma: np.ndarray
    log_noise: float
    imaginary: np.ndarray
    frozen: np.ndarray
    noise_frozen: bool = False
    log_scale: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.slot = np.asarray(self.slot, dtype=int)
        self.Zre = np.atleast_2d(np.asarray(self.Zre, dtype=float))
        self.Zim = np.atleast_2d(np.asarray(self.Zim, dtype=float))
        self.log_sigma = np.asarray(self.log_sigma, dtype=float).ravel()
        self.log_noise = float(self.log_noise)
        F = len(self.slot)
        self.imaginary = np.broadcast_to(np.asarray(self.imaginary, dtype=bool), (F,)).copy()
        self.frozen = np.broadcast_to(np.asarray(self.frozen, dtype=bool), (F,)).copy()
        if self.Zre.shape != self.Zim.shape or len(self.Zre) != F or len(self.log_sigma) != F:
            raise ValueError("inconsistent SpectralParams shapes")
        self.Zre[self.imaginary] = 0.0

    @property
    def F(self):
        return len(self.slot)

    @property
    def d(self):
        return self.Zre.shape[1]

    @property
    def scale(self):
        return 1.0 if self.log_scale is None else float(np.exp(self.log_scale))

    def points(self):
        return self.scale * (self.Zre + 1j * self.Zim)

    def domain(self):
        return "imaginary-axis" if np.all(self.imaginary) else "full-complex"

    def copy(self):
        return replace(
            self,
            slot=self.slot.copy(),
            Zre=self.Zre.copy(),
            Zim=self.Zim.copy(),
            log_sigma=self.log_sigma.copy(),
            imaginary=self.imaginary.copy(),
            frozen=self.frozen.copy(),
            meta=dict(self.meta),
        )


def init_params(spec: PdeSystemSpec, per_slot, seed, scale=1.0, complex_points=False,
                log_noise=np.log(1e-5), log_sigma=None):
    """Random S-EPGP initialization: ``per_slot`` spectral points for every
    multiplier, each real coordinate drawn from ``N(0, scale^2)``.

    ``complex_points=False`` keeps the points on the imaginary axis.
    """
    rng = np.random.default_rng(seed)
    slot = spec.default_slots(per_slot)
    F, d = len(slot), spec.d
    Zim = scale * rng.standard_normal((F, d))
    Zre = scale * rng.standard_normal((F, d)) if complex_points else np.zeros((F, d))
    if log_sigma is None:
        log_sigma = -np.log(F)
    return SpectralParams(
        slot, Zre, Zim, np.full(F, float(log_sigma)), log_noise,
        imaginary=not complex_points, frozen=False,
    )


def make_mc_epgp(spec: PdeSystemSpec, r, base_scale=1.0, seed=0, flavor="vanilla",
                 log_noise=np.log(1e-4)):
    """Monte-Carlo EPGP: frozen random spectral points ``i * l * u`` with
    ``u ~ N(0, I)`` and ``r`` points per multiplier.

    ``vanilla`` trains only the noise; ``length_scale`` also trains
    ``l`` (stored as ``log_scale``) while the base samples stay fixed.
    """
    if r < 1:
        raise ValueError("need at least one Monte-Carlo point")
    rng = np.random.default_rng(seed)
    slot = spec.default_slots(r)
    F = len(slot)
    base = rng.standard_normal((F, spec.d))
    log_sigma = np.full(F, -np.log(F))
    if flavor == "vanilla":
        return SpectralParams(slot, np.zeros_like(base), base_scale * base, log_sigma,
                              log_noise, imaginary=True, frozen=True,
                              meta={"flavor": "epgp_mc"})
    if flavor == "length_scale":
        return SpectralParams(slot, np.zeros_like(base), base, log_sigma, log_noise,
                              imaginary=True, frozen=True, log_scale=float(np.log(base_scale)),
                              meta={"flavor": "epgp_ls"})
    raise ValueError(f"unknown Monte-Carlo flavor {flavor!r}")


# ---------------------------------------------------------------------------
# objective
# ---------------------------------------------------------------------------


@dataclass
class _State:
    Phi: np.ndarray
    y: np.ndarray
    noise: float
    sig2: np.ndarray
    factor: linalg.CholeskyFactor
    alpha: np.ndarray
    cols: np.ndarray | None = None
    vjp: object = None
    dual: bool = False


def _observed(data, out_dim):
    """Observed column indices, or None when every column is observed in
    order (the gather can then be skipped)."""
    cols = data.columns(out_dim)
    if len(cols) == len(data.X) * out_dim and np.array_equal(cols, np.arange(len(cols))):
        return None
    return cols


def _state(spec, theta, data, want_vjp=False):
    if theta.F < 1:
        raise ValueError("need at least one feature")
    if len(data) < 1:
        raise ValueError("need at least one observation")
    cols = _observed(data, spec.out_dim)
    vjp = None
    if want_vjp:
        Phi, vjp = features_and_vjp(spec, theta.points(), data.X, theta.slot, theta.domain())
    else:
        Phi = eval_features(spec, theta.points(), data.X, theta.slot, domain=theta.domain())
    if cols is not None:
        Phi = Phi[:, cols]
    noise = float(np.exp(theta.log_noise))
    sig2 = np.exp(theta.log_sigma)
    y = data.value
    if theta.F > len(y):
        # more features than observations: factor C = Phi^H Sigma Phi + s I
        C = linalg.outer_gram(np.sqrt(sig2)[:, None] * Phi, adjoint=True)
        C[np.diag_indices_from(C)] += noise
        factor = linalg.cholesky(C, check=False)
        alpha = linalg.solve_triangular(factor.L, y.astype(complex), "lower")
        return _State(Phi, y, noise, sig2, factor, alpha, cols, vjp, dual=True)
    A = linalg.outer_gram(Phi)
    A[np.diag_indices_from(A)] += noise / sig2
    factor = linalg.cholesky(A, check=False)
    alpha = linalg.solve_triangular(factor.L, Phi @ y, "lower")
    return _State(Phi, y, noise, sig2, factor, alpha, cols, vjp)


def _nlml_from_state(st, F):
    if st.dual:
        return float(0.5 * np.vdot(st.alpha, st.alpha).real + 0.5 * st.factor.log_det)
    n = len(st.y)
    fit = (st.y @ st.y - np.vdot(st.alpha, st.alpha).real) / (2 * st.noise)
    return float(
        fit
        + 0.5 * (n - F) * np.log(st.noise)
        + 0.5 * st.factor.log_det
        + 0.5 * np.sum(np.log(st.sig2))
    )


def _weights(st):
    """Posterior mean weights ``A^{-1} Phi Y`` (equal to ``Sigma Phi C^{-1} Y``
    in the dual form)."""
    if st.dual:
        gamma = linalg.solve_triangular(st.factor.L, st.alpha, "upper")
        return st.sig2 * (st.Phi @ gamma)
    return linalg.solve_triangular(st.factor.L, st.alpha, "upper")


def nlml(spec, theta: SpectralParams, data: Dataset) -> float:
    """Negative log marginal likelihood without the ``n/2 log 2 pi`` constant:

        (|Y|^2 - |L^{-1} Phi Y|^2) / (2 sigma0^2) + (n - F)/2 log sigma0^2
        + sum_j log L_jj + 1/2 sum_j log sigma_j^2
    """
    return _nlml_from_state(_state(spec, theta, data), theta.F)


def _dual_cotangents(st):
    """Gradient pieces in the dual form, from ``W = C^{-1} - C^{-1} Y Y^H C^{-1}``."""
    gamma = linalg.solve_triangular(st.factor.L, st.alpha, "upper")
    W = linalg.cho_solve(st.factor, np.eye(len(st.y))) - np.outer(gamma, gamma.conj())
    PW = st.Phi @ W
    g_noise = 0.5 * st.noise * np.real(np.trace(W))
    g_sigma = 0.5 * st.sig2 * np.real(np.sum(PW * st.Phi.conj(), axis=1))
    G = np.conj(st.sig2[:, None] * PW)
    return g_noise, g_sigma, G


@dataclass
class Gradient:
    Zre: np.ndarray
    Zim: np.ndarray
    log_sigma: np.ndarray
    log_noise: float
    log_scale: float | None = None


def _primal_cotangents(st, F):
    beta = linalg.solve_triangular(st.factor.L, st.alpha, "upper")
    Ainv = linalg.cho_solve(st.factor, np.eye(F))
    s = st.noise
    n = len(st.y)
    inv_sig2 = 1.0 / st.sig2
    abs_beta2 = np.abs(beta) ** 2
    diag_Ainv = np.real(np.diagonal(Ainv))
    g_noise = (
        (np.vdot(st.alpha, st.alpha).real - st.y @ st.y) / (2 * s)
        + 0.5 * np.sum(abs_beta2 * inv_sig2)
        + 0.5 * (n - F)
        + 0.5 * s * np.sum(diag_Ainv * inv_sig2)
    )
    g_sigma = 0.5 - 0.5 * abs_beta2 * inv_sig2 - 0.5 * s * diag_Ainv * inv_sig2
    # features: G[f, c] = M[c, f]
    v = st.y - st.Phi.conj().T @ beta
    G = np.conj(Ainv @ st.Phi)  # (Phi^H A^{-1})^T
    G -= np.outer(beta.conj() / s, v)
    return g_noise, g_sigma, G


def nlml_and_grad(spec, theta: SpectralParams, data: Dataset):
    """NLML together with its exact gradient.

    With ``beta = A^{-1} Phi Y`` and ``v = Y - Phi^H beta`` the differential
    in the features is ``Re tr(M dPhi)`` where
    ``M = Phi^H A^{-1} - v beta^H / sigma0^2``; the chain rule through the
    holomorphic feature derivative then gives the real and imaginary
    coordinate gradients. Frozen and pinned coordinates report zero.
    """
    st = _state(spec, theta, data, want_vjp=True)
    F = theta.F
    value = _nlml_from_state(st, F)
    if st.dual:
        g_noise, g_sigma, G = _dual_cotangents(st)
    else:
        g_noise, g_sigma, G = _primal_cotangents(st, F)
    if st.cols is not None:
        full = np.zeros((F, len(data.X) * spec.out_dim), dtype=complex)
        np.add.at(full, (slice(None), st.cols), G)
        G = full
    h = st.vjp(G)
    scale = theta.scale
    g_re = np.real(h) * scale
    g_im = -np.imag(h) * scale

    g_scale = None
    if theta.log_scale is not None:
        g_scale = float(np.sum(g_re * theta.Zre + g_im * theta.Zim))
    g_re[theta.imaginary] = 0.0
    g_re[theta.frozen] = 0.0
    g_im[theta.frozen] = 0.0
    g_sigma = np.where(theta.frozen, 0.0, g_sigma)
    if theta.noise_frozen:
        g_noise = 0.0
    return value, Gradient(g_re, g_im, g_sigma, float(g_noise), g_scale)


def nlml_grad(spec, theta, data) -> Gradient:
    return nlml_and_grad(spec, theta, data)[1]


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------


@dataclass
class PosteriorResult:
    mean: np.ndarray
    cov: np.ndarray | None
    nlml_at_fit: float
    jitter_used: float


def posterior(spec, theta: SpectralParams, data: Dataset, Xq, want_cov="none",
              chunk=4096) -> PosteriorResult:
    """Posterior mean ``Re(Phi_*^H A^{-1} Phi Y)`` at every component of the
    query points, and optionally the covariance
    ``sigma0^2 Re(Phi_*^H A^{-1} Phi_*)`` (its diagonal for ``"diag"``).

    The mean has shape (Q, out_dim); ``"diag"`` covariance matches it and
    ``"full"`` is (Q*out_dim, Q*out_dim) in point-major order.
    """
    if want_cov not in ("none", "diag", "full"):
        raise ValueError(f"want_cov must be none, diag or full, not {want_cov!r}")
    st = _state(spec, theta, data)
    value = _nlml_from_state(st, theta.F)
    beta = _weights(st)
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    Q, out = len(Xq), spec.out_dim
    mean = np.empty(Q * out)
    diag = np.empty(Q * out) if want_cov == "diag" else None
    blocks = []
    Z, dom = theta.points(), theta.domain()
    for start in range(0, Q, chunk):
        Phi_q = eval_features(spec, Z, Xq[start:start + chunk], theta.slot, domain=dom)
        sl = slice(start * out, start * out + Phi_q.shape[1])
        mean[sl] = np.real(Phi_q.conj().T @ beta)
        if want_cov == "none":
            continue
        if st.dual:
            # Sigma - Sigma Phi C^{-1} Phi^H Sigma equals s A^{-1}
            SPq = st.sig2[:, None] * Phi_q
            V = linalg.solve_triangular(st.factor.L, st.Phi.conj().T @ SPq, "lower")
            if want_cov == "diag":
                prior = np.real(np.sum(Phi_q.conj() * SPq, axis=0))
                diag[sl] = prior - np.sum(np.abs(V) ** 2, axis=0)
            else:
                blocks.append((Phi_q, SPq, V))
        else:
            V = linalg.solve_triangular(st.factor.L, Phi_q, "lower")
            if want_cov == "diag":
                diag[sl] = st.noise * np.sum(np.abs(V) ** 2, axis=0)
            else:
                blocks.append(V)
    cov = None
    if want_cov == "diag":
        cov = diag.reshape(Q, out)
    elif want_cov == "full" and st.dual:
        Phi_q = np.concatenate([b[0] for b in blocks], axis=1)
        SPq = np.concatenate([b[1] for b in blocks], axis=1)
        V = np.concatenate([b[2] for b in blocks], axis=1)
        cov = np.real(Phi_q.conj().T @ SPq - V.conj().T @ V)
    elif want_cov == "full":
        V = np.concatenate(blocks, axis=1)
        cov = st.noise * np.real(V.conj().T @ V)
    return PosteriorResult(mean.reshape(Q, out), cov, value, st.factor.jitter_used)


def prior_variance(spec, theta, Xq):
    """``Re(phi^H Sigma phi)`` at every component of the query points."""
    Phi = eval_features(spec, theta.points(), Xq, theta.slot, domain=theta.domain())
    var = np.exp(theta.log_sigma) @ (np.abs(Phi) ** 2)
    return var.reshape(len(np.atleast_2d(Xq)), spec.out_dim)


def sample_prior(spec, theta: SpectralParams, Xq, seed):
    """One prior draw ``Re(w^H Phi_*)`` with ``w_j = sigma_j (a + ib)``,
    ``a, b ~ N(0, 1)``; its covariance is ``Re(phi^H Sigma phi')``."""
    rng = np.random.default_rng(seed)
    w = np.sqrt(np.exp(theta.log_sigma)) * linalg.standard_complex_normal(rng, theta.F)
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    Phi = eval_features(spec, theta.points(), Xq, theta.slot, domain=theta.domain())
    return np.real(w.conj() @ Phi).reshape(len(Xq), spec.out_dim)
