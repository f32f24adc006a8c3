"""Validation suites behind ``epgp check``: finite-difference residual
refinement, gradient checks, positive-definiteness and dense-oracle
agreement.

Every suite returns a :class:`Report` whose entries carry the measured
value, the threshold and the margin (positive when the entry passes).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate

from . import kernels, linalg, sepgp, systems

# closed-form kernels paired with the system whose equation they solve
KERNEL_SYSTEMS = (
    (kernels.KernelHandle("heat1d"), "heat1d"),
    (kernels.heat2d_scaled(2.0), "heat2d"),
    (kernels.heat2d_scaled(20.0), "heat2d"),
    (kernels.KernelHandle("wave1d_4term"), "wave1d"),
    (kernels.KernelHandle("wave1d_2term"), "wave1d"),
)


def _scope_systems(scope):
    if scope in ("all", "sepgp"):
        return systems.SYSTEM_NAMES
    if scope == "kernels":
        return ()
    return (scope,)


def _with_kernels(scope):
    return scope in ("all", "kernels")


def _json_number(v):
    if isinstance(v, float) and not np.isfinite(v):
        return str(v)
    return v


@dataclass
class Entry:
    name: str
    value: float
    threshold: float
    kind: str = "max"

    @property
    def margin(self):
        return self.threshold - self.value if self.kind == "max" else self.value - self.threshold

    @property
    def passed(self):
        if self.kind == "min":
            return bool(self.value >= self.threshold)
        return bool(np.isfinite(self.value) and self.margin >= 0)

    def to_dict(self):
        d = {**asdict(self), "margin": self.margin, "passed": self.passed}
        return {k: _json_number(v) for k, v in d.items()}


@dataclass
class Report:
    what: str
    scope: str
    entries: list = field(default_factory=list)

    @property
    def passed(self):
        return all(e.passed for e in self.entries)

    def to_dict(self):
        return {"what": self.what, "scope": self.scope, "passed": self.passed,
                "checks": [e.to_dict() for e in self.entries]}


# ---------------------------------------------------------------------------
# finite-difference refinement
# ---------------------------------------------------------------------------


def stencil_residual(spec, f, probes, h, with_scale=False):
    """Largest FD residual of ``f`` over the probe points.

    ``f`` maps points (N, n) to values (N, out_dim). Each probe gets a
    5-node-per-axis grid of spacing ``h`` centred on it and the residual is
    read off at the centre. ``with_scale`` also returns ``max |f|``.
    """
    probes = np.atleast_2d(probes)
    n = spec.n
    offsets = np.stack(np.meshgrid(*[np.arange(-2, 3)] * n, indexing="ij"), axis=-1).reshape(-1, n)
    pts = (probes[:, None, :] + h * offsets[None]).reshape(-1, n)
    vals = np.asarray(f(pts)).reshape(len(probes), *([5] * n), -1)
    worst = 0.0
    for field_ in vals:
        r = systems.residual(spec, field_, [h] * n)
        centre = tuple(s // 2 for s in r.shape[1:])
        worst = max(worst, float(np.max(np.abs(r[(slice(None),) + centre]))))
    return (worst, float(np.max(np.abs(vals)))) if with_scale else worst


def refinement_order(spec, f, probes, h0=0.1, levels=3):
    """Residual maxima at ``h0, h0/2, ...`` and the smallest observed order
    between consecutive levels.

    Residuals at round-off level (``1e4 * eps * max|f| / h^2``) on every
    level mean the stencil is exact for ``f``; the order is then reported
    as infinite.
    """
    hs = [h0 / 2**k for k in range(levels)]
    out = [stencil_residual(spec, f, probes, h, with_scale=True) for h in hs]
    res = [r for r, _ in out]
    floor = [1e4 * np.finfo(float).eps * s / h**2 for (_, s), h in zip(out, hs)]
    if all(r <= fl for r, fl in zip(res, floor)):
        return res, np.inf
    orders = [np.log2(a / b) if b > 0 else np.inf for a, b in zip(res, res[1:])]
    return res, float(min(orders))


def _random_model(spec, seed, per_slot=2, points=12):
    """A posterior mean of a random small model fitted to random data."""
    rng = np.random.default_rng(seed)
    theta = sepgp.init_params(spec, per_slot, seed, scale=1.0, log_noise=np.log(1e-2))
    X = rng.uniform(-1, 1, (points, spec.n))
    if spec.name.startswith("heat"):
        X[:, -1] = np.abs(X[:, -1])
    data = sepgp.Dataset.from_values(X, rng.standard_normal((points, spec.out_dim)))
    return theta, data


def _probes(spec, seed, count=4):
    rng = np.random.default_rng(seed + 1000)
    P = rng.uniform(-0.5, 0.5, (count, spec.n))
    if spec.name.startswith("heat"):
        P[:, -1] = np.abs(P[:, -1]) + 0.3
    return P


def check_residual(scope, seed=0, min_order=1.8) -> Report:
    """Refinement study of posterior means (and of closed-form truths where
    the system has one)."""
    from . import truth

    rep = Report("residual", scope)
    names = _scope_systems(scope)
    for name in names:
        spec = systems.get_system(name)
        if not spec.residual_ops:
            continue
        theta, data = _random_model(spec, seed)

        def mean(P, spec=spec, theta=theta, data=data):
            return sepgp.posterior(spec, theta, data, P).mean

        res, order = refinement_order(spec, mean, _probes(spec, seed))
        rep.entries.append(Entry(f"{name}.posterior_mean.order", order, min_order, "min"))
        truths = {
            "heat1d": lambda P: truth.heat1d_formula(P[:, 0], P[:, 1])[:, None],
            "maxwell": truth.maxwell_field,
        }
        if name in truths:
            P = _probes(spec, seed)
            if name == "heat1d":
                P = P * [4, 2] + [0, 1]
            res, order = refinement_order(spec, truths[name], P, h0=0.2 if name == "heat1d" else 0.1)
            rep.entries.append(Entry(f"{name}.truth.order", order, min_order, "min"))
    if _with_kernels(scope):
        rng = np.random.default_rng(seed)
        for k, name in KERNEL_SYSTEMS:
            spec = systems.get_system(name)
            worst = np.inf
            # second argument frozen at 5 random points, t' >= 0
            for q in rng.uniform(0, 0.5, (5, k.dim)):
                _, order = refinement_order(
                    spec, lambda P, q=q: kernels.gram(k, P, q[None]), _probes(spec, seed))
                worst = min(worst, order)
            rep.entries.append(Entry(f"kernel.{_kernel_label(k)}.order", worst, min_order, "min"))
    return rep


def _kernel_label(k):
    return f"{k.kind}_sigma2_{k.sigma2:g}" if k.kind == "heat2d_scaled" else k.kind


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------


def _flatten(theta):
    """Trainable coordinates as (attribute, index) pairs."""
    coords = []
    for i in np.ndindex(theta.Zre.shape):
        if not theta.frozen[i[0]] and not theta.imaginary[i[0]]:
            coords.append(("Zre", i))
    for i in np.ndindex(theta.Zim.shape):
        if not theta.frozen[i[0]]:
            coords.append(("Zim", i))
    for i in range(theta.F):
        if not theta.frozen[i]:
            coords.append(("log_sigma", (i,)))
    if not theta.noise_frozen:
        coords.append(("log_noise", None))
    if theta.log_scale is not None:
        coords.append(("log_scale", None))
    return coords


def _shifted(theta, attr, idx, delta):
    t = theta.copy()
    if idx is None:
        setattr(t, attr, getattr(t, attr) + delta)
    else:
        getattr(t, attr)[idx] += delta
    return t


def finite_difference(spec, theta, data, attr, idx, h=1e-3):
    """Five-point central difference of the NLML along one coordinate."""
    f = [sepgp.nlml(spec, _shifted(theta, attr, idx, k * h), data) for k in (-2, -1, 1, 2)]
    return (f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * h)


def gradient_errors(spec, theta, data, floor=1e-8, h=1e-3):
    """Relative errors ``|g - g_fd| / max(|g|, |g_fd|)`` on every trainable
    coordinate whose analytic gradient exceeds ``floor``."""
    _, g = sepgp.nlml_and_grad(spec, theta, data)
    errs = []
    for attr, idx in _flatten(theta):
        ga = getattr(g, attr)
        ga = float(ga if idx is None else ga[idx])
        if abs(ga) <= floor:
            continue
        fd = finite_difference(spec, theta, data, attr, idx, h)
        errs.append(abs(ga - fd) / max(abs(ga), abs(fd)))
    return np.array(errs)


def random_instance(spec, seed, complex_points=None, dual=None):
    """Small seeded model plus data for gradient and oracle checks.

    Alternates between full and partial observations (vector systems),
    imaginary and complex spectral points, and fewer or more features than
    observations, driven by the seed.
    """
    rng = np.random.default_rng(seed)
    if complex_points is None:
        complex_points = bool(seed % 2)
    per = 2 if spec.out_dim > 1 else 3
    theta = sepgp.init_params(spec, per, seed, scale=0.7, complex_points=complex_points,
                              log_noise=np.log(rng.uniform(0.05, 0.5)))
    theta.log_sigma = theta.log_sigma + rng.normal(0, 0.3, theta.F)
    if dual is None:
        dual = seed % 3 == 0
    obs_per_point = spec.out_dim if spec.out_dim == 1 or seed % 2 == 0 else 3
    target = theta.F // 2 if dual else theta.F + 4
    points = max(1, -(-target // obs_per_point))
    X = rng.uniform(-1, 1, (points, spec.n))
    Y = rng.standard_normal((points, spec.out_dim))
    comps = None if obs_per_point == spec.out_dim else [0, 2, 4]
    return theta, sepgp.Dataset.from_values(X, Y, comps)


def check_gradcheck(scope, seed=0, instances=5, tol=1e-5) -> Report:
    rep = Report("gradcheck", scope)
    names = _scope_systems(scope)
    for name in names:
        spec = systems.get_system(name)
        for k in range(instances):
            theta, data = random_instance(spec, seed + k)
            errs = gradient_errors(spec, theta, data)
            rep.entries.append(Entry(f"{name}.seed{seed + k}.max_rel_error",
                                     float(errs.max(initial=0.0)), tol))
    return rep


# ---------------------------------------------------------------------------
# positive-definiteness
# ---------------------------------------------------------------------------


def check_psd(scope, seed=0, points=30) -> Report:
    """Gram matrices of random 30-point sets factor with jitter at most
    ``1e-6 * trace / n``."""
    rep = Report("psd", scope)
    rng = np.random.default_rng(seed)
    names = _scope_systems(scope)
    for name in names:
        spec = systems.get_system(name)
        theta = sepgp.init_params(spec, 4, seed)
        X = rng.uniform(-1, 1, (points, spec.n))
        Phi = systems.eval_features(spec, theta.points(), X, theta.slot)
        K = Phi.conj().T @ (np.exp(theta.log_sigma)[:, None] * Phi)
        rep.entries.append(_jitter_entry(f"{name}.sepgp_gram", K))
    if scope in ("all", "kernels"):
        for k in (kernels.se(2), kernels.KernelHandle("heat1d"), kernels.heat2d_scaled(2.0),
                  kernels.KernelHandle("wave1d_4term"), kernels.KernelHandle("wave1d_2term")):
            X = rng.uniform(-1, 1, (points, k.dim))
            if k.kind.startswith("heat"):
                X[:, -1] = np.abs(X[:, -1])
            rep.entries.append(_jitter_entry(f"kernel.{k.kind}", kernels.gram(k, X, X)))
    return rep


def _jitter_entry(name, K):
    n = len(K)
    scale = float(np.real(np.trace(K))) / n
    try:
        fac = linalg.cholesky(K)
        rel = fac.jitter_used / scale if scale > 0 else 0.0
    except linalg.NotPositiveDefinite:
        rel = np.inf
    return Entry(f"{name}.relative_jitter", rel, 1e-6)


# ---------------------------------------------------------------------------
# dense oracle
# ---------------------------------------------------------------------------


def dense_oracle(spec, theta, data, Xq=None):
    """Function-space NLML (without the ``n/2 log 2 pi`` constant) and
    posterior straight from ``K = Phi^H Sigma Phi`` with plain dense
    solves."""
    Z = theta.points()
    Phi = systems.eval_features(spec, Z, data.X, theta.slot, domain=theta.domain())
    Phi = Phi[:, data.columns(spec.out_dim)]
    S = np.exp(theta.log_sigma)[:, None]
    C = Phi.conj().T @ (S * Phi) + np.exp(theta.log_noise) * np.eye(len(data))
    y = data.value
    value = 0.5 * float(np.real(y @ np.linalg.solve(C, y))) + 0.5 * np.linalg.slogdet(C)[1]
    if Xq is None:
        return value, None, None
    Pq = systems.eval_features(spec, Z, Xq, theta.slot, domain=theta.domain())
    Kq = Pq.conj().T @ (S * Phi)
    mean = np.real(Kq @ np.linalg.solve(C, y))
    cov = np.real(Pq.conj().T @ (S * Pq) - Kq @ np.linalg.solve(C, Kq.conj().T))
    return value, mean, cov


def oracle_errors(spec, theta, data, Xq):
    value, mean, cov = dense_oracle(spec, theta, data, Xq)
    pr = sepgp.posterior(spec, theta, data, Xq, want_cov="full")
    return (abs(pr.nlml_at_fit - value) / max(1.0, abs(value)),
            float(np.max(np.abs(pr.mean.ravel() - mean))),
            float(np.max(np.abs(pr.cov - cov))))


def check_oracle(scope, seed=0, instances=20, tol=1e-8) -> Report:
    rep = Report("oracle", scope)
    names = _scope_systems(scope)
    for name in names:
        spec = systems.get_system(name)
        worst = np.zeros(3)
        for k in range(instances):
            theta, data = random_instance(spec, seed + k)
            Xq = np.random.default_rng(seed + k).uniform(-1, 1, (4, spec.n))
            worst = np.maximum(worst, oracle_errors(spec, theta, data, Xq))
        for label, v in zip(("nlml", "mean", "cov"), worst):
            rep.entries.append(Entry(f"{name}.{label}", float(v), tol))
    if _with_kernels(scope):
        rng = np.random.default_rng(seed)
        for k in [kernels.se(1), kernels.se(2)] + [k for k, _ in KERNEL_SYSTEMS]:
            worst = 0.0
            for _ in range(20):
                p, q = rng.uniform(-1, 1, (2, k.dim))
                if k.kind.startswith("heat"):
                    p[-1], q[-1] = abs(p[-1]), abs(q[-1])
                worst = max(worst, abs(kernels.eval_kernel(k, p, q) - kernel_quadrature(k, p, q)))
            rep.entries.append(Entry(f"kernel.{_kernel_label(k)}.quadrature", worst, 1e-7))
        z, bands = mc_kernel_deviation(seed)
        rep.entries.append(Entry("mc_epgp.free1.max_z_score", z, bands))
    return rep


def _quad(f):
    return integrate.quad(f, -np.inf, np.inf, epsabs=1e-12, epsrel=1e-12, limit=400)[0]


def kernel_quadrature(k, p, q):
    """Spectral integral of ``phi(p) conj(phi(q))`` against the Gaussian
    weight ``exp(-|a|^2 / (2 s))`` with the variety parametrized by real
    ``a``; imaginary parts cancel by symmetry so cosines suffice.

    Multi-dimensional integrals factor over coordinates. ``heat2d_scaled``
    is divided by ``2 pi``, the constant its closed form leaves out.
    """
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    if k.kind == "se":
        return float(np.prod([_quad(lambda a, d=d: np.cos(a * d) * np.exp(-a * a / 2))
                              for d in p - q]))
    if k.kind in ("heat1d", "heat2d_scaled"):
        s2 = 1.0 if k.kind == "heat1d" else k.sigma2
        w = 1 / (2 * s2) + p[-1] + q[-1]
        val = float(np.prod([_quad(lambda a, d=d: np.cos(a * d) * np.exp(-w * a * a))
                             for d in p[:-1] - q[:-1]]))
        return val if k.kind == "heat1d" else val / (2 * np.pi)
    (x, t), (xq, tq) = p, q
    pairs = [(x - t, xq - tq), (x + t, xq + tq)]
    if k.kind == "wave1d_4term":
        pairs += [(x - t, xq + tq), (x + t, xq - tq)]
        scale = 1.0
    else:
        # the 2-term kernel is the plain Gaussian sum
        scale = 1 / np.sqrt(2 * np.pi)
    return scale * sum(_quad(lambda a, d=u - v: np.cos(a * d) * np.exp(-a * a / 2)) for u, v in pairs)


def mc_kernel_deviation(seed=0, r=10_000, pairs=10):
    """Largest ``|MC - exact| / standard error`` of the Monte-Carlo free(1)
    kernel ``(1/r) sum phi(p) conj(phi(q))`` against the Gaussian closed form
    over random point pairs; returns it with the 3-band threshold."""
    spec = systems.get_system("free1")
    theta = sepgp.make_mc_epgp(spec, r, seed=seed)
    rng = np.random.default_rng(seed + 7)
    P, Q = rng.uniform(-2, 2, (2, pairs, 1))
    prod = np.real(systems.eval_features(spec, theta.points(), P).conj()
                   * systems.eval_features(spec, theta.points(), Q))
    se = prod.std(axis=0) / np.sqrt(r)
    exact = np.exp(-0.5 * (P[:, 0] - Q[:, 0]) ** 2)
    z = np.abs(prod.mean(axis=0) - exact) / np.maximum(se, 1e-300)
    return float(z.max()), 3.0


SUITES = {
    "residual": check_residual,
    "gradcheck": check_gradcheck,
    "psd": check_psd,
    "oracle": check_oracle,
}


def run_check(what, scope, seed=0) -> Report:
    if what not in SUITES:
        raise ValueError(f"unknown check {what!r}; choose from {sorted(SUITES)}")
    return SUITES[what](scope, seed=seed)
