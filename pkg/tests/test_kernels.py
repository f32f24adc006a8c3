import numpy as np
import pytest
from scipy import integrate

from epgp import kernels, linalg, systems
from epgp.checks import refinement_order
from epgp.kernels import KernelHandle

SQ2PI = np.sqrt(2 * np.pi)


def test_examples():
    for x in (-1.3, 0.0, 2.0):
        assert kernels.eval_kernel(KernelHandle("heat1d"), [x, 0], [x, 0]) == pytest.approx(SQ2PI)
    assert kernels.eval_kernel(kernels.se(1), [0.4], [0.4]) == pytest.approx(SQ2PI)
    assert kernels.eval_kernel(KernelHandle("wave1d_4term"), [0, 0], [0, 0]) == pytest.approx(4 * SQ2PI)


def test_domain_violation():
    with pytest.raises(kernels.DomainViolation):
        kernels.eval_kernel(KernelHandle("heat1d"), [0, -0.3], [0, -0.3])
    with pytest.raises(kernels.DomainViolation):
        kernels.eval_kernel(kernels.heat2d_scaled(2.0), [0, 0, -0.2], [0, 0, -0.1])
    # inside the region: 1/sigma2 + 2(t+t') > 0
    kernels.eval_kernel(kernels.heat2d_scaled(2.0), [0, 0, -0.1], [0, 0, -0.1])


def test_bad_handles():
    with pytest.raises(ValueError):
        KernelHandle("matern")
    with pytest.raises(ValueError):
        KernelHandle("se")
    with pytest.raises(ValueError):
        kernels.heat2d_scaled(0.0)


def _quad1(f):
    return integrate.quad(f, -10, 10, epsabs=1e-11, epsrel=1e-11, limit=200)[0]


def _quad_heat1d(p, q):
    (x, t), (xq, tq) = p, q
    return _quad1(lambda a: np.cos(a * (x - xq)) * np.exp(-a * a * (t + tq) - a * a / 2))


def _quad_wave(p, q):
    (x, t), (xq, tq) = p, q
    total = 0.0
    for s in (-1, 1):
        for sq in (-1, 1):
            total += _quad1(lambda a: np.cos(a * ((x + s * t) - (xq + sq * tq))) * np.exp(-a * a / 2))
    return total


def _quad_heat2d(p, q, sigma2):
    dx, dy = p[0] - q[0], p[1] - q[1]
    T = p[2] + q[2]
    w = 1.0 / (2 * sigma2) + T

    def g(a, b):
        return np.cos(a * dx + b * dy) * np.exp(-w * (a * a + b * b))

    L = 10.0 * np.sqrt(sigma2)
    val = integrate.dblquad(g, -L, L, -L, L, epsabs=1e-11, epsrel=1e-11)[0]
    # the closed form drops a 2 pi constant
    return val / (2 * np.pi)


def _quad_se(p, q):
    out = 1.0
    for a, b in zip(p, q):
        out *= _quad1(lambda z: np.cos(z * (a - b)) * np.exp(-z * z / 2))
    return out


@pytest.mark.parametrize("kind", ["se", "heat1d", "wave1d_4term"])
def test_quadrature_oracle(kind, rng):
    k = kernels.se(2) if kind == "se" else KernelHandle(kind)
    oracle = {"se": _quad_se, "heat1d": _quad_heat1d, "wave1d_4term": _quad_wave}[kind]
    for _ in range(20):
        p, q = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)
        if kind == "heat1d":
            p[1], q[1] = abs(p[1]), abs(q[1])
        assert abs(kernels.eval_kernel(k, p, q) - oracle(p, q)) <= 1e-7


@pytest.mark.parametrize("sigma2", [2.0, 20.0])
def test_quadrature_oracle_heat2d(sigma2, rng):
    k = kernels.heat2d_scaled(sigma2)
    for _ in range(4):
        p, q = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)
        p[2], q[2] = abs(p[2]) * 0.2, abs(q[2]) * 0.2
        assert abs(kernels.eval_kernel(k, p, q) - _quad_heat2d(p, q, sigma2)) <= 1e-7


@pytest.mark.parametrize("k", [kernels.se(2), kernels.se(3), KernelHandle("heat1d"),
                               kernels.heat2d_scaled(2.0), KernelHandle("wave1d_4term"),
                               KernelHandle("wave1d_2term")], ids=lambda k: k.kind)
def test_psd_and_symmetric(k, rng):
    P = rng.uniform(0, 1, (30, k.dim))
    K = kernels.gram(k, P, P)
    np.testing.assert_allclose(K, K.T, atol=1e-14)
    assert np.all(np.diag(K) >= 0)
    fac = linalg.cholesky(K)
    assert fac.jitter_used <= 1e-6 * np.trace(K) / len(K)


@pytest.mark.parametrize("sigma2", [2.0, 20.0])
def test_heat2d_scaled_ratio(sigma2):
    k = kernels.heat2d_scaled(sigma2)
    for r in (0.1, 0.5, 1.0):
        ratio = kernels.eval_kernel(k, [r, 0, 0], [0, 0, 0]) / kernels.eval_kernel(k, [0, 0, 0], [0, 0, 0])
        assert ratio == pytest.approx(np.exp(-r * r * sigma2 / 2), rel=1e-12)


@pytest.mark.parametrize("kind, system", [("heat1d", "heat1d"), ("wave1d_4term", "wave1d"),
                                          ("wave1d_2term", "wave1d")])
def test_kernel_solves_pde(kind, system, rng):
    k, spec = KernelHandle(kind), systems.get_system(system)
    Q = rng.uniform(-0.5, 0.5, (5, 2))
    Q[:, 1] = np.abs(Q[:, 1])
    probes = rng.uniform(-0.5, 0.5, (3, 2))
    probes[:, 1] = np.abs(probes[:, 1]) + 0.3
    for q in Q:
        _, order = refinement_order(spec, lambda P: kernels.gram(k, P, q[None]), probes)
        assert order >= 1.8


def test_heat2d_kernel_solves_pde(rng):
    k, spec = kernels.heat2d_scaled(2.0), systems.get_system("heat2d")
    probes = rng.uniform(-0.5, 0.5, (2, 3))
    probes[:, 2] = np.abs(probes[:, 2]) + 0.3
    for q in rng.uniform(0, 0.5, (5, 3)):
        _, order = refinement_order(spec, lambda P: kernels.gram(k, P, q[None]), probes)
        assert order >= 1.8


def test_gp_regress_empty_is_prior(rng):
    k = kernels.se(2)
    Xq = rng.uniform(0, 1, (4, 2))
    res = kernels.gp_regress(k, np.zeros((0, 2)), [], 1e-3, Xq)
    assert np.all(res.mean == 0)
    np.testing.assert_allclose(res.cov, kernels.gram(k, Xq, Xq))


def test_gp_regress_interpolates(rng):
    k = kernels.se(1)
    X = np.linspace(0, 3, 8)[:, None]
    Y = np.sin(X[:, 0])
    res = kernels.gp_regress(k, X, Y, 0.0, X)
    np.testing.assert_allclose(res.mean[:, 0], Y, rtol=1e-6, atol=1e-9)


def test_gp_regress_diag_matches_full(rng):
    k = KernelHandle("heat1d")
    X = rng.uniform(0, 1, (10, 2))
    Xq = rng.uniform(0, 1, (6, 2))
    Y = rng.standard_normal(10)
    full = kernels.gp_regress(k, X, Y, 1e-2, Xq, "full")
    diag = kernels.gp_regress(k, X, Y, 1e-2, Xq, "diag")
    np.testing.assert_allclose(diag.cov[:, 0], np.diag(full.cov), atol=1e-12)
    np.testing.assert_allclose(diag.mean, full.mean)


def test_gp_regress_heat_exact_solution_residual(rng):
    from epgp import truth
    spec = systems.get_system("heat1d")
    X = np.column_stack([rng.uniform(-2, 2, 16), rng.uniform(0, 1, 16)])
    Y = truth.heat1d_formula(X[:, 0], X[:, 1])
    k = KernelHandle("heat1d")
    probes = np.array([[0.1, 0.5], [-0.4, 0.8], [0.7, 0.4]])

    def mean(P):
        return kernels.gp_regress(k, X, Y, 1e-8, P, "diag").mean

    _, order = refinement_order(spec, mean, probes)
    assert order >= 1.8


def test_wave_kernels_same_posterior_mean(rng):
    # the 4-term kernel is the 2-term one symmetrized in t, so the two agree
    # on time-symmetric noiseless d'Alembert data: u = f(x - t) + f(x + t)
    half = rng.uniform(-1, 1, (5, 2))
    X = np.vstack([half, half * [1, -1]])

    def u(P):
        return np.exp(-(P[:, 0] - P[:, 1]) ** 2) + np.exp(-(P[:, 0] + P[:, 1]) ** 2)

    Xq = rng.uniform(-1, 1, (20, 2))
    m4 = kernels.gp_regress(KernelHandle("wave1d_4term"), X, u(X), 1e-12, Xq, "diag").mean
    m2 = kernels.gp_regress(KernelHandle("wave1d_2term"), X, u(X), 1e-12, Xq, "diag").mean
    np.testing.assert_allclose(m4, m2, atol=1e-6)


def test_wave_2term_spans_travelling_waves(rng):
    # a single right-moving wave is outside the 4-term span but not the 2-term one
    X = rng.uniform(-1, 1, (40, 2))
    Y = np.exp(-(X[:, 0] - X[:, 1]) ** 2)
    Xq = rng.uniform(-0.5, 0.5, (20, 2))
    Yq = np.exp(-(Xq[:, 0] - Xq[:, 1]) ** 2)
    m2 = kernels.gp_regress(KernelHandle("wave1d_2term"), X, Y, 1e-10, Xq, "diag").mean[:, 0]
    m4 = kernels.gp_regress(KernelHandle("wave1d_4term"), X, Y, 1e-10, Xq, "diag").mean[:, 0]
    assert np.max(np.abs(m2 - Yq)) < 1e-3 < np.max(np.abs(m4 - Yq))


@pytest.mark.parametrize("sigma2", [2.0, 20.0])
def test_kronecker_grid_posterior_matches_dense(sigma2, rng):
    axis = np.linspace(-1, 1, 7)
    V = rng.standard_normal((7, 7))
    times = [0.0, 0.03]
    frames, value = kernels.heat2d_grid_posterior(V, axis, sigma2, 1e-2, times)
    Xg, Yg = np.meshgrid(axis, axis, indexing="ij")
    k = kernels.heat2d_scaled(sigma2)
    for t, frame in zip(times, frames):
        P = np.column_stack([Xg.ravel(), Yg.ravel(), np.zeros(49)])
        Pq = np.column_stack([Xg.ravel(), Yg.ravel(), np.full(49, t)])
        res = kernels.gp_regress(k, P, V.ravel(), 1e-2, Pq, "diag")
        np.testing.assert_allclose(frame.ravel(), res.mean[:, 0], atol=1e-12)
        assert value == pytest.approx(res.nlml_at_fit, rel=1e-10)
