"""Registry of linear constant-coefficient PDE systems and their
Ehrenpreis-Palamodov data: characteristic varieties, branch lifts of the
free spectral parameters, Noetherian multipliers and the PDE rows used for
validation.

The entries are transcribed by hand (no symbolic solver runs here). Each
system's consistency is checked by :func:`analytic_residual`: every
feature built from the registry must be annihilated by the system's
operator rows up to round-off.

Conventions
-----------
* A feature for a free spectral point ``z'`` is the branch average
  ``(1/|S|) * sum_{z in S(z')} D(x, z) exp(<x, z>)``.
* Spectral points live on the imaginary axis by default, so
  ``exp(<x, z>)`` oscillates as ``exp(i a x)``.
* Square roots use the principal branch; averaging over both signs makes
  every feature independent of the branch order.
"""

from __future__ import annotations

import functools
import itertools
import re
from dataclasses import dataclass, field
from math import comb
from typing import Callable

import numpy as np

from .polynomial import Poly

SPECTRAL_DOMAINS = ("imaginary-axis", "full-complex", "real")


class UnknownSystem(KeyError):
    pass


class SpectralDomainViolation(ValueError):
    pass


class NonFiniteFeature(FloatingPointError):
    pass


class GridTooSmall(ValueError):
    pass


@dataclass(frozen=True)
class VarietyBranch:
    """One irreducible characteristic variety with its implicit
    parametrization.

    ``lifts[b]`` maps free spectral points of shape (..., d) to points of
    the variety of shape (..., n); ``jacobians[b]`` returns the holomorphic
    Jacobian of that map, shape (..., n, d). ``multipliers`` holds one tuple
    of ``out_dim`` polynomials per Noetherian multiplier. ``equations`` are
    the defining polynomials of the variety (in ``z`` only).
    """

    d: int
    lifts: tuple
    jacobians: tuple
    multipliers: tuple
    equations: tuple = ()

    @property
    def branches(self):
        return len(self.lifts)


@dataclass(frozen=True)
class SupportingShift:
    """Axis-aligned box ``[lower, upper]`` used to damp growing exponentials
    by ``exp(-H(Re z))`` with ``H(w) = sum_i max(lower_i w_i, upper_i w_i)``."""

    lower: tuple
    upper: tuple

    def __call__(self, w):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        return np.sum(np.maximum(lo * w, hi * w), axis=-1)


@dataclass(frozen=True)
class PdeSystemSpec:
    name: str
    n: int
    out_dim: int
    varieties: tuple
    spectral_domain: str
    residual_ops: tuple
    axes: tuple = field(default=())

    @property
    def slots(self):
        """``(variety index, multiplier index)`` for every multiplier, in
        feature order."""
        return tuple(
            (v, j)
            for v, var in enumerate(self.varieties)
            for j in range(len(var.multipliers))
        )

    @property
    def d(self):
        ds = {v.d for v in self.varieties}
        if len(ds) != 1:
            raise ValueError(f"{self.name}: varieties disagree on dimension {ds}")
        return ds.pop()

    def default_slots(self, per_slot):
        """Slot index of each feature when every multiplier gets
        ``per_slot`` spectral points (slot-major order)."""
        return np.repeat(np.arange(len(self.slots)), per_slot)


# ---------------------------------------------------------------------------
# transcription helpers
# ---------------------------------------------------------------------------


def _ops_from_matrix(rows, vars_):
    """Turn a matrix of Macaulay2-style polynomials in the derivative symbols
    into residual rows of ``(multi-index, coefficient, component)``."""
    n = len(vars_)
    out = []
    for row in rows:
        terms = []
        for comp, text in enumerate(row):
            for exps, coef in Poly.parse(text, vars_).terms:
                terms.append((tuple(exps[n:]), float(coef.real), comp))
        out.append(tuple(terms))
    return tuple(out)


def _multipliers(columns, vars_):
    return tuple(tuple(Poly.parse(t, vars_) for t in col) for col in columns)


def _one(n):
    return ((Poly.constant(n),),)


def _identity_lift(zp):
    return zp


def _identity_jac(zp):
    d = zp.shape[-1]
    return np.broadcast_to(np.eye(d, dtype=complex), zp.shape[:-1] + (d, d))


def _cone_lift(sign):
    """Lift ``(a, b, ...) -> (a, b, ..., sign * sqrt(a^2 + b^2 + ...))``."""

    def lift(zp):
        r = np.sqrt(np.sum(zp**2, axis=-1))
        return np.concatenate([zp, (sign * r)[..., None]], axis=-1)

    def jac(zp):
        d = zp.shape[-1]
        r = np.sqrt(np.sum(zp**2, axis=-1))
        J = np.zeros(zp.shape[:-1] + (d + 1, d), dtype=complex)
        J[..., np.arange(d), np.arange(d)] = 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            J[..., d, :] = sign * zp / r[..., None]
        return J

    return lift, jac


def _paraboloid_lift(zp):
    return np.concatenate([zp, np.sum(zp**2, axis=-1)[..., None]], axis=-1)


def _paraboloid_jac(zp):
    d = zp.shape[-1]
    J = np.zeros(zp.shape[:-1] + (d + 1, d), dtype=complex)
    J[..., np.arange(d), np.arange(d)] = 1.0
    J[..., d, :] = 2 * zp
    return J


def _linear_lift(direction):
    direction = np.asarray(direction, dtype=complex)

    def lift(zp):
        return zp[..., :1] * direction

    def jac(zp):
        return np.broadcast_to(direction[:, None], zp.shape[:-1] + (len(direction), 1))

    return lift, jac


# ---------------------------------------------------------------------------
# systems
# ---------------------------------------------------------------------------


def _free(n):
    var = VarietyBranch(n, (_identity_lift,), (_identity_jac,), _one(n))
    axes = tuple(f"x{i + 1}" for i in range(n))
    return PdeSystemSpec(f"free{n}", n, 1, (var,), "imaginary-axis", (), axes)


def _heat(space_dims):
    n = space_dims + 1
    vars_ = "xyt" if space_dims == 2 else "xt"
    lap = "+".join(f"{v}2" for v in vars_[:-1])
    var = VarietyBranch(
        space_dims,
        (_paraboloid_lift,),
        (_paraboloid_jac,),
        _one(n),
        (Poly.parse(f"{lap}-t", vars_),),
    )
    ops = _ops_from_matrix([[f"{lap}-t"]], vars_)
    return PdeSystemSpec(
        f"heat{space_dims}d", n, 1, (var,), "imaginary-axis", ops, tuple(vars_)
    )


def _wave1d():
    # z_x = z_t and z_x = -z_t
    varieties = []
    for direction, eq in (((1, 1), "x-t"), ((1, -1), "x+t")):
        lift, jac = _linear_lift(direction)
        varieties.append(
            VarietyBranch(1, (lift,), (jac,), _one(2), (Poly.parse(eq, "xt"),))
        )
    ops = _ops_from_matrix([["x2-t2"]], "xt")
    return PdeSystemSpec("wave1d", 2, 1, tuple(varieties), "imaginary-axis", ops, ("x", "t"))


def _wave2d():
    plus, minus = _cone_lift(1), _cone_lift(-1)
    var = VarietyBranch(
        2,
        (plus[0], minus[0]),
        (plus[1], minus[1]),
        _one(3),
        (Poly.parse("x2+y2-t2", "xyt"),),
    )
    ops = _ops_from_matrix([["x2+y2-t2"]], "xyt")
    return PdeSystemSpec("wave2d", 3, 1, (var,), "imaginary-axis", ops, ("x", "y", "t"))


def _laplace2d():
    # the lines a = i b and a = -i b, parametrized by c
    varieties = []
    for direction, eq in (((1 + 1j, 1 - 1j), (1, -1j)), ((1 - 1j, 1 + 1j), (1, 1j))):
        lift, jac = _linear_lift(direction)
        equation = Poly(2, (((0, 0, 1, 0), complex(eq[0])), ((0, 0, 0, 1), complex(eq[1]))))
        varieties.append(VarietyBranch(1, (lift,), (jac,), _one(2), (equation,)))
    ops = _ops_from_matrix([["x2+y2"]], "xy")
    return PdeSystemSpec("laplace2d", 2, 1, tuple(varieties), "imaginary-axis", ops, ("x", "y"))


# Rows act on psi = (Ex, Ey, Ez, Bx, By, Bz); letters are d/dx, d/dy, d/dz, d/dt.
MAXWELL_OPERATOR = (
    ("x", "y", "z", "0", "0", "0"),
    ("0", "-z", "y", "t", "0", "0"),
    ("z", "0", "-x", "0", "t", "0"),
    ("-y", "x", "0", "0", "0", "t"),
    ("0", "0", "0", "x", "y", "z"),
    ("-t", "0", "0", "0", "-z", "y"),
    ("0", "-t", "0", "z", "0", "-x"),
    ("0", "0", "-t", "-y", "x", "0"),
)

# Kernel of the operator over the coordinate ring of the light cone; each
# row below is one column of that kernel, i.e. one multiplier.
MAXWELL_MULTIPLIERS = (
    ("xz", "yz", "z2-t2", "yt", "-xt", "0"),
    ("-y2-z2", "xy", "xz", "0", "zt", "-yt"),
    ("xy", "y2-t2", "yz", "-zt", "0", "xt"),
    ("-yt", "xt", "0", "xz", "yz", "z2-t2"),
    ("zt", "0", "-xt", "xy", "y2-t2", "yz"),
    ("0", "-zt", "yt", "-y2-z2", "xy", "xz"),
)


def _maxwell():
    plus, minus = _cone_lift(1), _cone_lift(-1)
    var = VarietyBranch(
        3,
        (plus[0], minus[0]),
        (plus[1], minus[1]),
        _multipliers(MAXWELL_MULTIPLIERS, "xyzt"),
        (Poly.parse("x2+y2+z2-t2", "xyzt"),),
    )
    ops = _ops_from_matrix(MAXWELL_OPERATOR, "xyzt")
    return PdeSystemSpec("maxwell", 4, 6, (var,), "imaginary-axis", ops, ("x", "y", "z", "t"))


_BUILDERS: dict[str, Callable[[], PdeSystemSpec]] = {
    "heat1d": lambda: _heat(1),
    "heat2d": lambda: _heat(2),
    "wave1d": _wave1d,
    "wave2d": _wave2d,
    "laplace2d": _laplace2d,
    "maxwell": _maxwell,
}

SYSTEM_NAMES = ("free2", "free3", "heat1d", "heat2d", "wave1d", "wave2d", "laplace2d", "maxwell")

_CACHE: dict[str, PdeSystemSpec] = {}


def get_system(name: str) -> PdeSystemSpec:
    """Look up a system by its stable identifier (``free<n>``, ``heat1d``,
    ``heat2d``, ``wave1d``, ``wave2d``, ``laplace2d``, ``maxwell``)."""
    if name not in _CACHE:
        m = re.fullmatch(r"free\(?(\d+)\)?", name)
        if m and int(m.group(1)) >= 1:
            _CACHE[name] = _free(int(m.group(1)))
        elif name in _BUILDERS:
            _CACHE[name] = _BUILDERS[name]()
        else:
            raise UnknownSystem(name)
    return _CACHE[name]


# ---------------------------------------------------------------------------
# features
# ---------------------------------------------------------------------------


def _check_domain(Z, domain):
    if domain not in SPECTRAL_DOMAINS:
        raise ValueError(f"unknown spectral domain {domain!r}")
    if domain == "imaginary-axis" and np.any(Z.real != 0):
        raise SpectralDomainViolation("spectral points must be purely imaginary")
    if domain == "real" and np.any(Z.imag != 0):
        raise SpectralDomainViolation("spectral points must be real")


def _resolve_slots(spec, Z, slot):
    if slot is None:
        m = len(spec.slots)
        if len(Z) % m:
            raise ValueError(f"{len(Z)} spectral points do not split over {m} multipliers")
        slot = spec.default_slots(len(Z) // m)
    slot = np.asarray(slot, dtype=int)
    if slot.shape != (len(Z),):
        raise ValueError("need one slot index per spectral point")
    return slot


class _CoordinateTable:
    """Distinct values of every coordinate of a point set.

    When the points lie on few distinct coordinate values (grid samples),
    ``exp(<x, z>)`` is the product of per-coordinate exponentials evaluated
    only at the distinct values, which is much cheaper than a full complex
    exponential per (feature, point).
    """

    def __init__(self, X):
        self.values, self.inverse = [], []
        for k in range(X.shape[1]):
            u, inv = np.unique(X[:, k], return_inverse=True)
            self.values.append(u)
            self.inverse.append(inv)
        distinct = sum(len(u) for u in self.values)
        self.factored = X.shape[1] > 1 and 4 * distinct < len(X)
        self._prefix = []  # (z column, running product) of the previous call

    def exp(self, zb, X):
        if not self.factored:
            return np.exp(zb @ X.T)
        # branches of one variety often share their leading lifted
        # coordinates; reuse the running product over that prefix
        keep = 0
        while (keep < len(self._prefix) and keep < zb.shape[1] - 1
               and np.array_equal(self._prefix[keep][0], zb[:, keep])):
            keep += 1
        prefix = self._prefix[:keep]
        E = prefix[-1][1] if prefix else None
        for k in range(keep, zb.shape[1]):
            u, inv = self.values[k], self.inverse[k]
            col = np.exp(zb[:, k, None] * u[None, :])[:, inv]
            E = col if E is None else E * col
            prefix.append((zb[:, k].copy(), E))
        self._prefix = prefix
        return E


def _as_slice(idx):
    """Contiguous index runs become slices so updates happen in place."""
    if idx.size == 0:
        return None
    if idx[-1] - idx[0] + 1 == idx.size:
        return slice(int(idx[0]), int(idx[-1]) + 1)
    return idx


@functools.lru_cache(maxsize=None)
def _dz_all(mults, l):
    return tuple(_dz(D, l) for D in mults)


@functools.lru_cache(maxsize=None)
def _dz(D, l):
    return tuple(poly.dz(l) for poly in D)


def _eval_vector(D, X, zb):
    """Multiplier vector at every (feature, point): shape (F, P or 1, out)."""
    if not any(poly.depends_on_x() for poly in D):
        return np.stack([poly.eval_z(zb) for poly in D], axis=-1)[:, None, :]
    cols = [poly(X, zb) for poly in D]
    return np.stack(cols, axis=-1)


@functools.lru_cache(maxsize=None)
def _compile(mults):
    """Stack a set of multiplier vectors into a shared monomial list.

    Returns ``(x_exps (T, n), z_exps (T, n), coefs (m, T, out), uses_x)``.
    """
    n = mults[0][0].n
    monos = sorted({e for D in mults for poly in D for e, _ in poly.terms}) or [(0,) * (2 * n)]
    where = {e: t for t, e in enumerate(monos)}
    coefs = np.zeros((len(mults), len(monos), len(mults[0])), dtype=complex)
    for j, D in enumerate(mults):
        for c, poly in enumerate(D):
            for e, coef in poly.terms:
                coefs[j, where[e], c] += coef
    exps = np.array(monos, dtype=int)
    return exps[:, :n], exps[:, n:], coefs, bool(exps[:, :n].any())


def _multiplier_values(mults, local, X, zb):
    """Multiplier vector of every feature, picking multiplier ``local[f]``;
    shape (F, 1, out) when no multiplier involves ``x``, else (F, P, out)."""
    xe, ze, coefs, uses_x = _compile(mults)
    zm = np.prod(zb[:, None, :] ** ze[None], axis=-1)  # (F, T)
    C = coefs[local]  # (F, T, out)
    if not uses_x:
        return np.einsum("ft,ftc->fc", zm, C)[:, None, :]
    xm = np.prod(X[:, None, :] ** xe[None], axis=-1)  # (P, T)
    return np.einsum("pt,ft,ftc->fpc", xm, zm, C, optimize=True)


def eval_features(spec, Z, X, slot=None, shift=None, domain=None, derivative=False):
    """Evaluate the feature matrix.

    Parameters
    ----------
    spec : PdeSystemSpec
    Z : complex array (F, d)
        Free spectral point of every feature.
    X : real array (P, n)
    slot : int array (F,), optional
        Multiplier slot of every feature; defaults to an even slot-major split.
    shift : SupportingShift, optional
    domain : str, optional
        Spectral domain to enforce; defaults to the system's own.
    derivative : bool
        Also return the holomorphic derivative with respect to ``Z``.

    Returns
    -------
    Phi : complex array (F, P * out_dim)
        Column ``p * out_dim + c`` holds component ``c`` at point ``p``.
    dPhi : complex array (d, F, P * out_dim), only if ``derivative``
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=complex))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != spec.n:
        raise ValueError(f"{spec.name} expects points in R^{spec.n}, got {X.shape[1]}")
    _check_domain(Z, domain or spec.spectral_domain)
    if derivative and shift is not None:
        raise ValueError("derivatives are not available with a supporting shift")
    slot = _resolve_slots(spec, Z, slot)
    F, P, out = len(Z), len(X), spec.out_dim
    d = Z.shape[1]
    Phi = np.zeros((F, P, out), dtype=complex)
    dPhi = np.zeros((d, F, P, out), dtype=complex) if derivative else None

    for s, (v, j) in enumerate(spec.slots):
        idx = np.flatnonzero(slot == s)
        if idx.size == 0:
            continue
        var = spec.varieties[v]
        zp = Z[idx]
        D = var.multipliers[j]
        inv_b = 1.0 / var.branches
        for lift, jac in zip(var.lifts, var.jacobians):
            zb = lift(zp)
            with np.errstate(over="ignore", invalid="ignore"):
                E = np.exp(zb @ X.T)
                if shift is not None:
                    E = E * np.exp(-shift(zb.real))[:, None]
            Dv = _eval_vector(D, X, zb)
            Phi[idx] += inv_b * Dv * E[:, :, None]
            if derivative:
                J = jac(zp)
                dD = np.stack([_eval_vector(_dz(D, l), X, zb) for l in range(spec.n)], axis=1)
                grad = np.einsum("fnk,fnpc->kfpc", J, np.broadcast_to(dD, dD.shape[:2] + (P, out)))
                grad += np.einsum("fnk,pn->kfp", J, X)[..., None] * Dv[None]
                dPhi[:, idx] += inv_b * grad * E[None, :, :, None]

    if not np.all(np.isfinite(Phi)):
        raise NonFiniteFeature(
            "feature overflow; use a supporting shift or a smaller spectral scale"
        )
    Phi = Phi.reshape(F, P * out)
    if derivative:
        return Phi, dPhi.reshape(d, F, P * out)
    return Phi


def features_and_vjp(spec, Z, X, slot=None, domain=None):
    """Feature matrix plus a function contracting its holomorphic
    ``Z``-derivative with a cotangent.

    The returned ``vjp(G)`` gives ``h[f, k] = sum_col G[f, col] *
    dPhi[k, f, col]`` for ``G`` shaped like the feature matrix, reusing the
    exponentials computed here instead of forming ``dPhi``.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=complex))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != spec.n:
        raise ValueError(f"{spec.name} expects points in R^{spec.n}, got {X.shape[1]}")
    _check_domain(Z, domain or spec.spectral_domain)
    slot = _resolve_slots(spec, Z, slot)
    F, P, out = len(Z), len(X), spec.out_dim
    Phi = np.zeros((F, P, out), dtype=complex)
    blocks = []
    table = _CoordinateTable(X)
    first = 0
    for var in spec.varieties:
        m = len(var.multipliers)
        local = slot - first
        first += m
        idx = _as_slice(np.flatnonzero((local >= 0) & (local < m)))
        if idx is None:
            continue
        zp = Z[idx]
        local = local[idx]
        for b, (lift, jac) in enumerate(zip(var.lifts, var.jacobians)):
            zb = lift(zp)
            with np.errstate(over="ignore", invalid="ignore"):
                E = table.exp(zb, X)
            Dv = _multiplier_values(var.multipliers, local, X, zb) / var.branches
            if b == 0:
                Phi[idx] = Dv * E[:, :, None]
            else:
                Phi[idx] += Dv * E[:, :, None]
            blocks.append((idx, local, E, Dv, var, zb, jac(zp)))
    if not np.all(np.isfinite(Phi)):
        raise NonFiniteFeature(
            "feature overflow; use a supporting shift or a smaller spectral scale"
        )

    X1 = np.concatenate([X, np.ones((P, 1))], axis=1)

    def vjp(G):
        G = np.asarray(G).reshape(F, P, out)
        h = np.zeros((F, Z.shape[1]), dtype=complex)
        for idx, local, E, Dv, var, zb, J in blocks:
            Gi = G[idx]
            dD = np.stack(
                [_multiplier_values(_dz_all(var.multipliers, l), local, X, zb)
                 for l in range(spec.n)],
                axis=1,
            ) / var.branches
            if Dv.shape[1] == 1:
                # one contraction gives sum_p GE x_p (first n) and sum_p GE (last)
                GX = np.tensordot(Gi * E[:, :, None], X1, axes=([1], [0]))  # (F, out, n+1)
                term = np.einsum("fc,fnc->fn", GX[:, :, -1], dD[:, :, 0])
                term += np.einsum("fc,fcn->fn", Dv[:, 0], GX[:, :, :-1])
            else:
                GE = Gi * E[:, :, None]
                term = np.einsum("fpc,fnpc->fn", GE, dD)
                term += np.einsum("fpc,fpc->fp", GE, Dv) @ X
            h[idx] += np.einsum("fnk,fn->fk", J, term)
        return h

    return Phi.reshape(F, P * out), vjp


def feature_vjp(spec, Z, X, G, slot=None, domain=None):
    """Contract the holomorphic feature derivative with a cotangent ``G``
    shaped like the feature matrix; see :func:`features_and_vjp`."""
    return features_and_vjp(spec, Z, X, slot, domain)[1](G)


def on_variety_error(spec, Z, slot=None):
    """Largest relative defect ``|p(z)| / (1 + |z|^deg)`` of the defining
    polynomials over all lifted points."""
    Z = np.atleast_2d(np.asarray(Z, dtype=complex))
    slot = _resolve_slots(spec, Z, slot)
    worst = 0.0
    for s, (v, _) in enumerate(spec.slots):
        var = spec.varieties[v]
        zp = Z[slot == s]
        for lift in var.lifts:
            zb = lift(zp)
            norm = np.linalg.norm(zb, axis=-1)
            for eq in var.equations:
                err = np.abs(eq.eval_z(zb)) / (1.0 + norm**eq.degree)
                worst = max(worst, float(np.max(err, initial=0.0)))
    return worst


def analytic_residual(spec, Z, X, slot=None, domain=None, relative=False):
    """Apply the operator rows to every feature symbolically.

    Derivatives act on ``D(x, z) exp(<x, z>)`` through the Leibniz rule, so
    ``d^a`` becomes ``sum_g C(a, g) (d_x^g D) z^(a-g)``. Returns the largest
    magnitude over features, rows, components and points; with
    ``relative=True`` each entry is divided by the sum of the magnitudes of
    its summands (the size of the cancellation).
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=complex))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    _check_domain(Z, domain or spec.spectral_domain)
    slot = _resolve_slots(spec, Z, slot)
    worst = 0.0
    for s, (v, j) in enumerate(spec.slots):
        var = spec.varieties[v]
        zp = Z[slot == s]
        if zp.size == 0:
            continue
        D = var.multipliers[j]
        for row in spec.residual_ops:
            total = np.zeros((len(zp), len(X)), dtype=complex)
            scale = np.zeros((len(zp), len(X)))
            for lift in var.lifts:
                zb = lift(zp)
                E = np.exp(zb @ X.T)
                for alpha, coef, comp in row:
                    poly = D[comp]
                    for gamma in itertools.product(*(range(a + 1) for a in alpha)):
                        dpoly = poly
                        weight = 1
                        for k, g in enumerate(gamma):
                            dpoly = dpoly.dx(k, g)
                            weight *= comb(alpha[k], g)
                        if dpoly.is_zero():
                            continue
                        zpow = np.prod(
                            [zb[:, k] ** (alpha[k] - gamma[k]) for k in range(spec.n)], axis=0
                        )
                        term = coef * weight * dpoly(X, zb) * zpow[:, None] * E
                        total += term / var.branches
                        scale += np.abs(term) / var.branches
            mag = np.abs(total)
            if relative:
                with np.errstate(divide="ignore", invalid="ignore"):
                    mag = np.where(scale > 0, mag / scale, 0.0)
            worst = max(worst, float(np.max(mag, initial=0.0)))
    return worst


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------


def _central(u, axis, order, h):
    if order == 0:
        return u
    if order == 1:
        n = u.shape[axis]
        hi = np.take(u, range(2, n), axis=axis)
        lo = np.take(u, range(0, n - 2), axis=axis)
        return (hi - lo) / (2 * h)
    if order == 2:
        n = u.shape[axis]
        hi = np.take(u, range(2, n), axis=axis)
        mid = np.take(u, range(1, n - 1), axis=axis)
        lo = np.take(u, range(0, n - 2), axis=axis)
        return (hi - 2 * mid + lo) / h**2
    return _central(_central(u, axis, 2, h), axis, order - 2, h)


def residual(spec, field, h):
    """Second-order central-difference residual of every operator row.

    Parameters
    ----------
    field : array with shape (N_1, ..., N_n, out_dim) or (N_1, ..., N_n)
        Values on a uniform grid.
    h : sequence of float
        Grid spacing per axis.

    Returns
    -------
    array (rows, M_1, ..., M_n)
        Residuals on the interior nodes; the trimmed layer has the stencil's
        half-width along every differentiated axis.
    """
    field = np.asarray(field)
    n = spec.n
    if field.ndim == n:
        field = field[..., None]
    if field.ndim != n + 1 or field.shape[-1] != spec.out_dim:
        raise ValueError(f"field shape {field.shape} does not match {spec.name}")
    h = np.broadcast_to(np.asarray(h, dtype=float), (n,))
    width = [0] * n
    for row in spec.residual_ops:
        for alpha, _, _ in row:
            for k, a in enumerate(alpha):
                width[k] = max(width[k], (a + 1) // 2)
    for k in range(n):
        if width[k] and field.shape[k] < max(5, 2 * width[k] + 1):
            raise GridTooSmall(f"axis {k} has {field.shape[k]} nodes; need at least 5")
    interior = tuple(field.shape[k] - 2 * width[k] for k in range(n))
    out = np.zeros((len(spec.residual_ops),) + interior, dtype=field.dtype)
    for r, row in enumerate(spec.residual_ops):
        for alpha, coef, comp in row:
            u = field[..., comp]
            for k, a in enumerate(alpha):
                u = _central(u, k, a, h[k])
            crop = []
            for k, a in enumerate(alpha):
                extra = width[k] - (a + 1) // 2
                crop.append(slice(extra, u.shape[k] - extra))
            out[r] += coef * u[tuple(crop)]
    return out
