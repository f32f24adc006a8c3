"""Ground-truth fields for the experiments: closed-form solutions where
they exist, small finite-difference solvers otherwise, and seeded dataset
sampling from a gridded truth."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

from .sepgp import Dataset


class CountTooLarge(ValueError):
    pass


class NonConvergence(RuntimeError):
    pass


class CflViolation(ValueError):
    pass


@dataclass
class TruthField:
    """Values of a (possibly vector) field on a tensor grid.

    ``grid`` is a tuple of ``(min, max, count)`` per axis and ``values`` has
    shape ``(count_1, ..., count_n, out_dim)``.
    """

    grid: tuple
    values: np.ndarray
    provenance: str

    @property
    def axes(self):
        return [np.linspace(lo, hi, int(k)) for lo, hi, k in self.grid]

    @property
    def spacing(self):
        return [(hi - lo) / (k - 1) for lo, hi, k in self.grid]

    @property
    def shape(self):
        return self.values.shape[:-1]

    @property
    def out_dim(self):
        return self.values.shape[-1]

    def points(self):
        """All nodes, shape (N, n), in C order of the grid."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def flat_values(self):
        return self.values.reshape(-1, self.out_dim)


def _mesh(grid):
    axes = [np.linspace(lo, hi, int(k)) for lo, hi, k in grid]
    return np.meshgrid(*axes, indexing="ij")


# ---------------------------------------------------------------------------
# heat
# ---------------------------------------------------------------------------

HEAT1D_GRID = ((-5.0, 5.0, 101), (0.0, 5.0, 51))


def heat1d_formula(x, t):
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    s = 5 + 4 * t
    poly = (
        64 * t**3
        + 125 * (x - 3) * (x - 1) * (x + 2)
        - 50 * t * (x - 2) * (13 + 4 * x)
        + 40 * t**2 * (16 + 5 * x)
    )
    return np.sqrt(5) * poly * np.exp(-(x**2) / s) / s**3.5


def heat1d_exact(grid=HEAT1D_GRID) -> TruthField:
    """Closed-form solution of ``u_t = u_xx`` on ``t >= 0``."""
    X, T = _mesh(grid)
    if np.any(T < 0):
        raise ValueError("heat1d_exact is defined for t >= 0")
    return TruthField(tuple(grid), heat1d_formula(X, T)[..., None], "exact")


def load_smiley():
    """The checked-in 0/1 bitmap (rows run along y from top to bottom)."""
    text = resources.files("epgp.data").joinpath("smiley.txt").read_text()
    rows = [r.strip() for r in text.splitlines() if r.strip()]
    return np.array([[ch == "#" for ch in r] for r in rows], dtype=float)


def heat2d_smile(grid_side=101, extent=5.0) -> Dataset:
    """Binary initial temperature at ``t = 0`` on ``[-extent, extent]^2``.

    The bitmap is resampled to the grid by nearest neighbour; returned
    points are ``(x, y, 0)``.
    """
    bitmap = load_smiley()
    h, w = bitmap.shape
    ax = np.linspace(-extent, extent, grid_side)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    col = np.clip(((X + extent) / (2 * extent) * w).astype(int), 0, w - 1)
    row = np.clip(((extent - Y) / (2 * extent) * h).astype(int), 0, h - 1)
    values = bitmap[row, col]
    pts = np.stack([X.ravel(), Y.ravel(), np.zeros(X.size)], axis=-1)
    return Dataset.from_values(pts, values.ravel())


# ---------------------------------------------------------------------------
# wave
# ---------------------------------------------------------------------------

WAVE_SERIES_GRID = ((0.0, 1.0, 21), (0.0, 1.0, 21), (0.0, 1.0, 21))
WAVE_FD_GRID = ((-1.0, 1.0, 64), (-1.0, 1.0, 64), (0.0, 3.0, 31))


def wave_series_coefficient(n):
    """Sine coefficient of ``y (1 - y)`` on ``[0, 1]``: ``8 / (n pi)^3`` for odd
    ``n``, zero for even ``n``."""
    n = np.asarray(n)
    return np.where(n % 2 == 1, 8.0 / (np.pi * n) ** 3, 0.0)


def wave2d_series(grid=WAVE_SERIES_GRID, N_terms=99) -> TruthField:
    """Separable series solution on the unit cube with zero Dirichlet walls,
    initial shape ``sin(4 pi x) y (1 - y)`` and zero initial velocity.

    ``N_terms`` is the highest odd mode kept.
    """
    if N_terms < 1:
        raise ValueError("N_terms must be at least 1")
    X, Y, T = _mesh(grid)
    u = np.zeros_like(X)
    for n in range(1, N_terms + 1, 2):
        omega = np.pi * np.sqrt(16 + n**2)
        u += wave_series_coefficient(n) * np.sin(n * np.pi * Y) * np.cos(omega * T)
    u *= np.sin(4 * np.pi * X)
    return TruthField(tuple(grid), u[..., None], "series")


def gaussian_bump(center=(0.35, 0.25), width=10.0):
    cx, cy = center

    def f(x, y):
        return np.exp(-width * ((x - cx) ** 2 + (y - cy) ** 2))

    return f


def wave2d_fd(grid=WAVE_FD_GRID, initial=None, refine=4, cfl=0.5, return_energy=False):
    """Leapfrog solution of ``u_tt = u_xx + u_yy`` with zero Dirichlet walls
    and zero initial velocity.

    The solver runs on a spatial grid ``refine`` times finer than the
    requested one and with enough time substeps for ``dt <= cfl * h``
    (``cfl`` must keep ``dt <= h / sqrt(2)``), then samples the requested
    nodes. ``initial`` is a callable ``f(x, y)``; the default is the
    Gaussian bump ``exp(-10 ((x - 0.35)^2 + (y - 0.25)^2))``.
    """
    if cfl > 1 / np.sqrt(2):
        raise CflViolation(f"cfl={cfl} exceeds the 2D leapfrog limit 1/sqrt(2)")
    (x0, x1, nx), (y0, y1, ny), (t0, t1, nt) = grid
    initial = initial or gaussian_bump()
    mx = (int(nx) - 1) * refine + 1
    my = (int(ny) - 1) * refine + 1
    xs = np.linspace(x0, x1, mx)
    ys = np.linspace(y0, y1, my)
    hx = xs[1] - xs[0]
    hy = ys[1] - ys[0]
    h = min(hx, hy)
    dt_out = (t1 - t0) / (int(nt) - 1)
    sub = max(1, int(np.ceil(dt_out / (cfl * h))))
    dt = dt_out / sub
    rx, ry = (dt / hx) ** 2, (dt / hy) ** 2

    Xf, Yf = np.meshgrid(xs, ys, indexing="ij")
    u = initial(Xf, Yf).astype(float)
    u[0, :] = u[-1, :] = u[:, 0] = u[:, -1] = 0.0

    def lap(v):
        out = np.zeros_like(v)
        out[1:-1, 1:-1] = rx * (v[2:, 1:-1] - 2 * v[1:-1, 1:-1] + v[:-2, 1:-1]) + ry * (
            v[1:-1, 2:] - 2 * v[1:-1, 1:-1] + v[1:-1, :-2]
        )
        return out

    u_prev = u.copy()
    u_next = u + 0.5 * lap(u)  # zero initial velocity
    frames = [u[::refine, ::refine].copy()]
    energies = [_wave_energy(u_prev, u, u_next, dt, hx, hy)]
    u_prev, u = u, u_next
    step = 1
    for k in range(1, int(nt)):
        while step < k * sub:
            u_next = 2 * u - u_prev + lap(u)
            energies.append(_wave_energy(u_prev, u, u_next, dt, hx, hy))
            u_prev, u = u, u_next
            step += 1
        frames.append(u[::refine, ::refine].copy())
    values = np.stack(frames, axis=-1)[..., None]
    field = TruthField(tuple(grid), values, "finite-difference")
    if return_energy:
        return field, np.array(energies)
    return field


def _wave_energy(u_prev, u, u_next, dt, hx, hy):
    """Discrete energy at the middle time level: velocity by central
    difference, gradient by one-sided differences on the staggered grid."""
    ut = (u_next - u_prev) / (2 * dt)
    gx = (u[1:, :] - u[:-1, :]) / hx
    gy = (u[:, 1:] - u[:, :-1]) / hy
    return float(hx * hy * (np.sum(ut**2) + np.sum(gx**2) + np.sum(gy**2)))


# ---------------------------------------------------------------------------
# Maxwell
# ---------------------------------------------------------------------------

MAXWELL_GRID = ((-1.0, 1.0, 11), (-1.0, 1.0, 11), (-1.0, 1.0, 11), (0.0, 2.0, 11))

PLANE_WAVE_AMPLITUDES = np.array(
    [[-2, 0, 1], [1, 1, 0], [1, -1, -1], [3, 2, 1], [-7, 2, 3]], dtype=float
)
PLANE_WAVE_VECTORS = np.array(
    [[1, 0, 2], [0, 0, 1], [0, -1, 1], [-1, 1, 1], [0, 3, -2]], dtype=float
)


def maxwell_field(points):
    """``(E, B)`` of the five-plane-wave superposition at points (N, 4).

    Each wave is ``E_i = Re(E0_i exp(i(<k_i, x> - |k_i| t)))`` and
    ``B_i = k_i / |k_i| x E_i``; the time term sits inside the oscillatory
    exponent, the only placement that solves the equations.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    space, t = P[:, :3], P[:, 3]
    E = np.zeros((len(P), 3))
    B = np.zeros((len(P), 3))
    for E0, k in zip(PLANE_WAVE_AMPLITUDES, PLANE_WAVE_VECTORS):
        knorm = np.linalg.norm(k)
        phase = space @ k - knorm * t
        Ei = np.cos(phase)[:, None] * E0
        E += Ei
        B += np.cross(k / knorm, Ei)
    return np.concatenate([E, B], axis=1)


def maxwell_planewaves(grid=MAXWELL_GRID) -> TruthField:
    mesh = _mesh(grid)
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    values = maxwell_field(pts).reshape(mesh[0].shape + (6,))
    return TruthField(tuple(grid), values, "exact")


# ---------------------------------------------------------------------------
# Laplace
# ---------------------------------------------------------------------------


def laplace2d_fd(grid_side=64, omega=1.9, tol=1e-10, max_iter=1_000_000) -> TruthField:
    """Successive over-relaxation for ``u_xx + u_yy = 0`` on ``[0, 2 pi]^2``
    with ``u = sin(y)`` on the x-walls and ``u = sin(x)`` on the y-walls.

    Uses red-black ordering so each half-sweep is vectorized; iterates until
    the largest update drops below ``tol``.
    """
    if grid_side < 16:
        raise ValueError("grid_side must be at least 16")
    L = 2 * np.pi
    ax = np.linspace(0.0, L, grid_side)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    u = np.zeros((grid_side, grid_side))
    u[0, :] = np.sin(ax)
    u[-1, :] = np.sin(ax)
    u[:, 0] = np.sin(ax)
    u[:, -1] = np.sin(ax)
    i, j = np.meshgrid(np.arange(1, grid_side - 1), np.arange(1, grid_side - 1), indexing="ij")
    colors = [(i + j) % 2 == c for c in (0, 1)]
    inner = u[1:-1, 1:-1]
    for it in range(max_iter):
        biggest = 0.0
        for mask in colors:
            avg = 0.25 * (u[2:, 1:-1] + u[:-2, 1:-1] + u[1:-1, 2:] + u[1:-1, :-2])
            delta = omega * (avg - inner)
            delta[~mask] = 0.0
            inner += delta
            biggest = max(biggest, float(np.max(np.abs(delta))))
        if biggest < tol:
            break
    else:
        raise NonConvergence(f"SOR did not reach {tol} in {max_iter} iterations")
    grid = ((0.0, L, grid_side), (0.0, L, grid_side))
    return TruthField(grid, u[..., None], "finite-difference")


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def sample_dataset(truth: TruthField, count, seed, where="all", components=None,
                   axis=-1, atol=1e-12) -> Dataset:
    """Uniform sample without replacement from the grid nodes.

    ``where`` is ``"all"`` or a sequence of coordinate values on ``axis``
    (``slice(t = values)``). ``components`` limits which outputs are
    observed at each sampled node.
    """
    pts = truth.points()
    vals = truth.flat_values()
    if isinstance(where, str):
        if where != "all":
            raise ValueError(f"unknown selection {where!r}")
        pool = np.arange(len(pts))
    else:
        target = np.atleast_1d(np.asarray(where, dtype=float))
        keep = np.any(np.abs(pts[:, axis][:, None] - target[None, :]) <= atol, axis=1)
        pool = np.flatnonzero(keep)
    if count > len(pool):
        raise CountTooLarge(f"asked for {count} points, only {len(pool)} available")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(pool, size=count, replace=False)) if count else pool[:0]
    return Dataset.from_values(pts[idx], vals[idx], components)
