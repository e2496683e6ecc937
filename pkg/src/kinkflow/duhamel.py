"""Biharmonic heat kernel of the strip and the Duhamel fixed-point solver.

The kernel is ``k(t, x) = sum_{xi'} int exp(-|2 pi xi|^4 t + 2 pi i xi.x) d xi_z``.
Convolutions with it are done in Fourier space on the periodic grid; the
physical-space kernel is only needed for its L1 norms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.integrate import trapezoid

from .grid import GridSpec, RealField, get_grid
from .kink import KinkProfile

LOG_CUTOFF = 16 * math.log(10)  # exp(-LOG_CUTOFF) = 1e-16


class CutoffError(ValueError):
    """Requested time lies below the range covered by the kernel cutoffs."""


class ContractionError(RuntimeError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    d: int = 2
    t_min: float = 0.1
    panels: int = 64
    nodes: int = 16

    def __post_init__(self):
        if not 2 <= self.d <= 5:
            raise ValueError(f"d must be in 2..5, got {self.d}")
        if not self.t_min > 0:
            raise ValueError("t_min must be positive")

    @property
    def xi_max(self) -> float:
        """``Xi`` with ``exp(-(2 pi Xi)^4 t_min) = 1e-16``."""
        return (LOG_CUTOFF / self.t_min) ** 0.25 / (2 * math.pi)

    @property
    def lattice_radius(self) -> int:
        return int(math.floor(self.xi_max))

    def lattice(self, t: float) -> np.ndarray:
        """Transverse wave vectors whose factor ``exp(-(2 pi |xi'|)^4 t)`` exceeds 1e-16."""
        R = self.lattice_radius
        pts = np.array(list(product(range(-R, R + 1), repeat=self.d - 1)), dtype=float)
        keep = (2 * math.pi) ** 4 * np.sum(pts**2, axis=1) ** 2 * t <= LOG_CUTOFF
        return pts[keep]

    def quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        """Composite Gauss-Legendre nodes and weights on ``[-Xi, Xi]``."""
        x, w = np.polynomial.legendre.leggauss(self.nodes)
        edges = np.linspace(-self.xi_max, self.xi_max, self.panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        nodes = (mid[:, None] + half[:, None] * x).ravel()
        weights = (half[:, None] * w).ravel()
        return nodes, weights

    def check(self, t: float) -> None:
        if t < self.t_min * (1 - 1e-12):
            raise CutoffError(f"t = {t} is below the kernel's valid range t >= {self.t_min}")


def _z_modes(spec: KernelSpec, t: float, xi_t: np.ndarray, z: np.ndarray, jz: int) -> np.ndarray:
    """``int (2 pi i xi_z)^jz exp(-|2 pi xi|^4 t + 2 pi i xi_z z) d xi_z`` for each ``xi'``."""
    nodes, weights = spec.quadrature()
    r2 = np.sum(xi_t**2, axis=1)[:, None] + nodes[None, :] ** 2
    amp = weights * np.exp(-((2 * np.pi) ** 4) * r2**2 * t) * (2j * np.pi * nodes) ** jz
    phase = np.exp(2j * np.pi * np.outer(nodes, z))
    return amp @ phase


def kernel_eval(spec: KernelSpec, t: float, x, j=None) -> np.ndarray:
    """``d^j k(t, x)`` at points ``x`` (shape ``(..., d)``, ``z`` last)."""
    spec.check(t)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = spec.d
    if x.shape[-1] != d:
        raise ValueError(f"points must have {d} coordinates")
    j = tuple(j) if j is not None else (0,) * d
    if len(j) != d or sum(j) > 3 or min(j) < 0:
        raise ValueError(f"derivative multi-index {j} must have length {d} and order <= 3")
    lat = spec.lattice(t)
    pts = x.reshape(-1, d)
    out = np.empty(len(pts))
    for n, p in enumerate(pts):
        zpart = _z_modes(spec, t, lat, p[-1:], j[-1])[:, 0]
        tfac = np.exp(2j * np.pi * lat @ p[:-1])
        for axis in range(d - 1):
            tfac = tfac * (2j * np.pi * lat[:, axis]) ** j[axis]
        out[n] = np.real(np.sum(tfac * zpart))
    return out.reshape(x.shape[:-1])


def _z_extent(t: float) -> float:
    # tails decay like exp(-0.47 |z t^(-1/4)|^(4/3)): below 1e-19 at 30 t^(1/4)
    return 30.0 * t**0.25


def kernel_l1_norm(spec: KernelSpec, t: float, j: int, points_per_scale: int = 40) -> float:
    """``int_S |nabla^j k(t, x)| dx`` with the Frobenius norm of the j-tensor."""
    spec.check(t)
    if not 0 <= j <= 3:
        raise ValueError("j must be in 0..3")
    d = spec.d
    lat = spec.lattice(t)
    Z = _z_extent(t)
    nz = int(2 * Z / t**0.25 * points_per_scale) + 1
    z = np.linspace(-Z, Z, nz)
    R = int(np.abs(lat).max()) if lat.size else 0
    nx = 1 if R == 0 else 4 * R + 4
    xs = np.arange(nx) / nx
    # all multi-indices of order j with their multiplicity in the tensor norm
    counts: dict[tuple[int, ...], int] = {}
    for idx in product(range(d), repeat=j):
        key = tuple(idx.count(a) for a in range(d))
        counts[key] = counts.get(key, 0) + 1
    total_sq = 0.0
    for alpha, mult in counts.items():
        zp = _z_modes(spec, t, lat, z, alpha[-1])  # (n_lat, nz)
        coef = np.ones(len(lat), dtype=complex)
        for axis in range(d - 1):
            coef = coef * (2j * np.pi * lat[:, axis]) ** alpha[axis]
        # synthesize over the transverse grid
        grids = np.meshgrid(*([xs] * (d - 1)), indexing="ij")
        X = np.stack([g.ravel() for g in grids], axis=1)  # (nx^(d-1), d-1)
        tphase = np.exp(2j * np.pi * X @ lat.T) * coef  # (npts, n_lat)
        comp = np.real(tphase @ zp)  # (npts, nz)
        total_sq = total_sq + mult * comp**2
    mag = np.sqrt(total_sq)
    area = 1.0 / mag.shape[0]
    return float(trapezoid(mag.sum(axis=0) * area, z))


def kernel_scaling(spec: KernelSpec, times, j: int) -> tuple[np.ndarray, float]:
    """``t^(j/4) ||nabla^j k(t)||_1`` over ``times`` and its max/min flatness."""
    vals = np.array([t ** (j / 4) * kernel_l1_norm(spec, t, j) for t in times])
    return vals, float(vals.max() / vals.min())


# Duhamel map ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Slab:
    """Spectral coefficients of ``f`` on the time levels ``times``."""

    spec: GridSpec
    times: np.ndarray
    coeffs: np.ndarray  # (n_t, *spectral_shape)

    def values(self, n: int) -> np.ndarray:
        return get_grid(self.spec).inverse(self.coeffs[n])

    def __sub__(self, other: "Slab") -> "Slab":
        return Slab(self.spec, self.times, self.coeffs - other.coeffs)

    def at_end(self) -> RealField:
        return RealField(self.spec, self.values(-1))


def _phi_weights(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``p1 = (1 - e^-x)/x`` and ``p2 = (1 - e^-x (1 + x))/x^2`` without cancellation."""
    small = x < 1e-2
    xs = np.where(small, 1.0, x)
    em = np.exp(-xs)
    p1 = np.where(small, 1 - x / 2 + x**2 / 6 - x**3 / 24 + x**4 / 120 - x**5 / 720, -np.expm1(-xs) / xs)
    p2 = np.where(small, 0.5 - x / 3 + x**2 / 8 - x**3 / 30 + x**4 / 144 - x**5 / 840,
                  (-np.expm1(-xs) - xs * em) / xs**2)
    return p1, p2


def default_nonlinearity(spec: GridSpec, v: KinkProfile):
    grid = get_grid(spec)
    vz = v.v(grid.z)
    a, b = 3 * vz**2 - 1, 3 * vz

    def N(values: np.ndarray) -> np.ndarray:
        return values * (a + values * (b + values))

    return N


def duhamel_map(f: Slab, f0: RealField, v: KinkProfile | None = None, nonlinearity=None) -> Slab:
    """``T f(t) = k(t) * f0 + int_0^t Delta k(t - s) * N(f(s)) ds`` on ``f.times``.

    ``N(s)`` is interpolated linearly between time levels and the exponential
    factor is integrated exactly on each interval.
    """
    spec = f.spec
    grid = get_grid(spec)
    if nonlinearity is None:
        nonlinearity = default_nonlinearity(spec, v or KinkProfile(0.0))
    times = f.times
    if times[0] != 0.0:
        raise ValueError("time slab must start at t = 0")
    lam = grid.k4
    a0 = grid.forward(f0.values)
    out = np.empty_like(f.coeffs)
    n_hat = [grid.forward(nonlinearity(f.values(n))) for n in range(len(times))]
    if spec.dealias:
        n_hat = [grid.dealias(c) for c in n_hat]
    integral = np.zeros_like(a0)
    out[0] = a0
    for n in range(1, len(times)):
        h = times[n] - times[n - 1]
        x = lam * h
        p1, p2 = _phi_weights(x)
        integral = np.exp(-x) * integral + h * (p2 * n_hat[n - 1] + (p1 - p2) * n_hat[n])
        out[n] = a0 * np.exp(-lam * times[n]) - grid.k2 * integral
    return Slab(spec, times, out)


def semigroup_slab(f0: RealField, times: np.ndarray) -> Slab:
    grid = get_grid(f0.spec)
    a0 = grid.forward(f0.values)
    coeffs = np.stack([a0 * np.exp(-grid.k4 * t) for t in times])
    return Slab(f0.spec, np.asarray(times, float), coeffs)


def _multi_indices(d: int, j: int) -> dict[tuple[int, ...], int]:
    counts: dict[tuple[int, ...], int] = {}
    for idx in product(range(d), repeat=j):
        key = tuple(idx.count(a) for a in range(d))
        counts[key] = counts.get(key, 0) + 1
    return counts


def weighted_norm(f: Slab) -> float:
    """``sum_{j<=4} sup_t t^(j/4) ||nabla^j f||_inf + sup_t t ||f_t||_inf``.

    ``f_t`` comes from second-order differencing across the time levels.
    """
    if len(f.times) < 2:
        raise ValueError("weighted norm needs at least two time levels")
    grid = get_grid(f.spec)
    d = f.spec.d
    t = f.times
    total = 0.0
    for j in range(5):
        terms = _multi_indices(d, j)
        mults = {a: grid.derivative_multiplier(a) for a in terms}
        best = 0.0
        for n, tn in enumerate(t):
            if j and tn == 0.0:
                continue
            sq = sum(m * grid.inverse(f.coeffs[n] * mults[a]) ** 2 for a, m in terms.items())
            best = max(best, tn ** (j / 4) * float(np.sqrt(sq.max())))
        total += best
    dfdt = np.gradient(f.coeffs, t, axis=0, edge_order=2)
    total += max(tn * float(np.abs(grid.inverse(dfdt[n])).max()) for n, tn in enumerate(t))
    return total


@dataclass
class LocalSolution:
    slab: Slab
    increments: list[float]

    @property
    def iterations(self) -> int:
        return len(self.increments)

    @property
    def final(self) -> RealField:
        return self.slab.at_end()


def time_levels(T0: float, n_levels: int = 33) -> np.ndarray:
    return np.linspace(0.0, T0, n_levels)


def local_solve(f0: RealField, v: KinkProfile | None = None, T0: float = 0.1,
                n_levels: int = 33, tol: float = 1e-10, max_iter: int = 50,
                nonlinearity=None) -> LocalSolution:
    """Picard iteration of the Duhamel map started from the semigroup term.

    Stops when the weighted-norm increment falls below ``tol``; raises
    :class:`ContractionError` if an increment grows or ``max_iter`` is hit.
    """
    times = time_levels(T0, n_levels)
    current = semigroup_slab(f0, times)
    increments: list[float] = []
    for _ in range(max_iter):
        nxt = duhamel_map(current, f0, v, nonlinearity)
        inc = weighted_norm(nxt - current)
        increments.append(inc)
        current = nxt
        if inc <= tol:
            return LocalSolution(current, increments)
        if len(increments) >= 3 and inc > increments[-2]:
            raise ContractionError(
                f"Picard increment grew from {increments[-2]:.3e} to {inc:.3e}; "
                "reduce T0 or the size of f0"
            )
    raise ContractionError(
        f"no convergence after {max_iter} Picard iterations (last increment {increments[-1]:.3e})"
    )
