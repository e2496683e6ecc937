"""Periodic spectral discretization of the strip ``Q^(d-1) x [-L_z, L_z)``.

Array layout is ``(x_1, ..., x_{d-1}, z)`` with ``z`` on the last axis. The
transverse torus has unit side length. Spectral coefficients are Fourier-series
coefficients ``a_xi = rfftn(f) / N`` so that ``f(x) = sum_xi a_xi exp(2 pi i xi.x)``
and ``int f^2 = V * sum_xi |a_xi|^2``.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from itertools import product

import numpy as np
import scipy.fft as sfft

MAX_POINTS = 2**26


class GridError(ValueError):
    """Invalid grid specification or field/grid mismatch."""


class NonFiniteFieldError(ValueError):
    """A field contains NaN or inf."""

    def __init__(self, index):
        self.index = tuple(int(i) for i in index)
        super().__init__(f"non-finite sample at grid index {self.index}")


@dataclass(frozen=True)
class GridSpec:
    d: int = 2
    n_transverse: int = 64
    L_z: float = 100.0
    n_z: int = 2048
    dealias: bool = True
    max_points: int = MAX_POINTS

    def __post_init__(self):
        if not 2 <= self.d <= 5:
            raise GridError(f"d must be in 2..5, got {self.d}")
        for name in ("n_transverse", "n_z"):
            n = getattr(self, name)
            if n < 8 or n % 2:
                raise GridError(f"{name} must be even and >= 8, got {n}")
        if self.L_z < 20:
            raise GridError(f"L_z must be >= 20, got {self.L_z}")
        if self.n_points > self.max_points:
            raise GridError(
                f"{self.n_points} grid points exceed the memory budget of {self.max_points}"
            )

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_transverse,) * (self.d - 1) + (self.n_z,)

    @property
    def n_points(self) -> int:
        return self.n_transverse ** (self.d - 1) * self.n_z

    @property
    def volume(self) -> float:
        return 2.0 * self.L_z

    @property
    def dz(self) -> float:
        return 2.0 * self.L_z / self.n_z


@dataclass(frozen=True, eq=False)
class RealField:
    spec: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.spec.shape:
            raise GridError(f"field shape {values.shape} != grid shape {self.spec.shape}")
        bad = ~np.isfinite(values)
        if bad.any():
            raise NonFiniteFieldError(np.argwhere(bad)[0])
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Half-spectrum (``rfftn`` layout) of a real field.

    Hermitian symmetry is implicit for the stored ``xi_z >= 0`` half; see
    :meth:`full` for the complete coefficient array.
    """

    spec: GridSpec
    coeffs: np.ndarray = field(repr=False)

    def full(self) -> np.ndarray:
        n = self.spec.n_points
        return sfft.fftn(inverse_transform(self).values) / n


class Grid:
    """Cached wavenumbers, quadrature weights and transforms for one ``GridSpec``."""

    def __init__(self, spec: GridSpec):
        self.spec = spec
        d, nt, nz = spec.d, spec.n_transverse, spec.n_z
        self.shape = spec.shape
        self.n_points = spec.n_points
        self.volume = spec.volume
        self.cell = spec.volume / spec.n_points
        self.z = -spec.L_z + spec.dz * np.arange(nz)
        self.x = np.arange(nt) / nt

        # wave vectors xi, broadcastable against the rfftn half-spectrum
        xi_t = np.fft.fftfreq(nt, d=1.0 / nt)
        xi_z = np.fft.rfftfreq(nz, d=spec.dz)
        self.xi = []
        for axis in range(d - 1):
            s = [1] * d
            s[axis] = nt
            self.xi.append(xi_t.reshape(s))
        s = [1] * d
        s[-1] = xi_z.size
        self.xi.append(xi_z.reshape(s))
        self.spectral_shape = (nt,) * (d - 1) + (xi_z.size,)

        self.k2 = sum((2 * np.pi * x) ** 2 for x in self.xi) + np.zeros(self.spectral_shape)
        self.k4 = self.k2**2

        # Parseval weights: interior xi_z > 0 columns stand for +/- pairs
        w = np.full(xi_z.size, 2.0)
        w[0] = 1.0
        w[-1] = 1.0  # n_z even: last column is the z-Nyquist
        self.weight = np.broadcast_to(w.reshape(s), self.spectral_shape)

        # Nyquist planes are dropped from odd derivatives to keep fields real
        self.nyquist = [np.abs(x) == np.abs(x).max() for x in self.xi[:-1]]
        self.nyquist.append(np.arange(xi_z.size).reshape(s) == xi_z.size - 1)

        if spec.dealias:
            keep_t = np.abs(xi_t) <= nt // 3
            keep_z = np.arange(xi_z.size) <= nz // 3
            mask = np.ones(self.spectral_shape, dtype=bool)
            for axis in range(d - 1):
                mask &= keep_t.reshape([nt if i == axis else 1 for i in range(d)])
            mask &= keep_z.reshape(s)
        else:
            mask = np.ones(self.spectral_shape, dtype=bool)
        self.dealias_mask = mask

    # transforms on raw arrays ------------------------------------------------
    def forward(self, values: np.ndarray) -> np.ndarray:
        return sfft.rfftn(values, workers=-1) / self.n_points

    def inverse(self, coeffs: np.ndarray) -> np.ndarray:
        return sfft.irfftn(coeffs * self.n_points, s=self.shape, workers=-1)

    def integrate(self, values: np.ndarray) -> float:
        """Trapezoidal (= spectral) quadrature over the periodic box."""
        return float(values.sum() * self.cell)

    def mean_sq(self, coeffs: np.ndarray) -> float:
        """``int |f|^2`` from coefficients (Parseval)."""
        return float(self.volume * np.sum(self.weight * np.abs(coeffs) ** 2))

    def derivative_multiplier(self, order: tuple[int, ...]) -> np.ndarray:
        if len(order) != self.spec.d:
            raise GridError(f"multi-index {order} has wrong length for d={self.spec.d}")
        if any(o < 0 for o in order) or sum(order) > 4:
            raise GridError(f"multi-index {order} must be non-negative with |order| <= 4")
        mult = np.ones(self.spectral_shape, dtype=complex)
        for axis, o in enumerate(order):
            if o:
                mult = mult * (2j * np.pi * self.xi[axis]) ** o
                if o % 2:
                    mult = np.where(self.nyquist[axis], 0.0, mult)
        return mult

    def grad_power(self, coeffs: np.ndarray, j: int) -> float:
        """``||nabla^j f||^2`` (Frobenius tensor norm) as ``sum |2 pi xi|^(2j) |a|^2``.

        Exact for fields without Nyquist content, where odd derivatives are
        well defined on the grid.
        """
        return float(self.volume * np.sum(self.weight * self.k2**j * np.abs(coeffs) ** 2))

    def dealias(self, coeffs: np.ndarray) -> np.ndarray:
        return np.where(self.dealias_mask, coeffs, 0.0)

    def mesh(self) -> list[np.ndarray]:
        """Coordinate arrays broadcastable to the grid shape."""
        d = self.spec.d
        out = []
        for axis in range(d - 1):
            out.append(self.x.reshape([-1 if i == axis else 1 for i in range(d)]))
        out.append(self.z.reshape([1] * (d - 1) + [-1]))
        return out

    def transverse_mean(self, values: np.ndarray) -> np.ndarray:
        return values.reshape(-1, self.spec.n_z).mean(axis=0)


@functools.lru_cache(maxsize=16)
def get_grid(spec: GridSpec) -> Grid:
    return Grid(spec)


def forward_transform(f: RealField) -> SpectralField:
    grid = get_grid(f.spec)
    return SpectralField(f.spec, grid.forward(f.values))


def inverse_transform(F: SpectralField) -> RealField:
    grid = get_grid(F.spec)
    return RealField(F.spec, grid.inverse(F.coeffs))


def differentiate(F: SpectralField, order: tuple[int, ...]) -> SpectralField:
    grid = get_grid(F.spec)
    return SpectralField(F.spec, F.coeffs * grid.derivative_multiplier(tuple(order)))


def laplacian(F: SpectralField) -> SpectralField:
    grid = get_grid(F.spec)
    return SpectralField(F.spec, -grid.k2 * F.coeffs)


def dealiased_product(a: RealField, b: RealField) -> SpectralField:
    """Coefficients of ``a * b`` truncated to the 2/3 band."""
    grid = get_grid(a.spec)
    return SpectralField(a.spec, grid.dealias(grid.forward(a.values * b.values)))


@dataclass(frozen=True)
class Norms:
    l2: float
    grad_l2: float
    hess_l2: float
    third_l2: float
    sup: float
    laplacian_l2: float


class InterpolationIdentityError(ArithmeticError):
    pass


def _tensor_l2(grid: Grid, coeffs: np.ndarray, j: int) -> float:
    """``||nabla^j f||`` assembled from real-space tensor components."""
    if j == 0:
        return np.sqrt(grid.integrate(grid.inverse(coeffs) ** 2))
    total = 0.0
    d = grid.spec.d
    for idx in product(range(d), repeat=j):
        order = tuple(idx.count(axis) for axis in range(d))
        comp = grid.inverse(coeffs * grid.derivative_multiplier(order))
        total += grid.integrate(comp**2)
    return np.sqrt(total)


def norms(f: RealField, rtol: float = 1e-10) -> Norms:
    """L2 norms of f and its first three derivative tensors, plus the grid sup.

    The Hessian norm is assembled component by component in real space and
    compared against ``||Delta f||``; a mismatch beyond ``rtol`` raises.
    """
    grid = get_grid(f.spec)
    a = grid.forward(f.values)
    l2 = np.sqrt(grid.mean_sq(a))
    grad = np.sqrt(grid.grad_power(a, 1))
    third = np.sqrt(grid.grad_power(a, 3))
    hess = _tensor_l2(grid, a, 2)
    lap = np.sqrt(grid.integrate(grid.inverse(-grid.k2 * a) ** 2))
    scale = max(hess, lap)
    if scale > 0 and abs(hess - lap) > rtol * scale:
        raise InterpolationIdentityError(f"||Delta f|| = {lap!r} but ||D^2 f|| = {hess!r}")
    return Norms(
        l2=float(l2),
        grad_l2=float(grad),
        hess_l2=float(hess),
        third_l2=float(third),
        sup=float(np.abs(f.values).max()),
        laplacian_l2=float(lap),
    )
