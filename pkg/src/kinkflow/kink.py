"""Kink profiles ``v_c(z) = tanh((z - c)/sqrt 2)`` and L2 projection onto the kink family."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .grid import Grid, GridSpec, RealField, get_grid

SQRT2 = np.sqrt(2.0)


class ProjectionError(RuntimeError):
    """No admissible minimizer of ``c -> ||u - v_c||`` near the initial guess."""


def G(u):
    """Double-well potential ``(1 - u^2)^2 / 4``."""
    return 0.25 * (1.0 - u * u) ** 2


def dG(u):
    return u**3 - u


def d2G(u):
    return 3.0 * u * u - 1.0


def surface_tension() -> float:
    """``m_0 = int_{-1}^{1} sqrt(2 G(s)) ds = 2 sqrt(2) / 3``."""
    return 2.0 * SQRT2 / 3.0


def _sech2(s):
    e = np.exp(-2.0 * np.abs(s))
    return 4.0 * e / (1.0 + e) ** 2


@dataclass(frozen=True)
class KinkProfile:
    """Shifted kink and its closed-form z-derivatives (no grid differencing)."""

    c: float = 0.0

    def _s(self, z):
        return (np.asarray(z, dtype=float) - self.c) / SQRT2

    def v(self, z):
        return np.tanh(self._s(z))

    def vz(self, z):
        return _sech2(self._s(z)) / SQRT2

    def vzz(self, z):
        return -SQRT2 * self.v(z) * self.vz(z)

    def vzzz(self, z):
        v, vz = self.v(z), self.vz(z)
        return -SQRT2 * vz * vz + 2.0 * v * v * vz


@dataclass(frozen=True, eq=False)
class KinkState:
    """A state ``u = v_{c_ref} + f`` with ``f`` periodic on the truncated strip."""

    f: RealField
    c_ref: float = 0.0

    @property
    def spec(self) -> GridSpec:
        return self.f.spec

    @property
    def grid(self) -> Grid:
        return get_grid(self.f.spec)

    @property
    def reference(self) -> KinkProfile:
        return KinkProfile(self.c_ref)

    @cached_property
    def profile(self) -> np.ndarray:
        """Transverse mean of ``u - v_ref``; projections only see this profile."""
        return self.grid.transverse_mean(self.f.values)

    def u(self) -> np.ndarray:
        return self.reference.v(self.grid.z) + self.f.values

    def perturbation(self, c: float) -> RealField:
        """``f_c = u - v_c`` as a field."""
        z = self.grid.z
        delta = self.reference.v(z) - KinkProfile(c).v(z)
        return RealField(self.spec, self.f.values + delta)

    def rebased(self, c: float) -> "KinkState":
        return KinkState(self.perturbation(c), c)

    @classmethod
    def from_kink(cls, spec: GridSpec, c: float, c_ref: float = 0.0) -> "KinkState":
        """The exact kink ``v_c`` written about ``v_{c_ref}``."""
        z = get_grid(spec).z
        f = np.broadcast_to(KinkProfile(c).v(z) - KinkProfile(c_ref).v(z), spec.shape)
        return cls(RealField(spec, f.copy()), c_ref)


def shift_residual(state: KinkState, c) -> np.ndarray:
    """``phi(c) = int_S (u - v_c) v_cz dx`` for scalar or array ``c``."""
    grid = state.grid
    z = grid.z
    fbar = state.profile
    c = np.atleast_1d(np.asarray(c, dtype=float))[:, None]
    kc = KinkProfile(c)
    integrand = (fbar + state.reference.v(z) - kc.v(z)) * kc.vz(z)
    phi = integrand.sum(axis=1) * grid.spec.dz  # |Q| = 1
    return phi


def shift_residual_slope(state: KinkState, c: float) -> float:
    """``d phi / dc = int v_cz^2 - (u - v_c) v_czz``; positive at a minimum of ``||u - v_c||``."""
    grid = state.grid
    z = grid.z
    kc = KinkProfile(c)
    w = state.profile + state.reference.v(z) - kc.v(z)
    return float(((kc.vz(z) ** 2) - w * kc.vzz(z)).sum() * grid.spec.dz)


def _distance_sq(state: KinkState, c: float) -> float:
    f_c = state.perturbation(c)
    return state.grid.integrate(f_c.values**2)


def _newton_bisect(state, lo, hi, guess, tol, maxiter=100):
    """Safeguarded Newton on an increasing bracket ``phi(lo) < 0 < phi(hi)``."""
    c = min(max(guess, lo), hi)
    for _ in range(maxiter):
        phi = float(shift_residual(state, c)[0])
        if abs(phi) <= tol:
            return c
        if phi < 0:
            lo = c
        else:
            hi = c
        slope = shift_residual_slope(state, c)
        step = c - phi / slope if slope > 0 else None
        if step is None or not lo < step < hi:
            step = 0.5 * (lo + hi)
        if hi - lo < 1e-15 * max(1.0, abs(c)):
            return step
        c = step
    raise ProjectionError(f"root solve for the shift did not converge (|phi| = {abs(phi):.3e})")


def mass_shift_estimate(state: KinkState) -> float:
    """Cold-start guess ``c ~ -1/2 int (u - v_0)`` (exact for a bare kink)."""
    grid = state.grid
    f0 = state.perturbation(0.0)
    return -0.5 * grid.integrate(f0.values)


def project_shift(state: KinkState, c_init: float | None = None, tol: float = 1e-10,
                  scan_step: float = 0.25, half_width: float | None = None) -> float:
    """Shift ``c`` of the L2-closest kink to ``u``.

    Scans ``phi`` on ``|c - c_init| <= half_width`` (default ``L_z / 2``),
    refines every upward zero crossing and returns the one with the smallest
    ``||u - v_c||``.
    """
    if c_init is None:
        c_init = mass_shift_estimate(state)
    half = 0.5 * state.spec.L_z if half_width is None else half_width
    cs = c_init + np.arange(-half, half + scan_step / 2, scan_step)
    phi = shift_residual(state, cs)
    up = np.nonzero((phi[:-1] <= 0) & (phi[1:] > 0))[0]
    if up.size == 0:
        raise ProjectionError(
            f"no sign change of phi within |c - {c_init:.4g}| <= {half:.4g}; "
            "state is not in the perturbative regime around a single kink"
        )
    best, best_dist = None, np.inf
    for i in up:
        lo, hi = cs[i], cs[i + 1]
        guess = c_init if lo <= c_init <= hi else 0.5 * (lo + hi)
        root = lo if phi[i] == 0 else _newton_bisect(state, lo, hi, guess, tol)
        if shift_residual_slope(state, root) <= 0:
            continue
        dist = _distance_sq(state, root)
        if dist < best_dist:
            best, best_dist = root, dist
    if best is None:
        raise ProjectionError("no zero of phi satisfies the second-order condition")
    return float(best)


def shift_comparison_monitor(state: KinkState, c: float, c_bar: float) -> float:
    """``||f_c||_inf / ||f_cbar||_inf`` (grid sup norms); 0 when both vanish."""
    num = np.abs(state.perturbation(c).values).max()
    den = np.abs(state.perturbation(c_bar).values).max()
    if den == 0.0:
        return 0.0 if num == 0.0 else np.inf
    return float(num / den)
