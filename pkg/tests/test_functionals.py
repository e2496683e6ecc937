import numpy as np
import pytest

from kinkflow.functionals import (MassConstraintError, OrthogonalityError, WindowError,
                                  diagnostics, dissipation, energy_gap, hardy_ratio, hminus1_sq,
                                  linearized_dissipation, linearized_gap, linearized_gap_lm,
                                  orthogonalize)
from kinkflow.grid import GridSpec, RealField, get_grid
from kinkflow.kink import G, KinkProfile, KinkState, d2G, surface_tension
from kinkflow.sampling import band_limited


def zfield(spec, profile):
    z = get_grid(spec).z
    return RealField(spec, np.broadcast_to(profile(z), spec.shape).copy())


@pytest.mark.parametrize("c", [0.0, 0.5, -1.7, 3.0])
def test_kinks_have_zero_gap_and_dissipation(small, c):
    state = KinkState.from_kink(small, c)
    assert abs(energy_gap(state)) <= 1e-9
    assert abs(dissipation(state)) <= 1e-9


def brute_energy_gap(spec, u):
    """E(u) - m_0 by direct quadrature of the full density, periodic derivatives."""
    grid = get_grid(spec)
    z = grid.z
    v = KinkProfile(0.0).v(z)
    a = grid.forward(u - v)
    grad_f = [grid.inverse(a * grid.derivative_multiplier(o)) for o in [(1, 0), (0, 1)]]
    vz = KinkProfile(0.0).vz(z)
    du = [grad_f[0], grad_f[1] + vz]
    density = 0.5 * (du[0] ** 2 + du[1] ** 2) + G(u)
    return grid.integrate(density) - surface_tension()


def test_energy_gap_matches_brute_force(small):
    grid = get_grid(small)
    x, z = grid.mesh()
    u = KinkProfile(0.0).v(z) + 0.03 * np.exp(-((z - 0.4) ** 2)) * (1 + np.cos(2 * np.pi * x))
    f = RealField(small, u - KinkProfile(0.0).v(z))
    assert energy_gap(KinkState(f)) == pytest.approx(brute_energy_gap(small, u), abs=1e-10)


def test_energy_gap_second_variation(small):
    # E(v + eps w) / eps^2 -> E_l(w) / 2, extrapolated in eps
    grid = get_grid(small)
    x, z = grid.mesh()
    w = np.exp(-((z - 0.3) ** 2)) * (0.5 + np.cos(2 * np.pi * x))
    ratios = []
    epss = [1e-3, 5e-4]
    for eps in epss:
        ratios.append(energy_gap(KinkState(RealField(small, eps * w))) / eps**2)
    # error is O(eps): Richardson with h, h/2
    extrapolated = 2 * ratios[1] - ratios[0]
    assert extrapolated == pytest.approx(0.5 * linearized_gap(RealField(small, w), 0.0),
                                         rel=1e-6)


def test_dissipation_second_variation(small):
    grid = get_grid(small)
    x, z = grid.mesh()
    w = np.exp(-((z + 0.2) ** 2)) * (0.5 + np.sin(2 * np.pi * x))
    ratios = [dissipation(KinkState(RealField(small, e * w))) / e**2 for e in (1e-3, 5e-4)]
    extrapolated = 2 * ratios[1] - ratios[0]
    assert extrapolated == pytest.approx(linearized_dissipation(RealField(small, w), 0.0),
                                         rel=1e-6)


def test_hminus1_single_mode(small):
    a, k = 0.3, 5
    L = small.L_z
    f0 = zfield(small, lambda z: a * np.sin(2 * np.pi * k * z / (2 * L)))
    expected = a**2 * small.volume / 2 / (4 * np.pi**2 * (k / (2 * L)) ** 2)
    assert hminus1_sq(f0) == pytest.approx(expected, rel=1e-12)


def test_hminus1_zero_and_mass_error(small):
    assert hminus1_sq(RealField(small, np.zeros(small.shape))) == 0.0
    with pytest.raises(MassConstraintError):
        hminus1_sq(zfield(small, lambda z: np.exp(-(z**2))))


def test_hminus1_matches_poisson_solve(small, rng):
    grid = get_grid(small)
    f0 = band_limited(small, rng, width=2.0)
    f0 -= f0.mean()
    # solve -Delta phi = f0, then H = int |grad phi|^2 from real-space gradients
    a = grid.forward(f0)
    k2 = grid.k2.copy()
    k2.flat[0] = 1.0
    phi_hat = a / k2
    phi_hat.flat[0] = 0.0
    grad = [grid.inverse(phi_hat * grid.derivative_multiplier(o)) for o in [(1, 0), (0, 1)]]
    expected = grid.integrate(grad[0] ** 2 + grad[1] ** 2)
    assert hminus1_sq(RealField(small, f0)) == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("c", [0.0, 1.3])
def test_translation_mode_is_in_kernels(small, c):
    vz = zfield(small, KinkProfile(c).vz)
    assert abs(linearized_gap(vz, c)) <= 1e-9
    assert abs(linearized_dissipation(vz, c)) <= 1e-9
    assert abs(linearized_gap_lm(vz, c)) <= 1e-9


def test_zero_field_linear_functionals(small):
    zero = RealField(small, np.zeros(small.shape))
    assert linearized_gap(zero, 0.0) == 0.0
    assert linearized_dissipation(zero, 0.0) == 0.0
    assert hardy_ratio(zero, 0.0) == 0.0


def test_lassoued_mironescu_closed_form(small):
    # f = v_cz sin(2 pi x): E_l = (2 pi)^2 / 2 int v_cz^2 dz = 2 pi^2 m_0
    c = 0.25
    grid = get_grid(small)
    x, z = grid.mesh()
    f = RealField(small, KinkProfile(c).vz(z) * np.sin(2 * np.pi * x))
    expected = 2 * np.pi**2 * surface_tension()
    assert linearized_gap(f, c) == pytest.approx(expected, rel=1e-10)
    assert linearized_gap_lm(f, c) == pytest.approx(expected, rel=1e-10)


def test_window_error(small):
    f = zfield(small, lambda z: 1e-3 * np.ones_like(z))
    with pytest.raises(WindowError):
        linearized_gap_lm(f, 0.0)


def test_hardy_requires_orthogonality(small):
    f = zfield(small, lambda z: np.exp(-(z**2)))
    with pytest.raises(OrthogonalityError):
        hardy_ratio(f, 0.0)
    g = orthogonalize(f, 0.0)
    assert 0 < hardy_ratio(g, 0.0) < np.inf


def test_hardy_ratio_by_quadrature(small):
    # odd localized f is orthogonal to the even v_z; compare with an independent sum
    grid = get_grid(small)
    z = grid.z
    prof = z * np.exp(-(z**2) / 2)
    f = zfield(small, lambda zz: zz * np.exp(-(zz**2) / 2))
    num = np.sum(prof**2 / (z**2 + 1)) * small.dz
    den = np.sum((np.exp(-(z**2) / 2) * (1 - z**2)) ** 2) * small.dz
    assert hardy_ratio(f, 0.0) == pytest.approx(num / den, rel=1e-10)


def test_diagnostics_of_reference_kink(small):
    rec = diagnostics(KinkState(RealField(small, np.zeros(small.shape))), 0.0)
    assert (rec.energy_gap, rec.dissipation, rec.hminus1_sq, rec.shift) == (0, 0, 0, 0)
    assert rec.gn_ratio == 0 and rec.alg_ratio_c == 0 and rec.alg_ratio_E == 0


def test_diagnostics_populated(small):
    grid = get_grid(small)
    x, z = grid.mesh()
    base = KinkState.from_kink(small, 0.3)
    f = base.f.values + 0.02 * np.cos(2 * np.pi * x) * np.exp(-(z**2))
    q = np.exp(-(z**2) / 8)
    f = f - grid.integrate(f) / grid.integrate(np.broadcast_to(q, small.shape)) * q
    rec = diagnostics(KinkState(RealField(small, f)), 1.0)
    assert abs(rec.mass) < 1e-12
    assert rec.energy_gap > 0 and rec.dissipation > 0 and rec.hminus1_sq > 0
    assert np.isfinite([rec.gn_ratio, rec.alg_ratio_c, rec.alg_ratio_E]).all()
    assert rec.fc_h1 > 0 and rec.f0_h1 > rec.fc_h1


def test_d2G_is_second_derivative():
    u = np.linspace(-1.5, 1.5, 31)
    h = 1e-4
    assert np.allclose(d2G(u), (G(u + h) - 2 * G(u) + G(u - h)) / h**2, atol=1e-6)


def test_higher_dimension_energy(rng):
    spec = GridSpec(d=3, n_transverse=8, L_z=20.0, n_z=256)
    state = KinkState.from_kink(spec, 0.2)
    assert abs(energy_gap(state)) < 1e-9
