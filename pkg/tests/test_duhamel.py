import numpy as np
import pytest
from scipy.integrate import quad, trapezoid

from kinkflow.calibration import CALIBRATION_GRID, PICARD_MAX_ITER, picard_field
from kinkflow.duhamel import (ContractionError, CutoffError, KernelSpec, Slab, duhamel_map,
                              kernel_eval, kernel_l1_norm, local_solve, semigroup_slab,
                              time_levels, weighted_norm)
from kinkflow.grid import GridSpec, RealField, get_grid

SPEC = KernelSpec(d=2, t_min=0.1)


def kernel_1d(t, z):
    """Independent oracle: adaptive quadrature of the real form of the z-kernel."""
    val, _ = quad(lambda s: 2 * np.exp(-((2 * np.pi * s) ** 4) * t) * np.cos(2 * np.pi * s * z),
                  0, 5 * t**-0.25, limit=400)
    return val


@pytest.mark.parametrize("t,z", [(0.1, 0.0), (1.0, 0.7), (3.0, -2.5), (10.0, 4.0)])
def test_kernel_matches_quadrature_oracle(t, z):
    assert kernel_eval(SPEC, t, [0.3, z])[0] == pytest.approx(kernel_1d(t, z), abs=1e-12)


def test_kernel_has_unit_mass():
    t = 1.0
    z = np.linspace(-30, 30, 1201)
    pts = np.stack([np.full_like(z, 0.25), z], axis=1)
    assert trapezoid(kernel_eval(SPEC, t, pts), z) == pytest.approx(1.0, abs=1e-10)


def test_kernel_is_even_and_transversely_periodic():
    spec = KernelSpec(d=3, t_min=0.01)
    x = np.array([[0.13, -0.4, 0.8], [0.5, 0.25, -1.1]])
    assert np.allclose(kernel_eval(spec, 0.02, x), kernel_eval(spec, 0.02, -x), atol=1e-13)
    shifted = x + np.array([1.0, -1.0, 0.0])
    assert np.allclose(kernel_eval(spec, 0.02, x), kernel_eval(spec, 0.02, shifted), atol=1e-13)
    assert len(spec.lattice(0.02)) > 1


def test_kernel_self_similarity():
    # t^(1/4) k(t, t^(1/4) s) is the same profile for every t
    s = np.linspace(-4, 4, 9)
    profiles = []
    for t in (0.5, 1.0, 2.0):
        pts = np.stack([np.zeros_like(s), s * t**0.25], axis=1)
        profiles.append(t**0.25 * kernel_eval(SPEC, t, pts))
    assert np.allclose(profiles[0], profiles[1], atol=1e-12)
    assert np.allclose(profiles[1], profiles[2], atol=1e-12)


def test_kernel_derivative_against_differences():
    h = 1e-4
    z0 = 0.8
    fd = (kernel_eval(SPEC, 1.0, [0.0, z0 + h]) - kernel_eval(SPEC, 1.0, [0.0, z0 - h])) / (2 * h)
    assert kernel_eval(SPEC, 1.0, [0.0, z0], j=(0, 1))[0] == pytest.approx(fd[0], abs=1e-8)


def test_l1_norms():
    assert kernel_l1_norm(SPEC, 1.0, 0) >= 1.0
    # j = 1 flatness across a decade (5% band)
    vals = [t**0.25 * kernel_l1_norm(SPEC, t, 1) for t in (0.1, 1.0, 10.0)]
    assert max(vals) / min(vals) <= 1.05


def test_cutoff_error():
    with pytest.raises(CutoffError):
        kernel_eval(SPEC, 0.01, [0.0, 0.0])
    with pytest.raises(ValueError):
        kernel_eval(SPEC, 1.0, [0.0, 0.0], j=(2, 2))


# Duhamel map ------------------------------------------------------------------

SMALL = GridSpec(d=2, n_transverse=16, L_z=30.0, n_z=256)


def zero(spec, n=5, T0=0.1):
    t = time_levels(T0, n)
    shape = (n,) + get_grid(spec).spectral_shape
    return Slab(spec, t, np.zeros(shape, dtype=complex))


def test_zero_map():
    f0 = RealField(SMALL, np.zeros(SMALL.shape))
    out = duhamel_map(zero(SMALL), f0)
    assert np.abs(out.coeffs).max() == 0.0
    sol = local_solve(f0)
    assert sol.iterations == 1 and np.abs(sol.final.values).max() == 0.0


def test_linear_hook_reproduces_semigroup():
    # N(f) = alpha f: f_t = -Delta^2 f + alpha Delta f, exact mode decay exp(-(k^4 + alpha k^2) t)
    alpha = 0.7
    f0 = picard_field(SMALL, sup=1e-2)
    grid = get_grid(SMALL)
    exact = grid.inverse(grid.forward(f0.values) * np.exp(-(grid.k4 + alpha * grid.k2) * 0.1))
    errors = []
    for n in (17, 33, 65):
        sol = local_solve(f0, T0=0.1, n_levels=n, nonlinearity=lambda f: alpha * f)
        errors.append(np.abs(sol.final.values - exact).max())
    assert errors[1] < 1e-7
    # second order in the level spacing
    assert errors[0] / errors[1] == pytest.approx(4.0, rel=0.1)
    assert errors[1] / errors[2] == pytest.approx(4.0, rel=0.1)


def test_map_contracts():
    f0 = picard_field(SMALL)
    t = time_levels(0.1)
    base = semigroup_slab(f0, t)
    x, z = get_grid(SMALL).mesh()
    bump = RealField(SMALL, 1e-4 * np.sin(2 * np.pi * z / 60) * (1 + 0.5 * np.cos(2 * np.pi * x)))
    other = Slab(SMALL, t, base.coeffs + semigroup_slab(bump, t).coeffs)
    kappa = (weighted_norm(duhamel_map(base, f0) - duhamel_map(other, f0))
             / weighted_norm(base - other))
    assert kappa < 1


def test_weighted_norm_examples():
    grid = get_grid(SMALL)
    t = time_levels(0.1, 5)
    assert weighted_norm(zero(SMALL)) == 0.0
    a = 0.37
    const = np.stack([grid.forward(np.full(SMALL.shape, a))] * len(t))
    assert weighted_norm(Slab(SMALL, t, const)) == pytest.approx(a, rel=1e-12)
    k = np.pi / SMALL.L_z
    z = grid.mesh()[-1]
    mode = np.stack([grid.forward(np.sin(k * z) + 0 * grid.mesh()[0])] * len(t))
    expected = sum(0.1 ** (j / 4) * k**j for j in range(5))
    assert weighted_norm(Slab(SMALL, t, mode)) == pytest.approx(expected, rel=1e-12)
    with pytest.raises(ValueError):
        weighted_norm(Slab(SMALL, t[:1], mode[:1]))


def test_duhamel_map_requires_slab_from_zero():
    slab = zero(SMALL)
    shifted = Slab(SMALL, slab.times + 1.0, slab.coeffs)
    with pytest.raises(ValueError):
        duhamel_map(shifted, RealField(SMALL, np.zeros(SMALL.shape)))


def test_picard_iterations_and_geometric_increments():
    sol = local_solve(picard_field(CALIBRATION_GRID), T0=0.1)
    assert sol.iterations <= PICARD_MAX_ITER
    inc = np.array(sol.increments)
    assert np.all(inc[1:] <= 0.5 * inc[:-1])
    assert inc[-1] <= 1e-10


def test_non_contraction_detected():
    with pytest.raises(ContractionError, match="reduce T0"):
        local_solve(picard_field(CALIBRATION_GRID), T0=0.1, nonlinearity=lambda f: -100.0 * f)


def test_iteration_cap():
    with pytest.raises(ContractionError, match="no convergence"):
        local_solve(picard_field(SMALL), T0=0.1, max_iter=2)
