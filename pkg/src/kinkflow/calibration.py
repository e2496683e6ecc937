"""Frozen inequality constants and the procedure that measured them.

The analysis proves that constants exist but gives no values. Each constant
below was measured once by the routine of the same name in this module
(``python -m kinkflow.calibration`` reruns all of them except the monitor
constants, which need the default run) and then frozen with a margin:

* constants bounding a ratio from above: twice the measured maximum;
* constants bounding from below: half the measured minimum;
* two-sided band ``[1/K, K]``: ``K`` is twice the worst of ``max`` and ``1/min``;
* ODE thresholds: 1.25 times the measured maximum (the integration is
  deterministic, so the margin only covers integrator and platform noise),
  except ``E_le_E0`` which is exactly 1.

Sampled suites use :data:`CALIBRATION_GRID` and :data:`CALIBRATION_SEED`.
"""
from __future__ import annotations

import numpy as np

from .functionals import (energy_gap, dissipation, linearized_dissipation, linearized_gap,
                          hardy_ratio, orthogonalize)
from .grid import GridSpec, RealField, get_grid, norms
from .kink import KinkProfile, KinkState, project_shift, shift_comparison_monitor
from .sampling import band_limited

CALIBRATION_GRID = GridSpec(d=2, n_transverse=16, L_z=30.0, n_z=512)
CALIBRATION_SEED = 20240611

# Measured values are recorded next to each constant; margins follow the module docstring,
# rounded outward to two significant digits.

# linear suite over 100 fields: E_l/||f||^2 >= 1.742, D_l/||grad f||^2 >= 5.885, hardy <= 0.4110
LAMBDA = 0.87
MU_DISS = 2.9
C_HARDY = 0.83
# nonlinear equivalence over 100 states with ||f_c||_inf <= 0.1:
# energy ratio in [0.4032, 0.8639], dissipation ratio in [0.8053, 3.080]
K_EQUIV = 6.2
# 1000 states v_0 + w, ||w||_inf <= 0.1: max ||f_c||_inf / ||f_0||_inf = 1.185
K_SHIFT = 2.4
# ||f0||_inf = 1e-3, T0 = 0.1 on the calibration grid: 10 iterations
PICARD_MAX_ITER = 20
# default run (d = 2, 64 x 2048, L_z = 100, t <= 500):
# alg_E 0.4100, alg_c 0.8261, gn 0.4433, H/G0 0.9812
MONITOR_LIMITS = {"alg_E": 0.83, "alg_c": 1.7, "gn": 0.89, "H_G0": 2.0}
# ODE sweep maxima
#   max-H: E_t 8.959, c2_static 1.411, c2_t 9.648, H_G0 10.20, D_t2 6.096
#   max-D: E_t 0.2827, c2_static 1.411, c2_t 0.8226, H_G0 1.449, D_t2 1.080
ODE_THRESHOLDS = {
    "max-H": {"E_le_E0": 1.0, "E_t": 12.0, "c2_static": 1.8, "c2_t": 13.0, "H_G0": 13.0,
              "D_t2": 7.7},
    "max-D": {"E_le_E0": 1.0, "E_t": 0.36, "c2_static": 1.8, "c2_t": 1.1, "H_G0": 1.9,
              "D_t2": 1.4},
}


def random_field(spec: GridSpec, rng: np.random.Generator, amplitude: float = 1.0) -> RealField:
    """A smooth localized field with random width, center and transverse content."""
    values = band_limited(spec, rng, k_transverse=int(rng.integers(0, 4)),
                          width=float(rng.uniform(0.7, 2.5)), center=float(rng.uniform(-3, 3)))
    return RealField(spec, amplitude * values)


def measure_linear(n: int = 100, spec: GridSpec = CALIBRATION_GRID,
                   seed: int = CALIBRATION_SEED) -> dict[str, float]:
    """Extremes of the linear-suite ratios over ``n`` orthogonalized random fields."""
    rng = np.random.default_rng(seed)
    gap, diss, hardy = [], [], []
    for _ in range(n):
        c = float(rng.uniform(-1, 1))
        f = orthogonalize(random_field(spec, rng), c)
        nf = norms(f)
        gap.append(linearized_gap(f, c) / nf.l2**2)
        diss.append(linearized_dissipation(f, c) / nf.grad_l2**2)
        hardy.append(hardy_ratio(f, c))
    return {"gap_min": min(gap), "diss_min": min(diss), "hardy_max": max(hardy)}


def random_small_state(spec: GridSpec, rng: np.random.Generator, sup: float = 0.1):
    """``u = v_cbar + a w`` projected; returns ``(state, c, f_c)`` with ``||f_c||_inf <= sup``."""
    grid = get_grid(spec)
    v0 = KinkProfile(0.0).v(grid.z)
    while True:
        c_bar = float(rng.uniform(-1, 1))
        amp = sup * float(rng.uniform(0.02, 1.0))
        w = random_field(spec, rng, amp)
        state = KinkState(RealField(spec, KinkProfile(c_bar).v(grid.z) - v0 + w.values))
        c = project_shift(state, c_init=c_bar)
        f_c = state.perturbation(c)
        if np.abs(f_c.values).max() <= sup:
            return state, c, f_c


def equivalence_ratios(state: KinkState, f_c: RealField) -> tuple[float, float]:
    nf = norms(f_c)
    h1 = nf.l2**2 + nf.grad_l2**2
    higher = nf.grad_l2**2 + nf.hess_l2**2 + nf.third_l2**2
    return energy_gap(state) / h1, dissipation(state) / higher


def measure_equivalence(n: int = 100, spec: GridSpec = CALIBRATION_GRID,
                        seed: int = CALIBRATION_SEED + 1) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    e, d = [], []
    for _ in range(n):
        state, _, f_c = random_small_state(spec, rng)
        re, rd = equivalence_ratios(state, f_c)
        e.append(re)
        d.append(rd)
    return {"energy_min": min(e), "energy_max": max(e), "diss_min": min(d), "diss_max": max(d)}


def measure_shift_monitor(n: int = 1000, spec: GridSpec = CALIBRATION_GRID,
                          seed: int = CALIBRATION_SEED + 2) -> float:
    """Max of ``||f_c|| / ||f_0||`` over random states ``v_0 + w`` with ``||w||_inf <= 0.1``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        w = random_field(spec, rng, 0.1 * float(rng.uniform(0.02, 1.0)))
        state = KinkState(w)
        c = project_shift(state, c_init=0.0)
        worst = max(worst, shift_comparison_monitor(state, c, 0.0))
    return worst


def picard_field(spec: GridSpec, sup: float = 1e-3, seed: int = CALIBRATION_SEED + 3) -> RealField:
    """Mean-free smooth initial datum with the requested sup norm.

    Transverse modes would decay by ``exp(-(2 pi)^4 T0)`` before ``T0`` and
    test nothing, so the datum is a z-profile plus a small ``x_1`` ripple.
    """
    rng = np.random.default_rng(seed)
    w = band_limited(spec, rng, k_transverse=0, width=1.5)
    w = w + 0.1 * band_limited(spec, rng, k_transverse=1, width=1.5)
    z = get_grid(spec).mesh()[-1]
    q = np.exp(-(z**2) / 8) + 0 * w
    w = w - get_grid(spec).integrate(w) / get_grid(spec).integrate(q) * q
    return RealField(spec, sup * w / np.abs(w).max())


def measure_picard(spec: GridSpec = CALIBRATION_GRID, T0: float = 0.1) -> int:
    from .duhamel import local_solve

    return local_solve(picard_field(spec), T0=T0).iterations


def monitor_ratios(traj, d: int = 2) -> dict[str, float]:
    """Maxima of the monitored ratios along a trajectory (used on the default run)."""
    from .rates import monitor_inequalities

    return {k: r.max_ratio for k, r in monitor_inequalities(traj, d=d).items()}


def ode_sweep_points():
    """The 27 initial conditions times ``d'`` in {3, 4, 5} times both variants."""
    from .rates import VARIANTS

    for variant in VARIANTS:
        for dp in (3, 4, 5):
            for E0 in (0.1, 1.0, 10.0):
                for H0 in (0.1, 1.0, 10.0):
                    for cs in (1.0, 10.0, 100.0):
                        yield dict(E0=E0, H0=H0, c_star=cs, d_prime=dp, variant=variant)


def measure_ode(rtol: float = 1e-8) -> dict[str, dict[str, float]]:
    from .rates import ODE_BOUNDS, VARIANTS, check_ode_bounds, ode_integrate

    worst = {v: dict.fromkeys(ODE_BOUNDS, 0.0) for v in VARIANTS}
    for p in ode_sweep_points():
        ratios = check_ode_bounds(ode_integrate(**p, rtol=rtol))
        for k, r in ratios.items():
            worst[p["variant"]][k] = max(worst[p["variant"]][k], r)
    return worst


def main() -> None:
    print("linear", measure_linear())
    print("equivalence", measure_equivalence())
    print("shift monitor", measure_shift_monitor())
    print("picard iterations", measure_picard())
    print("ode", measure_ode())


if __name__ == "__main__":
    main()
