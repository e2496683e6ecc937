"""Power-law fits, inequality monitors and the saturated ODE system."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
from scipy.integrate import solve_ivp

from .functionals import (Diagnostics, alg_c_denominator, alg_e_denominator, gn_denominator,
                          growth_functional)

RHS_FLOOR = 1e-14
SHIFT_FLOOR = 1e-14


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class BalanceRecord:
    """Energy balance ``|dE + int D dt| <= tol (E(t1) + dt)`` on one recorded interval."""

    t1: float
    t2: float
    delta_energy: float
    integral_d: float
    dt_max: float
    energy_start: float
    tol: float = 1e-3

    @property
    def residual(self) -> float:
        return abs(self.delta_energy + self.integral_d)

    @property
    def bound(self) -> float:
        return self.tol * (self.energy_start + self.dt_max)

    @property
    def ok(self) -> bool:
        return self.residual <= self.bound


@dataclass
class Trajectory:
    records: list[Diagnostics] = field(default_factory=list)
    config_hash: str = ""
    balance: list[BalanceRecord] = field(default_factory=list)
    mass_drift: float = 0.0
    final_state: Any = None
    last_checkpoint: Any = None
    has_f0: bool = True  # False for CSVs without the f0 norm columns

    def append(self, rec: Diagnostics) -> None:
        if self.records and not rec.t > self.records[-1].t:
            raise ValueError(f"times must increase strictly: {rec.t} after {self.records[-1].t}")
        self.records.append(rec)

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        if name == "fc_h1":
            return np.array([r.fc_h1 for r in self.records])
        if name == "f0_h1":
            return np.array([r.f0_h1 for r in self.records])
        if name == "shift_sq":
            return np.array([r.shift**2 for r in self.records])
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def t(self) -> np.ndarray:
        return self.column("t")


# power-law fitting ------------------------------------------------------------

@dataclass(frozen=True)
class PowerLawFit:
    slope: float
    prefactor: float
    residual: float
    window: tuple[float, float]
    n_points: int


def fit_power_law(t, y, window: tuple[float, float], min_points: int = 10,
                  floor: float | None = None) -> PowerLawFit:
    """Least squares of ``log y`` on ``log t`` over ``window``.

    With ``floor`` set, points with ``y <= floor`` are dropped instead of
    rejected.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    t1, t2 = window
    sel = (t >= t1) & (t <= t2)
    if floor is not None:
        sel &= y > floor
    elif np.any(y[sel] <= 0):
        raise FitError("non-positive values inside the fit window")
    if sel.sum() < min_points:
        raise FitError(f"only {sel.sum()} points in window [{t1}, {t2}]; need {min_points}")
    lt, ly = np.log(t[sel]), np.log(y[sel])
    slope, intercept = np.polyfit(lt, ly, 1)
    resid = float(np.max(np.abs(ly - (slope * lt + intercept))))
    return PowerLawFit(float(slope), float(np.exp(intercept)), resid, (t1, t2), int(sel.sum()))


# expected exponents and tolerances of the two-stage relaxation
EXPECTED_SLOPES = {
    "fc_h1": (-0.50, 0.10),
    "f0_h1": (-0.25, 0.10),
    "energy_gap": (-1.00, 0.20),
    "shift_sq": (-0.50, 0.15),
    "dissipation": (-2.00, 0.30),
}


@dataclass
class RateReport:
    fits: dict[str, PowerLawFit]
    window: tuple[float, float]
    G0: float

    def passed(self, expected=EXPECTED_SLOPES) -> dict[str, bool]:
        return {k: abs(self.fits[k].slope - s) <= tol for k, (s, tol) in expected.items()
                if k in self.fits}

    def to_dict(self, expected=EXPECTED_SLOPES) -> dict:
        ok = self.passed(expected)
        return {
            "window": list(self.window),
            "G0": self.G0,
            "fits": {
                k: {**asdict(f), "expected": expected.get(k, (None, None))[0],
                    "tolerance": expected.get(k, (None, None))[1], "pass": ok.get(k)}
                for k, f in self.fits.items()
            },
        }


def check_window(window: tuple[float, float]) -> None:
    t1, t2 = window
    if not 0 < t1 < t2:
        raise FitError(f"invalid window [{t1}, {t2}]")
    if t2 < 10 * t1 * (1 - 1e-12):
        raise FitError(f"window [{t1}, {t2}] spans less than one decade")


def rate_report(traj: Trajectory, window: tuple[float, float],
                quantities=tuple(EXPECTED_SLOPES)) -> RateReport:
    check_window(window)
    t = traj.t
    fits = {}
    for name in quantities:
        y = traj.column(name)
        floor = SHIFT_FLOOR if name == "shift_sq" else None
        fits[name] = fit_power_law(t, y, window, floor=floor)
    first = traj.records[0]
    return RateReport(fits, tuple(window), growth_functional(first.hminus1_sq, first.energy_gap))


# inequality monitors -----------------------------------------------------------

@dataclass(frozen=True)
class MonitorResult:
    max_ratio: float
    skipped: int
    evaluated: int


def _max_ratio(num, den) -> MonitorResult:
    num, den = np.asarray(num, float), np.asarray(den, float)
    ok = den >= RHS_FLOOR
    ratios = num[ok] / den[ok]
    return MonitorResult(float(ratios.max()) if ratios.size else 0.0,
                         int((~ok).sum()), int(ok.sum()))


def monitor_inequalities(traj: Trajectory, d: int = 2) -> dict[str, MonitorResult]:
    """Max over the trajectory of LHS / RHS for each monitored inequality.

    ``alg_E``: E <= (H D)^(1/2) + (|c|+1)^2 D; ``alg_c``: c^2 <= (H E)^(1/2) + (|c|+1) E;
    ``gn``: ||f_c||_inf <= E^(1/2 - d'/12) D^(d'/12); ``H_G0``: H <= G0.
    Instants whose RHS is below ``RHS_FLOOR`` are skipped and counted.
    """
    E = traj.column("energy_gap")
    D = traj.column("dissipation")
    H = traj.column("hminus1_sq")
    c = traj.column("shift")
    sup = traj.column("f_sup")
    G0 = growth_functional(H[0], E[0])
    return {
        "alg_E": _max_ratio(np.maximum(E, 0), [alg_e_denominator(*a) for a in zip(c, D, H)]),
        "alg_c": _max_ratio(c**2, [alg_c_denominator(*a) for a in zip(c, E, H)]),
        "gn": _max_ratio(sup, [gn_denominator(e, x, d) for e, x in zip(E, D)]),
        "H_G0": _max_ratio(H, np.full_like(H, G0)),
    }


# saturated ODE system ----------------------------------------------------------

VARIANTS = ("max-H", "max-D")


@dataclass(frozen=True)
class OdeState:
    t: float
    E: float
    H: float
    D: float
    c_sq: float
    c_star: float
    d_prime: int
    variant: str


def closure_dissipation(E, H, c_star):
    """Positive root of ``c*^2 D + (H D)^(1/2) = E`` in a cancellation-free form."""
    disc = H + 4.0 * c_star**2 * E
    if np.any(disc < 0):
        raise ArithmeticError("negative discriminant in the algebraic closure")
    root = 2.0 * E / (np.sqrt(H) + np.sqrt(disc))
    return root**2


def closure_shift(E, H, c_star):
    return np.sqrt(H * E) + c_star * E


def ode_G0(E0: float, H0: float, c_star: float) -> float:
    return H0 + c_star**2 * (1.0 + E0**2) * E0


def _h_rate(E, D, c_sq, c_star, dp):
    return np.sqrt(c_star) * (np.sqrt(c_sq * D) + E ** (1.5 - dp / 12) * D ** (dp / 12))


def ode_integrate(E0: float, H0: float, c_star: float, d_prime: int, variant: str,
                  t_end: float = 1e4, rtol: float = 1e-8, n_eval: int = 2001) -> list[OdeState]:
    """Integrate the saturated system and sample it on a log-spaced time grid.

    ``max-D`` evolves ``D`` by its own saturated law and stops when ``E``
    reaches zero (the terminal event), so it may end before ``t_end``.
    """
    if not (E0 > 0 and H0 > 0):
        raise ValueError("E0 and H0 must be positive")
    if c_star < 1:
        raise ValueError(f"c_star must be >= 1, got {c_star}")
    if d_prime not in (3, 4, 5):
        raise ValueError(f"d_prime must be 3, 4 or 5, got {d_prime}")
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    dp = d_prime
    atol = 1e-14 * max(E0, H0, 1.0)

    if variant == "max-H":
        def rhs(t, y):
            E, H = max(y[0], 0.0), y[1]
            D = closure_dissipation(E, H, c_star)
            return [-D, _h_rate(E, D, closure_shift(E, H, c_star), c_star, dp)]

        y0 = [E0, H0]
        events = None
    else:
        def rhs(t, y):
            E, H, D = max(y[0], 0.0), y[1], max(y[2], 0.0)
            dD = D**1.5 + E ** (1 - dp / 6) * D ** (1 + dp / 6)
            return [-D, _h_rate(E, D, closure_shift(E, H, c_star), c_star, dp), dD]

        def exhausted(t, y):
            return y[0] - 1e-9 * E0

        exhausted.terminal = True
        exhausted.direction = -1
        y0 = [E0, H0, closure_dissipation(E0, H0, c_star)]
        events = [exhausted]

    sol = solve_ivp(rhs, (0.0, t_end), y0, method="DOP853", rtol=rtol, atol=atol,
                    dense_output=True, events=events)
    if sol.status == -1:
        raise RuntimeError(f"ODE integration failed: {sol.message}")
    t_stop = sol.t[-1]
    grid = np.concatenate([[0.0], np.geomspace(1e-3, t_end, n_eval)])
    grid = grid[grid <= t_stop]
    if grid[-1] < t_stop:
        grid = np.append(grid, t_stop)
    Y = sol.sol(grid)
    Y[:, 0] = y0  # exact initial values
    out = []
    for k, t in enumerate(grid):
        E, H = max(Y[0, k], 0.0), Y[1, k]
        D = closure_dissipation(E, H, c_star) if variant == "max-H" else Y[2, k]
        out.append(OdeState(float(t), float(E), float(H), float(D),
                            float(closure_shift(E, H, c_star)), c_star, dp, variant))
    return out


ODE_BOUNDS = ("E_le_E0", "E_t", "c2_static", "c2_t", "H_G0", "D_t2")


def check_ode_bounds(states: list[OdeState], G0: float | None = None) -> dict[str, float]:
    """Max over time of each conclusion's LHS / RHS with unit constants."""
    s0 = states[0]
    E0, H0, cs, dp = s0.E, s0.H, s0.c_star, s0.d_prime
    if G0 is None:
        G0 = ode_G0(E0, H0, cs)
    t = np.array([s.t for s in states])
    E = np.array([s.E for s in states])
    H = np.array([s.H for s in states])
    D = np.array([s.D for s in states])
    c2 = np.array([s.c_sq for s in states])
    pos = t > 0
    tp = t[pos]
    d_rhs = (G0 + G0**2 + E0 * G0 ** (6 / (6 - dp)) * tp ** (-(2 * dp - 6) / (6 - dp))) / tp**2
    return {
        "E_le_E0": float(np.max(E / E0)),
        "E_t": float(np.max(E[pos] * tp / G0)),
        "c2_static": float(np.max(c2 / np.sqrt(G0 * E0))),
        "c2_t": float(np.max(c2[pos] * np.sqrt(tp) / G0)),
        "H_G0": float(np.max(H / G0)),
        "D_t2": float(np.max(D[pos] / d_rhs)),
    }
