"""Semi-implicit spectral time stepping of the perturbation ``f = u - v_0``.

The unknown obeys ``f_t = -Delta^2 f + Delta (G'(v_0 + f) - G'(v_0))`` on the
periodic strip. Each step is first-order IMEX with a linear stabilization
``S Delta f`` moved to the implicit side.
"""
from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .functionals import Diagnostics, diagnostics
from .grid import GridSpec, RealField, SpectralField, get_grid
from .kink import KinkProfile, KinkState, ProjectionError, project_shift
from .rates import BalanceRecord, Trajectory
from .sampling import band_limited

log = logging.getLogger(__name__)

ABORT_SUP = 0.2
MAGIC = b"KFLW"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sIIIIdd")


class ConfigError(ValueError):
    pass


class SolverAbort(RuntimeError):
    """Raised when ``||f_c||_inf`` leaves the perturbative regime."""

    def __init__(self, message: str, t: float, checkpoint: Path | None = None):
        self.t = t
        self.checkpoint = checkpoint
        where = f"; state dumped to {checkpoint}" if checkpoint else ""
        super().__init__(f"{message} at t = {t:.6g}{where}")


SHAPES = ("none", "asymmetric", "odd", "random")


@dataclass(frozen=True)
class InitSpec:
    """``u_0 = v_{c0} + eps p + mu q`` with ``mu`` fixing the mass."""

    c0: float = 0.5
    eps: float = 0.05
    shape: str = "asymmetric"
    seed: int = 0
    # mass-correction profile: windowed Lorentzian of width `ell`
    ell: float = 7.0
    tail: float = 2.0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ConfigError(f"unknown perturbation shape {self.shape!r}; choose from {SHAPES}")
        if not 0.0 <= self.eps <= 0.1:
            raise ConfigError(f"eps must lie in [0, 0.1], got {self.eps}")
        if self.ell <= 0 or self.tail <= 1:
            raise ConfigError("mass profile needs ell > 0 and tail > 1")


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec = field(default_factory=GridSpec)
    t_end: float = 500.0
    dt: float = 0.02
    stabilization: float = 2.0
    init: InitSpec = field(default_factory=InitSpec)
    record_stride: int = 48  # records per decade of t
    checkpoint_stride: int = 0  # records between checkpoints; 0 disables
    t_first_record: float = 1e-2
    dt_min: float = 1e-6
    dt_ramp: float = 1e-3  # early steps use dt = dt_ramp * t
    balance_tol: float = 1e-3

    def __post_init__(self):
        if not self.dt > 0 or not self.dt_min > 0 or self.dt_min > self.dt:
            raise ConfigError("need 0 < dt_min <= dt")
        if self.stabilization < 2:
            raise ConfigError(f"stabilization must be >= 2, got {self.stabilization}")
        if not self.t_end > 0:
            raise ConfigError("t_end must be positive")
        if self.record_stride < 1 or self.checkpoint_stride < 0:
            raise ConfigError("record_stride >= 1 and checkpoint_stride >= 0 required")
        if not 0 < self.t_first_record <= self.t_end:
            raise ConfigError("t_first_record must lie in (0, t_end]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        grid = GridSpec(**data.pop("grid", {}))
        init = InitSpec(**data.pop("init", {}))
        return cls(grid=grid, init=init, **data)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True, eq=False)
class EvolutionState:
    t: float
    f: SpectralField
    last_c: float = 0.0

    @property
    def spec(self) -> GridSpec:
        return self.f.spec

    def real(self) -> RealField:
        return RealField(self.spec, get_grid(self.spec).inverse(self.f.coeffs))

    def kink_state(self) -> KinkState:
        return KinkState(self.real(), 0.0)

    def mass(self) -> float:
        return self.spec.volume * float(self.f.coeffs.flat[0].real)


# initial data -----------------------------------------------------------------

def mass_profile(spec: GridSpec, init: InitSpec) -> np.ndarray:
    """Unit-mass profile ``q(z)``: a Lorentzian-type tail cut off at ``0.75 L_z``."""
    z = get_grid(spec).z
    cut = 0.75 * spec.L_z
    q = (1.0 + (z / init.ell) ** 2) ** (-init.tail / 2)
    q *= 0.5 * (np.tanh((z + cut) / 3.0) - np.tanh((z - cut) / 3.0))
    return q / (q.sum() * spec.dz)


def perturbation_shape(spec: GridSpec, init: InitSpec) -> np.ndarray:
    """Perturbation ``p`` with ``||p||_inf <= 1``."""
    grid = get_grid(spec)
    coords = grid.mesh()
    z = coords[-1]
    x1 = coords[0]
    if init.shape == "none":
        return np.zeros(spec.shape)
    if init.shape == "asymmetric":
        # transverse ripple plus a mean-zero, z-asymmetric profile
        ripple = np.cos(2 * np.pi * x1) * np.exp(-((z - 1.0) ** 2) / 4.0)
        bump = (z - 2.0) * np.exp(-((z - 2.0) ** 2) / 8.0) / (2 * np.exp(-0.5))
        p = 0.5 * ripple + 0.5 * bump
    elif init.shape == "odd":
        # odd in z: the reflection z -> -z, u -> -u is preserved by the flow
        odd = z * np.exp(-(z**2) / 8.0) / (2 * np.exp(-0.5))
        p = odd * (0.75 + 0.25 * np.cos(2 * np.pi * x1))
    else:
        rng = np.random.default_rng(init.seed)
        p = band_limited(spec, rng, center=rng.uniform(-2, 2))
    return np.broadcast_to(p, spec.shape).copy()


def mass_correction(spec: GridSpec, init: InitSpec, p: np.ndarray | None = None) -> float:
    """``mu`` with ``int (v_{c0} - v_0 + eps p + mu q) = 0`` (``q`` has unit mass)."""
    grid = get_grid(spec)
    if p is None:
        p = perturbation_shape(spec, init)
    z = grid.z
    kink_mass = (KinkProfile(init.c0).v(z) - KinkProfile(0.0).v(z)).sum() * grid.spec.dz
    return -(kink_mass + init.eps * grid.integrate(p))


def build_initial(config: RunConfig) -> EvolutionState:
    spec, init = config.grid, config.init
    grid = get_grid(spec)
    p = perturbation_shape(spec, init)
    q = mass_profile(spec, init)
    mu = mass_correction(spec, init, p)
    amplitude = abs(mu) * q.max()
    if amplitude > init.eps + 1e-14:
        raise ConfigError(
            f"mass correction amplitude {amplitude:.3g} exceeds eps = {init.eps}; "
            "increase eps or reduce |c0|"
        )
    z = grid.z
    f = KinkProfile(init.c0).v(z) - KinkProfile(0.0).v(z) + init.eps * p + mu * q
    coeffs = grid.forward(np.broadcast_to(f, spec.shape))
    coeffs.flat[0] = 0.0
    return EvolutionState(0.0, SpectralField(spec, coeffs), last_c=init.c0)


# stepping ---------------------------------------------------------------------

class Stepper:
    """IMEX update ``(1 + dt (k^4 + S k^2)) f' = f - dt k^2 (N - S f)``.

    ``background`` is the fixed profile ``v_ref(z)``; tests may replace it.
    """

    def __init__(self, spec: GridSpec, stabilization: float = 2.0, background=None):
        self.spec = spec
        self.grid = g = get_grid(spec)
        self.S = stabilization
        self.v = KinkProfile(0.0).v(g.z) if background is None else np.asarray(background)
        # G'(v+f) - G'(v) = f (a + f (b + f)),  remainder = f^2 (a/2 + f (v + f/4))
        self._a = 3.0 * self.v**2 - 1.0
        self._b = 3.0 * self.v
        self._mask = g.dealias_mask.astype(float) if spec.dealias else None
        self._wk2 = g.volume * g.weight * g.k2
        self._denom = {}

    def nonlinear(self, values: np.ndarray) -> np.ndarray:
        n_hat = self.grid.forward(values * (self._a + values * (self._b + values)))
        if self._mask is not None:
            n_hat *= self._mask
        return n_hat

    def _grad_sq(self, coeffs: np.ndarray) -> float:
        return float(np.vdot(coeffs, self._wk2 * coeffs).real)

    def evaluate(self, coeffs: np.ndarray):
        """Real-space field, ``N_hat``, energy gap and dissipation at one level."""
        g = self.grid
        values = g.inverse(coeffs)
        n_hat = self.nonlinear(values)
        sq = values * values
        remainder = np.sum(sq * (0.5 * self._a + values * (self.v + 0.25 * values)))
        energy = 0.5 * self._grad_sq(coeffs) + float(remainder) * g.cell
        diss = self._grad_sq(n_hat + g.k2 * coeffs)
        return values, n_hat, energy, diss

    def advance(self, coeffs: np.ndarray, n_hat: np.ndarray, dt: float) -> np.ndarray:
        g = self.grid
        denom = self._denom.get(dt)
        if denom is None:
            denom = 1.0 / (1.0 + dt * (g.k4 + self.S * g.k2))
            if len(self._denom) < 8:
                self._denom[dt] = denom
        return (coeffs - dt * g.k2 * (n_hat - self.S * coeffs)) * denom


def _check_sup(state: EvolutionState, values: np.ndarray, threshold: float) -> float:
    """Warm-started shift; raises when ``||u - v_c||_inf`` exceeds ``threshold``."""
    ks = KinkState(RealField(state.spec, values), 0.0)
    try:
        c = project_shift(ks, state.last_c, half_width=1.0)
    except ProjectionError:
        c = project_shift(ks, state.last_c)
    sup = float(np.abs(ks.perturbation(c).values).max())
    if sup > threshold:
        raise SolverAbort(f"||f_c||_inf = {sup:.3g} exceeds {threshold}", state.t)
    return c


def step(state: EvolutionState, dt: float, stabilization: float = 2.0,
         abort_sup: float = ABORT_SUP) -> EvolutionState:
    """One IMEX step; the zero mode is untouched because ``k^2 = 0`` there."""
    stepper = Stepper(state.spec, stabilization)
    _, n_hat, _, _ = stepper.evaluate(state.f.coeffs)
    coeffs = stepper.advance(state.f.coeffs, n_hat, dt)
    values = stepper.grid.inverse(coeffs)
    if not np.all(np.isfinite(values)):
        raise SolverAbort("non-finite field", state.t + dt)
    new = EvolutionState(state.t + dt, SpectralField(state.spec, coeffs), state.last_c)
    c = _check_sup(new, values, abort_sup)
    return replace(new, last_c=c)


def record_times(config: RunConfig) -> np.ndarray:
    """Geometric schedule ``t_k = t_first * 10^(k / stride)`` ending at ``t_end``."""
    t1, t2 = config.t_first_record, config.t_end
    n = int(np.floor(config.record_stride * np.log10(t2 / t1) + 1e-9))
    times = t1 * 10.0 ** (np.arange(n + 1) / config.record_stride)
    times = times[times < t2 * (1 - 1e-12)]
    return np.append(times, t2)


def run(config: RunConfig, checkpoint_dir: Path | str | None = None,
        initial: EvolutionState | None = None, on_record=None) -> Trajectory:
    """Integrate to ``t_end`` and return the recorded diagnostics.

    The step size ramps as ``dt_ramp * t`` from ``dt_min`` up to ``dt`` so
    the fast transverse transient is resolved, lands exactly on record times
    and is halved whenever the discrete energy increases. ``int D dt`` is
    accumulated by the trapezoid rule and checked against the energy change
    on every recorded interval.
    """
    state = initial if initial is not None else build_initial(config)
    stepper = Stepper(config.grid, config.stabilization)
    ckdir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckdir is not None:
        ckdir.mkdir(parents=True, exist_ok=True)

    def dump(tag: str) -> Path | None:
        if ckdir is None:
            return None
        path = ckdir / f"checkpoint-{tag}.kflw"
        write_checkpoint(path, state)
        return path

    def record(values) -> Diagnostics:
        ks = KinkState(RealField(config.grid, values), 0.0)
        rec = diagnostics(ks, state.t, c_init=state.last_c)
        if on_record is not None:
            on_record(rec)
        return rec

    traj = Trajectory(config_hash=config.digest())
    values, n_hat, energy, diss = stepper.evaluate(state.f.coeffs)
    first = record(values)
    traj.append(first)
    state = replace(state, last_c=first.shift)
    mass0 = state.f.coeffs.flat[0]

    scale = 1.0  # step-halving factor after an energy increase
    calm = 0
    last_path = None
    for k, t_target in enumerate(t for t in record_times(config) if t > state.t):
        e_start, t_start = energy, state.t
        integral, dt_max = 0.0, 0.0
        while state.t < t_target:
            base = min(config.dt, max(config.dt_min, config.dt_ramp * state.t))
            dt = min(base * scale, t_target - state.t)
            if t_target - (state.t + dt) < 1e-3 * dt:
                dt = t_target - state.t
            coeffs = stepper.advance(state.f.coeffs, n_hat, dt)
            new_values, new_n, new_e, new_d = stepper.evaluate(coeffs)
            if not np.isfinite(new_e):
                raise SolverAbort("non-finite energy", state.t, dump("abort"))
            if new_e > energy + 1e-12 * abs(energy) and scale > 1e-6:
                scale *= 0.5
                calm = 0
                log.debug("energy increase at t=%.4g; halving dt to %.3g", state.t, dt / 2)
                continue
            calm += 1
            if scale < 1.0 and calm >= 50:
                scale, calm = min(1.0, 2 * scale), 0
            integral += 0.5 * dt * (diss + new_d)
            dt_max = max(dt_max, dt)
            state = EvolutionState(state.t + dt, SpectralField(config.grid, coeffs), state.last_c)
            try:
                c = _check_sup(state, new_values, ABORT_SUP)
            except SolverAbort as exc:
                raise SolverAbort(str(exc).split(" at t")[0], state.t, dump("abort")) from None
            state = replace(state, last_c=c)
            values, n_hat, energy, diss = new_values, new_n, new_e, new_d
        state = replace(state, t=float(t_target))
        rec = record(values)
        state = replace(state, last_c=rec.shift)
        traj.append(rec)
        traj.balance.append(BalanceRecord(
            t_start, state.t, energy - e_start, integral, dt_max, e_start, config.balance_tol
        ))
        if config.checkpoint_stride and (k + 1) % config.checkpoint_stride == 0:
            last_path = dump(f"{k + 1:05d}")
    drift = abs(state.f.coeffs.flat[0] - mass0) * config.grid.volume
    traj.mass_drift = float(drift)
    traj.final_state = state
    traj.last_checkpoint = last_path
    return traj


# checkpoints ------------------------------------------------------------------

def write_checkpoint(path: Path | str, state: EvolutionState) -> None:
    """Little-endian header followed by ``f`` samples with ``z`` as the slowest index."""
    spec = state.spec
    values = get_grid(spec).inverse(state.f.coeffs)
    header = _HEADER.pack(MAGIC, CHECKPOINT_VERSION, spec.d, spec.n_transverse, spec.n_z,
                          spec.L_z, state.t)
    body = np.ascontiguousarray(np.moveaxis(values, -1, 0), dtype="<f8").tobytes()
    Path(path).write_bytes(header + body)


def read_checkpoint(path: Path | str, dealias: bool = True) -> EvolutionState:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated checkpoint header")
    magic, version, d, nt, nz, L_z, t = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    spec = GridSpec(d=d, n_transverse=nt, L_z=L_z, n_z=nz, dealias=dealias)
    body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if body.size != spec.n_points:
        raise ValueError(f"{path}: expected {spec.n_points} samples, found {body.size}")
    values = np.moveaxis(body.reshape((nz,) + spec.shape[:-1]), 0, -1)
    field_ = RealField(spec, values)
    coeffs = get_grid(spec).forward(field_.values)
    return EvolutionState(float(t), SpectralField(spec, coeffs))
