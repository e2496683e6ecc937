"""Random smooth fields for initial data and property tests."""
from __future__ import annotations

import numpy as np

from .grid import GridSpec, RealField, get_grid


def band_limited(spec: GridSpec, rng: np.random.Generator, k_transverse: int = 3,
                 width: float = 2.0, center: float = 0.0, modes_z: int = 6) -> np.ndarray:
    """Sum of transverse Fourier modes times Hermite-Gaussian z-profiles.

    The result is smooth, localized around ``center`` on the scale ``width``
    and carries no Nyquist content. Normalized to unit sup norm. The envelope
    must have decayed to roundoff at the periodic boundary.
    """
    if spec.L_z < 10 * width + abs(center):
        raise ValueError(f"width {width} too large for L_z = {spec.L_z}; need L_z >= 10 width")
    grid = get_grid(spec)
    coords = grid.mesh()
    zeta = (coords[-1] - center) / width
    envelope = np.exp(-0.5 * zeta**2)
    total = np.zeros(spec.shape)
    hermite = np.polynomial.hermite_e.hermeval
    for _ in range(4):
        phase = np.zeros(spec.shape[:-1] + (1,))
        for x in coords[:-1]:
            m = rng.integers(-k_transverse, k_transverse + 1)
            phase = phase + 2 * np.pi * m * x
        phase = phase + rng.uniform(0, 2 * np.pi)
        poly = hermite(zeta, rng.normal(size=modes_z) / np.arange(1, modes_z + 1))
        total += rng.normal() * np.cos(phase) * poly * envelope
    peak = np.abs(total).max()
    return total / peak if peak > 0 else total


def random_state_field(spec: GridSpec, seed: int, amplitude: float, **kw) -> RealField:
    rng = np.random.default_rng(seed)
    return RealField(spec, amplitude * band_limited(spec, rng, **kw))
