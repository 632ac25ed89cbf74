"""Spin-to-photon conversion with Poisson shot noise.

|0> is the bright state; |+1> and |-1> share one fluorescence contrast.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .streams import as_rng


@dataclass(frozen=True)
class ReadoutParams:
    bright_counts: float = 0.05      # mean photons per readout in |0>
    contrast_c0: float = 0.3         # normalized fluorescence contrast
    init_fidelity: float = 1.0       # probability of starting in |0>

    def __post_init__(self):
        if not (math.isfinite(self.bright_counts) and self.bright_counts > 0):
            raise InvalidInputError("bright_counts must be positive")
        if not (0.0 < self.contrast_c0 < 1.0):
            raise InvalidInputError("contrast_c0 must lie in (0, 1)")
        if not (0.0 < self.init_fidelity <= 1.0):
            raise InvalidInputError("init_fidelity must lie in (0, 1]")


def expected_counts(populations, params: ReadoutParams):
    """Mean photon number for given level populations (ground basis order).

    Affine in the bright population: ``bright * (p0 + (1 - p0)*(1 - c0))``.
    Imperfect initialization mixes in the all-bright baseline linearly.
    Accepts a single population triple or an (n, 3) stack.
    """
    pops = np.asarray(populations, dtype=float)
    p0 = pops[..., 0]
    ideal = params.bright_counts * (p0 + (1.0 - p0) * (1.0 - params.contrast_c0))
    if params.init_fidelity < 1.0:
        ideal = params.init_fidelity * ideal + (1.0 - params.init_fidelity) * params.bright_counts
    return ideal if ideal.ndim else float(ideal)


def sample_counts(mean, rng):
    """Poisson photon count(s) with the given mean(s)."""
    mean = np.asarray(mean, dtype=float)
    if np.any(mean < 0):
        raise InvalidInputError("mean counts must be non-negative")
    out = as_rng(rng).poisson(mean)
    return out if out.ndim else int(out)
