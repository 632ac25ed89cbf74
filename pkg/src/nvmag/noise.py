"""Quasi-static environmental noise, deterministic drifts and echo decay.

The dephasing model is inhomogeneous: one Gaussian draw per channel per
shot, constant within the shot.  Echo-protected decoherence is not simulated
microscopically; it enters through the stretched-exponential envelope
``exp(-(tau/t2)^p)`` with fitted ``(t2, p)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .spin_model import EnvironmentFields, GroundStateParams, pair_frequency_batch
from .streams import as_rng

# below this Monte-Carlo frequency spread (Hz) the transition is treated as
# unshifted; eigensolver jitter on GHz-scale matrices sits near 1e-6 Hz
SIGMA_F_FLOOR = 1e-4


@dataclass(frozen=True)
class NoiseModel:
    """Per-channel quasi-static fluctuation widths plus the echo envelope.

    sigma_bz      axial magnetic noise, nT
    sigma_bperp   total transverse magnetic noise, nT (split evenly over x, y)
    sigma_ez      axial electric/strain noise, V/m
    sigma_dg      zero-field-splitting noise (temperature proxy), Hz
    t2, p_exponent   echo coherence time (s) and decay shape
    """

    sigma_bz: float = 0.0
    sigma_bperp: float = 0.0
    sigma_ez: float = 0.0
    sigma_dg: float = 0.0
    t2: float = 2.36e-3
    p_exponent: float = 2.0

    def __post_init__(self):
        for name in ("sigma_bz", "sigma_bperp", "sigma_ez", "sigma_dg"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise InvalidInputError(f"{name} must be finite and non-negative")
        if not (math.isfinite(self.t2) and self.t2 > 0):
            raise InvalidInputError("t2 must be positive")
        if not (math.isfinite(self.p_exponent) and self.p_exponent > 0):
            raise InvalidInputError("p_exponent must be positive")

    @property
    def quiet(self) -> bool:
        return (self.sigma_bz == 0 and self.sigma_bperp == 0
                and self.sigma_ez == 0 and self.sigma_dg == 0)


def sample_offsets(model: NoiseModel, rng, n: int) -> dict:
    """Per-channel Gaussian offsets for ``n`` shots (vectorized draws)."""
    rng = as_rng(rng)
    offsets = {}
    if model.sigma_bz > 0:
        offsets["b_z"] = rng.normal(0.0, model.sigma_bz, n)
    if model.sigma_bperp > 0:
        s = model.sigma_bperp / np.sqrt(2.0)
        offsets["b_x"] = rng.normal(0.0, s, n)
        offsets["b_y"] = rng.normal(0.0, s, n)
    if model.sigma_ez > 0:
        offsets["e_z"] = rng.normal(0.0, model.sigma_ez, n)
    if model.sigma_dg > 0:
        offsets["dg"] = rng.normal(0.0, model.sigma_dg, n)
    return offsets


def sample_environment(model: NoiseModel, base: EnvironmentFields, rng) -> EnvironmentFields:
    """One quasi-static environment draw around ``base``."""
    off = sample_offsets(model, rng, 1)
    get = lambda k: float(off[k][0]) if k in off else 0.0
    return EnvironmentFields(
        b_x=base.b_x + get("b_x"),
        b_y=base.b_y + get("b_y"),
        b_z=base.b_z + get("b_z"),
        e_x=base.e_x,
        e_y=base.e_y,
        e_z=base.e_z + get("e_z"),
        dg_offset=base.dg_offset + get("dg"),
    )


def coherence_envelope(tau: float, t2: float, p: float) -> float:
    """Echo fringe-contrast factor ``exp(-(tau/t2)^p)``."""
    if tau < 0:
        raise InvalidInputError("tau must be non-negative")
    return float(np.exp(-((tau / t2) ** p)))


def t2star_of_sigma(model: NoiseModel, params: GroundStateParams,
                    base_env: EnvironmentFields, pair, draws: int = 10000,
                    rng=20240) -> float:
    """Predicted free-induction decay time of a transition under the model.

    Monte-Carlo estimates the standard deviation ``sigma_f`` of the
    noise-shifted transition frequency and returns ``sqrt(2)/(2 pi sigma_f)``,
    the decay time of the Gaussian envelope ``exp(-(t/T2*)^2)`` produced by
    quasi-static Gaussian detuning noise.  Returns ``inf`` when the
    transition is insensitive to every active channel.
    """
    if model.quiet:
        return math.inf
    offsets = sample_offsets(model, rng, draws)
    freqs = pair_frequency_batch(params, base_env, offsets, pair)
    sigma_f = float(np.std(freqs))
    if sigma_f <= SIGMA_F_FLOOR:
        return math.inf
    return float(np.sqrt(2.0) / (2.0 * np.pi * sigma_f))


@dataclass(frozen=True)
class DriftTrace:
    """Deterministic slow drift on one channel, piecewise-linear in time.

    ``channel`` is ``"bz"`` (nT) or ``"dg"`` (Hz).  Outside the listed
    timestamps the first/last offset is held.
    """

    channel: str
    times: tuple
    offsets: tuple

    def __post_init__(self):
        if self.channel not in ("bz", "dg"):
            raise InvalidInputError("channel must be 'bz' or 'dg'")
        times = tuple(float(t) for t in self.times)
        offsets = tuple(float(v) for v in self.offsets)
        if len(times) != len(offsets) or len(times) < 1:
            raise InvalidInputError("times and offsets must be equal-length and non-empty")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidInputError("timestamps must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "offsets", offsets)

    def offset_at(self, t):
        return np.interp(t, self.times, self.offsets)

    @classmethod
    def from_csv(cls, path, channel: str) -> "DriftTrace":
        times, offsets = [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    t, v = float(row[0]), float(row[1])
                except (ValueError, IndexError):
                    if times:
                        raise InvalidInputError(f"malformed drift row: {row!r}")
                    continue  # header line
                times.append(t)
                offsets.append(v)
        return cls(channel=channel, times=tuple(times), offsets=tuple(offsets))


def apply_drifts(base: EnvironmentFields, traces, t: float) -> EnvironmentFields:
    """Environment at campaign time ``t`` with all drift traces applied."""
    bz = base.b_z
    dg = base.dg_offset
    for trace in traces:
        off = float(trace.offset_at(t))
        if trace.channel == "bz":
            bz += off
        else:
            dg += off
    return EnvironmentFields(b_x=base.b_x, b_y=base.b_y, b_z=bz,
                             e_x=base.e_x, e_y=base.e_y, e_z=base.e_z,
                             dg_offset=dg)
