"""Measurement protocols built from propagations, noise draws and readouts.

Two execution tiers are supported through ``ModelContext.pulse_mode``:
``"ideal"`` replaces preparation/closing rotations by exact instantaneous
unitaries (used by formula-level tests), ``"propagated"`` plays the actual
pulse waveforms through the integrator.  Free evolution is always computed
analytically: the phase accumulated over a wait ``t`` is
``2*pi*(shift of the pair transition frequency)*t``, with the shift taken
from the labeled eigenvalues for the drawn environment.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidInputError
from .noise import NoiseModel, coherence_envelope, sample_environment, sample_offsets
from .propagator import (ConstantEnvelope, DriveSchedule, GaussianEnvelope,
                         mirror_schedule, propagate)
from .readout import ReadoutParams, expected_counts
from .spin_model import (GROUND_BASIS, EnvironmentFields, GroundStateParams,
                         SpinState, delta_s, level_energies,
                         pair_frequency_batch, transition_frequency)
from .streams import as_rng, derive_rng

PAIR_01 = ("0", "-1")
PAIR_PM1 = ("-1", "+1")

VARIANT_PAIRS = {
    "ramsey_01": PAIR_01,
    "ramsey_pm1": PAIR_PM1,
    "cpmg_ac_01": PAIR_01,
    "cpmg_ac_pm1": PAIR_PM1,
}

# pi/2 "beamsplitter" on a two-level subspace; applying it twice inverts the pair
_HALF_PULSE = np.array([[1.0, -1.0j], [-1.0j, 1.0]]) / np.sqrt(2.0)


@dataclass(frozen=True)
class PulseSettings:
    """Waveform parameters used when ``pulse_mode == "propagated"``."""

    stirap_peak: float = 5.0e6
    stirap_sigma: float = 1.0e-6
    stirap_delay: float = 1.2e-6
    pi_rabi: float = 1.0e6

    def __post_init__(self):
        for name in ("stirap_peak", "stirap_sigma", "stirap_delay", "pi_rabi"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidInputError(f"{name} must be positive")


@dataclass(frozen=True)
class ModelContext:
    """Shared physical configuration for sequence runs.

    ``reference_env`` is where the drive frequencies are calibrated; the
    optional ``env`` is the actual operating environment (defaults to the
    reference).  ``raman_delta`` is the common one-photon detuning parameter
    used for two-tone transfer operations.
    """

    params: GroundStateParams = field(default_factory=GroundStateParams)
    reference_env: EnvironmentFields = field(
        default_factory=lambda: EnvironmentFields(b_z=3.0e7))
    env: EnvironmentFields | None = None
    pulse_mode: str = "ideal"
    raman_delta: float = 2.0e7
    pulses: PulseSettings = field(default_factory=PulseSettings)

    def __post_init__(self):
        if self.pulse_mode not in ("ideal", "propagated"):
            raise InvalidInputError("pulse_mode must be 'ideal' or 'propagated'")

    @property
    def base_env(self) -> EnvironmentFields:
        return self.env if self.env is not None else self.reference_env


@dataclass
class ShotOutcome:
    """Result of one sequence execution (populations in ground basis order)."""

    final_populations: np.ndarray
    accumulated_phase: float | None
    sequence_duration: float


def pair_for(variant: str):
    try:
        return VARIANT_PAIRS[variant]
    except KeyError:
        raise InvalidInputError(f"unknown sequence variant {variant!r}") from None


def reference_pair_frequency(context: ModelContext, pair) -> float:
    return transition_frequency(level_energies(context.params, context.reference_env), pair)


def effective_detunings(context: ModelContext, env: EnvironmentFields,
                        delta_plus: float, delta_minus: float):
    """Drive detuning parameters seen at ``env`` for drives calibrated at the reference.

    A resonance shift of ``df`` (spectroscopic Hz) moves the rotating-frame
    parameter by ``df/2`` under the matrix convention used here.
    """
    ref = level_energies(context.params, context.reference_env)
    act = level_energies(context.params, env)
    shift_p = (transition_frequency(act, ("0", "+1"))
               - transition_frequency(ref, ("0", "+1")))
    shift_m = (transition_frequency(act, ("0", "-1"))
               - transition_frequency(ref, ("0", "-1")))
    return delta_plus - 0.5 * shift_p, delta_minus - 0.5 * shift_m


def _embed_pair(u2: np.ndarray, pair) -> np.ndarray:
    u = np.eye(3, dtype=complex)
    i, j = (GROUND_BASIS.index(x) for x in pair)
    u[np.ix_((i, j), (i, j))] = u2
    return u


def _shift_bz(env: EnvironmentFields, b_offset: float) -> EnvironmentFields:
    if b_offset == 0.0:
        return env
    return replace(env, b_z=env.b_z + b_offset)


# --- adiabatic transfer -------------------------------------------------------

def build_stirap(peak_plus: float, peak_minus: float, sigma: float, delay: float,
                 detunings=(0.0, 0.0), ordering: str = "counterintuitive",
                 duration: float | None = None) -> DriveSchedule:
    """Gaussian two-tone pulse pair transferring |-1> to |+1> adiabatically.

    In the counterintuitive ordering the pulse coupling the empty target
    side (omega_plus) comes first and the omega_minus pulse is delayed by
    ``delay``; the dark state then rotates smoothly from |-1> to |+1>.
    ``ordering="intuitive"`` swaps the two centers (useful as a control).
    The window covers both pulses to four sigma on each side.
    """
    if not (sigma > 0 and delay > 0):
        raise InvalidInputError("sigma and delay must be positive")
    if peak_plus < 0 or peak_minus < 0:
        raise InvalidInputError("peak amplitudes must be non-negative")
    if ordering not in ("counterintuitive", "intuitive"):
        raise InvalidInputError("ordering must be 'counterintuitive' or 'intuitive'")
    total = 8.0 * sigma + delay if duration is None else float(duration)
    if delay >= total:
        raise InvalidInputError("delay must be smaller than the total duration")
    first, second = 4.0 * sigma, 4.0 * sigma + delay
    center_plus, center_minus = (first, second) if ordering == "counterintuitive" else (second, first)
    return DriveSchedule(
        envelope_plus=GaussianEnvelope(peak_plus, center_plus, sigma),
        envelope_minus=GaussianEnvelope(peak_minus, center_minus, sigma),
        delta_plus=float(detunings[0]),
        delta_minus=float(detunings[1]),
        duration=total,
    )


def build_half_stirap(peak_plus: float, peak_minus: float, sigma: float, delay: float,
                      detunings=(0.0, 0.0), ordering: str = "counterintuitive") -> DriveSchedule:
    """Transfer interrupted at the symmetry point between the two pulse centers.

    From |-1> this leaves an equal-weight superposition of |+1> and |-1>
    for adiabatic parameters; playing the mirrored schedule afterwards
    completes the full transfer.
    """
    full = build_stirap(peak_plus, peak_minus, sigma, delay, detunings, ordering)
    half_t = 4.0 * sigma + 0.5 * delay
    return replace(full, duration=half_t)


# --- Ramsey interferometry ----------------------------------------------------

def _ramsey_phase(context: ModelContext, pair, env: EnvironmentFields,
                  free_time: float, detuning_offset: float) -> float:
    f_ref = reference_pair_frequency(context, pair)
    f_act = transition_frequency(level_energies(context.params, env), pair)
    return 2.0 * np.pi * ((f_act - f_ref) + detuning_offset) * free_time


def _prep_schedule(context: ModelContext, variant: str, env: EnvironmentFields) -> DriveSchedule:
    p = context.pulses
    if variant.endswith("pm1"):
        dp, dm = effective_detunings(context, env, 0.0, 0.0)
        return build_half_stirap(p.stirap_peak, p.stirap_peak, p.stirap_sigma,
                                 p.stirap_delay, detunings=(dp, dm))
    # resonant square pi/2 pulse on the {0,-1} pair
    _, dm = effective_detunings(context, env, 0.0, 0.0)
    t_half = 1.0 / (8.0 * p.pi_rabi)
    return DriveSchedule(
        envelope_plus=ConstantEnvelope(0.0),
        envelope_minus=ConstantEnvelope(p.pi_rabi),
        delta_plus=0.0,
        delta_minus=dm,
        duration=t_half,
    )


def run_ramsey(context: ModelContext, variant: str, free_time: float,
               noise: NoiseModel | None = None, detuning_offset: float = 0.0,
               rng=0) -> ShotOutcome:
    """One Ramsey shot: prepare the pair superposition, wait, close, read populations.

    The fringe is expressed in the transfer convention: at zero accumulated
    phase the closing rotation completes the population transfer to the
    target level of the pair.
    """
    if free_time < 0:
        raise InvalidInputError("free_time must be non-negative")
    pair = pair_for(variant)
    env = context.base_env
    if noise is not None:
        env = sample_environment(noise, env, rng)
    phi = _ramsey_phase(context, pair, env, free_time, detuning_offset)
    i, j = (GROUND_BASIS.index(x) for x in pair)

    if context.pulse_mode == "ideal":
        u = _embed_pair(_HALF_PULSE, pair)
        psi = np.zeros(3, dtype=complex)
        psi[i] = 1.0
        psi = u @ psi
        psi[j] *= np.exp(-1j * phi)
        psi = u @ psi
        pops = np.abs(psi) ** 2
        duration = free_time
    else:
        prep = _prep_schedule(context, variant, env)
        res = propagate(prep, SpinState.from_label(pair[0]))
        amps = res.final_state.amplitudes.copy()
        amps[j] *= np.exp(-1j * phi)
        closing = mirror_schedule(prep)
        res2 = propagate(closing, SpinState(amps))
        pops = res2.final_state.populations()
        duration = free_time + 2.0 * prep.duration
    return ShotOutcome(pops, phi, duration)


def ramsey_fringe_populations(context: ModelContext, variant: str, free_time: float,
                              b_offsets, detuning_offset: float = 0.0) -> np.ndarray:
    """Noiseless target-level population versus axial field offset (nT), ideal mode."""
    pair = pair_for(variant)
    f_ref = reference_pair_frequency(context, pair)
    offs = np.asarray(b_offsets, dtype=float)
    freqs = pair_frequency_batch(context.params, context.base_env, {"b_z": offs}, pair)
    phi = 2.0 * np.pi * ((freqs - f_ref) + detuning_offset) * free_time
    return np.cos(phi / 2.0) ** 2


def ramsey_phase_batch(context: ModelContext, variant: str, free_time: float,
                       noise: NoiseModel, shots: int, rng,
                       detuning_offset: float = 0.0,
                       env: EnvironmentFields | None = None) -> np.ndarray:
    """Accumulated phases for ``shots`` independent environment draws."""
    pair = pair_for(variant)
    base = env if env is not None else context.base_env
    offsets = sample_offsets(noise, rng, shots) if noise is not None else {}
    if offsets:
        freqs = pair_frequency_batch(context.params, base, offsets, pair)
    else:
        freqs = np.full(shots, transition_frequency(
            level_energies(context.params, base), pair))
    f_ref = reference_pair_frequency(context, pair)
    return 2.0 * np.pi * ((freqs - f_ref) + detuning_offset) * free_time


def ramsey_contrast(context: ModelContext, variant: str, free_time: float,
                    noise: NoiseModel, shots: int, seed: int = 0) -> float:
    """Fringe contrast ``|<exp(i phi)>|`` over quasi-static draws."""
    phi = ramsey_phase_batch(context, variant, free_time, noise, shots,
                             derive_rng(seed, "ramsey-contrast", variant))
    return float(np.hypot(np.mean(np.cos(phi)), np.mean(np.sin(phi))))


# --- pulsed ODMR ----------------------------------------------------------------

def _two_level_transfer(omega: float, delta_param, t: float):
    """Exact transfer probability of a constant resonance-driven pair.

    ``delta_param`` is the rotating-frame detuning parameter (half the
    spectroscopic offset); matches the integrator on constant schedules.
    """
    d = np.asarray(delta_param, dtype=float)
    if omega == 0.0:
        return np.zeros_like(d)
    g = np.sqrt(omega**2 + d**2)
    return (omega**2 / g**2) * np.sin(2.0 * np.pi * g * t) ** 2


@dataclass
class OdmrSpectrum:
    detunings: np.ndarray   # spectroscopic drive offsets, Hz
    values: np.ndarray      # mean counts, or mean transfer population
    kind: str               # "counts" | "population"


def run_odmr_sweep(context: ModelContext, pi_duration: float, detuning_grid,
                   noise: NoiseModel | None = None,
                   readout: ReadoutParams | None = None,
                   shots_per_point: int = 1, seed: int = 0,
                   shot_noise: bool = True) -> OdmrSpectrum:
    """Pulsed resonance spectrum of the {0,-1} transition.

    For every spectroscopic detuning on the grid a square pi pulse is played
    and read out; with a readout model the returned values are mean photon
    counts per point (sampled Poisson counts unless ``shot_noise=False``),
    otherwise mean transfer populations.
    """
    grid = np.asarray(detuning_grid, dtype=float)
    if grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise InvalidInputError("detuning grid must be non-empty and sorted")
    if shots_per_point < 1:
        raise InvalidInputError("shots_per_point must be at least 1")
    if pi_duration <= 0:
        raise InvalidInputError("pi_duration must be positive")
    omega = 1.0 / (4.0 * pi_duration)   # resonant full inversion in pi_duration
    f_ref = reference_pair_frequency(context, PAIR_01)
    values = np.empty(grid.size)
    for k, det in enumerate(grid):
        rng = derive_rng(seed, "odmr", k)
        if noise is not None and not noise.quiet:
            offsets = sample_offsets(noise, rng, shots_per_point)
            f01 = pair_frequency_batch(context.params, context.base_env, offsets, PAIR_01)
        else:
            f01 = np.full(shots_per_point, transition_frequency(
                level_energies(context.params, context.base_env), PAIR_01))
        delta_eff = 0.5 * (det - (f01 - f_ref))
        transfer = _two_level_transfer(omega, delta_eff, pi_duration)
        if readout is None:
            values[k] = float(np.mean(transfer))
        else:
            pops = np.stack([1.0 - transfer, np.zeros_like(transfer), transfer], axis=-1)
            mean_counts = expected_counts(pops, readout)
            if shot_noise:
                values[k] = float(np.mean(rng.poisson(mean_counts)))
            else:
                values[k] = float(np.mean(mean_counts))
    return OdmrSpectrum(detunings=grid, values=values,
                        kind="population" if readout is None else "counts")


# --- CPMG AC magnetometry -------------------------------------------------------

def cpmg_echo_times(period: float, echoes: int) -> np.ndarray:
    """Echo instants ``(2k-1)/(2n) * period`` for k = 1..n."""
    if echoes < 1:
        raise InvalidInputError("echoes must be at least 1")
    if period <= 0:
        raise InvalidInputError("period must be positive")
    k = np.arange(1, echoes + 1)
    return (2.0 * k - 1.0) / (2.0 * echoes) * period


def _cpmg_segments(period: float, echoes: int):
    """(start, stop, sign) segments of the echo sign function, starting at +1."""
    bounds = np.concatenate([[0.0], cpmg_echo_times(period, echoes), [period]])
    if np.any(np.diff(bounds) <= 0):
        raise InvalidInputError("echo placement incompatible with the period")
    return [(bounds[i], bounds[i + 1], 1.0 if i % 2 == 0 else -1.0)
            for i in range(len(bounds) - 1)]


def cpmg_signal_integral(period: float, phase: float, echoes: int) -> float:
    """``integral of sin(2 pi t / period + phase) * s(t) dt`` over one period."""
    w = 2.0 * np.pi / period
    total = 0.0
    for a, b, sign in _cpmg_segments(period, echoes):
        total += sign * (np.cos(w * a + phase) - np.cos(w * b + phase)) / w
    return float(total)


def run_cpmg_ac(context: ModelContext, variant: str, ac_amplitude: float,
                period: float, phase: float = 0.0, echoes: int = 1,
                noise: NoiseModel | None = None, rng=0) -> ShotOutcome:
    """One CPMG shot synchronized to a sinusoidal axial field of one period.

    Accumulated phase is ``delta_s * 2 pi * gyromag * integral(B_ac * s)``
    plus the (exactly refocused) quasi-static contribution; fringe contrast
    is reduced by the stretched-exponential echo envelope.
    """
    pair = pair_for(variant)
    if not variant.startswith("cpmg"):
        raise InvalidInputError("variant must be a cpmg_ac variant")
    ds = delta_s(pair)
    env = context.base_env
    if noise is not None:
        env = sample_environment(noise, env, rng)
    segs = _cpmg_segments(period, echoes)
    signed_time = sum(sign * (b - a) for a, b, sign in segs)
    f_ref = reference_pair_frequency(context, pair)
    f_act = transition_frequency(level_energies(context.params, env), pair)
    phi_static = 2.0 * np.pi * (f_act - f_ref) * signed_time
    phi_ac = (ds * 2.0 * np.pi * context.params.gyromag * ac_amplitude
              * cpmg_signal_integral(period, phase, echoes))
    phi = phi_ac + phi_static
    contrast = coherence_envelope(period, noise.t2, noise.p_exponent) if noise is not None else 1.0
    i, j = (GROUND_BASIS.index(x) for x in pair)
    pops = np.zeros(3)
    pops[j] = 0.5 * (1.0 + contrast * np.cos(phi))
    pops[i] = 1.0 - pops[j]
    return ShotOutcome(pops, float(phi), period)


def cpmg_fringe_counts(context: ModelContext, variant: str, amplitudes,
                       period: float, phase: float, echoes: int,
                       noise: NoiseModel | None, readout: ReadoutParams,
                       shots: int, seed: int = 0,
                       shot_noise: bool = True) -> np.ndarray:
    """Mean counts versus AC amplitude (fringe used for slope extraction)."""
    amplitudes = np.asarray(amplitudes, dtype=float)
    out = np.empty(amplitudes.size)
    for k, amp in enumerate(amplitudes):
        rng = derive_rng(seed, "cpmg-fringe", k)
        outcome = run_cpmg_ac(context, variant, amp, period, phase, echoes,
                              noise=noise, rng=rng)
        mean = expected_counts(outcome.final_populations, readout)
        if shot_noise:
            out[k] = float(np.mean(rng.poisson(mean, size=shots)))
        else:
            out[k] = float(mean)
    return out


# --- two-tone transfer and arbitrary waveforms -----------------------------------

def raman_pi_amplitude(context: ModelContext, duration: float) -> float:
    """Per-tone amplitude making the two-tone transfer a full flip in ``duration``."""
    if context.raman_delta <= 0:
        raise InvalidInputError("raman_delta must be positive for two-tone transfer")
    omega_eff = 1.0 / (4.0 * duration)
    return math.sqrt(2.0 * context.raman_delta * omega_eff)


def two_tone_schedule(context: ModelContext, duration: float,
                      omega: float | None = None) -> DriveSchedule:
    """Constant two-tone transfer waveform at the context Raman detuning."""
    if omega is None:
        omega = raman_pi_amplitude(context, duration)
    return DriveSchedule(
        envelope_plus=ConstantEnvelope(omega),
        envelope_minus=ConstantEnvelope(omega),
        delta_plus=context.raman_delta,
        delta_minus=context.raman_delta,
        duration=duration,
    )


def run_waveform(context: ModelContext, schedule: DriveSchedule,
                 b_offset: float = 0.0, env: EnvironmentFields | None = None,
                 initial_label: str = "-1", tol: float = 1e-8) -> ShotOutcome:
    """Play a drive schedule from |-1> (by default) at a shifted axial field.

    ``schedule`` holds the nominal drive parameters calibrated at the
    reference environment; the detunings actually applied are corrected for
    the resonance shifts of ``env``/``b_offset``.
    """
    env_act = _shift_bz(env if env is not None else context.base_env, b_offset)
    dp, dm = effective_detunings(context, env_act, schedule.delta_plus, schedule.delta_minus)
    shifted = replace(schedule, delta_plus=dp, delta_minus=dm)
    res = propagate(shifted, SpinState.from_label(initial_label), tol=tol)
    return ShotOutcome(res.final_state.populations(), None, schedule.duration)


def constant_final_populations(omega_plus: float, omega_minus: float,
                               delta_plus, delta_minus, duration: float,
                               initial_label: str = "-1") -> np.ndarray:
    """Final populations after a constant two-tone block, batched over detunings.

    Exact single-step evolution (the Hamiltonian is time independent);
    returns an (n, 3) array in ground basis order.
    """
    dp = np.asarray(delta_plus, dtype=float)
    dm = np.broadcast_to(np.asarray(delta_minus, dtype=float), dp.shape)
    n = dp.size
    h = np.zeros((n, 3, 3))
    h[:, 0, 1] = h[:, 1, 0] = omega_plus
    h[:, 1, 2] = h[:, 2, 1] = omega_minus
    h[:, 1, 1] = 2.0 * dp
    h[:, 2, 2] = 2.0 * (dp - dm)
    w, v = np.linalg.eigh(h)
    rot_index = {"+1": 0, "0": 1, "-1": 2}[initial_label]
    amp0 = v[:, rot_index, :].conj()          # <eigvec | initial>
    phases = np.exp(-2j * np.pi * w * duration)
    psi = np.einsum("kij,kj->ki", v, phases * amp0)
    pops_rot = np.abs(psi) ** 2
    return pops_rot[:, [1, 0, 2]]             # rotating -> ground order
