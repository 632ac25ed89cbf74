"""Spin-1 ground-state model of the NV centre and the rotating-frame drive.

Conventions used throughout the package
---------------------------------------
* All energies and couplings are stored in linear Hz.  The propagator is the
  single place where the angular conversion happens: it integrates
  ``i dpsi/dt = 2*pi*H(t) psi`` with ``H`` in Hz.
* Magnetic fields are in nT (the gyromagnetic coupling ``g*mu_B`` is quoted
  per nT), electric/strain fields in V/m.
* The static ground-state Hamiltonian is written in the basis order
  ``GROUND_BASIS = ("0", "+1", "-1")``; the rotating-frame drive matrix in
  ``ROTATING_BASIS = ("+1", "0", "-1")``.  Conversion between the two is the
  permutation ``GROUND_TO_ROTATING``.
* The drive matrix carries the Rabi amplitudes on the off-diagonals and
  ``2*delta`` terms on the diagonal.  With the ``2*pi`` propagation rule this
  means a resonant drive of amplitude ``omega`` fully inverts a two-level
  pair after ``t = 1/(4*omega)`` and the spectroscopic frequency offset of a
  drive equals twice its ``delta`` parameter.  Sequence-level code converts
  physical frequency shifts with ``effective detuning = delta - shift/2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneracyError, InvalidInputError, SingularityError

GROUND_BASIS = ("0", "+1", "-1")
ROTATING_BASIS = ("+1", "0", "-1")
# amps_rotating = amps_ground[GROUND_TO_ROTATING]; the permutation is an involution
GROUND_TO_ROTATING = np.array([1, 0, 2])

_MAGNETIC_NUMBER = {"0": 0, "+1": 1, "-1": -1}


def delta_s(pair) -> int:
    """Difference in magnetic quantum number across a transition (1 or 2)."""
    a, b = pair
    return abs(_MAGNETIC_NUMBER[a] - _MAGNETIC_NUMBER[b])


@dataclass(frozen=True)
class GroundStateParams:
    """Physical constants of the spin-1 ground state.

    d_g           zero-field splitting, Hz
    d_parallel    axial electric dipole coupling, Hz m/V
    d_perp        transverse electric dipole coupling, Hz m/V
    gyromag       g*mu_B, Hz/nT
    """

    d_g: float = 2.87e9
    d_parallel: float = 3.5e-2
    d_perp: float = 0.17
    gyromag: float = 28.0

    def __post_init__(self):
        for name in ("d_g", "d_parallel", "d_perp", "gyromag"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidInputError(f"{name} must be finite and strictly positive, got {v!r}")


@dataclass(frozen=True)
class EnvironmentFields:
    """Instantaneous magnetic (nT) and electric/strain (V/m) field vector.

    ``dg_offset`` (Hz) carries quasi-static shifts of the zero-field
    splitting (temperature proxy); it adds to the diagonal exactly like the
    axial strain term does.
    """

    b_x: float = 0.0
    b_y: float = 0.0
    b_z: float = 0.0
    e_x: float = 0.0
    e_y: float = 0.0
    e_z: float = 0.0
    dg_offset: float = 0.0

    def __post_init__(self):
        for name in ("b_x", "b_y", "b_z", "e_x", "e_y", "e_z", "dg_offset"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidInputError(f"{name} must be finite")


@dataclass(frozen=True)
class DriveParams:
    """Two-tone drive at constant amplitudes and detunings (all Hz).

    ``omega_plus`` couples |0> and |+1>, ``omega_minus`` couples |0> and
    |-1>; ``delta_plus`` / ``delta_minus`` are the rotating-frame detuning
    parameters (the matrix diagonal carries twice these values).
    """

    omega_plus: float = 0.0
    omega_minus: float = 0.0
    delta_plus: float = 0.0
    delta_minus: float = 0.0

    def __post_init__(self):
        for name in ("omega_plus", "omega_minus", "delta_plus", "delta_minus"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidInputError(f"{name} must be finite")
        if self.omega_plus < 0 or self.omega_minus < 0:
            raise InvalidInputError("Rabi amplitudes must be non-negative")


class SpinState:
    """Normalized complex amplitudes over ``GROUND_BASIS`` = (|0>, |+1>, |-1>)."""

    __slots__ = ("amplitudes",)

    def __init__(self, amplitudes):
        amps = np.asarray(amplitudes, dtype=complex)
        if amps.shape != (3,):
            raise InvalidInputError(f"expected 3 amplitudes, got shape {amps.shape}")
        norm = float(np.sum(np.abs(amps) ** 2))
        if abs(norm - 1.0) > 1e-10:
            raise InvalidInputError(f"state norm deviates from 1 by {abs(norm - 1.0):.3e}")
        self.amplitudes = amps

    @classmethod
    def from_label(cls, label: str) -> "SpinState":
        amps = np.zeros(3, dtype=complex)
        amps[GROUND_BASIS.index(label)] = 1.0
        return cls(amps)

    def population(self, label: str) -> float:
        return float(np.abs(self.amplitudes[GROUND_BASIS.index(label)]) ** 2)

    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def __repr__(self):
        return f"SpinState({self.amplitudes!r})"


@dataclass(frozen=True)
class LevelDiagram:
    """Eigenenergies labeled by the dominant unperturbed basis state."""

    energies: tuple
    labels: tuple
    basis: tuple = field(default=GROUND_BASIS)

    def energy(self, label: str) -> float:
        try:
            return self.energies[self.labels.index(label)]
        except ValueError:
            raise InvalidInputError(f"unknown level label {label!r}") from None


def ground_hamiltonian(params: GroundStateParams, env: EnvironmentFields) -> np.ndarray:
    """Static ground-state Hamiltonian, 3x3 complex Hermitian in Hz.

    Basis order ``GROUND_BASIS``.  The diagonal carries the zero-field
    splitting with axial strain and Zeeman shifts; transverse magnetic
    fields enter through ``beta_perp = (i*b_x - b_y)/sqrt(2)`` and
    transverse strain couples the |+1> and |-1> levels directly.
    """
    if not isinstance(params, GroundStateParams):
        raise InvalidInputError("params must be a GroundStateParams")
    if not isinstance(env, EnvironmentFields):
        raise InvalidInputError("env must be an EnvironmentFields")
    g = params.gyromag
    beta = (1j * env.b_x - env.b_y) / np.sqrt(2.0)
    diag = params.d_g + env.dg_offset + params.d_parallel * env.e_z
    strain = params.d_perp * (env.e_x + 1j * env.e_y)
    h = np.array(
        [
            [0.0, g * beta, g * np.conj(beta)],
            [g * np.conj(beta), diag + g * env.b_z, strain],
            [g * beta, np.conj(strain), diag - g * env.b_z],
        ],
        dtype=complex,
    )
    return h


def _label_eigensystem(w: np.ndarray, v: np.ndarray):
    """Assign basis labels by dominant overlap; raise on ambiguous assignment."""
    dominant = np.argmax(np.abs(v) ** 2, axis=0)
    if sorted(dominant.tolist()) != [0, 1, 2]:
        raise DegeneracyError(
            "eigenvector labeling is ambiguous (degenerate or maximally mixed levels)", w
        )
    energies = [0.0, 0.0, 0.0]
    for col, row in enumerate(dominant):
        energies[row] = float(w[col])
    return tuple(energies)


def level_energies(params: GroundStateParams, env: EnvironmentFields) -> LevelDiagram:
    """Eigenvalues of the ground Hamiltonian labeled by dominant basis state."""
    w, v = np.linalg.eigh(ground_hamiltonian(params, env))
    energies = _label_eigensystem(w, v)
    return LevelDiagram(energies=energies, labels=GROUND_BASIS)


def transition_frequency(diagram: LevelDiagram, pair) -> float:
    """Positive energy difference (higher minus lower) between two labeled levels."""
    a, b = pair
    if a == b:
        raise InvalidInputError("transition labels must be distinct")
    return abs(diagram.energy(a) - diagram.energy(b))


def two_photon_detuning(delta_plus: float, delta_minus: float, delta_bz: float,
                        params: GroundStateParams) -> float:
    """Relative detuning of the two-tone pair for an axial field offset (nT)."""
    return delta_plus - delta_minus - 2.0 * params.gyromag * delta_bz


def rotating_hamiltonian(drive: DriveParams) -> np.ndarray:
    """Rotating-frame two-tone drive matrix, 3x3 real symmetric in Hz.

    Basis order ``ROTATING_BASIS`` = (|+1>, |0>, |-1>): ``omega_plus`` sits on
    the (|+1>, |0>) off-diagonal, ``omega_minus`` on (|0>, |-1>), and the
    diagonal reads ``(0, 2*delta_plus, 2*(delta_plus - delta_minus))``.
    """
    if not isinstance(drive, DriveParams):
        raise InvalidInputError("drive must be a DriveParams")
    dp, dm = drive.delta_plus, drive.delta_minus
    return np.array(
        [
            [0.0, drive.omega_plus, 0.0],
            [drive.omega_plus, 2.0 * dp, drive.omega_minus],
            [0.0, drive.omega_minus, 2.0 * (dp - dm)],
        ]
    )


def transverse_curvature_ratio(params: GroundStateParams, b_z: float,
                               rel_tol: float = 1e-3) -> float:
    """Suppression of the transverse-field response of the |+1>,|-1> pair.

    Returns ``|d2 f(0,-1) / dBperp2| / |d2 f(-1,+1) / dBperp2|`` at
    ``Bperp = 0``, evaluated by central finite differences on the labeled
    eigenvalues.  The step is refined until the ratio is stable to
    ``rel_tol`` (three digits by default).
    """
    if not (math.isfinite(b_z) and b_z > 0):
        raise InvalidInputError("b_z must be finite and positive")
    zeeman = params.gyromag * b_z
    if zeeman >= params.d_g:
        raise InvalidInputError("gyromag * b_z must stay below the zero-field splitting")
    if abs(params.d_g - zeeman) < 1e6:
        raise SingularityError(
            f"operating point within 1 MHz of the level anti-crossing (g*mu_B*b_z = {zeeman:.6g} Hz)"
        )

    def ratio_at(h):
        freqs = {}
        for bp in (h, 0.0, -h):
            d = level_energies(params, EnvironmentFields(b_x=bp, b_z=b_z))
            freqs[bp] = (
                transition_frequency(d, ("0", "-1")),
                transition_frequency(d, ("-1", "+1")),
            )
        c01 = (freqs[h][0] - 2 * freqs[0.0][0] + freqs[-h][0]) / h**2
        cpm = (freqs[h][1] - 2 * freqs[0.0][1] + freqs[-h][1]) / h**2
        if cpm == 0.0:
            raise SingularityError("pair curvature vanished; cannot form ratio")
        return abs(c01 / cpm)

    h = max(1e3, 1e-3 * b_z)
    prev = ratio_at(h)
    for _ in range(12):
        h *= 0.5
        cur = ratio_at(h)
        if abs(cur - prev) <= rel_tol * abs(cur):
            return cur
        prev = cur
    raise SingularityError("curvature ratio did not stabilize to the requested tolerance")


# --- vectorized helpers used by the Monte-Carlo layers -----------------------

def ground_hamiltonian_batch(params: GroundStateParams, base: EnvironmentFields,
                             offsets: dict) -> np.ndarray:
    """Stack of ground Hamiltonians for per-draw field offsets.

    ``offsets`` maps channel names (``b_x``, ``b_y``, ``b_z``, ``e_x``,
    ``e_y``, ``e_z``, ``dg``) to equal-length arrays added on top of ``base``.
    Returns an (n, 3, 3) complex array.
    """
    n = max((np.size(v) for v in offsets.values()), default=1)
    def ch(name, base_val):
        off = offsets.get(name)
        if off is None:
            return np.full(n, base_val, dtype=float)
        return base_val + np.asarray(off, dtype=float)

    bx = ch("b_x", base.b_x)
    by = ch("b_y", base.b_y)
    bz = ch("b_z", base.b_z)
    ex = ch("e_x", base.e_x)
    ey = ch("e_y", base.e_y)
    ez = ch("e_z", base.e_z)
    dg = ch("dg", base.dg_offset)

    g = params.gyromag
    beta = (1j * bx - by) / np.sqrt(2.0)
    diag = params.d_g + dg + params.d_parallel * ez
    strain = params.d_perp * (ex + 1j * ey)
    h = np.zeros((n, 3, 3), dtype=complex)
    h[:, 0, 1] = g * beta
    h[:, 1, 0] = g * np.conj(beta)
    h[:, 0, 2] = g * np.conj(beta)
    h[:, 2, 0] = g * beta
    h[:, 1, 1] = diag + g * bz
    h[:, 2, 2] = diag - g * bz
    h[:, 1, 2] = strain
    h[:, 2, 1] = np.conj(strain)
    return h


def pair_frequency_batch(params: GroundStateParams, base: EnvironmentFields,
                         offsets: dict, pair) -> np.ndarray:
    """Labeled transition frequencies for a batch of environment draws."""
    h = ground_hamiltonian_batch(params, base, offsets)
    w, v = np.linalg.eigh(h)
    dominant = np.argmax(np.abs(v) ** 2, axis=1)  # (n, 3): basis row per eigencolumn
    if not np.all(np.sort(dominant, axis=1) == np.array([0, 1, 2])):
        bad = int(np.argmax(np.any(np.sort(dominant, axis=1) != np.array([0, 1, 2]), axis=1)))
        raise DegeneracyError("eigenvector labeling ambiguous for at least one draw", w[bad])
    ia, ib = GROUND_BASIS.index(pair[0]), GROUND_BASIS.index(pair[1])
    cols_a = np.argmax(dominant == ia, axis=1)
    cols_b = np.argmax(dominant == ib, axis=1)
    rows = np.arange(w.shape[0])
    return np.abs(w[rows, cols_a] - w[rows, cols_b])
