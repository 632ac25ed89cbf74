"""Exception types shared across the package."""


class NvmagError(Exception):
    """Base class for all package-specific failures."""


class InvalidInputError(NvmagError, ValueError):
    """An argument violates a documented precondition."""


class DegeneracyError(NvmagError):
    """Eigenstate labeling is ambiguous (two eigenvectors claim the same basis state).

    Carries the computed eigenvalues so callers can inspect the spectrum.
    """

    def __init__(self, message, eigenvalues):
        super().__init__(message)
        self.eigenvalues = tuple(float(e) for e in eigenvalues)


class SingularityError(NvmagError):
    """Requested operating point sits on a level anti-crossing."""


class StiffnessError(NvmagError):
    """Time propagation would require steps below the resolvable floor (1e-15 s)."""


class CalibrationError(NvmagError):
    """No usable monotone fringe branch could be extracted."""


class FieldOutOfRangeError(NvmagError):
    """Observed counts are impossible everywhere on the calibration branch."""


class ConfigError(NvmagError, ValueError):
    """Experiment configuration failed schema validation."""
