"""Exception types shared across the package."""


class OscActionError(Exception):
    """Base class for all package-specific failures."""


class CaseError(OscActionError):
    """Problem with a case file."""


class CaseParseError(CaseError):
    """Malformed case file: bad syntax or a field of the wrong type.

    The message carries a locus (line/column for syntax, record/field
    otherwise) so the offending part of the file can be found quickly.
    """


class CaseSemanticError(CaseError):
    """Structurally valid case that violates a model invariant."""


class UnknownBusError(OscActionError):
    """A bus id was referenced that does not exist in the case."""


class NonConvergence(OscActionError):
    """An iterative solver failed to reach its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SingularElimination(OscActionError):
    """The block eliminated in a Kron reduction is singular."""


class DisconnectedBus(OscActionError):
    """Bus unreachable from every generator bus."""


class AffinityError(OscActionError):
    """State matrix family failed the affine-in-gain consistency check."""


class SimulationDiverged(OscActionError):
    """Integration produced a non-finite state."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class DegenerateSpectrum(OscActionError):
    """Repeated (or numerically coincident) eigenvalues; the modal
    machinery here assumes a diagonalizable matrix with simple spectrum."""


class ZeroModeCarriesEnergy(OscActionError):
    """A near-zero mode has non-negligible rows in the modal energy
    matrix, so silently dropping it would discard kinetic energy."""


class ResonantPair(OscActionError):
    """lambda_i + lambda_j vanishes for a retained mode pair; the
    finite-horizon action integral has no closed form there."""


class NotAsymptoticallyStable(OscActionError):
    """Retained modes are not all strictly in the left half plane."""

    def __init__(self, message, modes=None):
        super().__init__(message)
        self.modes = [] if modes is None else list(modes)


class ImaginaryResidueExceeded(OscActionError):
    """A quantity that must be real retained a large imaginary part,
    which indicates an inconsistent modal expansion."""


class DegenerateDisturbance(OscActionError):
    """An all-zero disturbance cannot discriminate between actuators."""
