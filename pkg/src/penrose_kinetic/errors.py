"""Exception types shared across the package."""


class PenroseKineticError(Exception):
    """Base class for all package-specific errors."""


class DisplacementTooLarge(PenroseKineticError):
    """Velocity-space shift exceeds the CFL-like guard (v_max / 4)."""


class NegativeDistribution(PenroseKineticError):
    """Constructed initial data takes negative values."""


class QuadratureNotConverged(PenroseKineticError):
    """Doubling the quadrature resolution changed the result beyond tolerance."""


class InvalidFrequency(PenroseKineticError):
    """Frequency point outside the admissible set for the requested evaluation."""


class GridMismatch(PenroseKineticError):
    """Operands live on incompatible grids."""


class ModeMismatch(PenroseKineticError):
    """Field metadata disagrees with the requested field mode."""


class NumericalBlowup(PenroseKineticError):
    """Solution amplitude exceeded the blowup threshold; carries the partial trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []


class NonConvergence(PenroseKineticError):
    """Power iteration did not settle within the fixed iteration budget."""


class WindowViolation(PenroseKineticError):
    """Input carries too much mass near the edges of the time window."""


class MissingDiagnostics(PenroseKineticError):
    """A required diagnostic was not recorded during the run."""


class UnstableData(PenroseKineticError):
    """Initial data failed the Penrose-margin precheck."""


class InvalidLevels(PenroseKineticError):
    """Refinement study needs at least two levels."""


class SchemaError(PenroseKineticError):
    """Configuration document violates the schema; message names the field path."""


class IoError(PenroseKineticError):
    """Configuration or snapshot file could not be read."""
