"""Exception hierarchy shared across the package."""


class PcgapError(Exception):
    """Base class for all package-specific errors."""


class StabilityViolation(PcgapError):
    """Spectral radius of the dynamics matrix is >= 1."""


class InvalidNoise(PcgapError):
    """Noise variance is not strictly positive."""


class ConvergenceFailure(PcgapError):
    """An iterative solver exceeded its iteration cap."""


class DegenerateVariance(PcgapError):
    """Latent variance collapsed below the numerical floor."""


class NotPSD(PcgapError):
    """Matrix expected to be positive semidefinite is not."""


class NoConvergence(PcgapError):
    """No optimizer restart reached the stationarity tolerance."""


class DivergedLoss(PcgapError):
    """Training loss became non-finite."""


class HiddenStateOverflow(PcgapError):
    """Recurrent hidden state became non-finite during training."""


class AllDegenerate(PcgapError):
    """Every fidelity probe point had vanishing sensitivity (collapsed encoder)."""


class TrajectoryBlowup(PcgapError):
    """Simulated state exceeded the blowup bound."""


class ZeroVariance(PcgapError):
    """A correlate is constant across trajectories."""


class TaskFailed(PcgapError):
    """A sweep task failed; wraps the inner error."""


class InvalidCount(PcgapError):
    """Invalid success/total counts for an interval."""


class DegenerateTable(PcgapError):
    """A 2x2 table has a zero margin."""


class EmptyInput(PcgapError):
    """An aggregation operation received no data."""


class NoSignChange(PcgapError):
    """The bifurcation search found no sign change in the given range."""


class EmptyGrid(PcgapError):
    """A sweep configuration produced no parameter tuples."""


class CorruptRecords(PcgapError):
    """A results file contains unparsable records."""

    def __init__(self, message, lines=()):
        super().__init__(message)
        self.lines = tuple(lines)
