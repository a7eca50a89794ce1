"""Exception hierarchy and warnings."""


class ApbsError(Exception):
    """Base class for all toolkit errors."""


class InvalidSpecError(ApbsError):
    """A model spec (lattice, emitter, TLS, pulse) violates its invariants."""


class ModelFormError(ApbsError):
    """Operation requires the other model form (tight-binding vs effective)."""


class NumericError(ApbsError):
    """Non-finite values or ill-posed numerical input."""


class DivergenceError(NumericError):
    """Propagation produced non-finite amplitudes; carries the failing step."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class SamplingError(ApbsError):
    """Time grid too coarse or non-uniform for the requested operation."""


class AmbiguityError(ApbsError):
    """Bound-state identification is degenerate beyond the tie-break tolerance."""


class BranchTrackingError(ApbsError):
    """Eigenbranch continuity lost between flux points; names the flux."""

    def __init__(self, message, flux=None):
        super().__init__(message)
        self.flux = flux


class LeakageError(ApbsError):
    """Demodulation cutoff too wide for the neighboring peak spacing."""


class FitDomainError(ApbsError):
    """Data outside the fit's domain (e.g. non-decaying envelope)."""


class NonConvergenceError(ApbsError):
    """Optimizer hit its iteration budget; carries the best result so far."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ScenarioError(ApbsError):
    """Scenario/config file fails schema or physics validation (usage error)."""


class StageError(ApbsError):
    """Failure inside a multi-stage chain, labeled with the stage name."""

    def __init__(self, stage, original):
        super().__init__(f"stage '{stage}': {original}")
        self.stage = stage
        self.original = original


class TruncationWarning(UserWarning):
    """Envelope or trace ends before the decay energy is fully captured."""
