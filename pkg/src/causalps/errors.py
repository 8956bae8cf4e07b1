"""Exception and warning types shared across the package."""


class ModelError(Exception):
    """Base class for estimation failures."""


class DegenerateResponseError(ModelError):
    """Response vector is constant; the logistic MLE does not exist."""


class SeparationError(ModelError):
    """Data are (quasi-)separated; the logistic MLE lies at infinity."""


class NonConvergenceError(ModelError):
    """Newton iteration hit its iteration cap before the gradient converged."""


class SingularHessianError(ModelError):
    """Hessian is singular; the design matrix is rank deficient."""


class DegenerateStrataError(ModelError):
    """A quintile stratum is empty (massive ties in the scores)."""


class NonFiniteTargetError(ModelError):
    """Log target is not finite at the chain's initial state."""


class ExcessiveFailuresError(ModelError):
    """Too many resamples or posterior draws failed within one strategy run."""


class EmptySelectionError(ModelError):
    """No usable replication records for a requested strategy."""


class BatchFailureError(ModelError):
    """More than the tolerated share of replicates failed for some strategy."""


class CsvFormatError(ModelError):
    """A CSV input does not match the expected schema."""


class StuckChainWarning(UserWarning):
    """Post-burn-in Metropolis acceptance rate fell below 1%."""
