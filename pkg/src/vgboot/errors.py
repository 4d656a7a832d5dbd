"""Exception types raised by the estimators."""


class VariogramError(Exception):
    """Base class for all package errors."""


class AllBinsEmpty(VariogramError):
    """No point pair falls inside ``(0, max_dist]``."""


class InsufficientBins(VariogramError):
    """Too few nonempty lag bins to initialise or fit the model."""


class DomainError(VariogramError, ValueError):
    """Model evaluated at a negative distance."""


class NotPositiveDefinite(VariogramError):
    """Covariance matrix could not be factorised, even after jitter."""


class LengthMismatch(VariogramError, ValueError):
    pass


class BaseFitFailed(VariogramError):
    """The fit on the original data or on its normal scores failed the screen."""

    def __init__(self, stage, fit):
        super().__init__(f"{stage} fit failed the convergence screen: {fit.params}")
        self.stage = stage
        self.fit = fit


class AttemptBudgetExhausted(VariogramError):
    """Check-filtered bootstrap could not collect B replicates in time."""

    def __init__(self, n_accepted, n_generated, n_discarded_filter, n_discarded_screen):
        super().__init__(
            f"accepted {n_accepted} replicates after {n_generated} attempts "
            f"({n_discarded_filter} filtered, {n_discarded_screen} screened)"
        )
        self.n_accepted = n_accepted
        self.n_generated = n_generated
        self.n_discarded_filter = n_discarded_filter
        self.n_discarded_screen = n_discarded_screen
