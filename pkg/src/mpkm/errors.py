"""Exception types shared across the package."""


class InputError(ValueError):
    """Invalid argument or precondition violation on user-facing input."""


class BuildError(RuntimeError):
    """A construction step failed its own contract (e.g. edge budget)."""


class AccountingError(RuntimeError):
    """A simulated memory or budget limit was exceeded."""


class PipelineError(RuntimeError):
    """A solver step found a state its contract rules out."""


class CertificateError(RuntimeError):
    """A dual certificate could not be produced."""
