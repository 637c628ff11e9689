"""Exception types shared across the pipeline."""


class InfeasibleError(RuntimeError):
    """No admissible rendezvous, station or path exists for the request.

    ``partial`` optionally carries the work completed before the failure.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class ConfigError(ValueError):
    """Scenario or command-line configuration is invalid."""
