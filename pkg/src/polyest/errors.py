class DimensionError(ValueError):
    pass


class UnsupportedSetError(NotImplementedError):
    """Raised for monotone-set kinds the design programs cannot express."""


class SolverError(RuntimeError):
    """Conic solver failed or returned a non-optimal status."""

    def __init__(self, message: str, status: str | None = None, residuals: dict | None = None):
        super().__init__(message)
        self.status = status
        self.residuals = residuals or {}


class ExtractionError(RuntimeError):
    """Randomized rank-one extraction exhausted its trial budget."""

    def __init__(self, message: str, trials: int, best_gauge: float):
        super().__init__(message)
        self.trials = trials
        self.best_gauge = best_gauge


class SamplerError(RuntimeError):
    pass
