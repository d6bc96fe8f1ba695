"""Exception types raised across the package."""


class VresportError(Exception):
    pass


class DatasetError(VresportError):
    """Series of inconsistent length or misaligned timestamps."""


class ValidationError(VresportError, ValueError):
    pass


class GapError(DatasetError):
    def __init__(self, missing, message=None):
        self.missing = missing
        super().__init__(message or f"missing hourly timestamp {missing}")


class DegenerateSeriesError(VresportError, ValueError):
    pass


class DegeneratePlantError(VresportError, ValueError):
    pass


class DegeneratePortfolioError(VresportError, ValueError):
    pass


class ConfigError(VresportError):
    pass


class InfeasibleRiskError(VresportError):
    pass


class SolveError(VresportError):
    """A solve the pipeline cannot proceed without did not reach optimality."""
