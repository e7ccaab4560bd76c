"""
Custom exceptions for the attribution toolkit.
"""


class AttributionError(Exception):
    """Base exception for attribution errors."""
    pass


class ShapeError(AttributionError):
    """Raised when a nested shape is invalid or dimensions disagree."""

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(f"Structural error: {reason}")


class SingularSystemError(AttributionError):
    """Raised when a normal, KKT or precomputation matrix cannot be factorized."""

    def __init__(self, system: str, deficiency: int | None = None):
        self.system = system
        self.deficiency = deficiency
        detail = f" (rank deficient by {deficiency})" if deficiency else ""
        super().__init__(f"Singular {system} matrix{detail}")


class ConvergenceError(AttributionError):
    """Raised when ADMM reaches max_iters without meeting both stop conditions."""

    def __init__(self, iterations: int, trace=None, last_pair=None):
        self.iterations = iterations
        self.trace = trace
        self.last_pair = last_pair
        super().__init__(f"ADMM did not converge after {iterations} iterations")


class OracleEvaluationError(AttributionError):
    """Raised when the black-box oracle fails on a perturbation row."""

    def __init__(self, row: int, level: str, reason: str):
        self.row = row
        self.level = level
        self.reason = reason
        super().__init__(f"Oracle failed on {level}-level row {row}: {reason}")


class SingularWeightError(AttributionError):
    """Raised when a sample weight is undefined (all-zero mask rows)."""

    def __init__(self, rows: list[int]):
        self.rows = rows
        super().__init__(f"Undefined kernel weight for all-zero mask rows: {rows[:10]}")


class UndefinedMetricError(AttributionError):
    """Raised when an evaluation metric is undefined for the given labels."""

    def __init__(self, metric: str, reason: str):
        self.metric = metric
        self.reason = reason
        super().__init__(f"{metric} is undefined: {reason}")


class OracleConstructionError(AttributionError):
    """Raised when synthetic oracle parameters are invalid."""

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(f"Cannot build oracle: {reason}")


class ConfigValidationError(AttributionError):
    """Raised when an experiment or solver configuration is invalid."""

    def __init__(self, field: str, reason: str):
        self.field = field
        self.reason = reason
        super().__init__(f"Invalid config field '{field}': {reason}")
