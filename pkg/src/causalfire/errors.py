"""Exception hierarchy shared across the package.

The CLI maps these onto stable exit codes: ConfigError -> 2, DataError and
subclasses -> 3, everything else derived from CausalFireError -> 4.
"""


class CausalFireError(Exception):
    """Base class for all package errors."""


class ConfigError(CausalFireError):
    """Invalid or inconsistent run configuration."""


class DataError(CausalFireError):
    """Problem with input data (shape, content, sufficiency)."""


class InsufficientDataError(DataError):
    """Too few samples for the requested operation."""


class DegenerateSeriesError(DataError):
    """A series or residual has (near-)zero variance where variation is required."""


class SingularDesignError(DataError):
    """Regression design matrix is rank deficient."""


class LabelError(DataError):
    """Class labels outside the supported {0, 1} set."""


class UndefinedMetricError(DataError):
    """Metric undefined for the given labels (e.g. single-class input)."""


class EmptyGraphError(DataError):
    """Causal graph has no usable (non-target) nodes."""


class NumericError(CausalFireError):
    """Numerical failure during computation."""


class NonFiniteError(NumericError):
    """NaN or infinity encountered where finite values are required."""


class StabilityError(NumericError):
    """Simulated dynamical system is unstable."""


class CalibrationError(NumericError):
    """Bias calibration could not reach the requested target."""


class DimensionError(CausalFireError):
    """Operand shapes incompatible with the requested operation."""


class ContractError(CausalFireError):
    """An operation was called in a way that violates its contract."""
