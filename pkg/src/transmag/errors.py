"""Exception hierarchy shared across the package."""


class TransmagError(Exception):
    """Base class for all errors raised by transmag."""


class DomainError(TransmagError):
    """A point (or a finite-difference stencil around it) leaves the chart."""


class DegenerateMetricError(TransmagError):
    """The metric matrix is singular (or numerically unusable) at a point."""


class ExpressionError(TransmagError):
    """Syntax or compilation error in a component expression.

    Carries the 1-based line and column of the offending token when the
    error originates from parsing.
    """

    def __init__(self, message, line=None, col=None):
        if line is not None:
            message = f"{message} (line {line}, column {col})"
        super().__init__(message)
        self.line = line
        self.col = col


class EvaluationDomainError(TransmagError):
    """An expression produced a non-finite value inside the chart domain."""


class ModelFormatError(TransmagError):
    """A model document is malformed (bad JSON, missing components, shapes)."""


class CertificationError(TransmagError):
    """A parsed model failed its structure-axiom certification.

    ``report`` holds the failing StructureReport.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class StructureError(TransmagError):
    """Structure axioms do not hold at a point where an operation needs them."""


class UnderdeterminedError(TransmagError):
    """The structure-function fit is rank deficient at the given point."""


class InsufficientSamplesError(TransmagError):
    """A sampled-curve operation was given too few samples."""


class NoLegendreDirectionError(TransmagError):
    """A vector has no component transverse to the characteristic fields."""


class ChartExitError(TransmagError):
    """Integration left the chart domain; ``partial`` holds the truncated run."""

    def __init__(self, t_exit, partial=None):
        super().__init__(f"left chart domain at t={t_exit:.6g}")
        self.t_exit = t_exit
        self.partial = partial


class BlowUpError(TransmagError):
    """Integration produced a non-finite state."""

    def __init__(self, t):
        super().__init__(f"blow-up: non-finite state at t={t:.6g}")
        self.t = t


class VariableOsculatingOrderError(TransmagError):
    """A curvature function crosses the rank tolerance inside the window."""

    def __init__(self, level, crossing_times):
        times = ", ".join(f"{t:.6g}" for t in crossing_times[:8])
        more = "..." if len(crossing_times) > 8 else ""
        super().__init__(
            f"variable osculating order: kappa_{level} crosses the rank "
            f"tolerance at t = {times}{more}"
        )
        self.level = level
        self.crossing_times = crossing_times
