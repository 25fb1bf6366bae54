"""Exception types shared across the toolkit."""


class LensVrpError(Exception):
    """Base class for all toolkit errors."""


class UnknownCustomer(LensVrpError):
    """A route references a customer id that is not in the instance."""


class EmptyRoute(LensVrpError):
    """Operation requires a route with at least one customer."""


class EmptySequence(LensVrpError):
    """Aggregation over an empty sequence of values."""


class ParseError(LensVrpError):
    """Malformed instance document."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class InconsistentDepot(LensVrpError):
    """Depot row carries nonzero demand or service time."""


class InfeasibleCustomer(LensVrpError):
    """Customer cannot be served within the instance horizon."""


class DegenerateCount(LensVrpError):
    """Rank-based probabilities need at least two candidates."""


class TooFewRoutes(LensVrpError):
    """Not enough nonempty routes to build a neighborhood."""


class NotInNeighborhood(LensVrpError):
    """Customer does not lie on any neighborhood route."""


class WarmStartInfeasible(LensVrpError):
    """Warm-start routes violate the sub-problem constraints."""


class ExternalFailure(LensVrpError):
    """External repair command failed or produced invalid output."""


class SingleClass(LensVrpError):
    """Training data contains only one class."""


class DimensionMismatch(LensVrpError):
    """Feature vector length does not match the model manifest."""


class VersionMismatch(LensVrpError):
    """Serialized model has an unsupported version tag."""


class CorruptModel(LensVrpError):
    """Serialized model cannot be decoded."""


class InfeasibleInitial(LensVrpError):
    """LNS requires a feasible starting solution."""


class DegenerateBaseline(LensVrpError):
    """Gap is undefined when random and oracle averages coincide."""


class NoImprovingIterations(LensVrpError):
    """Validation needs at least one iteration with a positive improvement."""


class LengthMismatch(LensVrpError):
    """Traces to aggregate do not share an iteration count."""
