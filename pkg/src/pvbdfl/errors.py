"""Exception types raised across the package."""


class PvbdflError(Exception):
    """Base class for all package-specific errors."""


class LengthMismatch(PvbdflError, ValueError):
    """A series does not have the required number of entries."""


class NegativeEnergy(PvbdflError, ValueError):
    """An energy value that must be non-negative is negative."""


class PriceInversion(PvbdflError, ValueError):
    """Export price exceeds import price at some hour."""


class InvalidSpec(PvbdflError, ValueError):
    """A domain value violates one of its construction invariants."""


class Infeasible(PvbdflError, RuntimeError):
    """Solver breakdown: no feasible-optimal point could be produced."""


class MaxIterations(PvbdflError, RuntimeError):
    """The solver hit its iteration cap before converging."""


class ScheduleInfeasible(PvbdflError, RuntimeError):
    """A frozen charge/discharge schedule violates battery limits."""


class SingularKkt(PvbdflError, RuntimeError):
    """The KKT system is singular even after diagonal damping."""


class NonFiniteLoss(PvbdflError, RuntimeError):
    """Training produced a NaN/Inf loss."""


class ZeroMaxPv(PvbdflError, ValueError):
    """Scaled RMSE is undefined because the actual PV peak is zero."""


class DegenerateScale(PvbdflError, ValueError):
    """Relative cost is undefined because no-opt cost <= perfect cost."""


class ZeroVariance(PvbdflError, ValueError):
    """Loss differential has (near-)zero long-run variance."""


class ParseError(PvbdflError, ValueError):
    """A data file could not be parsed."""


class SchemaError(PvbdflError, ValueError):
    """A data file parses but violates the expected schema."""


class ConfigInvalid(PvbdflError, ValueError):
    """A command or generator configuration is invalid."""


class MissingCheckpoint(PvbdflError, FileNotFoundError):
    """A referenced model checkpoint does not exist."""
