"""Exception hierarchy shared by all itrans modules."""


class ItransError(Exception):
    """Base class for all package errors."""


class ConfigError(ItransError):
    """Invalid or incomplete experiment/medium configuration."""


class OutsideDomain(ItransError):
    """A point violates the domain constraint |x| <= 1 (+tolerance)."""


class DegenerateSegment(ItransError):
    """Segment endpoints coincide (length below 1e-12)."""


class NotSubcritical(ItransError):
    """No subcriticality certificate could be established."""


class NoIntersection(ItransError):
    """A broken path cannot connect the requested entry to the exit."""


class BudgetExceeded(ItransError):
    """Monte Carlo variance target not reachable within the sample budget."""


class SideMismatch(ItransError):
    """Two boundary measures live on different boundary sides."""


class SideViolation(ItransError):
    """A perturbation pushed a ray across the incoming/outgoing divide."""


class NonPositiveEstimate(ItransError):
    """The attenuation estimator received a non-positive projection."""


class InvalidDimension(ItransError):
    """Operation requested in a dimension it does not support."""


class IncompleteSinogram(ItransError):
    """Sinogram grid has missing or non-finite entries."""


class AttenuationUnderflow(ItransError):
    """Broken-line attenuation below 1e-12; division would blow up."""


class NonPositiveData(ItransError):
    """Log-log fit requires strictly positive abscissas and ordinates."""


class NumericalFailure(ItransError):
    """Generic numerical failure surfaced to the CLI as exit code 4."""
