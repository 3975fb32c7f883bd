"""Exception types shared across the package."""


class BdnkError(Exception):
    """Base class for all package errors."""


class NotUnitTimelike(BdnkError):
    """A four-velocity failed the u.u = -1 normalization check."""


class NonPositiveDensity(BdnkError):
    """Energy density must be strictly positive."""


class InvalidTransportModel(BdnkError):
    """Transport coefficients violate the admissibility constraints."""


class DegenerateCoefficient(BdnkError):
    """A transport coefficient or the temperature underflowed."""


class NearSingularA0(BdnkError):
    """The time-direction principal matrix lost invertibility somewhere."""


class NonFiniteState(BdnkError):
    """NaN or Inf appeared in an evolved state."""


class DensityFloorViolated(BdnkError):
    """Initial energy density dropped below the configured positive floor."""


class ComplexRoots(BdnkError):
    """A characteristic-speed discriminant went negative."""


class DefectiveCluster(BdnkError):
    """An eigenvalue cluster produced fewer eigenvectors than its multiplicity."""


class NonContracting(BdnkError):
    """Successive fixed-point iterates stopped shrinking."""


class ConfigError(BdnkError):
    """Malformed or inconsistent run configuration."""
