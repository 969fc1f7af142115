"""Exception hierarchy shared by all kml modules."""


class KmlError(Exception):
    pass


class SizeError(KmlError, ValueError):
    pass


class ShapeError(KmlError, ValueError):
    pass


class DomainError(KmlError, ValueError):
    pass


class ConstraintError(KmlError, ValueError):
    pass


class DensityError(KmlError, ValueError):
    pass


class SeriesError(KmlError, ArithmeticError):
    pass


class PreconditionError(KmlError, ValueError):
    """A bound's precondition on (m, t, ...) is violated."""


class NumericalError(KmlError, ArithmeticError):
    pass


class FitError(KmlError, ValueError):
    pass


class ConfigError(KmlError, ValueError):
    pass
