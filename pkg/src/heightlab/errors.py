"""Exception hierarchy shared by every heightlab module."""


class HeightLabError(Exception):
    """Base class for all heightlab errors."""


class AllZero(HeightLabError, ValueError):
    pass


class ZeroInput(HeightLabError, ValueError):
    pass


class NotCanonical(HeightLabError, ValueError):
    pass


class DimensionMismatch(HeightLabError, ValueError):
    pass


class FormError(HeightLabError, ValueError):
    """Invalid hypersurface description; the message names the offending field."""


class NotOnSurface(HeightLabError, ValueError):
    pass


class OnDivisor(HeightLabError, ValueError):
    """The point lies on the divisor, where the local height is infinite."""


class EqualPoints(HeightLabError, ValueError):
    pass


class ZeroPairHeight(HeightLabError, ValueError):
    pass


class NoPairs(HeightLabError, ValueError):
    pass


class InsufficientData(HeightLabError, ValueError):
    pass


class UnsortedBounds(HeightLabError, ValueError):
    pass


class ConfigError(HeightLabError, ValueError):
    pass
