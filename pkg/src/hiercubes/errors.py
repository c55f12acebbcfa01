"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: ``ConfigError`` -> 2, ``Undetermined`` -> 3,
any other ``NumericalError`` -> 4.
"""


class HierCubesError(Exception):
    """Base class for all library errors."""


class ConfigError(HierCubesError, ValueError):
    """Malformed model file, profile file or flag combination."""


class Undetermined(HierCubesError):
    """A finite computation could not decide between the possible regimes."""


class NumericalError(HierCubesError, ArithmeticError):
    """A computation failed or its preconditions do not hold numerically."""


class UnstableModel(NumericalError):
    pass


class Divergent(NumericalError):
    pass


class SaturatedProfile(NumericalError):
    pass


class InvalidProfile(NumericalError, ValueError):
    pass


class OutsideUnitBall(NumericalError):
    pass


class InfiniteEnergyOccupied(NumericalError):
    pass


class InfeasibleCounts(NumericalError, ValueError):
    pass


class NoFixedPoints(NumericalError):
    pass


class Tangent(NumericalError):
    """Exactly one (neutral) fixed point; carries it as ``x``."""

    def __init__(self, message, x):
        super().__init__(message)
        self.x = x


class Diverging(NumericalError):
    pass


class TooLarge(NumericalError):
    pass


class MixedEnsembles(HierCubesError, ValueError):
    pass
