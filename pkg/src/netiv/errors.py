"""Exception types raised by the estimation layer."""


class NetivError(Exception):
    """Base class for library errors."""


class EmptyCell(NetivError):
    """An IPW cell has zero estimated probability, so its mean is undefined."""

    def __init__(self, z, t=None):
        self.z = z
        self.t = t
        if t is None:
            msg = f"no units in S with Z={z}"
        else:
            msg = f"no units in S with (Z={z}, T={t})"
        super().__init__(msg)


class DegenerateDenominator(NetivError):
    """A Wald ratio's denominator is exactly zero."""

    def __init__(self, estimand, denominator_name):
        self.estimand = estimand
        self.denominator_name = denominator_name
        super().__init__(f"{estimand} undefined: {denominator_name} is exactly 0")
