"""Exception hierarchy shared by every module."""


class ContregError(Exception):
    """Base class for all library errors."""


class InvalidParam(ContregError, ValueError):
    """A parameter is outside its admissible range."""


class DegenerateRegime(ContregError, ValueError):
    """The closed forms have no finite value at the requested point."""


class DimensionMismatch(ContregError, ValueError):
    """Vectors or matrices disagree in shape."""


class NonFiniteObjective(ContregError, ArithmeticError):
    """An objective evaluated to nan or inf."""


class SingularSystem(ContregError, ArithmeticError):
    """A linear system could not be solved (non-finite inputs)."""
