class SpecError(ValueError):
    """Malformed or invalid input document. ``path`` names the offending key."""

    def __init__(self, message, path=""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class PositivityError(ValueError):
    """A probability that must be strictly positive is zero (or clipped away)."""

    def __init__(self, message, cells=()):
        self.cells = list(cells)
        super().__init__(message)


class NumericalError(RuntimeError):
    """A linear system could not be solved reliably."""

    def __init__(self, message, condition_number=float("nan")):
        self.condition_number = condition_number
        super().__init__(f"{message} (condition number {condition_number:.3g})")
