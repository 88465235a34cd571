class BatfillError(Exception):
    """Root of every error raised on purpose by batfill."""


class ConfigError(BatfillError, ValueError):
    pass


class FormatError(BatfillError, ValueError):
    pass


class ShapeError(BatfillError, ValueError):
    pass


class InsufficientColorsError(BatfillError, ValueError):
    def __init__(self, k: int, distinct: int):
        super().__init__(f"insufficient colors: k={k} but only {distinct} distinct pixels")
        self.k = k
        self.distinct = distinct


class NothingToPredictError(BatfillError, ValueError):
    def __init__(self, detail: str | None = None):
        message = "nothing to predict"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


class NumericsError(BatfillError, ArithmeticError):
    pass


class BudgetMismatchError(BatfillError, ValueError):
    pass
