"""Exception types shared across the package."""


class QHDError(Exception):
    """Base class for all package errors."""


class NonZeroMeanRhs(QHDError):
    pass


class FormatError(QHDError):
    pass


class VacuumBreach(QHDError):
    def __init__(self, min_rho: float, delta: float, t: float | None = None):
        self.min_rho = min_rho
        self.delta = delta
        self.t = t
        where = "" if t is None else f" at t={t:.6g}"
        super().__init__(f"density floor breached{where}: min rho={min_rho:.6g} < delta={delta:.6g}")


class NotIrrotational(QHDError):
    pass


class NonZeroCirculation(QHDError):
    pass


class NoContraction(QHDError):
    pass


class HorizonTooShort(QHDError):
    pass


class ParseError(QHDError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + loc)


class ValidationError(QHDError):
    pass


class DegenerateData(QHDError):
    pass
