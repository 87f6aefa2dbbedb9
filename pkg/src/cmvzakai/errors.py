"""Exception hierarchy shared by all modules."""


class CMVZakaiError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(CMVZakaiError, ValueError):
    pass


class ParameterError(CMVZakaiError, ValueError):
    pass


class WeightDegeneracy(CMVZakaiError, ArithmeticError):
    """Total mass fell below the collapse threshold; normalization refused."""


class CoefficientError(CMVZakaiError, ArithmeticError):
    pass


class NumericalBlowup(CMVZakaiError, ArithmeticError):
    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class GridError(CMVZakaiError, ValueError):
    pass


class OracleError(CMVZakaiError, ArithmeticError):
    pass


class ConfigError(CMVZakaiError, ValueError):
    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(message + (f" [{', '.join(where)}]" if where else ""))
        self.field = field
        self.line = line
