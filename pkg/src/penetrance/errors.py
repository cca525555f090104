"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class PenetranceError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PenetranceError, ValueError):
    pass


class PedigreeError(PenetranceError, ValueError):
    """Malformed or structurally invalid pedigree input.

    ``family_id`` and ``row`` locate the offending record when known.
    """

    def __init__(self, message, family_id=None, row=None):
        self.family_id = family_id
        self.row = row
        where = []
        if family_id is not None:
            where.append(f"family {family_id}")
        if row is not None:
            where.append(f"row {row}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class DataError(PenetranceError, ValueError):
    """Data that parse correctly but contradict the model."""


class ImpossiblePedigreeError(DataError):
    """Observed genotypes have zero probability under Mendelian transmission."""


class NumericalError(PenetranceError, ArithmeticError):
    pass


class QuadratureError(NumericalError):
    def __init__(self, message, error_estimate):
        self.error_estimate = error_estimate
        super().__init__(f"{message} (estimated error {error_estimate:.3g})")
