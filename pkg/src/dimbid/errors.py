"""Exception hierarchy shared across the package."""


class DimbidError(Exception):
    """Base class for every error raised by dimbid."""


class DataError(DimbidError, ValueError):
    """Input data is malformed or inconsistent."""


class LogFormatError(DataError):
    """A row or column of an impression log violates the CSV schema."""

    def __init__(self, message, row=None, field=None):
        self.row = row
        self.field = field
        where = []
        if row is not None:
            where.append(f"row {row}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class LandscapeError(DimbidError):
    """A landscape model cannot be identified from the data given."""


class SolverError(DimbidError):
    """An optimizer could not produce a valid plan."""


class InfeasibleBudgetError(SolverError):
    """Even the lowest allowed factors overspend the budget."""


class NotReadyError(DimbidError):
    """Not enough sales signal yet to build groups."""


class GroupingError(DataError):
    """Grouping request cannot be satisfied by the data."""
