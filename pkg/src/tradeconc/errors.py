"""Exception hierarchy shared by the pipeline stages.

Input errors (bad files, bad arguments) map to CLI exit code 2, domain
errors (degenerate data, rank deficiency, ...) map to exit code 1.
"""


class TradeConcError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class InputError(TradeConcError):
    exit_code = 2


class DomainError(TradeConcError, ValueError):
    exit_code = 1


class TapeFormatError(InputError):
    """Fatal tape problem: missing columns, unreadable file, too many bad rows."""


class OrderingError(InputError):
    """Trades are not sorted by (symbol, timestamp)."""


class MissingIndexDateError(InputError):
    def __init__(self, dates):
        self.dates = sorted(dates)
        shown = ", ".join(str(d) for d in self.dates[:20])
        more = "" if len(self.dates) <= 20 else f" (+{len(self.dates) - 20} more)"
        super().__init__(f"index returns missing for {len(self.dates)} date(s): {shown}{more}")


class RankDeficientError(DomainError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(
            "design matrix is rank deficient; linearly dependent column(s): "
            + ", ".join(self.columns)
        )


class DegenerateQuantileError(DomainError):
    pass


class ConfigError(InputError):
    pass
