"""Exception taxonomy shared across the package.

Every error carries a short machine-parsable label used by the CLI when
reporting failures on stderr.
"""


class SurgeScanError(Exception):
    """Base class for all package errors."""

    label = "internal-error"


class ConfigError(SurgeScanError):
    """Invalid or unknown configuration."""

    label = "config-error"


class InputError(SurgeScanError):
    """Missing or structurally unusable input data."""

    label = "input-error"


class SchemaError(SurgeScanError):
    """A file violates its documented schema. Names file, line and column."""

    label = "schema-error"

    def __init__(self, message: str, *, path=None, line=None, column=None):
        self.path = path
        self.line = line
        self.column = column
        where = []
        if path is not None:
            where.append(f"file={path}")
        if line is not None:
            where.append(f"line={line}")
        if column is not None:
            where.append(f"column={column}")
        suffix = f" [{' '.join(where)}]" if where else ""
        super().__init__(f"{message}{suffix}")


class PreprocessError(SurgeScanError):
    """A sensor series was rejected during preprocessing."""

    label = "preprocess-error"

    def __init__(self, sensor_id: str, criterion: str, detail: str = ""):
        self.sensor_id = sensor_id
        self.criterion = criterion
        msg = f"sensor {sensor_id} rejected: {criterion}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class CalibrationError(SurgeScanError):
    """Null-distribution calibration failed or is unusable."""

    label = "calibration-error"


class PathCapError(SurgeScanError):
    """Path enumeration exceeded the configured cap."""

    label = "path-cap-error"

    def __init__(self, count: int, cap: int):
        self.count = count
        self.cap = cap
        super().__init__(
            f"path enumeration aborted: {count} paths exceed the cap of {cap}"
        )


class ContractError(SurgeScanError):
    """An operation was called with inputs violating its contract."""

    label = "contract-error"


class BenchmarkError(SurgeScanError):
    """The benchmark harness cannot produce a trustworthy report."""

    label = "benchmark-error"
