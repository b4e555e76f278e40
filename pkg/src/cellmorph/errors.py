"""Exception types shared across the package."""


class CellmorphError(Exception):
    """Base class for all errors raised by this package."""


class ScaleError(CellmorphError):
    """Invalid physical-scale parameters (non-positive area or dimensions)."""


class MaskFormatError(CellmorphError):
    """A mask file is unreadable, malformed or of an unsupported format."""


class DimensionMismatchError(CellmorphError):
    """Two channels of the same image disagree on pixel dimensions."""


class LabelNotFoundError(CellmorphError):
    """A requested subject label is absent from the mask."""


class GeometryError(CellmorphError):
    """Degenerate or invalid geometric input (seeds, polygons)."""


class StatsError(CellmorphError):
    """Invalid input to a statistical routine."""


class ConvergenceError(StatsError):
    """An iterative numerical method failed to converge."""


class ReportError(CellmorphError):
    """Report writer rejected its input (duplicate keys, bad records)."""


class ConfigError(CellmorphError):
    """Run configuration failed validation.  Maps to CLI exit code 2."""


class DataRootError(CellmorphError):
    """Dataset root or output directory is unusable.  Maps to CLI exit code 3."""
