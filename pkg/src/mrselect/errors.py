"""Exception types shared across the package."""


class MrSelectError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(MrSelectError):
    pass


class EmptyDataset(MrSelectError):
    pass


class MalformedFile(MrSelectError):
    pass


class ShapeMismatch(MrSelectError):
    pass


class CountMismatch(MrSelectError):
    pass


class OutOfBoundsParam(MrSelectError):
    pass


class EmptyTraceSet(MrSelectError):
    pass


class MissingClassBank(MrSelectError):
    pass


class LengthMismatch(MrSelectError):
    pass


class EmptySubset(MrSelectError):
    pass


class GridMismatch(MrSelectError):
    pass


class SubsetLargerThanDataset(MrSelectError):
    pass


class EmptySample(MrSelectError):
    pass
