"""Exception types shared across maskforge modules."""


class MaskForgeError(Exception):
    """Base class for all maskforge errors."""


class DimensionMismatchError(MaskForgeError):
    """Two grids that must share a shape do not."""


class EmptyResultError(MaskForgeError):
    """An edit produced an empty mask; the caller may resample and retry."""


class NoContoursError(MaskForgeError):
    """An edge map contains no traceable contour."""


class GraphShapeError(MaskForgeError):
    """Two structural graphs cannot be compared edge-by-edge."""
