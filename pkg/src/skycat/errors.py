"""Exception types raised across the package."""


class SkycatError(Exception):
    """Base class for all package errors."""


class InvalidPixel(SkycatError, ValueError):
    def __init__(self, pix, k):
        super().__init__(f"pixel id {pix} is out of range for resolution k={k}")
        self.pix = pix
        self.k = k


class InvalidResolution(SkycatError, ValueError):
    pass


class InvalidResolutionPair(SkycatError, ValueError):
    def __init__(self, k_hi, k_lo):
        super().__init__(f"cannot coarsen from k={k_hi} to finer k={k_lo}")
        self.k_hi = k_hi
        self.k_lo = k_lo


class InputError(SkycatError):
    """Problem with an input CSV file; carries the 1-based line number."""

    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class MalformedRow(InputError):
    pass


class InvalidCoordinate(InputError):
    pass


class InvalidConfig(SkycatError, ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class KTooLarge(SkycatError, ValueError):
    pass


class PlacementFailure(SkycatError, RuntimeError):
    pass


class TaskFailed(SkycatError, RuntimeError):
    """A clustering task raised; ``pixel`` names the task."""

    def __init__(self, pixel, message):
        super().__init__(f"task pixel {pixel} failed: {message}")
        self.pixel = pixel
        self.detail = message
