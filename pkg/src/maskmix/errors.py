"""Exception hierarchy shared by every module."""


class MaskMixError(Exception):
    """Base class for all library errors."""


class ShapeError(MaskMixError, ValueError):
    def __init__(self, op, *shapes):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        joined = " vs ".join(str(s) for s in self.shapes)
        super().__init__(f"{op}: incompatible shapes {joined}")


class ZeroNormError(MaskMixError, ArithmeticError):
    pass


class AutogradError(MaskMixError, RuntimeError):
    pass


class NonFiniteError(MaskMixError, ArithmeticError):
    def __init__(self, message, block=None, iteration=None, term=None):
        super().__init__(message)
        self.block = block
        self.iteration = iteration
        self.term = term


class LayoutMismatchError(MaskMixError, ValueError):
    pass


class DigestMismatchError(MaskMixError, ValueError):
    def __init__(self, what, expected, found):
        self.what = what
        self.expected = expected
        self.found = found
        super().__init__(f"{what} digest mismatch: expected {expected}, found {found}")


class FormatError(MaskMixError, ValueError):
    pass
