"""Exception hierarchy shared by every kdt module."""


class KDTError(Exception):
    """Base class for all errors raised by kdt."""


class InvalidInputError(KDTError, ValueError):
    """Non-finite coordinates, empty collections, bad parameters."""


class DegenerateTriangleError(KDTError, ValueError):
    """A predicate needed a proper triangle but got three collinear points."""


class DuplicatePointError(KDTError, ValueError):
    def __init__(self, first, second, message=None):
        self.indices = (first, second)
        super().__init__(message or f"points {first} and {second} coincide")


class DegenerateInputError(KDTError, ValueError):
    """The input has no Delaunay triangulation (all collinear)."""


class TooFewPointsError(DegenerateInputError):
    pass


class InvalidVertexError(KDTError, KeyError):
    pass


class DegenerateResultError(KDTError):
    """A deletion would leave fewer than 3 vertices or only collinear ones."""


class OutOfDomainError(KDTError, ValueError):
    pass


class DuplicateOverflowError(KDTError):
    """Quad-tree splitting cannot separate more than `threshold` coincident points."""


class InvalidTransferError(KDTError):
    pass


class InternalConsistencyError(KDTError):
    """The mesh lost the Delaunay property or structural integrity."""


class ParseError(KDTError, ValueError):
    def __init__(self, path, line, message):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")
