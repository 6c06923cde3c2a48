"""Exception hierarchy shared by all modules."""


class AmgError(Exception):
    """Base class for every error raised by auxamg."""


class ArgumentError(AmgError, ValueError):
    pass


class SizeError(AmgError, ValueError):
    """Vector or matrix dimensions do not agree."""


class CapacityError(AmgError):
    """A row holds more nonzeros than the fixed ELL width allows."""


class StructureError(AmgError):
    """Sparsity/symmetry precondition violated (missing diagonal, nonsymmetric, stencil overflow)."""


class DefinitenessError(AmgError):
    """Nonpositive diagonal, singular block, or singular coarsest matrix."""


class GeometryError(AmgError, ValueError):
    """Degenerate bounding box, point outside the box, degenerate triangle."""


class SingularSmootherError(AmgError):
    pass


class ParseError(AmgError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)
