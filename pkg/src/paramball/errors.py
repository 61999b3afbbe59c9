"""Exception types shared across the package."""


class DomainError(ValueError):
    """Argument outside the domain of a polynomial or basis function."""


class PoleSingularityError(ArithmeticError):
    """Azimuthal derivative requested at a pole of the spherical parameterization."""


class DegenerateFaceError(ValueError):
    def __init__(self, faces, message=None):
        self.faces = list(int(f) for f in faces)
        shown = ", ".join(str(f) for f in self.faces[:20])
        more = "" if len(self.faces) <= 20 else f" (+{len(self.faces) - 20} more)"
        super().__init__(message or f"degenerate faces: {shown}{more}")


class ObjParseError(ValueError):
    def __init__(self, lineno, message):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


class BandMismatchError(ValueError):
    pass


class MissingFitError(RuntimeError):
    pass


class InvalidDistributionError(ValueError):
    pass


class ProtocolError(RuntimeError):
    """Base class for gradient-provider transport failures."""


class MalformedFrameError(ProtocolError):
    pass


class ProviderTimeout(ProtocolError):
    pass


class ProviderFailure(ProtocolError):
    def __init__(self, status):
        self.status = status
        super().__init__(f"provider reported failure status {status}")


class AttackError(RuntimeError):
    def __init__(self, iteration, cause):
        self.iteration = iteration
        super().__init__(f"attack failed at iteration {iteration}: {cause}")
