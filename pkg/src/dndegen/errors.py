"""Exception types raised across the package."""


class DNDegenError(Exception):
    """Base class for all errors raised by dndegen."""


class SingularDN(DNDegenError):
    pass


class NotMeanZero(DNDegenError):
    pass


class TruncationMismatch(DNDegenError):
    pass


class GeometryError(DNDegenError):
    pass


class MeshError(DNDegenError):
    pass


class SolverError(DNDegenError):
    pass


class ResolutionError(DNDegenError):
    pass


class DegenerateBasis(DNDegenError):
    pass


class MultipleCandidates(DNDegenError):
    """More than one discrete eigenvalue of iH was found in the search band."""

    def __init__(self, message, candidates=()):
        super().__init__(message)
        self.candidates = tuple(candidates)


class LargeResidual(DNDegenError):
    pass


class NormalizationViolated(DNDegenError):
    pass


class NotSiegel(DNDegenError):
    pass


class SlowConvergence(DNDegenError):
    pass


class NearDegenerate(DNDegenError):
    """A Rosenhain denominator theta constant vanished numerically."""

    def __init__(self, message, characteristic=None, value=None):
        super().__init__(message)
        self.characteristic = characteristic
        self.value = value


class InsufficientData(DNDegenError):
    pass


class NonPositiveLength(DNDegenError):
    pass


class NonPositiveModulus(DNDegenError):
    pass


class DivisionByZero(DNDegenError, ZeroDivisionError):
    pass
