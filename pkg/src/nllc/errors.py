"""Exception types shared across the package."""


class NllcError(Exception):
    """Base class for all package errors."""

    tag = "error"


class ConfigError(NllcError):
    """Bad experiment configuration; carries the offending field name."""

    tag = "config_error"

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class QuadratureUnderresolved(NllcError):
    """Successive quadrature refinements disagree beyond tolerance."""

    tag = "quadrature_underresolved"


class ResolutionMismatch(NllcError):
    """Lattice spacing too coarse for the requested kernel scale or region."""

    tag = "resolution_mismatch"


class OutsideMomentDomain(NllcError):
    """An order-parameter value is at or outside the boundary of the moment set."""

    tag = "outside_moment_domain"


class DegenerateMinimum(NllcError):
    """Transverse curvature of the bulk potential on its zero set is below tolerance."""

    tag = "degenerate_minimum"


class LayerTooThin(NllcError):
    """Boundary-layer mask violates the thickness required by the kernel tail."""

    tag = "layer_too_thin"


class MaxIterations(NllcError):
    """An iterative solve hit its iteration cap before reaching tolerance."""

    tag = "max_iterations"

    def __init__(self, message: str, result=None):
        self.result = result
        super().__init__(message)


class PreconditionNotMet(NllcError):
    """A diagnostic's small-energy (or similar) hypothesis fails; reported, not fatal."""

    tag = "precondition_not_met"
