"""Exception types shared across the package."""


class MultimodesError(Exception):
    """Base class for all errors raised by this package."""


class InvalidMesh(MultimodesError):
    """Mesh construction parameters are unusable."""


class ShapeError(MultimodesError):
    """Dimension mismatch between vectors, matrices or meshes."""


class CoercivityViolation(MultimodesError):
    """A diffusion coefficient is non-positive at a quadrature point.

    Signals that the almost-sure lower bound on the realized coefficient
    (required for well-posedness and SPD systems) is broken.
    """


class FieldEvaluationError(MultimodesError):
    """A coefficient/source field evaluated to a non-finite value."""


class NotPositiveDefinite(MultimodesError):
    """Cholesky factorization hit a non-positive pivot."""


class KernelError(MultimodesError):
    """Invalid covariance kernel (asymmetry, unsupported domain, ...)."""


class DegenerateField(MultimodesError):
    """KL weak-forming requires a strictly positive leading eigenvalue."""


class UnsupportedSpec(MultimodesError):
    """Operation does not support the given random-field specification."""


class InvalidData(MultimodesError):
    """Statistical/convergence input data violates a precondition."""


class ConfigError(MultimodesError):
    """Unparseable or invalid experiment configuration."""
