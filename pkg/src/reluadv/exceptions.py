"""Exception hierarchy for reluadv."""


class ReluAdvError(Exception):
    """Base class for all errors raised by this package."""


class InvalidDimensionError(ReluAdvError, ValueError):
    pass


class InvalidInputError(ReluAdvError, ValueError):
    pass


class ConvergenceError(ReluAdvError, ArithmeticError):
    """An iterative numerical routine did not converge.

    ``residual`` holds the last observed change (or residual) when the
    iteration cap was hit.
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class KinkProximityError(ReluAdvError, ValueError):
    """A finite-difference stencil would cross a ReLU kink."""

    def __init__(self, layer, neuron, value, margin):
        super().__init__(
            f"pre-activation {value:.3e} of neuron {neuron} in layer {layer} "
            f"is within {margin:.3e} of the ReLU kink"
        )
        self.layer = layer
        self.neuron = neuron


class RankDeficiencyError(ReluAdvError, ValueError):
    pass


class InvalidFractionError(ReluAdvError, ValueError):
    pass


class FormatError(ReluAdvError, ValueError):
    pass


class LengthError(FormatError):
    pass


class ConsistencyError(FormatError):
    pass


class InvalidLabelError(ReluAdvError, ValueError):
    pass


class DegenerateExampleError(ReluAdvError, ValueError):
    def __init__(self, index):
        super().__init__(f"example {index} has zero norm and cannot be normalized")
        self.index = index


class SamplingError(ReluAdvError, RuntimeError):
    pass


class TrainingDivergenceError(ReluAdvError, FloatingPointError):
    pass


class SpecError(ReluAdvError, ValueError):
    pass


class DataMissingError(ReluAdvError, FileNotFoundError):
    pass
