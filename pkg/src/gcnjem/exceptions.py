"""Exception hierarchy for the package.

Three families, matching the CLI exit-code contract: configuration problems
(exit 2), data/artifact problems (exit 3), and numerical failures (exit 4).
"""


class GcnJemError(Exception):
    """Base class for all package errors."""


class ConfigError(GcnJemError, ValueError):
    """Invalid configuration value, key, or invariant violation."""


class DataError(GcnJemError, ValueError):
    """Invalid or missing dataset / checkpoint / artifact."""


class NumericalError(GcnJemError, ArithmeticError):
    """Numerical failure during computation."""


# -- graph structure ---------------------------------------------------------

class ExistingSelfLoop(DataError):
    """A self-loop is already stored where one would be inserted."""


class ZeroDegree(DataError):
    """A node has zero degree where strictly positive degree is required."""


class SelfEdgeRejected(ConfigError):
    """Edge insertion between a node and itself."""


class NotSymmetric(DataError):
    """Operation requires a symmetric adjacency."""


class DimensionMismatch(ConfigError):
    """Operand shapes are incompatible."""


class ConvergenceFailure(NumericalError):
    """Iterative eigensolver exceeded its iteration cap."""


# -- differentiation ---------------------------------------------------------

class UnrecordedSlot(ConfigError):
    """A slot was referenced that the tape never produced."""


class EmptyMask(ConfigError):
    """A node-subset mask selects no nodes."""


class IndexOutOfRange(ConfigError):
    """A node or class index is outside its valid range."""


# -- losses and sampling -----------------------------------------------------

class NonFiniteLoss(NumericalError):
    """A loss term evaluated to NaN or infinity."""


class NonFiniteSample(NumericalError):
    """A sampled feature vector contains NaN or infinity."""


class ZeroNormalizer(NumericalError):
    """A whole-graph energy normalizer is too close to zero to divide by."""


# -- persistence -------------------------------------------------------------

class MissingFile(DataError):
    """A required input file does not exist."""


class RaggedFeatureRows(DataError):
    """Feature rows do not all have the same width."""


class LabelOutOfRange(DataError):
    """A label is negative (other than the -1 sentinel) or inconsistent."""


class CorruptMagic(DataError):
    """A binary file does not start with the expected magic bytes."""


class TruncatedFile(DataError):
    """A binary file ended before its declared payload."""


class ConfidenceOutOfRange(ConfigError):
    """A confidence value lies outside [0, 1]."""
