"""Exception types shared across the package.

Every error raised on a contract violation derives from SubspaceLabError so
callers (and the CLI) can distinguish our failures from genuine bugs.
"""


class SubspaceLabError(Exception):
    """Base class for all package errors."""


class ConfigError(SubspaceLabError):
    """Bad, missing, or unknown configuration values."""


# --- partition ---

class InvalidDimensions(SubspaceLabError):
    """Feature dimension / class count combination is not partitionable."""


class ClassOutOfRange(SubspaceLabError):
    """Class index outside [0, C)."""


class LengthMismatch(SubspaceLabError):
    """Vector length does not match the partition dimension."""


# --- network engine ---

class ShapeMismatch(SubspaceLabError):
    """Array shapes are inconsistent with the model or partition."""


class NonFiniteInput(SubspaceLabError):
    """Input contains NaN or Inf."""


class LabelOutOfRange(SubspaceLabError):
    """A label lies outside [0, C)."""


class StaleTape(SubspaceLabError):
    """Backward called with a tape from before a parameter update."""


class NonFiniteGradient(SubspaceLabError):
    """A gradient (or updated parameter) is NaN or Inf."""


class NonFiniteLoss(SubspaceLabError):
    """Training loss became NaN or Inf."""


# --- regularizers ---

class DegenerateNorm(SubspaceLabError):
    """A vector norm required to be positive is numerically zero."""


# --- diagnostics ---

class InsufficientSamples(SubspaceLabError):
    """Not enough samples for the requested statistic."""


class NoLiveNeurons(SubspaceLabError):
    """Every eligible feature dimension has zero activation variance."""


class DegenerateScatter(SubspaceLabError):
    """Within-class scatter trace is numerically zero."""


class SingleClass(SubspaceLabError):
    """A metric requiring at least two classes saw only one."""


class AllDead(SubspaceLabError):
    """No live feature dimension remains after dead-neuron exclusion."""


# --- robustness / theory ---

class DegenerateWeights(SubspaceLabError):
    """Classifier weight rows too close for a margin to be defined."""


class ConditionViolated(SubspaceLabError):
    """Tail-bound precondition (margin vs noise energy) does not hold."""


class MinTrials(SubspaceLabError):
    """Monte-Carlo trial count below the minimum for a meaningful check."""


class TheoryCheckFailed(SubspaceLabError):
    """An empirical verification of a theoretical guarantee failed."""


# --- data & checkpoints ---

class BadMagic(SubspaceLabError):
    """File does not start with the expected magic number."""


class TruncatedFile(SubspaceLabError):
    """File ends before the records promised by its header."""


class LabelRangeError(SubspaceLabError):
    """Loaded labels fall outside the declared class range."""


class VersionMismatch(SubspaceLabError):
    """Checkpoint format version is not supported."""


class CorruptCheckpoint(SubspaceLabError):
    """Checkpoint failed its integrity check."""


class IncompatibleShapes(SubspaceLabError):
    """Checkpoint and dataset (or partition) shapes do not line up."""
