"""Exception hierarchy.

Every exception carries a short machine-readable ``code`` (used by the CLI
for its one-line JSON error output) and an ``exit_code``: 2 for input or
configuration problems, 3 for numerical failures encountered mid-run.
"""


class FlatCircleError(Exception):
    code = "error"
    exit_code = 3


class InvalidParameterError(FlatCircleError):
    code = "invalid-parameter"
    exit_code = 2


class PrecisionTooLowError(FlatCircleError):
    code = "precision-too-low"
    exit_code = 2


class PrecisionExhaustedError(FlatCircleError):
    code = "precision-exhausted"
    exit_code = 3


class RationalDetectedError(FlatCircleError):
    """An orbit re-entered the flat interval: the rotation number is rational
    (or indistinguishable from rational at working precision)."""

    code = "rational-detected"
    exit_code = 3


class BracketInvalidError(FlatCircleError):
    code = "bracket-invalid"
    exit_code = 2


class ContainsCriticalValueError(FlatCircleError):
    code = "contains-critical-value"
    exit_code = 3


class TuningFailedError(FlatCircleError):
    code = "tuning-failed"
    exit_code = 3


class CombinatoricsViolationError(FlatCircleError):
    """Partition bookkeeping broke: numerical corruption or rational rho."""

    code = "combinatorics-violation"
    exit_code = 3

    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element


class DegenerateQuadrupleError(FlatCircleError):
    code = "degenerate-quadruple"
    exit_code = 2


class DegenerateTripleError(FlatCircleError):
    code = "degenerate-triple"
    exit_code = 2


class ChainEntersFlatError(FlatCircleError):
    """A cross-ratio chain violated the (b_i, c_i) disjointness requirement."""

    code = "chain-enters-flat"
    exit_code = 3

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class InPreimageError(FlatCircleError):
    """The point is interior to a preimage interval, hence not codable."""

    code = "in-preimage"
    exit_code = 2

    def __init__(self, index, level):
        super().__init__(f"point is interior to preimage {index} (level {level})")
        self.index = index
        self.level = level


class InFlatError(FlatCircleError):
    code = "in-flat"
    exit_code = 2


class CodeInvalidError(FlatCircleError):
    code = "code-invalid"
    exit_code = 2


class NoSuchKError(FlatCircleError):
    code = "no-such-k"
    exit_code = 3


class ResolutionExhaustedError(FlatCircleError):
    code = "resolution-exhausted"
    exit_code = 3


class MismatchedCombinatoricsError(FlatCircleError):
    code = "mismatched-combinatorics"
    exit_code = 2


class LevelTooShallowError(FlatCircleError):
    code = "level-too-shallow"
    exit_code = 2


class ConfigError(FlatCircleError):
    code = "config"
    exit_code = 2
