"""Exception hierarchy shared by the analysis, search and simulation layers.

Every exception carries a short machine-readable ``code`` that the CLI
copies into its JSON error payload.
"""


class ExpStabError(Exception):
    code = "error"


class DimensionMismatch(ExpStabError, ValueError):
    code = "dimension-mismatch"


class NonBracketedRoot(ExpStabError, ArithmeticError):
    code = "non-bracketed-root"


class ToleranceNotMet(ExpStabError, ArithmeticError):
    code = "tolerance-not-met"


class OrthogonalityViolation(ExpStabError, ValueError):
    code = "orthogonality-violation"


class IndexOutOfRange(ExpStabError, IndexError):
    code = "index-out-of-range"


class InvalidParams(ExpStabError, ValueError):
    code = "invalid-params"


class NotAWitness(ExpStabError, ValueError):
    code = "not-a-witness"


class NonHomogeneous(ExpStabError, ValueError):
    code = "non-homogeneous"


class NumericalFailure(ExpStabError, RuntimeError):
    code = "numerical-failure"


class InfeasibleAtLo(ExpStabError, RuntimeError):
    code = "infeasible-at-lo"


class BracketInvalid(ExpStabError, ValueError):
    code = "bracket-invalid"


class StepTooLarge(ExpStabError, ValueError):
    code = "step-too-large"


class NonFinite(ExpStabError, ArithmeticError):
    code = "non-finite"


class DegenerateWindow(ExpStabError, ValueError):
    code = "degenerate-window"


class ConfigError(ExpStabError, ValueError):
    code = "config-error"
