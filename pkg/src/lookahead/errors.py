"""Exception hierarchy shared by all modules.

``PreconditionError`` covers invalid inputs and violated hypotheses (CLI exit
code 2); ``NumericalError`` covers failures of the numerics themselves (exit 3).
"""


class PreconditionError(ValueError):
    pass


class NumericalError(RuntimeError):
    pass


class HypothesisViolation(PreconditionError):
    """The flux does not satisfy the admissibility hypotheses."""


class ThresholdError(PreconditionError):
    pass


class CFLViolation(NumericalError):
    pass


class DomainExit(NumericalError):
    pass


class StepFloorError(NumericalError):
    pass
