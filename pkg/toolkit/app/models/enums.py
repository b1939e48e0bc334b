import enum


class L0Sign(str, enum.Enum):
    PLUS = "plus"
    MINUS = "minus"


class OperatorKind(str, enum.Enum):
    L0_PLUS = "L0_plus"
    L0_MINUS = "L0_minus"
    TK = "Tk"
    STRIP = "strip"
    CUSTOM = "custom"


class BranchStatus(str, enum.Enum):
    COMPLETE = "COMPLETE"
    LOST = "LOST"


class StepMethod(str, enum.Enum):
    GUESS = "GUESS"
    SECANT = "SECANT"
    FIXED_AMPLITUDE = "FIXED_AMPLITUDE"
    ARCLENGTH = "ARCLENGTH"


class CellStatus(str, enum.Enum):
    CONVERGED = "converged"
    DIVERGED = "diverged"


class Verdict(str, enum.Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    SKIPPED = "SKIPPED"
