"""Exception hierarchy; every error knows the exit code the CLI reports for it."""


class PfpError(Exception):
    exit_code = 1


class ChannelParseError(PfpError):
    exit_code = 2


class ChannelValidationError(ChannelParseError):
    pass


class ConfigurationError(PfpError):
    exit_code = 2


class RIParseError(PfpError):
    exit_code = 2

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class BudgetExceededError(PfpError):
    exit_code = 3


class InvariantViolationError(PfpError):
    exit_code = 4


class NotHermitianError(InvariantViolationError):
    def __init__(self, max_asymmetry: float, tolerance: float):
        super().__init__(
            f"matrix is not Hermitian: max |M - M^dagger| = {max_asymmetry:.3e} > {tolerance:.0e}"
        )
        self.max_asymmetry = max_asymmetry


class NegativeEigenvalueError(InvariantViolationError):
    def __init__(self, eigenvalue: float):
        super().__init__(f"negative eigenvalue {eigenvalue:.3e} below clipping tolerance")
        self.eigenvalue = eigenvalue


class RuleNotApplicableError(InvariantViolationError):
    pass
