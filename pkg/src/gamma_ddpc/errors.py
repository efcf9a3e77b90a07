class ConfigError(ValueError):
    """Invalid or inconsistent configuration (system definition, experiment file)."""


class SingularFactorError(ArithmeticError):
    """A triangular factor needed for a solve is singular at tolerance."""


class QpError(RuntimeError):
    """QP could not be solved; ``result`` carries status and certificate."""

    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result
