"""Exception types shared across the package.

ValidationError maps to CLI exit code 1, NumericalError to exit code 2.
"""


class NlperimError(Exception):
    pass


class ValidationError(NlperimError):
    """Bad inputs: violated preconditions, malformed config, shape mismatches."""


class SingularityError(ValidationError):
    """Evaluation of a singular kernel at the origin."""


class NumericalError(NlperimError):
    """Numerical failure: solver divergence, non-summable kernel, broken identity."""
