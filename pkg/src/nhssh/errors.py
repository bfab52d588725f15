"""Exception hierarchy shared across the toolkit.

Every numerical failure derives from :class:`NumericalError` so the CLI can
map it to a single exit code; oracle mismatches have their own branch.
"""


class NhsshError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(NhsshError, ValueError):
    """Invalid configuration or parameter values."""


class PhaseError(ConfigError):
    """Parameters are in the wrong phase for the requested operation."""


class NumericalError(NhsshError, ArithmeticError):
    """A computation failed at the current working precision."""


class DomainError(NumericalError):
    """Function evaluated at a point outside its domain (pole, branch point)."""


class SingularMatrix(NumericalError):
    """A pivot vanished at working precision; raise the digit count."""


class NoConvergence(NumericalError):
    """Iterative eigensolver exceeded its sweep cap."""


class NearDefective(NumericalError):
    """Eigenvector basis too ill-conditioned for a spectral matrix function."""


class DefectivePoint(NumericalError):
    """Left and right eigenvectors are numerically orthogonal (exceptional point)."""


class BranchInconsistency(NumericalError):
    """Closed-form symbol and eigenvector construction disagree."""


class PairingMismatch(NumericalError):
    """Kernel spectrum does not match the correlation spectrum."""


class ComplexSpectrum(NumericalError):
    """Many-body ground energy is not real (PT-broken phase)."""


class DegenerateGround(NumericalError):
    """No gap above the many-body ground energy."""


class SizeError(ConfigError):
    """System too large for exact diagonalization."""


class OracleMismatch(NhsshError):
    """Gaussian and exact-diagonalization pipelines disagree."""
