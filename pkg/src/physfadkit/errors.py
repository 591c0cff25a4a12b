"""Exception hierarchy shared by all physfadkit modules."""


class PhysfadkitError(Exception):
    """Base class for all errors raised by this package."""


class SingularMatrixError(PhysfadkitError):
    """Matrix is singular or numerically indistinguishable from singular."""


class IllConditionedWarning(UserWarning):
    """Inversion proceeded but the reciprocal condition estimate is below 1e-12."""


class NonConvergenceError(PhysfadkitError):
    """An iterative scheme hit its iteration cap without meeting its tolerance."""


class DomainError(PhysfadkitError, ValueError):
    """Argument outside the mathematical domain of a special function."""


class DivergenceDetectedError(PhysfadkitError):
    """A power series shows sustained term growth or exceeds its term cap."""


class EnergyConservationError(PhysfadkitError):
    """Im(1/alpha) fell below the radiation-loss floor k^2/(4*eps*delta)."""


class CoincidentPointsError(PhysfadkitError):
    """Two evaluation points are closer than the minimum dipole separation."""


class LengthMismatchError(PhysfadkitError):
    """A configuration vector does not match the scene's RIS element count."""


class HeterogeneousAlphaError(PhysfadkitError):
    """Coupling-constant formula requires identical polarizability magnitudes."""


class NotConvergentError(PhysfadkitError):
    """A bound formula was evaluated with a coupling constant >= 1."""


class NotHollowSymmetricError(PhysfadkitError):
    """Matrix is not complex symmetric with a (numerically) zero diagonal."""


class RankDeficientError(PhysfadkitError):
    """Calibration design matrix does not span the regression unknowns."""


class NoDecayDetectedError(PhysfadkitError):
    """Impulse-response envelope has no usable exponential decay window."""


class PlacementExhaustedError(PhysfadkitError):
    """Rejection sampling failed to place dipoles within the retry budget."""
