"""Exception hierarchy shared by all qsc modules.

Errors that point at a specific singularity carry the pole index in
``pole_index`` so callers (and the CLI) can name the offending pole.
"""


class QSCError(Exception):
    """Base class for all qsc errors."""

    def __init__(self, message, pole_index=None):
        if pole_index is not None:
            message = f"{message} (pole {pole_index})"
        super().__init__(message)
        self.pole_index = pole_index


# -- liealg ------------------------------------------------------------------

class DimensionMismatch(QSCError):
    pass


class SingularGroupElement(QSCError):
    pass


class NonSemisimple(QSCError):
    pass


class DegenerateSpectrum(QSCError):
    pass


class DegenerateGram(QSCError):
    pass


# -- connection --------------------------------------------------------------

class ResonantCharges(QSCError):
    pass


class CoincidentPoles(QSCError):
    pass


class NonZeroResidueSum(QSCError):
    pass


class NonSemisimpleResidue(QSCError):
    pass


class EvaluationAtPole(QSCError):
    pass


class UnsupportedAlgebra(QSCError):
    pass


class DegenerateCharge(QSCError):
    pass


class ZeroB(QSCError):
    pass


# -- flatsection -------------------------------------------------------------

class PoleClearanceViolated(QSCError):
    pass


class StepUnderflow(QSCError):
    pass


class MatchingFailed(QSCError):
    pass


class OutsideConvergenceDomain(QSCError):
    pass


class GammaPole(QSCError):
    pass


# -- cycles ------------------------------------------------------------------

class NonTransversal(QSCError):
    pass


class BasisDegenerate(QSCError):
    pass


class DivergentPeriod(QSCError):
    pass


class QuadratureFailure(QSCError):
    pass


class InconsistentVariation(QSCError):
    pass


# -- periods -----------------------------------------------------------------

class SingularTau(QSCError):
    pass


class NonConvergent(QSCError):
    pass


# -- isomonodromy ------------------------------------------------------------

class CollisionGuard(QSCError):
    pass


class BranchAmbiguity(QSCError):
    pass


# -- matrixmodel -------------------------------------------------------------

class NonIntegrableWeight(QSCError):
    pass


class HankelBreakdown(QSCError):
    pass


class HilbertTransformFailure(QSCError):
    pass
