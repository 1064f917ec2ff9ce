"""Exception hierarchy shared by every module."""

from __future__ import annotations


class MfgError(Exception):
    """Base class for all package errors."""


# measures
class DimensionMismatch(MfgError):
    pass


class AssignmentTooLarge(MfgError):
    pass


class UnequalSupportSize(MfgError):
    pass


class InvalidMeasure(MfgError):
    pass


# models
class InvalidParameters(MfgError):
    pass


class NewtonDiverged(MfgError):
    pass


# verify
class DegeneratePair(MfgError):
    pass


class MissingThirdDerivatives(MfgError):
    pass


class MissingCompanions(MfgError):
    pass


# solve
class FixedPointNotConverged(MfgError):
    def __init__(self, message: str, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals or [])


class BvpNotConverged(MfgError):
    pass


class MassLeak(MfgError):
    pass


class OutsideGrid(MfgError):
    pass


# turnpike
class MisalignedBundles(MfgError):
    pass


class WindowTooShort(MfgError):
    pass


class HorizonTooShort(MfgError):
    pass


class IncompatibleStudies(MfgError):
    pass


# cli
class ConfigInvalid(MfgError):
    pass


class ArtifactCorrupt(MfgError):
    pass
