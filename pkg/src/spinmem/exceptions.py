"""Exception and warning classes.

Validation problems derive from :class:`ValidationError` (CLI exit code 1);
numerical failures derive from :class:`NumericalError` (exit code 2).
"""
from __future__ import annotations


class SpinmemError(Exception):
    pass


class SpinmemWarning(UserWarning):
    pass


class DurationTooShort(SpinmemWarning):
    pass


class ValidationError(SpinmemError, ValueError):
    """One or more invalid inputs.  ``errors`` lists every violation found."""

    def __init__(self, errors=None, message=None):
        if errors is None:
            errors = [self]
        elif not isinstance(errors, (list, tuple)):
            errors = [errors]
        self.errors = list(errors)
        if message is None:
            message = "; ".join(str(e) if isinstance(e, Exception) else e for e in self.errors)
        super().__init__(message)


class NonPositiveParameter(ValidationError):
    def __init__(self, name: str, value: float):
        self.name = name
        self.value = value
        super().__init__(message=f"{name} must be positive (got {value!r})")


class NonPositiveInput(ValidationError):
    def __init__(self, message: str):
        super().__init__(message=message)


class NarrowbandViolated(ValidationError):
    def __init__(self, gamma_Hz: float, larmor_Hz: float):
        super().__init__(
            message=f"narrow-band regime requires gamma_Hz < larmor_Hz "
            f"(got {gamma_Hz!r} >= {larmor_Hz!r})"
        )


class UnknownConvention(ValidationError):
    def __init__(self, name: str):
        super().__init__(
            message=f"unknown rate convention {name!r}; expected one of "
            "HWHM-Hz, FWHM-Hz, angular-rad/s, lifetime-s"
        )


class StepTooLarge(ValidationError):
    pass


class SegmentTooLong(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class EpsTooCloseToOne(ValidationError):
    pass


class NumericalError(SpinmemError):
    pass


class InsufficientData(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class PeakNotFound(NumericalError):
    pass
