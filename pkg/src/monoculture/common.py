"""Shared exception types and exact-number helpers."""

from __future__ import annotations

from fractions import Fraction
from numbers import Rational


class MonocultureError(Exception):
    """Base class for errors raised by this package."""


class InvalidInput(MonocultureError, ValueError):
    """Malformed or inconsistent input."""


class ResourceLimit(MonocultureError):
    """An enumeration would exceed its configured budget."""

    def __init__(self, message: str, count: int | None = None):
        super().__init__(message)
        self.count = count


class UnsupportedConfiguration(MonocultureError, ValueError):
    """The requested operation is not available for this configuration."""


class InvalidPolicy(MonocultureError):
    """A selection policy picked a candidate that was not available."""


def as_fraction(value) -> Fraction:
    """Convert ints, decimal strings, "p/q" strings and floats to a Fraction.

    Floats go through their shortest repr, so ``0.475`` becomes ``19/40``.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise InvalidInput(f"not a number: {value!r}")
    if isinstance(value, (int, Rational)):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise InvalidInput(f"not a rational number: {value!r}") from exc
    try:
        return Fraction(repr(float(value)))
    except (TypeError, ValueError) as exc:
        raise InvalidInput(f"not a number: {value!r}") from exc


def frac_str(value: Fraction) -> str:
    return str(Fraction(value))
