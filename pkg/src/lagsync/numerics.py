"""Signed fractional powers, vector norms and randomized inequality oracles.

Exponents that must keep the sign of their base are carried as
:class:`OddRational` values (ratio of two odd integers), so that
``x ** p`` is an odd function of ``x`` and agrees with ``sig^p(x)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np

from .errors import InvalidExponents, NonPositiveExponent


@dataclass(frozen=True)
class OddRational:
    """Exact rational exponent ``num/den`` with both integers odd."""

    num: int
    den: int

    def __post_init__(self):
        if not isinstance(self.num, int) or not isinstance(self.den, int):
            raise InvalidExponents("numerator and denominator must be integers")
        if self.den <= 0:
            raise InvalidExponents(f"denominator must be positive, got {self.den}")
        g = np.gcd(self.num, self.den)
        num, den = self.num // g, self.den // g
        if num % 2 == 0 or den % 2 == 0:
            raise InvalidExponents(f"{self.num}/{self.den} is not a ratio of two odd integers")
        object.__setattr__(self, "num", int(num))
        object.__setattr__(self, "den", int(den))

    @classmethod
    def parse(cls, text: str) -> "OddRational":
        """Parse ``"7/9"`` (or a bare odd integer such as ``"3"``)."""
        if not isinstance(text, str):
            raise InvalidExponents(
                f"odd-ratio exponent must be given as a 'num/den' string, got {text!r}"
            )
        parts = text.strip().split("/")
        try:
            if len(parts) == 1:
                return cls(int(parts[0]), 1)
            if len(parts) == 2:
                return cls(int(parts[0]), int(parts[1]))
        except ValueError:
            pass
        raise InvalidExponents(f"cannot parse exponent {text!r}")

    @classmethod
    def from_fraction(cls, frac: Fraction) -> "OddRational":
        frac = Fraction(frac)
        return cls(frac.numerator, frac.denominator)

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.num, self.den)

    def __float__(self) -> float:
        return self.num / self.den

    def __str__(self) -> str:
        return f"{self.num}/{self.den}" if self.den != 1 else str(self.num)


Exponent = Union[OddRational, float, int]


def as_odd_rational(value) -> OddRational:
    """Coerce to :class:`OddRational`, rejecting floats.

    Floats are refused on purpose: an odd-ratio exponent has to survive
    exactly, and ``0.7777…`` cannot be told apart from a non-odd ratio.
    """
    if isinstance(value, OddRational):
        return value
    if isinstance(value, Fraction):
        return OddRational.from_fraction(value)
    if isinstance(value, str):
        return OddRational.parse(value)
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return OddRational(int(value), 1)
    raise InvalidExponents(f"exponent {value!r} must be an odd ratio, not a float")


def sigpow(x, p: Exponent) -> np.ndarray:
    """Element-wise ``sign(x) * |x|**p``; ``x == 0`` maps to 0."""
    pf = float(p)
    if not pf > 0:
        raise NonPositiveExponent(f"exponent must be positive, got {p}")
    x = np.asarray(x, dtype=float)
    return np.copysign(np.abs(x) ** pf, x)


@dataclass(frozen=True)
class NormSet:
    l1: float
    l2: float


def norms(x) -> NormSet:
    x = np.asarray(x, dtype=float).ravel()
    return NormSet(l1=float(np.sum(np.abs(x))), l2=float(np.linalg.norm(x)))


def oracle_lemma1(xs, p: float) -> tuple[float, float]:
    """Slacks of the power-sum sandwich inequality.

    For ``p <= 1``: ``(sum|x|)^p <= sum|x|^p <= n^(1-p) (sum|x|)^p``.
    For ``p > 1``: ``sum|x|^p <= (sum|x|)^p <= n^(p-1) sum|x|^p``.
    Returns ``(middle - left, right - middle)``; both are >= 0 when the
    inequality holds.
    """
    a = np.abs(np.asarray(xs, dtype=float).ravel())
    n = a.size
    if n == 0:
        raise ValueError("xs must be nonempty")
    p = float(p)
    total = a.sum()
    power_sum = np.sum(a**p)
    if p <= 1.0:
        left, middle, right = total**p, power_sum, n ** (1.0 - p) * total**p
    else:
        left, middle, right = power_sum, total**p, n ** (p - 1.0) * power_sum
    return float(middle - left), float(right - middle)


def oracle_lemma2(xi: float, xj: float, p: Exponent) -> float:
    """Slack ``2^(1-p)|xi - xj|^p - |xi^p - xj^p|`` for odd-ratio ``p`` in (0, 1]."""
    pf = float(p)
    if not 0.0 < pf <= 1.0:
        raise NonPositiveExponent(f"p must lie in (0, 1], got {p}")
    lhs = abs(float(sigpow(xi, p)) - float(sigpow(xj, p)))
    return float(2.0 ** (1.0 - pf) * abs(xi - xj) ** pf - lhs)


def oracle_lemma3(xi: float, xj: float, c: float, d: float, r: float) -> float:
    """Slack of the weighted Young inequality bounding ``|xi|^c |xj|^d``."""
    if min(c, d, r) <= 0:
        raise ValueError("c, d and r must be positive")
    ai, aj = abs(xi), abs(xj)
    rhs = c / (c + d) * r * ai ** (c + d) + d / (c + d) * r ** (-c / d) * aj ** (c + d)
    return float(rhs - ai**c * aj**d)
