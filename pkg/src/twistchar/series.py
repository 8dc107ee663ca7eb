"""Summation of the alternating shell series, analytic continuation to
s = 0, and the normalization constants.

The shell series is sum_n s(n) q^(-n m) e_n with m = 2(s-1), where for a
volume profile s(n) = (-1)^n (the unramified character contributes the
alternation) and for a character-sum profile s(n) = 1 (the signs are
already inside the entries).  At s = 0 one has q^(-nm) = q^(2n) and the
series diverges; its value is defined as the finite head plus the closed
form of the geometric tail continued outside the convergence region:
for a tail e_n = C q^(-n) (n >= n0), the alternating continuation is
C (-q)^n0 / (1 + q).

Everything is an exact rational at fixed q; powers q^(k/2) are carried
symbolically via QPowerValue, never as floats.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

from .localfield import CharDescriptor, legendre
from .volumes import CharSumProfile, VolumeProfile

Profile = Union[VolumeProfile, CharSumProfile]


class NoGeometricTail(ArithmeticError):
    """Computed entries never stabilize into an exact 1/q-ratio (or zero)
    tail; signals a counting bug or an insufficient n_max."""


@dataclass(frozen=True)
class TailModel:
    """Exact tail e_n = coefficient * q^(-n) for all computed n >= n0, or
    a zero tail (tail_zero) when e_n = 0 for n >= n0."""

    n0: int
    coefficient: Optional[Fraction]
    tail_zero: bool

    def __post_init__(self):
        if self.tail_zero != (self.coefficient is None):
            raise ValueError("zero tails carry no coefficient")


def fit_tail(profile: Profile) -> TailModel:
    """Least n0 whose tail is exactly geometric with ratio 1/q across all
    computed entries, or exactly zero.

    A geometric tail needs at least two consecutive exact ratios, so
    n0 <= n_max - 2; a zero tail needs two zero entries, n0 <= n_max - 1.
    """
    q = profile.q
    e = profile.entries
    n_max = profile.n_max
    for n0 in range(0, n_max):
        tail = e[n0:]
        if all(x == 0 for x in tail):
            return TailModel(n0=n0, coefficient=None, tail_zero=True)
        if n0 > n_max - 2:
            continue
        if e[n0] != 0 and all(q * e[k + 1] == e[k] for k in range(n0, n_max)):
            return TailModel(n0=n0, coefficient=e[n0] * q ** n0, tail_zero=False)
    raise NoGeometricTail(
        f"profile {profile.label or e} has no exact 1/q tail by n_max={n_max}")


def eval_at_s0(profile: Profile, tail: Optional[TailModel] = None) -> Fraction:
    """Value of the shell series at s = 0 (m = -2): the finite head below
    n0 plus the continued geometric tail."""
    if tail is None:
        tail = fit_tail(profile)
    q = profile.q
    head = Fraction(0)
    for n in range(tail.n0):
        sign = (-1) ** n if profile.alternating else 1
        head += sign * Fraction(q) ** (2 * n) * profile.entries[n]
    if tail.tail_zero:
        return head
    c = tail.coefficient
    if profile.alternating:
        return head + c * Fraction(-q) ** tail.n0 / (1 + q)
    return head + c * Fraction(q) ** tail.n0 / (1 - q)


def partial_sum(profile: Profile, m: int, up_to: int) -> Fraction:
    """Head sum of the shell series at integer m >= 0 (the convergent
    regime), used to sanity-check the tail model before continuation."""
    if m < 0:
        raise ValueError("partial sums are for the convergent regime m >= 0")
    q = profile.q
    total = Fraction(0)
    for n in range(0, min(up_to, profile.n_max) + 1):
        sign = (-1) ** n if profile.alternating else 1
        total += sign * Fraction(1, q ** (n * m)) * profile.entries[n]
    return total


def tail_sum_convergent(tail: TailModel, q: int, m: int, from_n: int,
                        alternating: bool = True) -> Fraction:
    """Exact value of the dropped tail sum_{n >= from_n} s(n) q^(-nm) C q^(-n)
    inside the convergence region."""
    if tail.tail_zero:
        return Fraction(0)
    ratio = Fraction((-1) if alternating else 1, q ** (m + 1))
    # sum C s(n) q^(-n(m+1)) for n >= from_n
    lead = tail.coefficient * (Fraction((-1) ** from_n if alternating else 1)
                               * Fraction(1, q ** (from_n * (m + 1))))
    return lead / (1 - ratio)


@dataclass(frozen=True)
class QPowerValue:
    """An exact value coeff * q^(half_exponent / 2).

    Half-integer powers of q stay symbolic; two values are equal iff they
    agree after absorbing the even part of the exponent into the
    coefficient (q^(1/2) is irrational, so parities must match).
    """

    q: int
    coeff: Fraction
    half_exponent: int = 0

    def __post_init__(self):
        object.__setattr__(self, "coeff", Fraction(self.coeff))
        if self.coeff == 0:
            object.__setattr__(self, "half_exponent", 0)

    def normalized(self) -> "QPowerValue":
        if self.coeff == 0:
            return QPowerValue(self.q, Fraction(0), 0)
        k = self.half_exponent
        parity = k % 2
        shift = (k - parity) // 2
        return QPowerValue(self.q, self.coeff * Fraction(self.q) ** shift, parity)

    def __eq__(self, other) -> bool:
        if not isinstance(other, QPowerValue):
            return NotImplemented
        if self.q != other.q:
            return False
        a, b = self.normalized(), other.normalized()
        return a.coeff == b.coeff and a.half_exponent == b.half_exponent

    def __hash__(self):
        a = self.normalized()
        return hash((a.q, a.coeff, a.half_exponent))

    def __mul__(self, other):
        if isinstance(other, QPowerValue):
            if other.q != self.q:
                raise ValueError("mixed q")
            return QPowerValue(self.q, self.coeff * other.coeff,
                               self.half_exponent + other.half_exponent)
        return QPowerValue(self.q, self.coeff * Fraction(other), self.half_exponent)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, QPowerValue):
            if other.q != self.q:
                raise ValueError("mixed q")
            if other.coeff == 0:
                raise ZeroDivisionError
            return QPowerValue(self.q, self.coeff / other.coeff,
                               self.half_exponent - other.half_exponent)
        return QPowerValue(self.q, self.coeff / Fraction(other), self.half_exponent)

    def __neg__(self):
        return QPowerValue(self.q, -self.coeff, self.half_exponent)

    def as_fraction(self) -> Fraction:
        a = self.normalized()
        if a.half_exponent != 0:
            raise ValueError(f"{self} is not rational (odd half-exponent)")
        return a.coeff

    def magnitude_squared(self) -> Fraction:
        return self.coeff ** 2 * Fraction(self.q) ** self.half_exponent

    def __repr__(self):
        if self.half_exponent == 0:
            return f"{self.coeff}"
        return f"{self.coeff}*q^({self.half_exponent}/2)"


def q_power(q: int, coeff=1, half_exponent: int = 0) -> QPowerValue:
    return QPowerValue(q, Fraction(coeff), half_exponent)


def normalization_constant(y: CharDescriptor, q: int, s: int = 0) -> QPowerValue:
    """Value of the normalized intertwining operator on the distinguished
    vector: for unramified Y the rational function
    (1 + q^(-2(s+1))) / (1 + q^(1-2s)) at integer s (so (1+q^-2)/(1+q) at
    s = 0); for ramified Y the single constant chi_Y(-1) q^(-3/2)."""
    if not y.ramified:
        num = 1 + Fraction(q) ** (-2 * (s + 1))
        den = 1 + Fraction(q) ** (1 - 2 * s)
        return QPowerValue(q, num / den, 0)
    if s != 0:
        raise ValueError("the ramified constant is tabulated only at s = 0")
    chi_minus_one = legendre(-1, q)
    return QPowerValue(q, Fraction(chi_minus_one, q), -1)


def anisotropic_value(q: int, s: int) -> Fraction:
    """1 + q^-1 - q^(-2s) - q^(-2s-1): the shell series of an anisotropic
    form as an exact rational; 0 at s = 0."""
    iq = Fraction(1, q)
    return 1 + iq - Fraction(q) ** (-2 * s) - Fraction(q) ** (-2 * s - 1)
