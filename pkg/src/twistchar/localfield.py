"""Exact arithmetic in the residue rings R/pi^N R of a p-adic field, p odd.

Everything here lives at finite precision: an element of the ring of
integers R known mod pi^N is an integer in [0, p^N).  The module supplies
valuations, Legendre symbols, the four square classes {1, u, pi, u*pi},
and the quadratic characters chi_Y attached to the three quadratic
extensions Y of the base field.  Signs are exact integers +-1 and all
operations are pure; nothing here ever touches floating point.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Optional


class ZeroAtPrecision(ArithmeticError):
    """Value is 0 mod p^N, so its valuation is not determined."""


class NotAUnit(ArithmeticError):
    """Inversion or Legendre symbol requested for a non-unit residue."""


class MinusOneIsSquare(ValueError):
    """find_d needs -1 to be a non-square, i.e. p = 3 mod 4."""


class InsufficientPrecision(ArithmeticError):
    """Not enough residue digits to evaluate the requested quantity."""


def is_odd_prime(p: int) -> bool:
    if p < 3 or p % 2 == 0:
        return False
    k = 3
    while k * k <= p:
        if p % k == 0:
            return False
        k += 2
    return True


def legendre(e: int, p: int) -> int:
    """Legendre symbol of e mod p: +1 for nonzero squares, -1 otherwise."""
    e %= p
    if e == 0:
        raise NotAUnit(f"legendre symbol undefined for 0 mod {p}")
    s = pow(e, (p - 1) // 2, p)
    return 1 if s == 1 else -1


def find_nonsquare_unit(p: int) -> int:
    """Smallest positive non-square unit mod p (deterministic choice of u)."""
    for e in range(2, p):
        if legendre(e, p) == -1:
            return e
    raise ValueError(f"p={p} has no non-square unit; p must be an odd prime")


def find_d(p: int) -> int:
    """Smallest positive unit d with d^2 + 1 a non-square mod p.

    Exists whenever -1 is a non-square (p = 3 mod 4): the sets {1 + x^2}
    and {-y^2} over the residue field each have 1 + (q-1)/2 elements, so
    they intersect, and any intersection point has y != 0.
    """
    if p % 4 != 3:
        raise MinusOneIsSquare(f"-1 is a square mod {p}; no d exists")
    for d in range(1, p):
        if legendre(d * d + 1, p) == -1:
            return d
    raise AssertionError("unreachable: counting argument guarantees d")


def valuation_int(value: int, p: int, precision: int) -> int:
    """Largest k < precision with p^k dividing value (mod p^precision)."""
    value %= p ** precision
    if value == 0:
        raise ZeroAtPrecision(
            f"0 mod {p}^{precision}: valuation not determined at this precision"
        )
    k = 0
    while value % p == 0:
        value //= p
        k += 1
    return k


def inv_mod(a: int, p: int, precision: int) -> int:
    m = p ** precision
    a %= m
    if a % p == 0:
        raise NotAUnit(f"{a} is not a unit mod {p}^{precision}")
    return pow(a, -1, m)


def sqrt_unit(a: int, p: int, precision: int) -> int:
    """A square root of the unit square a mod p^precision (Hensel lift).

    The mod-p root is found by brute force; the primes in play are desk
    scale.  Raises NotAUnit / ValueError if a is not a unit square.
    """
    a %= p ** precision
    if a % p == 0:
        raise NotAUnit(f"{a} is not a unit mod {p}")
    r0 = None
    for r in range(1, p):
        if (r * r - a) % p == 0:
            r0 = r
            break
    if r0 is None:
        raise ValueError(f"{a} is not a square mod {p}")
    r, k = r0, 1
    while k < precision:
        k = min(2 * k, precision)
        m = p ** k
        r = (r - (r * r - a) * pow(2 * r, -1, m)) % m
    return r


@dataclass(frozen=True)
class PrimeContext:
    """Fixed data of the base field: p = q, the non-square unit u, and,
    when -1 is a non-square, the unit d with d^2 + 1 a non-square."""

    p: int
    q: int
    u: int
    d: Optional[int] = None

    @classmethod
    def for_prime(cls, p: int) -> "PrimeContext":
        if not is_odd_prime(p):
            raise ValueError(f"p={p} is not an odd prime")
        u = find_nonsquare_unit(p)
        d = find_d(p) if p % 4 == 3 else None
        return cls(p=p, q=p, u=u, d=d)

    @property
    def minus_one_is_square(self) -> bool:
        return self.p % 4 == 1

    def one_over_q(self) -> Fraction:
        return Fraction(1, self.q)


@dataclass(frozen=True)
class ResidueElement:
    """An integer mod p^N carrying its ambient precision N >= 1.

    Arithmetic closes at the minimum precision of the operands and never
    silently extends precision.
    """

    p: int
    value: int
    precision: int

    def __post_init__(self):
        if self.precision < 1:
            raise ValueError("precision must be >= 1")
        object.__setattr__(self, "value", self.value % self.p ** self.precision)

    def _join(self, other: "ResidueElement") -> int:
        if not isinstance(other, ResidueElement) or other.p != self.p:
            raise TypeError("mixed residue arithmetic")
        return min(self.precision, other.precision)

    def __add__(self, other):
        n = self._join(other)
        return ResidueElement(self.p, self.value + other.value, n)

    def __sub__(self, other):
        n = self._join(other)
        return ResidueElement(self.p, self.value - other.value, n)

    def __mul__(self, other):
        n = self._join(other)
        return ResidueElement(self.p, self.value * other.value, n)

    def __neg__(self):
        return ResidueElement(self.p, -self.value, self.precision)

    def is_unit(self) -> bool:
        return self.value % self.p != 0

    def inverse(self) -> "ResidueElement":
        return ResidueElement(
            self.p, inv_mod(self.value, self.p, self.precision), self.precision
        )

    def valuation(self) -> int:
        return valuation_int(self.value, self.p, self.precision)

    def unit_part(self) -> "ResidueElement":
        """self / p^valuation, known to precision N - valuation."""
        k = self.valuation()
        return ResidueElement(self.p, self.value // self.p ** k, self.precision - k)

    def at_precision(self, n: int) -> "ResidueElement":
        if n > self.precision:
            raise InsufficientPrecision(
                f"cannot extend precision {self.precision} -> {n}"
            )
        return ResidueElement(self.p, self.value, n)


def valuation(x: ResidueElement) -> int:
    return x.valuation()


class SquareClass(Enum):
    """Representatives of F^x modulo squares: the Klein four-group."""

    ONE = "1"
    U = "u"
    PI = "pi"
    UPI = "upi"

    @property
    def bits(self):
        return {
            SquareClass.ONE: (0, 0),
            SquareClass.U: (1, 0),
            SquareClass.PI: (0, 1),
            SquareClass.UPI: (1, 1),
        }[self]

    @staticmethod
    def from_bits(ubit: int, pibit: int) -> "SquareClass":
        return {
            (0, 0): SquareClass.ONE,
            (1, 0): SquareClass.U,
            (0, 1): SquareClass.PI,
            (1, 1): SquareClass.UPI,
        }[(ubit % 2, pibit % 2)]

    def __mul__(self, other: "SquareClass") -> "SquareClass":
        a, b = self.bits
        c, d = other.bits
        return SquareClass.from_bits(a ^ c, b ^ d)

    @property
    def ramified(self) -> bool:
        return self in (SquareClass.PI, SquareClass.UPI)

    def residue(self, ctx: PrimeContext) -> int:
        """The concrete representative 1, u, p, or u*p."""
        return {
            SquareClass.ONE: 1,
            SquareClass.U: ctx.u,
            SquareClass.PI: ctx.p,
            SquareClass.UPI: ctx.u * ctx.p,
        }[self]


def square_class_of_int(value: int, ctx: PrimeContext, precision: int) -> SquareClass:
    """Square class of a nonzero residue, from valuation parity and the
    Legendre symbol of the unit part."""
    k = valuation_int(value, ctx.p, precision)
    unit = (value % ctx.p ** precision) // ctx.p ** k
    ubit = 0 if legendre(unit, ctx.p) == 1 else 1
    return SquareClass.from_bits(ubit, k % 2)


def square_class(x: ResidueElement, ctx: PrimeContext) -> SquareClass:
    return square_class_of_int(x.value, ctx, x.precision)


@dataclass(frozen=True)
class CharDescriptor:
    """The quadratic extension Y = F(sqrt(D)) through its square class.

    chi_Y is the order-2 character of F^x trivial exactly on norms from Y.
    Unramified Y (D in the u class): chi_Y is 1 on units and -1 on pi.
    Ramified Y: chi_Y is the Legendre symbol on units, and chi_Y(pi) is
    pinned by chi_Y(-D) = 1, since -D is the norm of sqrt(D).
    """

    d_class: SquareClass

    def __post_init__(self):
        if self.d_class is SquareClass.ONE:
            raise ValueError("Y = F(sqrt(D)) needs a nontrivial square class")

    @property
    def ramified(self) -> bool:
        return self.d_class.ramified

    @staticmethod
    def from_tag(tag: str) -> "CharDescriptor":
        return CharDescriptor(SquareClass(tag))

    def chi_of_pi(self, ctx: PrimeContext) -> int:
        """chi_Y(pi); only meaningful for ramified Y."""
        if not self.ramified:
            return -1
        # chi_Y(-D) = 1 with D = pi resp. u*pi forces chi_Y(pi) = (-1/p)
        # resp. (-u/p).
        if self.d_class is SquareClass.PI:
            return legendre(-1, ctx.p)
        return legendre(-ctx.u, ctx.p)


def chi_eval(y: CharDescriptor, x: ResidueElement, ctx: PrimeContext) -> int:
    """chi_Y at a nonzero residue.  Needs the unit part mod p when Y is
    ramified, hence precision >= valuation + 1 in that case."""
    k = x.valuation()
    if not y.ramified:
        return (-1) ** k
    if x.precision < k + 1:
        raise InsufficientPrecision("ramified chi_Y needs the unit part mod p")
    unit = x.value // ctx.p ** k
    return legendre(unit, ctx.p) * y.chi_of_pi(ctx) ** k


def chi_eval_int(y: CharDescriptor, value: int, ctx: PrimeContext, precision: int) -> int:
    return chi_eval(y, ResidueElement(ctx.p, value, precision), ctx)
