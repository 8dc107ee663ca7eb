"""Representatives of the four elliptic twisted-conjugacy types, the
quadratic forms they induce via v -> v^T g J v, norm-map images, and
Jacobian factors.

Conventions.  J is the block matrix [[0, w], [-w, 0]] with w the 2x2 flip.
For types I and II the displayed quadratic form reads the vector in the
order (t, z, x, y); for types III and IV in the order (x, y, z, t).  The
Gram matrices returned by q_form_of are always re-expressed in (x, y, z, t).

Quadratic-extension elements are held in fixed bases with explicit Galois
actions as coordinate sign flips: E1 = F(sqrt(D)), E2 = F(sqrt(W)) where
W represents the class of A*D, E3 = F(sqrt(A)), and the composite with
basis {1, sqrt(D), sqrt(A), sqrt(W)}.  All absolute values of extension
elements go through norms down to F.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

from .localfield import (
    CharDescriptor,
    PrimeContext,
    SquareClass,
    ZeroAtPrecision,
    inv_mod,
    legendre,
    sqrt_unit,
    valuation_int,
)
from .quadforms import Matrix, QuadForm4, _as_matrix
from .series import QPowerValue


class NotThetaRegular(ValueError):
    """The coordinates describe a degenerate (non-theta-regular) element,
    or one too close to degenerate to certify at this precision."""


class WrongKind(TypeError):
    """Operation defined only for some of the four types."""


class UnsupportedClass(ValueError):
    """Configuration outside the implemented catalog (documented limits)."""


J_MATRIX = ((0, 0, 0, 1), (0, 0, 1, 0), (0, -1, 0, 0), (-1, 0, 0, 0))

# types I and II display the form on the vector (t, z, x, y)
_ORDER_TZXY = ((0, 0, 0, 1), (0, 0, 1, 0), (1, 0, 0, 0), (0, 1, 0, 0))


# ---------------------------------------------------------------------------
# Quadratic and biquadratic arithmetic at finite precision
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadElem:
    """c1 + c2 sqrt(disc) over R/p^N R."""

    p: int
    precision: int
    disc: int
    c1: int
    c2: int

    def __post_init__(self):
        m = self.p ** self.precision
        object.__setattr__(self, "disc", self.disc % m)
        object.__setattr__(self, "c1", self.c1 % m)
        object.__setattr__(self, "c2", self.c2 % m)

    def _like(self, c1, c2):
        return QuadElem(self.p, self.precision, self.disc, c1, c2)

    def __add__(self, other):
        return self._like(self.c1 + other.c1, self.c2 + other.c2)

    def __sub__(self, other):
        return self._like(self.c1 - other.c1, self.c2 - other.c2)

    def __mul__(self, other):
        if isinstance(other, int):
            return self._like(self.c1 * other, self.c2 * other)
        if other.disc != self.disc:
            raise ValueError("mixed discriminants")
        return self._like(
            self.c1 * other.c1 + self.disc * self.c2 * other.c2,
            self.c1 * other.c2 + self.c2 * other.c1,
        )

    __rmul__ = __mul__

    def conj(self) -> "QuadElem":
        return self._like(self.c1, -self.c2)

    def norm(self) -> int:
        m = self.p ** self.precision
        return (self.c1 * self.c1 - self.disc * self.c2 * self.c2) % m

    def trace(self) -> int:
        return (2 * self.c1) % (self.p ** self.precision)

    def coords(self) -> tuple[int, int]:
        return (self.c1, self.c2)


@dataclass(frozen=True)
class BiquadElem:
    """Coordinates on {1, sqrt(D), sqrt(A), sqrt(W)} where W represents
    the square class of A*D, with multiplication through the exact
    divisors cW = sqrt(D*A/W), dW = D/cW, aW = A/cW (all integers by
    construction of the representatives)."""

    p: int
    precision: int
    d_res: int
    a_res: int
    w_res: int
    cw: int
    coords: tuple[int, int, int, int]

    @staticmethod
    def structure(ctx: PrimeContext, d_tag: SquareClass, a_tag: SquareClass):
        d_res = d_tag.residue(ctx)
        a_res = a_tag.residue(ctx)
        w_tag = d_tag * a_tag
        if w_tag is SquareClass.ONE:
            raise ValueError("D and A must span distinct quadratic extensions")
        w_res = w_tag.residue(ctx)
        du, dp_ = d_tag.bits
        au, ap_ = a_tag.bits
        cw = ctx.u ** ((du + au) // 2) * ctx.p ** ((dp_ + ap_) // 2)
        assert d_res * a_res == cw * cw * w_res
        return d_res, a_res, w_res, cw

    def _like(self, coords):
        m = self.p ** self.precision
        return BiquadElem(self.p, self.precision, self.d_res, self.a_res,
                          self.w_res, self.cw, tuple(c % m for c in coords))

    def __add__(self, other):
        return self._like(tuple(a + b for a, b in zip(self.coords, other.coords)))

    def __sub__(self, other):
        return self._like(tuple(a - b for a, b in zip(self.coords, other.coords)))

    def __mul__(self, other):
        x0, x1, x2, x3 = self.coords
        y0, y1, y2, y3 = other.coords
        d, a, w, c = self.d_res, self.a_res, self.w_res, self.cw
        aw, dw = a // c, d // c
        if aw * c != a or dw * c != d:
            raise AssertionError("structure constants must divide exactly")
        z0 = x0 * y0 + d * x1 * y1 + a * x2 * y2 + w * x3 * y3
        z1 = x0 * y1 + x1 * y0 + aw * (x2 * y3 + x3 * y2)
        z2 = x0 * y2 + x2 * y0 + dw * (x1 * y3 + x3 * y1)
        z3 = x0 * y3 + x3 * y0 + c * (x1 * y2 + x2 * y1)
        return self._like((z0, z1, z2, z3))

    def sigma(self) -> "BiquadElem":
        """sqrt(D) -> -sqrt(D); fixes sqrt(A)."""
        x0, x1, x2, x3 = self.coords
        return self._like((x0, -x1, x2, -x3))

    def tau(self) -> "BiquadElem":
        """sqrt(A) -> -sqrt(A); fixes sqrt(D)."""
        x0, x1, x2, x3 = self.coords
        return self._like((x0, x1, -x2, -x3))

    def is_in_e3(self) -> bool:
        m = self.p ** self.precision
        return self.coords[1] % m == 0 and self.coords[3] % m == 0

    def is_scalar(self) -> bool:
        m = self.p ** self.precision
        return all(c % m == 0 for c in self.coords[1:])


# ---------------------------------------------------------------------------
# Class data
# ---------------------------------------------------------------------------

_TWIST_SETS = {
    # representatives of F^x / N(E^x) by ramification of E = F(sqrt(D))
    True: (SquareClass.ONE, SquareClass.U),    # D ramified
    False: (SquareClass.ONE, SquareClass.PI),  # D = u
}

_III_TWISTS = ("1", "sqrtA", "d_plus_i")


def _tag(value: Union[str, SquareClass]) -> SquareClass:
    return value if isinstance(value, SquareClass) else SquareClass(value)


@dataclass(frozen=True)
class ThetaClass:
    """A parametrized twisted-conjugacy-class representative.

    kind "I":  D = d_tag; a, b in F(sqrt(D)); twist (r_tag, s_tag).
    kind "II": D = d_tag, A = a_tag; a in F(sqrt(D)), b in F(sqrt(AD));
               twist (r_tag, s_tag).
    kind "III": A = a_tag, D = d_tag in F; a, b in F(sqrt(A));
               twist br in {"1", "sqrtA", "d_plus_i"}.
    kind "IV": A = a_tag; D = d_coords in F(sqrt(A)); a, b in F(sqrt(A));
               twist r_tag scalar (the product br when b = (1, 0)).
    """

    kind: str
    ctx: PrimeContext
    precision: int
    y: CharDescriptor
    a: tuple[int, int]
    b: tuple[int, int]
    d_tag: Optional[SquareClass] = None
    a_tag: Optional[SquareClass] = None
    r_tag: Optional[SquareClass] = None
    s_tag: Optional[SquareClass] = None
    br_class: Optional[str] = None
    d_coords: Optional[tuple[int, int]] = None

    def __post_init__(self):
        if self.kind not in ("I", "II", "III", "IV"):
            raise WrongKind(f"unknown kind {self.kind!r}")
        if self.kind in ("I", "II") and self.d_tag is None:
            raise ValueError("types I and II need the square class of D")
        if self.kind in ("II", "III", "IV") and self.a_tag is None:
            raise ValueError("types II, III, IV need the square class of A")
        if self.kind == "III" and self.br_class not in _III_TWISTS:
            raise ValueError(f"type III twist must be one of {_III_TWISTS}")
        if self.kind in ("I", "II") and (self.r_tag is None or self.s_tag is None):
            raise ValueError("types I and II carry a twist pair (r, s)")
        if self.kind == "IV" and self.r_tag is None:
            raise ValueError("type IV carries a scalar twist representative")

    # -- residues -----------------------------------------------------------

    @property
    def p(self) -> int:
        return self.ctx.p

    @property
    def modulus(self) -> int:
        return self.ctx.p ** self.precision

    def d_residue(self) -> int:
        return self.d_tag.residue(self.ctx)

    def a_residue(self) -> int:
        """The residue standing for A.  When -1 is a non-square, the
        configurations built on a fourth root of unity (type IV over an
        unramified E3, and the type III d + i branch) realize the class
        of u by -1 itself."""
        if self.a_tag is SquareClass.U and not self.ctx.minus_one_is_square:
            if self.kind == "IV" or (self.kind == "III"
                                     and self.br_class == "d_plus_i"):
                return self.modulus - 1
        return self.a_tag.residue(self.ctx)

    def w_residue(self) -> int:
        """Representative of the class of A*D (the paper's 'AD')."""
        return (self.d_tag * self.a_tag).residue(self.ctx)

    def iv_d_coords(self) -> tuple[int, int]:
        """D = d1 + d2 sqrt(A) generating E over E3 for type IV."""
        if self.d_coords is not None:
            return self.d_coords
        if self.a_tag is SquareClass.PI:
            return (0, 1)
        if self.ctx.minus_one_is_square:
            return (0, 1)
        return (self.ctx.d, 1)

    # -- regularity ---------------------------------------------------------

    def _margin_nonzero(self, value: int, what: str):
        m = self.modulus
        value %= m
        if value == 0 or valuation_int(value, self.p, self.precision) > self.precision - 2:
            raise NotThetaRegular(
                f"{what} vanishes (or is borderline) at precision {self.precision}")

    def check_regular(self):
        a1, a2 = self.a
        b1, b2 = self.b
        if self.kind == "I":
            for val, name in ((a1, "a1"), (a2, "a2"), (b1, "b1"), (b2, "b2"),
                              (a2 * b1 - a1 * b2, "a2*b1 - a1*b2"),
                              (a2 * b1 + a1 * b2, "a2*b1 + a1*b2")):
                self._margin_nonzero(val, name)
        elif self.kind == "II":
            for val, name in ((a1, "a1"), (a2, "a2"), (b1, "b1"), (b2, "b2")):
                self._margin_nonzero(val, name)
        elif self.kind == "III":
            a_res = self.a_residue()
            self._margin_nonzero(a1 * a1 - a_res * a2 * a2, "N(a)")
            self._margin_nonzero(b1 * b1 - a_res * b2 * b2, "N(b)")
            self._margin_nonzero(a1 * b2 - a2 * b1, "a1*b2 - a2*b1")
        else:  # IV
            a_res = self.a_residue()
            d1, d2 = self.iv_d_coords()
            self._margin_nonzero(b1 * b1 - a_res * b2 * b2, "N(b)")
            aa = QuadElem(self.p, self.precision, a_res, a1, a2)
            bb = QuadElem(self.p, self.precision, a_res, b1, b2)
            dd = QuadElem(self.p, self.precision, a_res, d1, d2)
            inner = aa * aa - bb * bb * dd
            self._margin_nonzero(inner.norm(), "N(a^2 - b^2 D)")

    # -- JSON ---------------------------------------------------------------

    @classmethod
    def from_json(cls, obj: Union[str, dict],
                  precision: int = 6) -> "ThetaClass":
        if isinstance(obj, str):
            obj = json.loads(obj)
        ctx = PrimeContext.for_prime(int(obj["p"]))
        kind = obj["kind"]
        prec = int(obj.get("precision", precision))
        y = CharDescriptor.from_tag(obj.get("Y", "u"))
        a = tuple(int(v) for v in obj["a"])
        b = tuple(int(v) for v in obj["b"])
        twist = obj.get("twist", {})
        kwargs = dict(kind=kind, ctx=ctx, precision=prec, y=y, a=a, b=b)
        if kind in ("I", "II"):
            kwargs["d_tag"] = _tag(obj["D"])
            kwargs["r_tag"] = _tag(twist.get("r", "1"))
            kwargs["s_tag"] = _tag(twist.get("s", "1"))
            if kind == "II":
                kwargs["a_tag"] = _tag(obj["A"])
        elif kind == "III":
            kwargs["a_tag"] = _tag(obj["A"])
            kwargs["d_tag"] = _tag(obj["D"])
            kwargs["br_class"] = twist.get("br", "1")
        elif kind == "IV":
            kwargs["a_tag"] = _tag(obj["A"])
            kwargs["r_tag"] = _tag(twist.get("r", "1"))
            if "D_coords" in obj:
                kwargs["d_coords"] = tuple(int(v) for v in obj["D_coords"])
        return cls(**kwargs)

    def to_json_dict(self) -> dict:
        out = {"kind": self.kind, "p": self.p, "precision": self.precision,
               "a": list(self.a), "b": list(self.b), "Y": self.y.d_class.value}
        if self.kind in ("I", "II"):
            out["D"] = self.d_tag.value
            out["twist"] = {"r": self.r_tag.value, "s": self.s_tag.value}
            if self.kind == "II":
                out["A"] = self.a_tag.value
        elif self.kind == "III":
            out["A"] = self.a_tag.value
            out["D"] = self.d_tag.value
            out["twist"] = {"br": self.br_class}
        else:
            out["A"] = self.a_tag.value
            out["twist"] = {"r": self.r_tag.value}
            out["D_coords"] = list(self.iv_d_coords())
        return out


# ---------------------------------------------------------------------------
# Representatives and their quadratic forms
# ---------------------------------------------------------------------------

def _mat2(coords: Sequence[int], a_res: int, m: int) -> list[list[int]]:
    """The 2x2 matrix of x1 + x2 sqrt(A) acting on the basis {1, sqrt(A)}."""
    x1, x2 = coords
    return [[x1 % m, (x2 * a_res) % m], [x2 % m, x1 % m]]


def _mat2_mul(x, y, m):
    return [[(x[0][0] * y[0][0] + x[0][1] * y[1][0]) % m,
             (x[0][0] * y[0][1] + x[0][1] * y[1][1]) % m],
            [(x[1][0] * y[0][0] + x[1][1] * y[1][0]) % m,
             (x[1][0] * y[0][1] + x[1][1] * y[1][1]) % m]]


def representative(cls: ThetaClass) -> Matrix:
    """The concrete 4x4 representative matrix of the class."""
    cls.check_regular()
    p, m = cls.p, cls.modulus
    a1, a2 = cls.a
    b1, b2 = cls.b
    if cls.kind in ("I", "II"):
        d_res = cls.d_residue()
        mid = d_res if cls.kind == "I" else cls.w_residue()
        r = cls.r_tag.residue(cls.ctx)
        s = cls.s_tag.residue(cls.ctx)
        rows = [
            [a1 * r, 0, 0, a2 * d_res * r],
            [0, b1 * s, b2 * mid * s, 0],
            [0, b2 * s, b1 * s, 0],
            [a2 * r, 0, 0, a1 * r],
        ]
        return _as_matrix([[e % m for e in row] for row in rows])
    a_res = cls.a_residue()
    if cls.kind == "III":
        d_res = cls.d_residue()
        r_coords = _iii_r_coords(cls)
        blk_a = _mat2(cls.a, a_res, m)
        blk_b = _mat2(cls.b, a_res, m)
        blk_r = _mat2(r_coords, a_res, m)
        top_right = [[(d_res * e) % m for e in row] for row in _mat2_mul(blk_b, blk_r, m)]
    else:
        d1, d2 = cls.iv_d_coords()
        r_coords = (cls.r_tag.residue(cls.ctx), 0)
        blk_a = _mat2(cls.a, a_res, m)
        blk_b = _mat2(cls.b, a_res, m)
        blk_d = _mat2((d1, d2), a_res, m)
        blk_r = _mat2(r_coords, a_res, m)
        top_right = _mat2_mul(_mat2_mul(blk_b, blk_d, m), blk_r, m)
    tl = _mat2_mul(blk_a, blk_r, m)
    bl = _mat2_mul(blk_b, blk_r, m)
    rows = [
        [tl[0][0], tl[0][1], top_right[0][0], top_right[0][1]],
        [tl[1][0], tl[1][1], top_right[1][0], top_right[1][1]],
        [bl[0][0], bl[0][1], tl[0][0], tl[0][1]],
        [bl[1][0], bl[1][1], tl[1][0], tl[1][1]],
    ]
    return _as_matrix([[e % m for e in row] for row in rows])


def _iii_r_coords(cls: ThetaClass) -> tuple[int, int]:
    if cls.br_class == "1":
        return (1, 0)
    if cls.br_class == "sqrtA":
        if cls.a_tag is SquareClass.U and not cls.ctx.minus_one_is_square:
            raise UnsupportedClass(
                "sqrt(A) is a norm when A = u and -1 is a non-square; the "
                "twist set there is {1, d + i}")
        return (0, 1)
    if cls.ctx.d is None:
        raise UnsupportedClass("the d + i twist needs p = 3 mod 4")
    if cls.a_residue() % cls.modulus != cls.modulus - 1:
        raise UnsupportedClass("the d + i twist is attached to A = -1")
    return (cls.ctx.d, 1)


def _symmetric_gram(g: Matrix, kind: str, p: int, precision: int):
    """Symmetrized Gram of v -> v^T g J v in the variables (x, y, z, t)."""
    m = p ** precision
    gj = [[sum(g[i][k] * J_MATRIX[k][j] for k in range(4)) % m for j in range(4)]
          for i in range(4)]
    half = inv_mod(2, p, precision)
    sym = [[((gj[i][j] + gj[j][i]) * half) % m for j in range(4)] for i in range(4)]
    if kind in ("I", "II"):
        perm = _ORDER_TZXY
        sym = [[sum(perm[k][i] * sym[k][l] * perm[l][j]
                    for k in range(4) for l in range(4)) % m
                for j in range(4)] for i in range(4)]
    return sym


def q_form_of(g: Matrix, kind: str, p: int, precision: int,
              prefactor: Optional[int] = None, label: str = "") -> QuadForm4:
    """Gram matrix (in variables x, y, z, t) of v -> v^T g J v, with the
    documented unit prefactor factored out: the x^2 coefficient for types
    I and II (it equals b2*s there), the supplied scalar br for type IV."""
    m = p ** precision
    sym = _symmetric_gram(g, kind, p, precision)
    if kind in ("I", "II"):
        pref = sym[0][0] % m
        if pref % p == 0:
            raise UnsupportedClass(
                "the x^2 coefficient (b2*s) must be a unit to factor it out")
    elif kind == "IV":
        if prefactor is None:
            raise ValueError("type IV needs the unit part of br as prefactor")
        pref = prefactor % m
        if pref % p == 0:
            raise UnsupportedClass("type IV prefactor must be a unit")
    else:
        pref = 1
    inv_pref = inv_mod(pref, p, precision)
    gram = [[(e * inv_pref) % m for e in row] for row in sym]
    return QuadForm4(p, precision, _as_matrix(gram), unit_prefactor=pref,
                     label=label or f"type {kind} class form")


@dataclass(frozen=True)
class ClassFormData:
    """Normalized form of a class: raw v^T g J v = pi^pi_power *
    unit_prefactor * form(v), after an optional exchange of the (x, y)
    and (z, t) roles (needed when the y^2 coefficient a2*r has strictly
    smaller valuation than the x^2 coefficient b2*s)."""

    form: QuadForm4
    pi_power: int
    role_swap: bool


def _strip_scalar(sym, p, precision, v, unit, label) -> QuadForm4:
    out = []
    for row in sym:
        if any(e % p ** v != 0 for e in row):
            raise UnsupportedClass("Gram not divisible by the leading scalar")
        out.append([e // p ** v for e in row])
    m = p ** (precision - v)
    inv_unit = inv_mod(unit, p, precision - v)
    gram = [[(e * inv_unit) % m for e in row] for row in out]
    return QuadForm4(p, precision - v, _as_matrix(gram),
                     unit_prefactor=unit % m, label=label)


_SWAP_XY_ZT = ((0, 1, 0, 0), (1, 0, 0, 0), (0, 0, 0, 1), (0, 0, 1, 0))


def class_form(cls: ThetaClass) -> ClassFormData:
    """Representative -> normalized quadratic form.

    Types I and II factor the coefficient of x^2 (= b2*s) when it has
    minimal valuation, else swap the (x, y), (z, t) roles and factor the
    y^2 coefficient (= a2*r); the common pi-power is stripped from the
    Gram and reported for the character prefactor.  Type IV requires the
    twist product br to be a base-field scalar and strips it entirely.
    """
    g = representative(cls)
    p, n, m = cls.p, cls.precision, cls.modulus
    label = f"type {cls.kind} ({cls.to_json_dict().get('twist')})"
    if cls.kind == "III":
        return ClassFormData(q_form_of(g, "III", p, n, label=label), 0, False)
    if cls.kind in ("I", "II"):
        sym = _symmetric_gram(g, cls.kind, p, n)
        try:
            vx = valuation_int(sym[0][0], p, n)
        except ZeroAtPrecision:
            vx = n
        try:
            vy = valuation_int(sym[1][1], p, n)
        except ZeroAtPrecision:
            vy = n
        swapped = vy < vx
        if swapped:
            s = _SWAP_XY_ZT
            sym = [[sum(s[k][i] * sym[k][l] * s[l][j]
                        for k in range(4) for l in range(4)) % m
                    for j in range(4)] for i in range(4)]
        v = min(vx, vy)
        if v >= n - 2:
            raise UnsupportedClass("leading coefficients vanish to precision")
        unit = sym[0][0] // p ** v
        return ClassFormData(_strip_scalar(sym, p, n, v, unit, label),
                             v, swapped)
    # type IV: br = r * b must be a base-field scalar
    a_res = cls.a_residue()
    r_res = cls.r_tag.residue(cls.ctx)
    br = QuadElem(p, n, a_res, cls.b[0] * r_res, cls.b[1] * r_res)
    if br.c2 % m != 0:
        raise UnsupportedClass("type IV form factors only for br in F")
    br_scalar = br.c1 % m
    v = valuation_int(br_scalar, p, n)
    unit = br_scalar // p ** v
    sym = _symmetric_gram(g, "IV", p, n)
    return ClassFormData(_strip_scalar(sym, p, n, v, unit, label), v, False)


# ---------------------------------------------------------------------------
# Norm map
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CYClass:
    """Conjugacy data of the norm-map image: the characteristic
    polynomials X^2 - t_i X + det of the two 2x2 components, with traces
    in E3 = F(sqrt(A)) and the common determinant in F."""

    p: int
    precision: int
    a_res: int
    trace1: tuple[int, int]
    trace2: tuple[int, int]
    det: int

    def to_json_dict(self) -> dict:
        return {
            "p": self.p,
            "precision": self.precision,
            "A": self.a_res,
            "components": [
                {"trace": [str(self.trace1[0]), str(self.trace1[1])],
                 "det": str(self.det)},
                {"trace": [str(self.trace2[0]), str(self.trace2[1])],
                 "det": str(self.det)},
            ],
        }


def norm_map(cls: ThetaClass) -> CYClass:
    """Image of the class under the norm correspondence (types II and IV).

    Type II: eigenvalue pairs {a b, tau(b) sigma(a)} and {a tau(b),
    b sigma(a)}.  Type IV: {alpha sigma(alpha), sigma^2(alpha)
    sigma^3(alpha)} and {alpha sigma^3(alpha), sigma(alpha)
    sigma^2(alpha)}.  Both components share the determinant N(a) N(b),
    resp. the full norm of alpha, which lies in F.
    """
    if cls.kind not in ("II", "IV"):
        raise WrongKind(
            f"type {cls.kind} classes have no norm in the twisted endoscopic "
            f"group for any quadratic Y")
    cls.check_regular()
    p, n, m = cls.p, cls.precision, cls.modulus
    if cls.kind == "II":
        d_res, a_res, w_res, cw = BiquadElem.structure(cls.ctx, cls.d_tag, cls.a_tag)
        mk = lambda coords: BiquadElem(p, n, d_res, a_res, w_res, cw, coords)
        a_el = mk((cls.a[0], cls.a[1], 0, 0))
        b_el = mk((cls.b[0], 0, 0, cls.b[1]))
        e1 = a_el * b_el
        e2 = b_el.tau() * a_el.sigma()
        e3 = a_el * b_el.tau()
        e4 = b_el * a_el.sigma()
        t1 = e1 + e2
        t2 = e3 + e4
        det_el = e1 * e2
        for elem, name in ((t1, "trace 1"), (t2, "trace 2")):
            if not elem.is_in_e3():
                raise AssertionError(f"{name} has a component outside E3")
        if not det_el.is_scalar():
            raise AssertionError("determinant has a nonzero imaginary part")
        det = det_el.coords[0]
        expected = ((cls.a[0] ** 2 - d_res * cls.a[1] ** 2)
                    * (cls.b[0] ** 2 - w_res * cls.b[1] ** 2)) % m
        if det % m != expected:
            raise AssertionError("determinant disagrees with N(a) N(b)")
        # the twisted representative scales the eigenvalues by r resp. s
        scale = (cls.r_tag.residue(cls.ctx) * cls.s_tag.residue(cls.ctx)) % m
        return CYClass(p=p, precision=n, a_res=a_res,
                       trace1=((scale * t1.coords[0]) % m,
                               (scale * t1.coords[2]) % m),
                       trace2=((scale * t2.coords[0]) % m,
                               (scale * t2.coords[2]) % m),
                       det=(scale * scale * det) % m)
    # type IV: traces are 2 N(a) +- 2 N(b) w with w in E3, w^2 = N(D)
    a_res = cls.a_residue()
    d1, d2 = cls.iv_d_coords()
    na = (cls.a[0] ** 2 - a_res * cls.a[1] ** 2) % m
    nb = (cls.b[0] ** 2 - a_res * cls.b[1] ** 2) % m
    nd = (d1 * d1 - a_res * d2 * d2) % m
    w = _sqrt_in_e3(nd, a_res, p, n)
    if w is None:
        raise UnsupportedClass(
            "N(D) is neither a square nor A times a square in F, so the "
            "component traces do not lie in E3 at this configuration")
    r_res = cls.r_tag.residue(cls.ctx)
    aa = QuadElem(p, n, a_res, cls.a[0], cls.a[1])
    bb = QuadElem(p, n, a_res, cls.b[0], cls.b[1])
    dd = QuadElem(p, n, a_res, d1, d2)
    inner = aa * aa - bb * bb * dd
    det = (r_res ** 4 * (inner.c1 ** 2 - a_res * inner.c2 ** 2)) % m
    scale = (r_res * r_res) % m
    t1 = ((scale * (2 * na + 2 * nb * w[0])) % m, (scale * 2 * nb * w[1]) % m)
    t2 = ((scale * (2 * na - 2 * nb * w[0])) % m, (scale * (-2) * nb * w[1]) % m)
    return CYClass(p=p, precision=n, a_res=a_res, trace1=t1, trace2=t2, det=det)


def _sqrt_in_e3(value: int, a_res: int, p: int, n: int):
    """A square root of the F-residue value inside E3 = F(sqrt(A)), as
    coordinates (w1, w2); None if value is in neither the square class of
    1 nor of A."""
    m = p ** n
    value %= m
    if value == 0:
        return None
    v = valuation_int(value, p, n)
    unit = value // p ** v
    if v % 2 == 0 and legendre(unit, p) == 1:
        return ((p ** (v // 2) * sqrt_unit(unit, p, n - v)) % m, 0)
    av = valuation_int(a_res, p, n)
    if v >= av and (v - av) % 2 == 0:
        a_unit = a_res // p ** av
        ratio = (unit * inv_mod(a_unit, p, n - v)) % p ** (n - v)
        if legendre(ratio, p) == 1:
            w2 = (p ** ((v - av) // 2) * sqrt_unit(ratio, p, n - v)) % m
            return (0, w2)
    return None


# ---------------------------------------------------------------------------
# Jacobian factors
# ---------------------------------------------------------------------------

def jacobian_factor(cls: ThetaClass) -> QPowerValue:
    """The Weyl-discriminant ratio of the class, an exact power of
    q^(1/2): all absolute values of extension elements are taken through
    norms down to F."""
    cls.check_regular()
    p, n, m = cls.p, cls.precision, cls.modulus
    q = cls.ctx.q
    a1, a2 = cls.a
    b1, b2 = cls.b
    if cls.kind in ("I", "II"):
        d_res = cls.d_residue()
        mid = d_res if cls.kind == "I" else cls.w_residue()
        num = ((4 * a2 * b2) ** 2 * d_res * mid) % m
        den = ((a1 * a1 - d_res * a2 * a2) * (b1 * b1 - mid * b2 * b2)) % m
    elif cls.kind == "III":
        a_res = cls.a_residue()
        d_res = cls.d_residue()
        nb = (b1 * b1 - a_res * b2 * b2) % m
        num = (16 * nb * nb * d_res * d_res) % m
        aa = QuadElem(p, n, a_res, a1, a2)
        bb = QuadElem(p, n, a_res, b1, b2)
        inner = aa * aa - bb * bb * QuadElem(p, n, a_res, d_res, 0)
        den = (inner.c1 ** 2 - a_res * inner.c2 ** 2) % m
    else:  # IV
        a_res = cls.a_residue()
        d1, d2 = cls.iv_d_coords()
        nb = (b1 * b1 - a_res * b2 * b2) % m
        nd = (d1 * d1 - a_res * d2 * d2) % m
        num = (16 * nb * nb * nd) % m
        aa = QuadElem(p, n, a_res, a1, a2)
        bb = QuadElem(p, n, a_res, b1, b2)
        dd = QuadElem(p, n, a_res, d1, d2)
        inner = aa * aa - bb * bb * dd
        den = (inner.c1 ** 2 - a_res * inner.c2 ** 2) % m
    try:
        v = valuation_int(num, p, n) - valuation_int(den, p, n)
    except ZeroAtPrecision as exc:
        raise NotThetaRegular(f"Jacobian data vanishes at precision {n}") from exc
    return QPowerValue(q, Fraction(1), -v)
