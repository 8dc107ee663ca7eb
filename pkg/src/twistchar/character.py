"""End-to-end pipeline: class representative -> quadratic form -> shell
profile -> continued value at s = 0 -> normalized twisted-character value,
compared against the predicted closed forms.

The per-type prefactors at s = 0 are:

  type I:   chi_Y(b2 s) |4 D r'|            r' = -a2 r / (b2 s)
  type II:  chi_Y(b2 s) |4 r' D sqrt(A)|
  type III: 1
  type IV:  chi_Y(br) |N(D)|                N down to the base field

and every value is divided by the spherical-vector normalization
constant ((1 + q^-2)/(1 + q) unramified, chi_Y(-1) q^(-3/2) ramified).

For unramified Y the shell series alternates over a volume profile; for
ramified Y (supported on the worked configuration D = u, r = 1, A = pi)
it is the plain series over the character-sum profile.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .localfield import (
    CharDescriptor,
    PrimeContext,
    SquareClass,
    chi_eval_int,
    inv_mod,
    legendre,
    valuation_int,
)
from .quadforms import QuadForm4, diagonalize
from .series import QPowerValue, eval_at_s0, fit_tail, normalization_constant
from .volumes import (
    CharSumProfile,
    VolumeProfile,
    char_profile,
    classify_lemma,
    closed_profile,
    vol_profile,
)
from .classes import (
    ClassFormData,
    QuadElem,
    ThetaClass,
    UnsupportedClass,
    WrongKind,
    class_form,
)

_CLOSED_N_MAX = 5   # enough shells for every catalog tail (largest n0 is 3)
_ORACLE_N_MAX = 4


@dataclass(frozen=True)
class CharacterValue:
    """A normalized twisted-character value with its bookkeeping: whether
    the twisting extension matches the field attached to the class, and
    the sign character of the twist representative."""

    value: QPowerValue
    kind: str
    y_matches_e3: bool
    twist_sign: int


def _effective_twist(cls: ThetaClass) -> int:
    """The residue r' = -a2 r / (b2 s) whose square class names the form
    shape for types I and II."""
    m = cls.modulus
    r = cls.r_tag.residue(cls.ctx)
    s = cls.s_tag.residue(cls.ctx)
    den = (cls.b[1] * s) % m
    if den % cls.p == 0:
        raise UnsupportedClass("b2 * s must be a unit")
    return (-cls.a[1] * r * inv_mod(den, cls.p, cls.precision)) % m


def _iv_br_scalar(cls: ThetaClass) -> int:
    a_res = cls.a_residue()
    r_res = cls.r_tag.residue(cls.ctx)
    br = QuadElem(cls.p, cls.precision, a_res,
                  cls.b[0] * r_res, cls.b[1] * r_res)
    if br.c2 % cls.modulus != 0:
        raise UnsupportedClass("type IV pipeline needs br in the base field")
    return br.c1 % cls.modulus


def twist_sign(cls: ThetaClass) -> int:
    """kappa at the class's twist representative: the sign character of
    the relevant norm group, -1 exactly on the non-norm representative.

    For types I and II this is the norm character of F(sqrt(D)) at the
    effective twist r' = -a2 r / (b2 s), evaluated multiplicatively so
    that non-unit coordinates are allowed."""
    ctx = cls.ctx
    if cls.kind in ("I", "II"):
        kappa_char = CharDescriptor(cls.d_tag)
        m = cls.modulus
        num = (-cls.a[1] * cls.r_tag.residue(ctx)) % m
        den = (cls.b[1] * cls.s_tag.residue(ctx)) % m
        return (chi_eval_int(kappa_char, num, ctx, cls.precision)
                * chi_eval_int(kappa_char, den, ctx, cls.precision))
    if cls.kind == "III":
        return 1 if cls.br_class == "1" else -1
    br = _iv_br_scalar(cls)
    if cls.a_tag is SquareClass.U:
        return (-1) ** valuation_int(br, cls.p, cls.precision)
    v = valuation_int(br, cls.p, cls.precision)
    return legendre(br // cls.p ** v, cls.p)


def _y_matches_e3(cls: ThetaClass) -> bool:
    if cls.kind == "I":
        return False
    return cls.y.d_class is cls.a_tag


def _square_class_multiset(qf: QuadForm4, ctx: PrimeContext):
    from .localfield import square_class_of_int
    dd = diagonalize(qf)
    return tuple(sorted(
        square_class_of_int(c, ctx, dd.precision).value for c in dd.coeffs))


def _is_worked_ramified_shape(cls: ThetaClass, qf: QuadForm4) -> bool:
    """The ramified path covers the single worked configuration D = u,
    r' = 1, A = pi whose form is x^2 - y^2 + u t^2 - u pi z^2 up to
    profile-preserving moves."""
    from .quadforms import canonical_form
    if cls.kind != "II":
        return False
    if cls.d_tag is not SquareClass.U or cls.a_tag is not SquareClass.PI:
        return False
    ref = canonical_form("II.3a", cls.ctx, min(cls.precision, 5))
    return (_square_class_multiset(qf, cls.ctx)
            == _square_class_multiset(ref, cls.ctx))


def _prefactor_qpower(cls: ThetaClass) -> QPowerValue:
    """The s = 0 value of |det g|^((1-s)/2) times the Jacobian factor, as
    a power of q^(1/2), computed from the raw class data:

      type I:  |4 a2 b2 r s| |D D|^(1/2)
      type II: |4 a2 b2 r s| |D W|^(1/2)     (W represents AD)
      type IV: |br|^2 |N(D)|  (the continued series carries q^(2 val br))
      type III: 1 (the series value vanishes identically).
    """
    p, n = cls.p, cls.precision
    q = cls.ctx.q
    if cls.kind in ("I", "II"):
        va = valuation_int(cls.a[1], p, n)
        vb = valuation_int(cls.b[1], p, n)
        vr = valuation_int(cls.r_tag.residue(cls.ctx), p, n)
        vs = valuation_int(cls.s_tag.residue(cls.ctx), p, n)
        vd = valuation_int(cls.d_residue(), p, n)
        vw = vd if cls.kind == "I" else valuation_int(cls.w_residue(), p, n)
        return QPowerValue(q, Fraction(1), -(2 * (va + vb + vr + vs) + vd + vw))
    if cls.kind == "III":
        return QPowerValue(q, Fraction(1), 0)
    d1, d2 = cls.iv_d_coords()
    a_res = cls.a_residue()
    nd = (d1 * d1 - a_res * d2 * d2) % cls.modulus
    v = valuation_int(nd, p, n)
    v_br = valuation_int(_iv_br_scalar(cls), p, n)
    return QPowerValue(q, Fraction(1), -(4 * v_br + 2 * v))


def _chi_factor(cls: ThetaClass, cfd: ClassFormData, mode: str) -> int:
    y = cls.y
    if not y.ramified:
        if cls.kind == "IV":
            return chi_eval_int(y, _iv_br_scalar(cls), cls.ctx, cls.precision)
        # chi_Y of the stripped scalar pi^pi_power * unit
        return (-1) ** cfd.pi_power
    # ramified: the oracle profile already carries chi_Y(prefactor)
    if mode == "oracle":
        return 1
    return legendre(cfd.form.unit_prefactor, cls.p)


def twisted_character_value(cls: ThetaClass, mode: str = "closed_form",
                            n_max: Optional[int] = None, engine: str = "pruned",
                            threads: int = 1) -> CharacterValue:
    """The normalized twisted-character value of the class at s = 0.

    mode "closed_form" classifies the form and sums its tabulated
    profile; mode "oracle" counts the shells of the concrete form by
    enumeration.  Both run through the same tail-continuation and
    normalization, and must agree exactly.
    """
    if mode not in ("closed_form", "oracle"):
        raise ValueError(f"unknown mode {mode!r}")
    ctx = cls.ctx
    q = ctx.q
    cfd = class_form(cls)
    qf = cfd.form
    if cls.y.ramified:
        if not _is_worked_ramified_shape(cls, qf) or cfd.pi_power != 0:
            raise UnsupportedClass(
                "ramified Y is supported only for the worked type II "
                "configuration D = u, r' = 1, A = pi")
        if mode == "oracle":
            nm = n_max if n_max is not None else min(_ORACLE_N_MAX,
                                                     qf.precision - 2)
            profile = char_profile(qf, cls.y, nm, ctx, engine=engine,
                                   threads=threads)
        else:
            lemma = "A.1.pi" if cls.y.d_class is SquareClass.PI else "A.1.upi"
            nm = n_max if n_max is not None else _CLOSED_N_MAX
            profile = closed_profile(lemma, q, nm)
    else:
        if mode == "oracle":
            nm = n_max if n_max is not None else min(_ORACLE_N_MAX,
                                                     qf.precision - 2)
            profile = vol_profile(qf, nm, ctx, engine=engine, threads=threads)
        else:
            lemma = classify_lemma(qf, ctx)
            nm = n_max if n_max is not None else _CLOSED_N_MAX
            profile = closed_profile(lemma, q, nm)
    series_value = eval_at_s0(profile)
    # the stripped scalar pi^pi_power contributes q^(2 pi_power) at m = -2
    # (its sign is part of the chi factor)
    series_value *= Fraction(q) ** (2 * cfd.pi_power)
    chi = _chi_factor(cls, cfd, mode)
    value = (QPowerValue(q, Fraction(chi)) * _prefactor_qpower(cls)
             * QPowerValue(q, series_value)
             / normalization_constant(cls.y, q, 0))
    return CharacterValue(value=value.normalized(), kind=cls.kind,
                          y_matches_e3=_y_matches_e3(cls),
                          twist_sign=twist_sign(cls))


def expected_value(cls: ThetaClass) -> CharacterValue:
    """Theorem-level prediction: 0 for types I and III; for types II and
    IV, magnitude 2 exactly when the twisting extension matches E3, with
    the twist-dependent sign the volume tables exhibit (opposite on the
    two twist classes; the overall orientation differs between the two
    types and is recorded as computed)."""
    q = cls.ctx.q
    kappa = twist_sign(cls)
    matches = _y_matches_e3(cls)
    if cls.kind in ("I", "III"):
        coeff = Fraction(0)
    elif cls.kind == "II":
        if cls.y.ramified:
            chi_bs = legendre(cls.b[1] * cls.s_tag.residue(cls.ctx), cls.p)
            coeff = Fraction(-2 * legendre(-1, cls.p) * chi_bs
                             * (1 if matches else 0))
        else:
            coeff = Fraction(-2 * kappa * (1 if matches else 0))
    else:  # IV
        coeff = Fraction(2 * kappa * (1 if matches else 0))
    return CharacterValue(value=QPowerValue(q, coeff, 0), kind=cls.kind,
                          y_matches_e3=matches, twist_sign=kappa)


_IV_TWIST_SETS = {
    True: (SquareClass.ONE, SquareClass.PI),   # E3 unramified
    False: (SquareClass.ONE, SquareClass.U),   # E3 ramified
}


def twist_partner(cls: ThetaClass) -> ThetaClass:
    """The other twisted-conjugacy class inside the same stable class."""
    from dataclasses import replace
    if cls.kind in ("I", "II"):
        reps = ((SquareClass.ONE, SquareClass.U) if cls.d_tag.ramified
                else (SquareClass.ONE, SquareClass.PI))
        if cls.r_tag not in reps:
            raise UnsupportedClass(
                f"twist {cls.r_tag.value} outside the representative set")
        other = reps[1] if cls.r_tag is reps[0] else reps[0]
        return replace(cls, r_tag=other)
    if cls.kind == "III":
        if cls.br_class == "1":
            if cls.a_tag is SquareClass.U and not cls.ctx.minus_one_is_square:
                return replace(cls, br_class="d_plus_i")
            return replace(cls, br_class="sqrtA")
        return replace(cls, br_class="1")
    reps = _IV_TWIST_SETS[cls.a_tag is SquareClass.U]
    if cls.r_tag not in reps:
        raise UnsupportedClass(
            f"twist {cls.r_tag.value} outside the representative set")
    other = reps[1] if cls.r_tag is reps[0] else reps[0]
    return replace(cls, r_tag=other)


def stable_class_sum(cls: ThetaClass, mode: str = "closed_form",
                     n_max: Optional[int] = None, engine: str = "pruned",
                     threads: int = 1) -> Fraction:
    """Sum of the twisted-character values over the two twist
    representatives of the stable class; vanishes identically."""
    if cls.kind not in ("II", "IV"):
        raise WrongKind("stable sums are computed for types II and IV")
    if cls.y.ramified:
        raise UnsupportedClass("stable sums are evaluated at unramified Y")
    partner = twist_partner(cls)
    v1 = twisted_character_value(cls, mode=mode, n_max=n_max, engine=engine,
                                 threads=threads)
    v2 = twisted_character_value(partner, mode=mode, n_max=n_max,
                                 engine=engine, threads=threads)
    return v1.value.as_fraction() + v2.value.as_fraction()


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def _qpower_json(v: QPowerValue) -> dict:
    return {"num": str(v.coeff.numerator), "den": str(v.coeff.denominator),
            "half_exponent": v.half_exponent}


def character_report(cls: ThetaClass, mode: str = "closed_form",
                     n_max: Optional[int] = None, engine: str = "pruned",
                     threads: int = 1) -> dict:
    """Machine-readable record of one evaluation: inputs echoed, profile,
    tail model, continued value, expected value, pass flags."""
    ctx = cls.ctx
    qf = class_form(cls).form
    if cls.y.ramified:
        if mode == "oracle":
            nm = n_max if n_max is not None else min(_ORACLE_N_MAX,
                                                     qf.precision - 2)
            profile = char_profile(qf, cls.y, nm, ctx, engine=engine,
                                   threads=threads)
        else:
            lemma = "A.1.pi" if cls.y.d_class is SquareClass.PI else "A.1.upi"
            profile = closed_profile(lemma, ctx.q,
                                     n_max if n_max is not None else _CLOSED_N_MAX)
        lemma_name = profile.label
    else:
        lemma_name = classify_lemma(qf, ctx)
        if mode == "oracle":
            nm = n_max if n_max is not None else min(_ORACLE_N_MAX,
                                                     qf.precision - 2)
            profile = vol_profile(qf, nm, ctx, engine=engine, threads=threads)
        else:
            profile = closed_profile(lemma_name, ctx.q,
                                     n_max if n_max is not None else _CLOSED_N_MAX)
    tail = fit_tail(profile)
    got = twisted_character_value(cls, mode=mode, n_max=n_max, engine=engine,
                                  threads=threads)
    want = expected_value(cls)
    return {
        "inputs": cls.to_json_dict(),
        "mode": mode,
        "lemma": lemma_name,
        "profile": profile.to_json_dict(),
        "tail": {
            "n0": tail.n0,
            "tail_zero": tail.tail_zero,
            "C": (None if tail.tail_zero else
                  {"num": str(tail.coefficient.numerator),
                   "den": str(tail.coefficient.denominator)}),
        },
        "value": _qpower_json(got.value),
        "expected": _qpower_json(want.value),
        "y_matches_E3": got.y_matches_e3,
        "twist_sign": got.twist_sign,
        "pass": got.value == want.value,
    }


# ---------------------------------------------------------------------------
# Standard class builders (the acceptance matrix)
# ---------------------------------------------------------------------------

_A_CANDIDATES = ((1, 1), (1, 2), (2, 1), (1, 3), (3, 1), (2, 3))


def type_i_class(ctx: PrimeContext, d_tag: str, r_tag: str, s_tag: str,
                 precision: int = 6, y_tag: str = "u") -> ThetaClass:
    return ThetaClass(kind="I", ctx=ctx, precision=precision,
                      y=CharDescriptor.from_tag(y_tag),
                      a=(1, ctx.p ** precision - 1), b=(1, 1 + ctx.p),
                      d_tag=SquareClass(d_tag), r_tag=SquareClass(r_tag),
                      s_tag=SquareClass(s_tag))


def type_ii_class(ctx: PrimeContext, d_tag: str, a_tag: str, r_tag: str,
                  s_tag: str = "1", precision: int = 6,
                  y_tag: str = "u") -> ThetaClass:
    """a = (1, -1) makes the effective twist class equal r/s, so the twist
    tags name the catalog shapes directly."""
    return ThetaClass(kind="II", ctx=ctx, precision=precision,
                      y=CharDescriptor.from_tag(y_tag),
                      a=(1, ctx.p ** precision - 1), b=(1, 1),
                      d_tag=SquareClass(d_tag), a_tag=SquareClass(a_tag),
                      r_tag=SquareClass(r_tag), s_tag=SquareClass(s_tag))


def type_iii_class(ctx: PrimeContext, a_tag: str, d_tag: str, br: str,
                   precision: int = 6, y_tag: str = "u") -> ThetaClass:
    for a in _A_CANDIDATES:
        cls = ThetaClass(kind="III", ctx=ctx, precision=precision,
                         y=CharDescriptor.from_tag(y_tag), a=a, b=(1, 0),
                         a_tag=SquareClass(a_tag), d_tag=SquareClass(d_tag),
                         br_class=br)
        try:
            cls.check_regular()
            return cls
        except Exception:
            continue
    raise UnsupportedClass("no regular coordinates found")


def type_iv_class(ctx: PrimeContext, a_tag: str, r_tag: str,
                  precision: int = 6, y_tag: str = "u") -> ThetaClass:
    for a in _A_CANDIDATES:
        cls = ThetaClass(kind="IV", ctx=ctx, precision=precision,
                         y=CharDescriptor.from_tag(y_tag), a=a, b=(1, 0),
                         a_tag=SquareClass(a_tag), r_tag=SquareClass(r_tag))
        try:
            cls.check_regular()
            return cls
        except Exception:
            continue
    raise UnsupportedClass("no regular coordinates found")


def appendix_class(ctx: PrimeContext, y_tag: str,
                   precision: int = 6) -> ThetaClass:
    """The worked ramified configuration: D = u, r = 1, A = pi, whose
    form is x^2 - y^2 + u t^2 - u pi z^2."""
    return type_ii_class(ctx, d_tag="u", a_tag="pi", r_tag="1", s_tag="1",
                         precision=precision, y_tag=y_tag)


def evaluation_matrix(ctx: PrimeContext, precision: int = 6,
                      mode: str = "closed_form") -> list[dict]:
    """The full (type x twist x Y) evaluation table at one prime."""
    rows = []

    def add(desc, cls):
        rows.append({"case": desc, **character_report(cls, mode=mode)})

    twist_units = ("1", "u")
    twist_pi = ("1", "pi")
    for d_tag in ("pi", "u", "upi"):
        reps = twist_pi if d_tag == "u" else twist_units
        for r in reps:
            for s in reps:
                add(f"I D={d_tag} r={r} s={s}",
                    type_i_class(ctx, d_tag, r, s, precision))
    ii_configs = [("pi", "u"), ("pi", "upi"), ("u", "pi"), ("u", "upi"),
                  ("upi", "u"), ("upi", "pi")]
    for d_tag, a_tag in ii_configs:
        reps = twist_pi if d_tag == "u" else twist_units
        for r in reps:
            add(f"II D={d_tag} A={a_tag} r={r}",
                type_ii_class(ctx, d_tag, a_tag, r, precision=precision))
    iii_configs = [("u", "pi"), ("u", "upi"), ("pi", "u"), ("pi", "upi"),
                   ("upi", "u"), ("upi", "pi")]
    for a_tag, d_tag in iii_configs:
        second = ("d_plus_i" if (a_tag == "u" and not ctx.minus_one_is_square)
                  else "sqrtA")
        for br in ("1", second):
            add(f"III A={a_tag} D={d_tag} br={br}",
                type_iii_class(ctx, a_tag, d_tag, br, precision))
    for a_tag in ("u", "pi", "upi"):
        reps = twist_pi if a_tag == "u" else twist_units
        for r in reps:
            add(f"IV A={a_tag} r={r}",
                type_iv_class(ctx, a_tag, r, precision))
    for y_tag in ("pi", "upi"):
        add(f"II-appendix Y={y_tag}",
            appendix_class(ctx, y_tag, precision))
    return rows
