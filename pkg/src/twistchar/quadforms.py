"""Quaternary quadratic forms over the residue rings: the catalog of
canonical shapes, diagonalization by unimodular changes of basis,
isotropy testing, and verified coordinate-change reductions.

Gram matrices are symmetric with entries mod p^N; cross terms carry the
factor 1/2, which exists since p is odd.  Variable order is fixed as
(x, y, z, t) everywhere.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .localfield import (
    NotAUnit,
    PrimeContext,
    ZeroAtPrecision,
    inv_mod,
    legendre,
    sqrt_unit,
    valuation_int,
)


class PrecisionTooLow(ArithmeticError):
    """The working precision cannot certify the requested structure."""


class SingularChangeOfBasis(ValueError):
    """The change-of-basis matrix is not invertible over R."""


class IsotropyCheckMismatch(AssertionError):
    """Hasse-invariant answer and the primitive-zero search disagree."""


Matrix = tuple[tuple[int, ...], ...]


def _as_matrix(rows) -> Matrix:
    return tuple(tuple(int(e) for e in row) for row in rows)


@dataclass(frozen=True)
class QuadForm4:
    """Symmetric 4x4 Gram data over R/p^N R with a factored unit prefactor.

    The form evaluates as unit_prefactor * (v^T gram v); the prefactor is
    kept outside so that character values chi_Y(prefactor) can be split
    off exactly.
    """

    p: int
    precision: int
    gram: Matrix
    unit_prefactor: int = 1
    label: str = ""

    def __post_init__(self):
        m = self.p ** self.precision
        g = _as_matrix([[e % m for e in row] for row in self.gram])
        if any(len(row) != 4 for row in g) or len(g) != 4:
            raise ValueError("gram must be 4x4")
        for i in range(4):
            for j in range(4):
                if g[i][j] != g[j][i]:
                    raise ValueError("gram must be symmetric")
        object.__setattr__(self, "gram", g)
        object.__setattr__(self, "unit_prefactor", self.unit_prefactor % m)
        if self.unit_prefactor % self.p == 0:
            raise NotAUnit("unit_prefactor must be a unit")

    @property
    def modulus(self) -> int:
        return self.p ** self.precision

    def evaluate(self, v: Sequence[int]) -> int:
        """v^T gram v mod p^N (prefactor not applied)."""
        m = self.modulus
        total = 0
        for i in range(4):
            total += self.gram[i][i] * v[i] * v[i]
            for j in range(i + 1, 4):
                total += 2 * self.gram[i][j] * v[i] * v[j]
        return total % m

    def evaluate_full(self, v: Sequence[int]) -> int:
        return (self.unit_prefactor * self.evaluate(v)) % self.modulus

    def scaled(self, c: int, label: str = "") -> "QuadForm4":
        m = self.modulus
        g = [[(c * e) % m for e in row] for row in self.gram]
        return QuadForm4(self.p, self.precision, _as_matrix(g),
                         self.unit_prefactor, label or self.label)

    def at_precision(self, n: int) -> "QuadForm4":
        if n > self.precision:
            raise PrecisionTooLow("cannot extend a Gram matrix's precision")
        return QuadForm4(self.p, n, self.gram, self.unit_prefactor, self.label)


def diagonal_form(coeffs: Sequence[int], p: int, precision: int,
                  label: str = "", unit_prefactor: int = 1) -> QuadForm4:
    m = p ** precision
    g = [[0] * 4 for _ in range(4)]
    for i, c in enumerate(coeffs):
        g[i][i] = c % m
    return QuadForm4(p, precision, _as_matrix(g), unit_prefactor, label)


def _half(p: int, precision: int) -> int:
    return inv_mod(2, p, precision)


# ---------------------------------------------------------------------------
# Canonical shape catalog.
#
# Type I, isotropic (the three shapes), keyed by the volume lemma they obey:
#   I.1  x^2 - y^2 - pi z^2 + pi t^2          (D = pi, r = 1)
#   I.2  x^2 + pi y^2 - pi z^2 - pi^2 t^2     (D = pi, r = -pi)
#   I.3  x^2 - y^2 - u z^2 + u t^2            (D = u,  r = 1)
# Type I, anisotropic realizations (one per choice of D):
#   I.an.pi   x^2 - u y^2 - pi z^2 + u pi t^2     (D = pi,  r = u)
#   I.an.u    x^2 - pi y^2 - u z^2 + u pi t^2     (D = u,   r = pi)
#   I.an.upi  x^2 - u y^2 - u pi z^2 + u^2 pi t^2 (D = upi, r = u)
# Type II (six shapes; the generic form is x^2 - r y^2 - AD z^2 + r D t^2):
#   II.1  (r,D,A) = (1,pi,u)     II.2 (u,pi,u)     II.3a (1,u,pi)
#   II.3b (1,pi,upi)             II.4 (pi,u,pi)    II.5  (u,pi,upi)
# Type III (one shape per twist representative):
#   III.1  z t - pi x y
#   III.2  t^2 + pi z^2 - u y^2 - u pi x^2
#   III.3  t^2 - z^2 - pi y^2 + pi x^2 + 2 d (z t - pi x y)   (p = 3 mod 4)
# Type IV:
#   IV.unram  x^2 - u y^2 - 2 z t
#   IV.ram    x^2 + pi y^2 - 2 z t
# ---------------------------------------------------------------------------

SHAPE_ALIASES = {"II.3": "II.3a", "IV.2": "IV.unram", "A.1": "II.3a"}

CATALOG_SHAPES = (
    "I.1", "I.2", "I.3", "I.an.pi", "I.an.u", "I.an.upi",
    "II.1", "II.2", "II.3a", "II.3b", "II.4", "II.5",
    "III.1", "III.2", "III.3", "IV.unram", "IV.ram",
)

#: shapes whose volume profiles the closed-form lemma catalog covers directly
VOLUME_TABLE_SHAPES = ("I.1", "I.2", "I.3", "II.1", "II.2", "II.3a", "II.3b",
                       "II.4", "II.5", "IV.unram")


def canonical_form(shape: str, ctx: PrimeContext, precision: int) -> QuadForm4:
    """Concrete Gram matrix of a named catalog shape, using the fixed
    residues u, pi = p, and d from the context."""
    shape = SHAPE_ALIASES.get(shape, shape)
    p, u = ctx.p, ctx.u
    m = p ** precision
    diag = {
        "I.1": (1, -1, -p, p),
        "I.2": (1, p, -p, -p * p),
        "I.3": (1, -1, -u, u),
        "I.an.pi": (1, -u, -p, u * p),
        "I.an.u": (1, -p, -u, u * p),
        "I.an.upi": (1, -u, -u * p, u * u * p),
        "II.1": (1, -1, -u * p, p),
        "II.2": (1, -u, -u * p, u * p),
        "II.3a": (1, -1, -u * p, u),
        "II.3b": (1, -1, -u, p),
        "II.4": (1, -p, -u * p, u * p),
        "II.5": (1, -u, -u, u * p),
        "IV.ram": None,
        "IV.unram": None,
        "III.1": None,
        "III.2": None,
        "III.3": None,
    }
    if shape not in diag:
        raise KeyError(f"unknown shape {shape!r}")
    if diag[shape] is not None:
        return diagonal_form(diag[shape], p, precision, label=shape)
    if shape == "IV.unram":
        g = [[1, 0, 0, 0], [0, -u, 0, 0], [0, 0, 0, -1], [0, 0, -1, 0]]
        return QuadForm4(p, precision, _as_matrix([[e % m for e in r] for r in g]),
                         label=shape)
    if shape == "IV.ram":
        g = [[1, 0, 0, 0], [0, p, 0, 0], [0, 0, 0, -1], [0, 0, -1, 0]]
        return QuadForm4(p, precision, _as_matrix([[e % m for e in r] for r in g]),
                         label=shape)
    h = _half(p, precision)
    if shape == "III.1":
        g = [[0, (-p * h) % m, 0, 0], [(-p * h) % m, 0, 0, 0],
             [0, 0, 0, h], [0, 0, h, 0]]
        return QuadForm4(p, precision, _as_matrix(g), label=shape)
    if shape == "III.2":
        return diagonal_form((-u * p, -u, p, 1), p, precision, label=shape)
    # III.3: A = -1 branch, needs d with d^2 + 1 a non-square;
    # the cross terms 2d zt and -2dD xy give Gram entries d and -dD
    if ctx.d is None:
        raise ValueError("III.3 needs p = 3 mod 4 (the d branch)")
    d = ctx.d
    g = [[p % m, (-p * d) % m, 0, 0],
         [(-p * d) % m, (-p) % m, 0, 0],
         [0, 0, (-1) % m, d % m],
         [0, 0, d % m, 1]]
    return QuadForm4(p, precision, _as_matrix(g), label=shape)


# ---------------------------------------------------------------------------
# Diagonalization and Jordan data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiagonalData:
    """Q(Mv) = sum coeffs[i] v_i^2 mod p^precision with M in GL(4, R)."""

    p: int
    precision: int
    coeffs: tuple[int, ...]
    basis: Matrix

    def jordan_key(self) -> tuple[tuple[int, int, int], ...]:
        """Per-pi-power Jordan invariants: (level, rank, disc legendre).

        For p odd these classify unimodular-equivalence of the lattice
        form, hence they determine the shell volume profile.
        """
        p, n = self.p, self.precision
        levels: dict[int, list[int]] = {}
        for c in self.coeffs:
            v = valuation_int(c, p, n)
            if v >= n - 1:
                raise PrecisionTooLow(
                    f"diagonal coefficient valuation {v} too close to precision {n}"
                )
            unit = (c % p ** n) // p ** v
            levels.setdefault(v, []).append(legendre(unit, p))
        return tuple(
            (lvl, len(signs), _prod(signs)) for lvl, signs in sorted(levels.items())
        )


def _prod(xs):
    out = 1
    for x in xs:
        out *= x
    return out


def _mat_mul(a, b, m):
    return [[sum(a[i][k] * b[k][j] for k in range(4)) % m for j in range(4)]
            for i in range(4)]


def _mat_t(a):
    return [[a[j][i] for j in range(4)] for i in range(4)]


def _det4(a, m):
    total = 0
    for perm in itertools.permutations(range(4)):
        sign = _perm_sign(perm)
        term = sign
        for i in range(4):
            term *= a[i][perm[i]]
        total += term
    return total % m


def _perm_sign(perm):
    sign = 1
    for i in range(len(perm)):
        for j in range(i + 1, len(perm)):
            if perm[i] > perm[j]:
                sign = -sign
    return sign


def diagonalize(q: QuadForm4) -> DiagonalData:
    """Diagonalize by a unimodular congruence (p odd), preserving the
    unit box and hence the shell profile.

    Pivots are chosen of minimal valuation; an off-diagonal minimum is
    first moved onto the diagonal by v_i <- v_i + v_j.  Clearing divides
    only by the pivot's unit part, so no precision is lost.
    """
    p, n = q.p, q.precision
    m = p ** n
    g = [list(row) for row in q.gram]
    basis = [[1 if i == j else 0 for j in range(4)] for i in range(4)]

    def apply_col_op(e):
        nonlocal g, basis
        g = _mat_mul(_mat_t(e), _mat_mul(g, e, m), m)
        basis = _mat_mul(basis, e, m)

    def elementary(i, j, c):
        # identity + c at (i, j): adds c * (column j of the old basis)
        e = [[1 if a == b else 0 for b in range(4)] for a in range(4)]
        e[i][j] = c % m
        return e

    def swap(i, j):
        e = [[1 if a == b else 0 for b in range(4)] for a in range(4)]
        e[i][i] = e[j][j] = 0
        e[i][j] = e[j][i] = 1
        return e

    for i in range(4):
        best = None
        for r in range(i, 4):
            for c in range(r, 4):
                entry = g[r][c] % m
                if entry == 0:
                    continue
                v = valuation_int(entry, p, n)
                key = (v, r != c, r, c)  # prefer low valuation, then diagonal
                if best is None or key < best[0]:
                    best = (key, r, c)
        if best is None:
            raise PrecisionTooLow("form is 0 mod p^N on the remaining block")
        _, r, c = best
        if r != c:
            apply_col_op(elementary(c, r, 1))  # v_r <- v_r + v_c
        if r != i:
            apply_col_op(swap(i, r))
        piv = g[i][i] % m
        v = valuation_int(piv, p, n)
        inv_unit = inv_mod(piv // p ** v, p, n - v)
        for j in range(i + 1, 4):
            entry = g[i][j] % m
            if entry == 0:
                continue
            quot = ((entry // p ** v) * inv_unit) % p ** (n - v)
            apply_col_op(elementary(i, j, -quot))
    coeffs = tuple(g[i][i] % m for i in range(4))
    return DiagonalData(p=p, precision=n, coeffs=coeffs, basis=_as_matrix(basis))


# ---------------------------------------------------------------------------
# Isotropy
# ---------------------------------------------------------------------------

def hilbert_symbol(a: int, b: int, p: int, precision: int) -> int:
    """Hilbert symbol (a, b)_p for odd p, from valuations and unit parts."""
    av = valuation_int(a, p, precision)
    bv = valuation_int(b, p, precision)
    au = (a % p ** precision) // p ** av
    bu = (b % p ** precision) // p ** bv
    s = 1
    if av % 2 and bv % 2:
        s *= legendre(-1, p)
    if bv % 2:
        s *= legendre(au, p)
    if av % 2:
        s *= legendre(bu, p)
    return s


def hasse_anisotropic(q: QuadForm4, ctx: PrimeContext) -> bool:
    """Quaternary form fails to represent zero iff its discriminant is a
    square and its Hasse invariant is -(-1,-1) = -1 (p odd)."""
    dd = diagonalize(q)
    p, n = q.p, q.precision
    disc_val = 0
    disc_sign = 1
    for c in dd.coeffs:
        v = valuation_int(c, p, n)
        disc_val += v
        disc_sign *= legendre((c % p ** n) // p ** v, p)
    disc_is_square = disc_val % 2 == 0 and disc_sign == 1
    hasse = 1
    for i in range(4):
        for j in range(i + 1, 4):
            hasse *= hilbert_symbol(dd.coeffs[i], dd.coeffs[j], p, n)
    return disc_is_square and hasse == -1


def _search_certified_zero(q: QuadForm4, k_max: int = 4) -> bool:
    """Look for a primitive zero mod p^k (k <= k_max) certified liftable:
    Q(v) = 0 mod p^k with the gradient valuation j satisfying 2j < k."""
    import numpy as np

    p = q.p
    k_max = min(k_max, q.precision)
    g = np.array(q.gram, dtype=np.int64)

    # level 1: all nonzero vectors mod p
    grids = np.indices((p, p, p, p)).reshape(4, -1).T
    cand = grids[np.any(grids != 0, axis=1)].astype(np.int64)

    for k in range(1, k_max + 1):
        mod = p ** k
        vals = np.einsum("ni,ij,nj->n", cand, g, cand) % mod
        cand = cand[vals == 0]
        if cand.shape[0] == 0:
            return False
        grad = (2 * (cand @ g)) % mod
        nz = grad != 0
        # gradient valuation per row; rows with grad = 0 mod p^k stay uncertified
        jv = np.full(cand.shape[0], k, dtype=np.int64)
        gg = grad.copy()
        for step in range(k):
            has = np.any((gg % p != 0) & nz, axis=1)
            jv = np.minimum(jv, np.where(has, step, k))
            gg //= p
        if np.any(2 * jv < k):
            return True
        if k < k_max:
            digits = np.indices((p, p, p, p)).reshape(4, -1).T.astype(np.int64)
            cand = (cand[:, None, :] + mod * digits[None, :, :]).reshape(-1, 4)
    return False


def is_isotropic(q: QuadForm4, ctx: PrimeContext) -> bool:
    """True iff the form represents zero nontrivially over F.

    Decided by the Hasse-invariant computation on a diagonalization and
    cross-checked against a certified primitive-zero search; the two
    routes must agree.
    """
    aniso = hasse_anisotropic(q, ctx)
    found = _search_certified_zero(q)
    if aniso and found:
        raise IsotropyCheckMismatch(
            f"{q.label or 'form'}: Hasse says anisotropic but a zero lifts")
    if not aniso and not found:
        raise IsotropyCheckMismatch(
            f"{q.label or 'form'}: Hasse says isotropic but no zero certified "
            f"at depth 4")
    return not aniso


# ---------------------------------------------------------------------------
# Coordinate-change verification
# ---------------------------------------------------------------------------

def verify_equivalence(q1: QuadForm4, q2: QuadForm4, matrix, c: int) -> bool:
    """True iff Q2(v) = c * Q1(M v) identically at the joint precision.

    M must be invertible over R and c a unit; both Gram matrices are
    compared entrywise after the substitution.
    """
    if q1.p != q2.p:
        raise ValueError("mixed primes")
    p = q1.p
    n = min(q1.precision, q2.precision)
    m = p ** n
    mat = [list(row) for row in matrix]
    if _det4(mat, m) % p == 0:
        raise SingularChangeOfBasis("det(M) is not a unit")
    if c % p == 0:
        raise SingularChangeOfBasis("scale c is not a unit")
    g1 = [[e % m for e in row] for row in q1.gram]
    transformed = _mat_mul(_mat_t(mat), _mat_mul(g1, mat, m), m)
    for i in range(4):
        for j in range(4):
            if (c * transformed[i][j] - q2.gram[i][j]) % m != 0:
                return False
    return True


@dataclass(frozen=True)
class ReductionWitness:
    """source(v) = scale * target(M v); lemma names the closed-form
    profile the source inherits from the target."""

    source: QuadForm4
    target: QuadForm4
    matrix: Matrix
    scale: int
    lemma: str

    def check(self) -> bool:
        return verify_equivalence(self.target, self.source, self.matrix, self.scale)


def type_iii_reduction(br_class: str, ctx: PrimeContext, precision: int,
                       d_tag: Optional[str] = None) -> ReductionWitness:
    """Reduce a type-III shape to the type-I family form it inherits its
    shell profile from, with the witnessing substitution.

    br_class is one of "1", "sqrtA", "d_plus_i" (the twist representatives).
    d_tag picks the square class of D; defaults follow the catalog.
    """
    p, u = ctx.p, ctx.u
    n = precision
    m = p ** n

    if br_class == "1":
        d_res = {"u": u, "pi": p, "upi": u * p, None: p}[d_tag]
        h = _half(p, n)
        g = [[0, (-d_res * h) % m, 0, 0], [(-d_res * h) % m, 0, 0, 0],
             [0, 0, 0, h], [0, 0, h, 0]]
        source = QuadForm4(p, n, _as_matrix(g), label=f"III(br=1,D={d_res})")
        target = diagonal_form((1, -1, -d_res, d_res), p, n,
                               label="I-family split")
        mat = _as_matrix([[0, 0, 1, 1], [0, 0, 1, -1], [1, 1, 0, 0], [1, -1, 0, 0]])
        scale = inv_mod(4, p, n)
        lemma = "I.3" if d_tag == "u" else "I.1"
        return ReductionWitness(source, target, mat, scale, lemma)

    if br_class == "sqrtA":
        if d_tag in (None, "u"):
            a_res, d_res = p, u           # D = u forces A ramified
        else:
            if not ctx.minus_one_is_square:
                raise ValueError("sqrtA with ramified D needs -1 a square")
            a_res = u
            d_res = {"pi": p, "upi": u * p}[d_tag]
        source = diagonal_form(((-a_res * d_res) % m, (-d_res) % m, a_res % m, 1),
                               p, n, label=f"III(br=sqrtA,A={a_res},D={d_res})")
        target = diagonal_form((1, a_res, (-d_res) % m, (-a_res * d_res) % m),
                               p, n, label="I-family r=-A")
        mat = _as_matrix([[0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0], [1, 0, 0, 0]])
        return ReductionWitness(source, target, mat, 1, "I.an")

    if br_class == "d_plus_i":
        if ctx.d is None:
            raise ValueError("d branch needs p = 3 mod 4")
        d = ctx.d
        d_res = {"pi": p, "upi": u * p, None: p}[d_tag]
        g = [[d_res % m, (-d_res * d) % m, 0, 0],
             [(-d_res * d) % m, (-d_res) % m, 0, 0],
             [0, 0, (-1) % m, d % m],
             [0, 0, d % m, 1]]
        source = QuadForm4(p, n, _as_matrix(g), label=f"III(br=d+i,D={d_res})")
        w = d * d + 1
        target = diagonal_form((1, (-w) % m, (-d_res) % m, (w * d_res) % m),
                               p, n, label="I-family anisotropic")
        mat = _as_matrix([[0, 0, d, 1], [0, 0, 1, 0], [d, 1, 0, 0], [1, 0, 0, 0]])
        return ReductionWitness(source, target, mat, 1, "I.an")

    raise KeyError(f"unknown type-III twist representative {br_class!r}")


def type_iv_reduction(which: str, ctx: PrimeContext, precision: int) -> ReductionWitness:
    """Witness that the type-IV shapes carry a catalog profile: the
    ramified shape is a II.3-family form up to a unit, the unramified one
    is the form of the IV volume lemma."""
    p, u = ctx.p, ctx.u
    n = precision
    m = p ** n
    if which == "ram":
        source = canonical_form("IV.ram", ctx, n)
        uinv = inv_mod(u, p, n)
        target = diagonal_form((1, p, (-uinv) % m, uinv % m), p, n,
                               label="II.3-family scaled")
        h = _half(p, n)
        mat = _as_matrix([
            [1, 0, 0, 0],
            [0, 1, 0, 0],
            [0, 0, (uinv * h) % m, (-uinv * h) % m],
            [0, 0, 1, 1],
        ])
        return ReductionWitness(source, target, mat, 1, "II.3")
    if which == "unram":
        if ctx.minus_one_is_square:
            # 2zt - y^2 - u x^2  ->  -(IV catalog shape)
            e = sqrt_unit(m - 1, p, n)
            g = [[(-u) % m, 0, 0, 0], [0, (-1) % m, 0, 0],
                 [0, 0, 0, 1], [0, 0, 1, 0]]
            source = QuadForm4(p, n, _as_matrix(g), label="IV class form (D=sqrtA)")
            target = canonical_form("IV.unram", ctx, n)
            mat = _as_matrix([[0, 1, 0, 0], [e, 0, 0, 0],
                              [0, 0, 1, 0], [0, 0, 0, 1]])
            return ReductionWitness(source, target, mat, (-1) % m, "IV.2")
        # A = -1, D = d + i: 2zt - y^2 + x^2 - 2 d x y
        d = ctx.d
        w = d * d + 1
        g = [[1, (-d) % m, 0, 0], [(-d) % m, (-1) % m, 0, 0],
             [0, 0, 0, 1], [0, 0, 1, 0]]
        source = QuadForm4(p, n, _as_matrix(g), label="IV class form (D=d+i)")
        target = diagonal_gram_hyperbolic(w, p, n)
        mat = _as_matrix([[1, (-d) % m, 0, 0], [0, 1, 0, 0],
                          [0, 0, 1, 0], [0, 0, 0, (-1) % m]])
        return ReductionWitness(source, target, mat, 1, "IV.2")
    raise KeyError(f"unknown type-IV case {which!r}")


def diagonal_gram_hyperbolic(w: int, p: int, n: int) -> QuadForm4:
    """x^2 - w y^2 - 2 z t with an arbitrary non-square unit w."""
    m = p ** n
    g = [[1, 0, 0, 0], [0, (-w) % m, 0, 0], [0, 0, 0, (-1) % m], [0, 0, (-1) % m, 0]]
    return QuadForm4(p, n, _as_matrix(g), label=f"x^2-{w}y^2-2zt")
