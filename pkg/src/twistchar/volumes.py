"""The counting oracle: exact shell volumes vol(V_n^0) and character sums
I_n^Y by enumeration over residue representatives, plus the closed-form
volume tables they are checked against.

V^0 is the set of primitive vectors in R^4 modulo units.  Classes are
enumerated by pivot normalization: pick the pivot index i (the first unit
coordinate), force coordinates before i into pi*R, set coordinate i to 1,
and leave the rest free.  Each class then has exactly one representative,
a cell of measure q^(-3N) at precision N, so all volumes are exact
rationals with denominator a power of q.

Two engines compute identical counts: ``flat`` walks every representative
mod p^N (the reference), ``pruned`` refines digit by digit and discards a
branch as soon as the valuation of Q is decided (val Q = n only depends
on the vector mod p^(n+1)).  Counts are exact integers either way, and
shards are summed in a fixed order, so results do not depend on the
thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .localfield import CharDescriptor, PrimeContext, legendre, valuation_int
from .quadforms import PrecisionTooLow, QuadForm4, diagonalize

__all__ = [
    "UnknownLemma", "VolumeProfile", "CharSumProfile", "DESK_BUDGET",
    "vol_profile", "char_profile", "closed_form_profile", "closed_profile",
    "classify_lemma", "lemma_for_shape", "shell_integral",
    "one_variable_profile", "vol_v0",
]


class UnknownLemma(KeyError):
    """No closed-form volume table is on file for this form or id."""


#: largest n_max per prime that keeps a full verification run at desk scale
DESK_BUDGET = {3: 4, 5: 3, 7: 2}

_CHUNK_TARGET = 1 << 22  # elements per flat-enumeration chunk


def vol_v0(q: int) -> Fraction:
    """vol(V^0) = (1 - q^-4) / (1 - q^-1)."""
    return (1 - Fraction(1, q) ** 4) / (1 - Fraction(1, q))


@dataclass(frozen=True)
class VolumeProfile:
    """Exact rationals v_n = vol(V_n^0) for n = 0..n_max."""

    q: int
    n_max: int
    entries: tuple[Fraction, ...]
    label: str = ""

    #: the shell series carries the explicit sign (-1)^n (unramified chi)
    alternating = True

    def __post_init__(self):
        if len(self.entries) != self.n_max + 1:
            raise ValueError("need one entry per shell 0..n_max")

    def total(self) -> Fraction:
        return sum(self.entries, Fraction(0))

    def to_json_dict(self) -> dict:
        return _profile_json(self)

    @classmethod
    def from_json_dict(cls, obj: dict) -> "VolumeProfile":
        q, n_max, entries = _profile_from_json(obj)
        return cls(q=q, n_max=n_max, entries=entries, label=obj.get("label", ""))


@dataclass(frozen=True)
class CharSumProfile:
    """Exact rationals I_n = (character sum over the shell-n classes);
    the chi_Y signs are already inside the entries, so the shell series
    is plain sum q^(-nm) I_n."""

    q: int
    n_max: int
    entries: tuple[Fraction, ...]
    label: str = ""
    y_tag: str = ""

    alternating = False

    def __post_init__(self):
        if len(self.entries) != self.n_max + 1:
            raise ValueError("need one entry per shell 0..n_max")

    def to_json_dict(self) -> dict:
        d = _profile_json(self)
        if self.y_tag:
            d["Y"] = self.y_tag
        return d

    @classmethod
    def from_json_dict(cls, obj: dict) -> "CharSumProfile":
        q, n_max, entries = _profile_from_json(obj)
        return cls(q=q, n_max=n_max, entries=entries,
                   label=obj.get("label", ""), y_tag=obj.get("Y", ""))


def _profile_json(profile) -> dict:
    return {
        "q": profile.q,
        "n_max": profile.n_max,
        "entries": [
            {"n": n, "num": str(e.numerator), "den": str(e.denominator)}
            for n, e in enumerate(profile.entries)
        ],
        "label": profile.label,
    }


def _profile_from_json(obj: dict):
    q = int(obj["q"])
    n_max = int(obj["n_max"])
    entries = [Fraction(0)] * (n_max + 1)
    for item in obj["entries"]:
        entries[int(item["n"])] = Fraction(int(item["num"]), int(item["den"]))
    return q, n_max, tuple(entries)


# ---------------------------------------------------------------------------
# Enumeration engines
# ---------------------------------------------------------------------------

def _pivot_domains(pivot: int, p: int, precision: int):
    """Domains of the three free coordinates for a given pivot index:
    before the pivot p*[0, p^(N-1)), after it [0, p^N)."""
    doms = []
    for j in range(4):
        if j == pivot:
            continue
        if j < pivot:
            doms.append((j, p * np.arange(p ** (precision - 1), dtype=np.int64)))
        else:
            doms.append((j, np.arange(p ** precision, dtype=np.int64)))
    return doms


def _legendre_array(p: int) -> np.ndarray:
    leg = np.zeros(p, dtype=np.int64)
    for r in range(1, p):
        leg[r] = legendre(r, p)
    return leg


def _code_table(p: int, precision: int) -> np.ndarray:
    """code[r] = 2*val(r) + (unit part is a non-square) for r != 0,
    and 2*precision for r = 0 mod p^precision."""
    m = p ** precision
    leg = _legendre_array(p)
    r = np.arange(m, dtype=np.int64)
    code = np.full(m, 2 * precision, dtype=np.int64)
    rest = r.copy()
    for v in range(precision):
        mask = (code == 2 * precision) & (rest % p != 0) & (r != 0)
        units = rest[mask] % p
        code[mask] = 2 * v + (leg[units] < 0)
        rest //= p
    return code


def _flat_pivot_jobs(qf: QuadForm4, pivot: int):
    """Split one pivot's enumeration into chunk jobs (for threading)."""
    doms = _pivot_domains(pivot, qf.p, qf.precision)
    bc = len(doms[1][1]) * len(doms[2][1])
    batch = max(1, _CHUNK_TARGET // max(bc, 1))
    first = doms[0][1]
    jobs = []
    for start in range(0, len(first), batch):
        jobs.append((pivot, start, min(start + batch, len(first))))
    return jobs


def _flat_run_job(qf: QuadForm4, code_table: np.ndarray, job) -> np.ndarray:
    pivot, start, stop = job
    p, n = qf.p, qf.precision
    m = p ** n
    g = qf.gram
    doms = _pivot_domains(pivot, p, n)
    coords = [doms[0][1][start:stop], doms[1][1], doms[2][1]]
    idx = [doms[0][0], doms[1][0], doms[2][0]]
    # per-coordinate tables absorb the diagonal term and the pivot cross term
    tabs = [((g[j][j] * w * w + 2 * g[pivot][j] * w) % m)
            for j, w in zip(idx, coords)]
    shapes = [(-1, 1, 1), (1, -1, 1), (1, 1, -1)]
    total = (tabs[0].reshape(shapes[0]) + tabs[1].reshape(shapes[1])
             + tabs[2].reshape(shapes[2]) + g[pivot][pivot])
    for a in range(3):
        for b in range(a + 1, 3):
            coeff = (2 * g[idx[a]][idx[b]]) % m
            if coeff:
                total = total + coeff * (coords[a].reshape(shapes[a])
                                         * coords[b].reshape(shapes[b]))
    codes = code_table[total % m]
    return np.bincount(codes.ravel(), minlength=2 * n + 1)


def _flat_counts(qf: QuadForm4, n_max: int, threads: int):
    p, n = qf.p, qf.precision
    code_table = _code_table(p, n)
    jobs = []
    for pivot in range(4):
        jobs.extend(_flat_pivot_jobs(qf, pivot))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda j: _flat_run_job(qf, code_table, j), jobs))
    else:
        results = [_flat_run_job(qf, code_table, j) for j in jobs]
    acc = np.zeros(2 * n + 1, dtype=object)
    for res in results:  # fixed job order: deterministic reduction
        acc[: len(res)] += res
    shells = []
    for shell in range(n_max + 1):
        plus = int(acc[2 * shell])
        minus = int(acc[2 * shell + 1])
        shells.append((plus + minus, plus, minus))
    return shells, p ** (3 * n)


def _digit_block(p: int, pivot: int) -> np.ndarray:
    """All p^3 digit extensions of the three non-pivot coordinates."""
    block = np.zeros((p ** 3, 4), dtype=np.int64)
    free = [j for j in range(4) if j != pivot]
    grid = np.indices((p, p, p)).reshape(3, -1).T
    for col, j in enumerate(free):
        block[:, j] = grid[:, col]
    return block


def _pruned_pivot_counts(qf: QuadForm4, pivot: int, n_max: int):
    p, n = qf.p, qf.precision
    g = np.array(qf.gram, dtype=np.int64)
    leg = _legendre_array(p)
    block = _digit_block(p, pivot)
    # level-1 candidates mod p: before-pivot coords 0, pivot 1, rest free
    free_after = [j for j in range(pivot + 1, 4)]
    cand = np.zeros((p ** len(free_after), 4), dtype=np.int64)
    cand[:, pivot] = 1
    if free_after:
        grid = np.indices((p,) * len(free_after)).reshape(len(free_after), -1).T
        for col, j in enumerate(free_after):
            cand[:, j] = grid[:, col]

    shells = [[0, 0, 0] for _ in range(n_max + 1)]
    batch_rows = max(1, _CHUNK_TARGET // (p ** 3))
    for k in range(1, n_max + 2):
        mod = p ** k
        scale = p ** (3 * (n - k))
        survivors = []
        for start in range(0, cand.shape[0], max(batch_rows, 1)):
            part = cand[start:start + batch_rows]
            vals = np.einsum("ni,ij,nj->n", part, g, part) % mod
            nz = vals != 0
            if np.any(nz):
                units = (vals[nz] // p ** (k - 1)) % p
                signs = leg[units]
                plus = int(np.count_nonzero(signs > 0))
                minus = int(np.count_nonzero(signs < 0))
                shells[k - 1][0] += (plus + minus) * scale
                shells[k - 1][1] += plus * scale
                shells[k - 1][2] += minus * scale
            if k <= n_max:
                surv = part[~nz]
                if surv.shape[0]:
                    survivors.append(
                        (surv[:, None, :] + mod * block[None, :, :]).reshape(-1, 4))
        if k > n_max:
            break
        cand = (np.concatenate(survivors) if survivors
                else np.zeros((0, 4), dtype=np.int64))
        if cand.shape[0] == 0:
            break
    return [tuple(s) for s in shells]


def _pruned_counts(qf: QuadForm4, n_max: int, threads: int):
    jobs = list(range(4))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(
                lambda piv: _pruned_pivot_counts(qf, piv, n_max), jobs))
    else:
        results = [_pruned_pivot_counts(qf, piv, n_max) for piv in jobs]
    shells = [(0, 0, 0)] * (n_max + 1)
    for res in results:  # pivot order: deterministic reduction
        shells = [tuple(a + b for a, b in zip(s, r)) for s, r in zip(shells, res)]
    return shells, qf.p ** (3 * qf.precision)


_ENGINES = {"flat": _flat_counts, "pruned": _pruned_counts}


def _shell_counts(qf: QuadForm4, n_max: int, engine: str, threads: int):
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    if qf.precision < n_max + 2:
        raise PrecisionTooLow(
            f"profiles up to n={n_max} need precision >= {n_max + 2}, "
            f"form has {qf.precision}")
    if engine not in _ENGINES:
        raise KeyError(f"unknown engine {engine!r}")
    return _ENGINES[engine](qf, n_max, threads)


def vol_profile(qf: QuadForm4, n_max: int, ctx: Optional[PrimeContext] = None,
                engine: str = "pruned", threads: int = 1) -> VolumeProfile:
    """Exact vol(V_n^0) for n = 0..n_max by counting pivot-normalized
    representatives with val(Q) = n."""
    shells, denom = _shell_counts(qf, n_max, engine, threads)
    entries = tuple(Fraction(total, denom) for total, _, _ in shells)
    return VolumeProfile(q=qf.p, n_max=n_max, entries=entries,
                         label=qf.label)


def char_profile(qf: QuadForm4, y: CharDescriptor, n_max: int,
                 ctx: PrimeContext, engine: str = "pruned",
                 threads: int = 1) -> CharSumProfile:
    """Exact I_n = sum of chi_Y(Q(w)) over the shell-n classes, including
    the form's factored unit prefactor."""
    shells, denom = _shell_counts(qf, n_max, engine, threads)
    if not y.ramified:
        pref_sign = 1
        entries = tuple(
            Fraction((-1) ** n * total, denom)
            for n, (total, _, _) in enumerate(shells))
    else:
        pref_sign = legendre(qf.unit_prefactor, ctx.p)
        chi_pi = y.chi_of_pi(ctx)
        entries = tuple(
            Fraction(chi_pi ** n * (plus - minus), denom)
            for n, (_, plus, minus) in enumerate(shells))
    entries = tuple(pref_sign * e for e in entries)
    return CharSumProfile(q=qf.p, n_max=n_max, entries=entries,
                          label=qf.label, y_tag=y.d_class.value)


# ---------------------------------------------------------------------------
# Closed-form volume tables
# ---------------------------------------------------------------------------

def anisotropic_shell_value(coeff_vals, q: int, n: int) -> Fraction:
    """vol(V_n^0) of an anisotropic diagonal form with coefficient
    valuations coeff_vals.

    Anisotropy means no cancellation: val Q(w) = min_i (2 val w_i + c_i)
    exactly, so the shells are determined by the valuation pattern alone.
    With F(n) = vol{w in R^4 : min >= n} and G(n) the same over (pi R)^4,
    vol(V_n) = (F(n) - F(n+1)) - (G(n) - G(n+1)).
    """
    def box(m, floor):
        total = Fraction(1)
        for c in coeff_vals:
            need = -((c - m) // 2)  # ceil((m - c) / 2)
            total *= Fraction(1, q) ** max(floor, need)
        return total

    f = box(n, 0) - box(n + 1, 0)
    g = box(n, 1) - box(n + 1, 1)
    return (f - g) / (1 - Fraction(1, q))


def _parse_aniso_lemma(lemma: str):
    if lemma == "I.an":
        return (0, 0, 1, 1)
    if lemma.startswith("I.an[") and lemma.endswith("]"):
        return tuple(int(v) for v in lemma[5:-1].split(","))
    return None


def closed_form_profile(lemma: str, q: int, n: int) -> Fraction:
    """The tabulated piecewise value of vol(V_n^0) (or I_n^Y for the two
    ramified-character tables) as an exact rational function of q.

    Besides the named tables, ids of the form "I.an[c0,c1,c2,c3]" give the
    shells of an anisotropic diagonal form with those coefficient
    valuations (the plain "I.an" is the standard (0,0,1,1) realization).
    """
    vals = _parse_aniso_lemma(lemma)
    if vals is not None:
        return anisotropic_shell_value(vals, q, n)
    iq = Fraction(1, q)
    if lemma == "I.1":
        if n == 0:
            return 1 - iq
        if n == 1:
            return iq * (1 - iq) * (2 + iq)
        return 2 * iq ** n * (1 - iq) * (1 + iq)
    if lemma == "I.2":
        if n == 0:
            return Fraction(1)
        if n == 1:
            return iq * (1 - iq)
        if n == 2:
            return iq ** 2 * (2 - iq - 2 * iq ** 2)
        return 2 * iq ** n * (1 - iq) * (1 + iq)
    if lemma == "I.3":
        if n == 0:
            return 1 - iq ** 2
        return iq ** n * (1 - iq) * (1 + 2 * iq + iq ** 2)
    if lemma == "II.1":
        if n == 0:
            return 1 - iq
        if n == 1:
            return 2 * iq - iq ** 2 + iq ** 3
        return 2 * iq ** n * (1 - iq)
    if lemma == "II.2":
        if n == 0:
            return 1 + iq
        if n == 1:
            return iq ** 2 * (1 - iq)
        return 2 * iq ** (n + 1) * (1 - iq)
    if lemma in ("II.3", "II.4", "II.5"):
        if n == 0:
            return Fraction(1)
        if n == 1:
            return iq
        return iq ** n * (1 - iq ** 2)
    if lemma == "IV.2":
        if n == 0:
            return 1 + iq ** 2
        return iq ** n * (1 - iq) * (1 + iq ** 2)
    if lemma in ("A.1.pi", "A.1.upi"):
        sign = -1 if lemma == "A.1.pi" else 1
        if n == 0:
            return -iq
        if n == 1:
            return sign * iq ** 3
        return Fraction(0)
    raise UnknownLemma(lemma)


_CHAR_LEMMAS = ("A.1.pi", "A.1.upi")


def closed_profile(lemma: str, q: int, n_max: int):
    """Whole profile object from the closed-form table."""
    entries = tuple(closed_form_profile(lemma, q, n) for n in range(n_max + 1))
    if lemma in _CHAR_LEMMAS:
        return CharSumProfile(q=q, n_max=n_max, entries=entries, label=lemma,
                              y_tag="pi" if lemma.endswith(".pi") else "upi")
    return VolumeProfile(q=q, n_max=n_max, entries=entries, label=lemma)


#: which closed-form table each catalog shape obeys
SHAPE_TO_LEMMA = {
    "I.1": "I.1", "I.2": "I.2", "I.3": "I.3",
    "I.an.pi": "I.an", "I.an.u": "I.an", "I.an.upi": "I.an",
    "II.1": "II.1", "II.2": "II.2", "II.3a": "II.3", "II.3b": "II.3",
    "II.4": "II.4", "II.5": "II.5",
    "III.1": "I.1", "III.2": "I.an", "III.3": "I.an",
    "IV.unram": "IV.2", "IV.ram": "II.3",
}


def lemma_for_shape(shape: str) -> str:
    from .quadforms import SHAPE_ALIASES
    shape = SHAPE_ALIASES.get(shape, shape)
    if shape not in SHAPE_TO_LEMMA:
        raise UnknownLemma(shape)
    return SHAPE_TO_LEMMA[shape]


_KEY_CACHE: dict[int, dict] = {}


def _catalog_keys(ctx: PrimeContext) -> dict:
    """Jordan invariants -> lemma id, built from the canonical shapes at
    this prime.  Shapes may collide on a key only if their tables agree."""
    if ctx.p in _KEY_CACHE:
        return _KEY_CACHE[ctx.p]
    from .quadforms import canonical_form
    table: dict = {}
    for shape, lemma in SHAPE_TO_LEMMA.items():
        if shape == "III.3" and ctx.d is None:
            continue
        qf = canonical_form(shape, ctx, 5)
        key = diagonalize(qf).jordan_key()
        if key in table and table[key] != lemma:
            same = all(
                closed_form_profile(table[key], ctx.q, n)
                == closed_form_profile(lemma, ctx.q, n)
                for n in range(7))
            if not same:
                raise AssertionError(
                    f"catalog key collision with different tables: "
                    f"{table[key]} vs {lemma}")
            continue
        table.setdefault(key, lemma)
    _KEY_CACHE[ctx.p] = table
    return table


def classify_lemma(qf: QuadForm4, ctx: PrimeContext) -> str:
    """Which closed-form table the form's profile obeys.

    Anisotropic forms are recognized first (Hasse invariant); their
    profiles depend on the coefficient valuation pattern alone.  For
    isotropic forms the Jordan invariants (rank and discriminant class
    per pi-power level) classify unit-box-preserving equivalence for p
    odd, so they pin the profile.  Keys outside the catalog but of mixed
    rank (3,1) or (1,3) fall back to the II.3 table; anything else is
    unknown.
    """
    from .quadforms import hasse_anisotropic
    dd = diagonalize(qf)
    if hasse_anisotropic(qf, ctx):
        vals = tuple(sorted(valuation_int(c, qf.p, dd.precision)
                            for c in dd.coeffs))
        if vals == (0, 0, 1, 1):
            return "I.an"
        return "I.an[" + ",".join(str(v) for v in vals) + "]"
    key = dd.jordan_key()
    table = _catalog_keys(ctx)
    if key in table:
        return table[key]
    ranks = tuple((lvl, rank) for lvl, rank, _ in key)
    if ranks in (((0, 3), (1, 1)), ((0, 1), (1, 3))):
        return "II.3"
    raise UnknownLemma(f"no closed-form table for Jordan data {key}")


# ---------------------------------------------------------------------------
# One-variable shell integrals
# ---------------------------------------------------------------------------

def shell_integral(c: int, n: int, y: Optional[CharDescriptor],
                   ctx: PrimeContext) -> Fraction:
    """Measure of {x in R : |c^2 - x^2| = q^-n} for a unit c and n >= 1,
    optionally weighted by a ramified chi_Y.  Computed by enumerating x
    mod p^(n+2) and checked against the closed form (2/q^n)(1 - 1/q),
    resp. 0 for the weighted ramified case."""
    p = ctx.p
    if n < 1:
        raise ValueError("shell integrals are tabulated for n >= 1")
    if c % p == 0:
        raise ValueError("c must be a unit")
    prec = n + 2
    m = p ** prec
    total = Fraction(0)
    chi_pi = y.chi_of_pi(ctx) if (y is not None and y.ramified) else None
    for x in range(m):
        diff = (c * c - x * x) % m
        if diff == 0:
            continue
        v = valuation_int(diff, p, prec)
        if v != n:
            continue
        if chi_pi is None:
            total += Fraction(1, m)
        else:
            unit = diff // p ** v
            total += Fraction(legendre(unit, p) * chi_pi ** v, m)
    expected = (Fraction(0) if chi_pi is not None
                else Fraction(2, p ** n) * (1 - Fraction(1, p)))
    if total != expected:
        raise AssertionError(
            f"shell integral enumeration {total} != closed form {expected}")
    return total


def one_variable_profile(ctx: PrimeContext, n_max: int) -> VolumeProfile:
    """Shell decomposition of |x| on V^0: the profile whose continued
    series reproduces the spherical-vector normalization constant.

    The x-shells are enumerated mod p^(n+1); the other three coordinates
    contribute the exact factor vol{max(|y|,|z|,|t|) = 1} = 1 - q^-3 for
    n >= 1 and 1 for n = 0.
    """
    p = ctx.p
    entries = []
    for n in range(n_max + 1):
        m = p ** (n + 1)
        count = sum(
            1 for x in range(m)
            if x % m != 0 and valuation_int(x, p, n + 1) == n
        ) if n > 0 else sum(1 for x in range(m) if x % p != 0)
        side = Fraction(1) if n == 0 else 1 - Fraction(1, p) ** 3
        entries.append(Fraction(count, m) * side / (1 - Fraction(1, p)))
    return VolumeProfile(q=p, n_max=n_max, entries=tuple(entries),
                         label="|x| shells")
