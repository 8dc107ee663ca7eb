"""Batch front end: verification suites and single evaluations, with
human tables or machine JSON on stdout.

Exit status 0 means every checked identity holds exactly; any mismatch
exits 1 and names the first failing identity.  All output is built from
exact integers and rationals (JSON with sorted keys), so runs are
byte-identical across invocations and thread counts.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

from .localfield import CharDescriptor, PrimeContext, SquareClass
from .quadforms import CATALOG_SHAPES, SHAPE_ALIASES, VOLUME_TABLE_SHAPES, canonical_form
from .series import (
    anisotropic_value,
    eval_at_s0,
    fit_tail,
    normalization_constant,
    partial_sum,
    tail_sum_convergent,
)
from .volumes import (
    DESK_BUDGET,
    char_profile,
    closed_form_profile,
    closed_profile,
    lemma_for_shape,
    one_variable_profile,
    shell_integral,
    vol_profile,
)
from .classes import ThetaClass, norm_map
from .character import (
    appendix_class,
    character_report,
    evaluation_matrix,
    expected_value,
    stable_class_sum,
    twisted_character_value,
    type_ii_class,
    type_iv_class,
)


def _frac(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


# ---------------------------------------------------------------------------
# verify-lemmas
# ---------------------------------------------------------------------------

#: continued values of the closed-form profiles at s = 0 (criterion table)
def _continuation_target(lemma: str, q: int) -> Fraction:
    iq = Fraction(1, q)
    if lemma in ("I.1", "I.2", "I.3", "II.3", "II.4", "II.5"):
        return Fraction(0)
    if lemma == "II.1":
        return -2 * q * (1 + iq ** 2) / (1 + q)
    if lemma == "II.2":
        return 2 * q * (1 + iq ** 2) / (1 + q)
    if lemma == "IV.2":
        return 2 * (1 + iq ** 2) / (1 + q)
    raise KeyError(lemma)


def run_verify_lemmas(prime: int, n_max=None, engine: str = "pruned",
                      threads: int = 1) -> list[dict]:
    """Every oracle-vs-closed-form identity and every theorem value at
    one prime, in a fixed order."""
    ctx = PrimeContext.for_prime(prime)
    q = ctx.q
    nm = n_max if n_max is not None else DESK_BUDGET.get(prime, 2)
    results = []

    def check(name, ok, detail=""):
        results.append({"name": name, "pass": bool(ok), "detail": detail})

    # Lemma I.0 / A.0: one-variable shell integrals
    for c in (1, 2, 3):
        if c % prime == 0:
            continue
        for n in (1, 2, 3):
            want = Fraction(2, q ** n) * (1 - Fraction(1, q))
            try:
                got = shell_integral(c, n, None, ctx)
                check(f"I.0 c={c} n={n}", got == want, f"{_frac(got)}")
            except AssertionError as exc:
                check(f"I.0 c={c} n={n}", False, str(exc))
            for y_tag in ("pi", "upi"):
                y = CharDescriptor.from_tag(y_tag)
                try:
                    got = shell_integral(c, n, y, ctx)
                    check(f"A.0 c={c} n={n} Y={y_tag}", got == 0, f"{_frac(got)}")
                except AssertionError as exc:
                    check(f"A.0 c={c} n={n} Y={y_tag}", False, str(exc))

    # volume tables: enumeration vs closed forms
    for shape in VOLUME_TABLE_SHAPES:
        lemma = lemma_for_shape(shape)
        qf = canonical_form(shape, ctx, nm + 2)
        prof = vol_profile(qf, nm, ctx, engine=engine, threads=threads)
        want = closed_profile(lemma, q, nm)
        check(f"vol {shape} = {lemma}", prof.entries == want.entries,
              " ".join(_frac(e) for e in prof.entries))

    # ramified character sums of the worked shape (Lemma A.1)
    a1_nm = max(nm, 3) if prime == 3 else nm
    qf = canonical_form("II.3a", ctx, max(a1_nm, 3) + 2)
    for y_tag, lemma in (("pi", "A.1.pi"), ("upi", "A.1.upi")):
        y = CharDescriptor.from_tag(y_tag)
        prof = char_profile(qf, y, max(a1_nm, 3), ctx, engine=engine,
                            threads=threads)
        want = closed_profile(lemma, q, max(a1_nm, 3))
        check(f"char {lemma}", prof.entries == want.entries,
              " ".join(_frac(e) for e in prof.entries))

    # continuations of the closed-form tables
    for lemma in ("I.1", "I.2", "I.3", "II.1", "II.2", "II.3", "II.4",
                  "II.5", "IV.2"):
        got = eval_at_s0(closed_profile(lemma, q, 6))
        want = _continuation_target(lemma, q)
        check(f"continuation {lemma}", got == want, _frac(got))

    # normalization constant from the one-variable shell decomposition
    prof = one_variable_profile(ctx, 5)
    got0 = eval_at_s0(prof)
    want0 = normalization_constant(CharDescriptor.from_tag("u"), q, 0).as_fraction()
    check("normalization s=0", got0 == want0, _frac(got0))
    tail = fit_tail(prof)
    got1 = partial_sum(prof, 0, prof.n_max) + tail_sum_convergent(
        tail, q, 0, prof.n_max + 1, alternating=True)
    want1 = normalization_constant(CharDescriptor.from_tag("u"), q, 1).as_fraction()
    check("normalization s=1", got1 == want1, _frac(got1))

    # anisotropic series at s in {0, 1}, against the enumeration
    # (n_max = 3 needed to certify the zero tail; cheap for any p since
    # anisotropic forms have no deep shells to refine)
    an_form = canonical_form("I.an.pi", ctx, 5)
    an_prof = vol_profile(an_form, 3, ctx, engine=engine, threads=threads)
    got_s1 = partial_sum(an_prof, 0, an_prof.n_max)
    check("anisotropic s=1", got_s1 == anisotropic_value(q, 1), _frac(got_s1))
    got_s0 = eval_at_s0(an_prof)
    check("anisotropic s=0", got_s0 == 0 == anisotropic_value(q, 0),
          _frac(got_s0))

    # theorem values over the whole (type x twist x Y) matrix
    for row in evaluation_matrix(ctx, precision=max(nm, 3) + 2):
        check(f"theorem {row['case']}", row["pass"],
              f"value {row['value']['num']}/{row['value']['den']}"
              f" q^({row['value']['half_exponent']}/2)")

    # stable sums vanish
    prec = max(nm, 3) + 2
    for desc, cls in (
        ("II D=pi A=u", type_ii_class(ctx, "pi", "u", "1", precision=prec)),
        ("II D=upi A=u", type_ii_class(ctx, "upi", "u", "1", precision=prec)),
        ("II D=pi A=upi", type_ii_class(ctx, "pi", "upi", "1", precision=prec)),
        ("IV A=u", type_iv_class(ctx, "u", "1", precision=prec)),
        ("IV A=pi", type_iv_class(ctx, "pi", "1", precision=prec)),
    ):
        total = stable_class_sum(cls)
        check(f"stable sum {desc}", total == 0, _frac(total))

    return results


# ---------------------------------------------------------------------------
# command implementations
# ---------------------------------------------------------------------------

def _emit_results(results, as_json: bool, prime: int) -> int:
    ok = all(r["pass"] for r in results)
    if as_json:
        print(json.dumps({"prime": prime, "all_pass": ok, "results": results},
                         sort_keys=True))
    else:
        for r in results:
            status = "PASS" if r["pass"] else "FAIL"
            detail = f"  [{r['detail']}]" if r["detail"] else ""
            print(f"{status}  {r['name']}{detail}")
        n_ok = sum(1 for r in results if r["pass"])
        print(f"-- {n_ok}/{len(results)} identities hold at p={prime}")
        if not ok:
            first = next(r for r in results if not r["pass"])
            print(f"-- first mismatch: {first['name']}")
    return 0 if ok else 1


def cmd_verify_lemmas(args) -> int:
    results = run_verify_lemmas(args.prime, args.nmax, args.engine, args.threads)
    return _emit_results(results, args.json, args.prime)


def cmd_volumes(args) -> int:
    ctx = PrimeContext.for_prime(args.prime)
    nm = args.nmax if args.nmax is not None else DESK_BUDGET.get(args.prime, 2)
    shape = SHAPE_ALIASES.get(args.shape, args.shape)
    qf = canonical_form(shape, ctx, nm + 2)
    if args.Y and CharDescriptor.from_tag(args.Y).ramified:
        prof = char_profile(qf, CharDescriptor.from_tag(args.Y), nm, ctx,
                            engine=args.engine, threads=args.threads)
    else:
        prof = vol_profile(qf, nm, ctx, engine=args.engine, threads=args.threads)
    if args.json:
        print(json.dumps(prof.to_json_dict(), sort_keys=True))
    else:
        print(f"shape {shape} at p={args.prime} (n <= {nm})")
        for n, e in enumerate(prof.entries):
            print(f"  n={n}  {_frac(e)}")
    return 0


def _load_class(args) -> ThetaClass:
    obj = json.loads(args.cls)
    if "p" not in obj:
        obj["p"] = args.prime
    elif args.prime and obj["p"] != args.prime:
        raise SystemExit("--prime disagrees with the class descriptor")
    return ThetaClass.from_json(obj)


def cmd_char(args) -> int:
    cls = _load_class(args)
    report = character_report(cls, mode=args.mode, n_max=args.nmax,
                              engine=args.engine, threads=args.threads)
    if args.json:
        print(json.dumps(report, sort_keys=True))
    else:
        v = report["value"]
        print(f"class: {json.dumps(report['inputs'], sort_keys=True)}")
        print(f"lemma: {report['lemma']}")
        print(f"value: {v['num']}/{v['den']} * q^({v['half_exponent']}/2)")
        print(f"expected: {report['expected']['num']}/{report['expected']['den']}"
              f" * q^({report['expected']['half_exponent']}/2)")
        print(f"pass: {report['pass']}")
    return 0 if report["pass"] else 1


def cmd_norm(args) -> int:
    cls = _load_class(args)
    image = norm_map(cls)
    if args.json:
        print(json.dumps(image.to_json_dict(), sort_keys=True))
    else:
        d = image.to_json_dict()
        print(f"common determinant: {d['components'][0]['det']}")
        for i, comp in enumerate(d["components"], 1):
            t = comp["trace"]
            print(f"component {i}: X^2 - ({t[0]} + {t[1]} sqrt(A)) X + det")
    return 0


def cmd_report_all(args) -> int:
    ctx = PrimeContext.for_prime(args.prime)
    prec = (args.nmax + 2) if args.nmax is not None else 6
    rows = evaluation_matrix(ctx, precision=max(prec, 6))
    ok = all(r["pass"] for r in rows)
    if args.json:
        print(json.dumps({"prime": args.prime, "all_pass": ok, "rows": rows},
                         sort_keys=True))
    else:
        for r in rows:
            v = r["value"]
            status = "PASS" if r["pass"] else "FAIL"
            print(f"{status}  {r['case']:30s} value {v['num']}/{v['den']}"
                  f" q^({v['half_exponent']}/2)  lemma {r['lemma']}")
        print(f"-- {sum(1 for r in rows if r['pass'])}/{len(rows)} theorem "
              f"values match at p={args.prime}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twistchar",
        description="exact twisted-character computations by residue-ring "
                    "enumeration")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_shape=False, needs_class=False):
        p.add_argument("--prime", type=int, required=True)
        p.add_argument("--nmax", type=int, default=None)
        p.add_argument("--engine", choices=("pruned", "flat"), default="pruned")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--json", action="store_true")
        if needs_shape:
            p.add_argument("--shape", required=True,
                           help=f"one of {', '.join(CATALOG_SHAPES)}")
            p.add_argument("--Y", default=None,
                           help="square-class tag of Y (pi/upi for "
                                "character sums)")
        if needs_class:
            p.add_argument("--class", dest="cls", required=True,
                           help="class descriptor JSON")

    p = sub.add_parser("verify-lemmas", help="check every tabulated identity")
    common(p)
    p.set_defaults(func=cmd_verify_lemmas)

    p = sub.add_parser("volumes", help="shell profile of a catalog shape")
    common(p, needs_shape=True)
    p.set_defaults(func=cmd_volumes)

    p = sub.add_parser("char", help="evaluate one class")
    common(p, needs_class=True)
    p.add_argument("--mode", choices=("closed_form", "oracle"),
                   default="closed_form")
    p.set_defaults(func=cmd_char)

    p = sub.add_parser("norm", help="norm-map image of a type II/IV class")
    common(p, needs_class=True)
    p.set_defaults(func=cmd_norm)

    p = sub.add_parser("report-all", help="full (type x twist x Y) matrix")
    common(p)
    p.set_defaults(func=cmd_report_all)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
