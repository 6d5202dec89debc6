"""``conetess`` command line: exact tables, simulations and verification bundles.

Exit codes: 0 all gates pass, 1 a statistical gate failed, 2 usage error,
3 hard-assertion abort.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction

from . import moments as M
from .combinatorics import MP, schlafli_count, theta
from .errors import ConetessError, ConfigurationError, DomainError
from .experiments import (
    ExperimentConfig,
    ExperimentReport,
    HardAssertionFailure,
    covariance_experiment,
    identity_suite,
    e_cone_comparison_check,
    run,
    two_route_check,
    write_report,
    write_triage,
)

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_HARD = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def __init__(self, *a, **kw):
        kw.setdefault("allow_abbrev", False)
        super().__init__(*a, **kw)


def _digits(x) -> str:
    if isinstance(x, Fraction):
        return MP.nstr(MP.mpf(x.numerator) / x.denominator, 17, strip_zeros=False)
    return MP.nstr(x, 17, strip_zeros=False)


def _row(name: str, value) -> list:
    """[name, exact, decimal, error bound]; rationals print as p/q."""
    if isinstance(value, M.MomentValue):
        value = value.rational if value.is_rational else value.real
    if isinstance(value, (int, Fraction)):
        q = Fraction(value)
        return [name, str(q), _digits(q), "0"]
    dec = _digits(value.value)
    return [name, dec, dec, MP.nstr(value.error_bound, 3)]


def moments_table(d: int, n: int) -> list:
    rows = [_row(f"C_{n}_{d}", schlafli_count(n, d)), _row(f"theta_{n}_{d}", theta(n, d))]
    for k in range(1, d + 1):
        rows.append(_row(f"E_f_{k}_schlafli", M.expected_f_schlafli(n, d, k)))
    for j in range(d):
        rows.append(_row(f"E_U_{j}_schlafli", M.expected_U_schlafli(n, d, j)))
    for j in range(d + 1):
        rows.append(_row(f"E_V_{j}_schlafli", M.expected_V_schlafli(n, d, j)))
    for k in range(1, d + 1):
        rows.append(_row(f"E_Lambda_{k}_schlafli", M.expected_lambda_schlafli(n, d, k)))
    if n >= d:
        for k in range(d):
            rows.append(_row(f"E_f_{k}_cover_efron", M.expected_f_cover_efron(n, d, k)))
        for j in range(1, d):
            rows.append(_row(f"E_U_{j}_cover_efron", M.expected_U_cover_efron(n, d, j)))
        for j in range(d + 1):
            rows.append(_row(f"E_V_{j}_cover_efron", M.expected_V_cover_efron(n, d, j)))
        for k in range(1, d):
            rows.append(_row(f"E_Lambda_{k}_cover_efron", M.expected_lambda_cover_efron(n, d, k)))
        rows.append(_row(f"E_f_{d - 1}^2_cover_efron", M.second_moment_facets_cover_efron(n, d)))
    for k in range(d):
        rows.append(_row(f"E_Lambda_{d - k}_e_cone", M.expected_lambda_e_cone(n, d, k)))
    for s in range(1, d + 1):
        for r in range(s, d + 1):
            rows.append(_row(f"E_Lambda_{s}_Lambda_{r}_schlafli", M.second_moment_lambda(n, d, s, r)))
    return rows


def covariance_table(d: int, n: int) -> list:
    cov = M.covariance_matrix_lambda(n, d)
    rows = [["r\\s"] + [str(s) for s in range(1, d + 1)]]
    for r in range(1, d + 1):
        rows.append([str(r)] + [_digits(cov[r, s].value) for s in range(1, d + 1)])
    return rows


def _emit(rows: list, out) -> None:
    text = "".join("\t".join(r) + "\n" for r in rows)
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def cmd_exact(args) -> int:
    if args.d < 1 or args.n < 0:
        raise DomainError("need d >= 1 and n >= 0")
    table = moments_table(args.d, args.n) if args.table == "moments" else covariance_table(args.d, args.n)
    _emit(table, args.out)
    return EXIT_PASS


def _summary(reports: dict) -> None:
    rows = [["experiment", "name", "estimate", "se", "exact", "z", "pass"]]
    for label, rep in reports.items():
        for r in rep.gated:
            rows.append([label, r.name, repr(r.estimate), repr(r.se), repr(r.exact),
                         "" if r.z is None else f"{r.z:.3f}", "PASS" if r.passed else "FAIL"])
    _emit(rows, None)


def _save(reports: dict, out: str | None) -> None:
    if not out:
        return
    os.makedirs(out, exist_ok=True)
    for name, rep in reports.items():
        write_report(rep, os.path.join(out, f"{name}.json"))


def _status(reports) -> int:
    return EXIT_PASS if all(r.passed for r in reports) else EXIT_FAIL


_CONFIG_FLAGS = ("d", "n", "model", "k", "j", "replicates", "inner_mc_samples", "master_seed", "sigma_gate")


def build_config(args) -> ExperimentConfig:
    obj: dict = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            obj = json.load(fh)
        if not isinstance(obj, dict):
            raise ConfigurationError("config file must hold a JSON object")
    for key in _CONFIG_FLAGS:
        v = getattr(args, key)
        if v is not None:
            obj[key] = v
    if args.functionals is not None:
        obj["functionals"] = [f.strip() for f in args.functionals.split(",") if f.strip()]
    if args.distribution is not None or args.scales is not None:
        dist = dict(obj.get("distribution") or {}) if not isinstance(obj.get("distribution"), str) else {
            "kind": obj["distribution"]}
        if args.distribution is not None:
            dist["kind"] = args.distribution
        if args.scales is not None:
            dist["scales"] = [float(x) for x in args.scales.split(",")]
        obj["distribution"] = dist
    for key in ("d", "n"):
        if key not in obj:
            raise ConfigurationError(f"missing --{key} (flag or config field)")
    return ExperimentConfig.from_json(obj)


def cmd_simulate(args) -> int:
    cfg = build_config(args)
    try:
        rep = run(cfg, workers=args.workers)
    except HardAssertionFailure as exc:
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            write_triage(exc, os.path.join(args.out, "triage.json"))
        print(f"hard assertion failure: {exc}", file=sys.stderr)
        return EXIT_HARD
    _save({"report": rep}, args.out)
    _summary({"simulate": rep})
    return _status([rep])


def verify_bundle(d: int, n: int, budget: int, seed: int, workers=None, arrangements: int = 20) -> dict:
    """Canonical acceptance checks for one (d, n)."""
    first = [f"f_{k}" for k in range(1, d + 1)] + [f"Lambda_{k}" for k in range(1, d + 1)]
    first += [f"V_{m}" for m in range(d + 1)] + [f"U_{j}" for j in range(1, d)]
    out = {"schlafli": run(ExperimentConfig(d, n, "schlafli", tuple(first), budget, master_seed=seed),
                           workers)}
    if n >= d:
        ce = [f"f_{k}" for k in range(1, d)] + [f"Lambda_{k}" for k in range(1, d)] + [f"V_{d}"]
        out["cover_efron"] = run(ExperimentConfig(d, n, "cover_efron_direct", tuple(ce), budget,
                                                  master_seed=seed + 1), workers)
    out["e_cone"] = run(ExperimentConfig(d, n, "e_cone", (f"V_{d}", "Lambda_1"), budget,
                                         master_seed=seed + 2), workers)
    out["covariance"] = covariance_experiment(d, n, budget, seed + 3, workers, facet_check=n >= d)
    out["identities"] = identity_suite(d, n, arrangements, seed + 4)
    if n >= d:
        out["e_cone_vs_schlafli"] = e_cone_comparison_check(d, n, budget, seed + 5, workers)
        out["two_routes"] = two_route_check(d, n, budget, seed + 6, workers)
    return out


def cmd_verify(args) -> int:
    if args.d < 2:
        raise DomainError("verify needs d >= 2")
    if args.n < 0 or args.budget < 1:
        raise DomainError("need n >= 0 and a positive budget")
    try:
        reports = verify_bundle(args.d, args.n, args.budget, args.seed, args.workers, args.arrangements)
    except HardAssertionFailure as exc:
        print(f"hard assertion failure: {exc}", file=sys.stderr)
        return EXIT_HARD
    _save(reports, args.out)
    _summary(reports)
    if any(r.hard_assertion_failures for r in reports.values()):
        return EXIT_HARD
    return _status(reports.values())


def cmd_covariance(args) -> int:
    if args.d < 1 or args.n < 0:
        raise DomainError("need d >= 1 and n >= 0")
    rep = covariance_experiment(args.d, args.n, args.replicates, args.seed, args.workers,
                                facet_check=args.n >= args.d)
    _save({"covariance": rep}, args.out)
    _summary({"covariance": rep})
    return _status([rep])


def cmd_identities(args) -> int:
    if args.d < 2 or args.n < 0:
        raise DomainError("need d >= 2 and n >= 0")
    rep: ExperimentReport = identity_suite(args.d, args.n, args.arrangements, args.seed,
                                           mc_samples=args.mc_samples)
    _save({"identities": rep}, args.out)
    if rep.triage and args.out:
        with open(os.path.join(args.out, "triage.json"), "w", encoding="utf-8") as fh:
            json.dump(rep.triage, fh, indent=2)
    _summary({"identities": rep})
    if rep.hard_assertion_failures:
        return EXIT_HARD
    return _status([rep])


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="conetess", description="Random conical tessellations: exact moments and simulation.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("exact", help="closed-form values as TSV")
    e.add_argument("--d", type=int, required=True, help="ambient dimension")
    e.add_argument("--n", type=int, required=True, help="number of hyperplanes")
    e.add_argument("--table", choices=("moments", "covariance"), default="moments",
                   help="first moments and Lambda products, or the Lambda covariance matrix")
    e.add_argument("--out", default="-", help="output file, '-' for stdout (default)")
    e.set_defaults(func=cmd_exact)

    s = sub.add_parser("simulate", help="run one Monte Carlo experiment")
    s.add_argument("--config", help="JSON file with ExperimentConfig fields; flags override it")
    s.add_argument("--d", type=int, help="ambient dimension")
    s.add_argument("--n", type=int, help="number of hyperplanes")
    s.add_argument("--model", help="schlafli, e_cone, cover_efron_direct, cover_efron_dual, ckj or dkj")
    s.add_argument("--k", type=int, help="subspace dimension for ckj/dkj")
    s.add_argument("--j", type=int, help="face dimension for ckj/dkj")
    s.add_argument("--replicates", type=int, help="number of replicates")
    s.add_argument("--inner-mc-samples", dest="inner_mc_samples", type=int,
                   help="samples per solid-angle or quermass estimate")
    s.add_argument("--functionals", help="comma list, e.g. f_1,Lambda_2,V_3,Lambda_1*V_3")
    s.add_argument("--distribution", choices=("isotropic", "anisotropic_gaussian"),
                   help="law of the normals")
    s.add_argument("--scales", help="comma list of axis scales for anisotropic_gaussian")
    s.add_argument("--seed", "--master-seed", dest="master_seed", type=int, help="master seed")
    s.add_argument("--sigma-gate", dest="sigma_gate", type=float, help="gate width in standard errors")
    s.add_argument("--workers", type=int, default=None, help="worker processes (capped by CONETESS_THREADS)")
    s.add_argument("--out", help="directory for report.json and report.csv")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="acceptance bundle for one (d, n)")
    v.add_argument("--d", type=int, required=True, help="ambient dimension (>= 2)")
    v.add_argument("--n", type=int, required=True, help="number of hyperplanes")
    v.add_argument("--budget", type=int, default=20000, help="replicates per experiment")
    v.add_argument("--seed", type=int, default=0, help="master seed")
    v.add_argument("--arrangements", type=int, default=20, help="arrangements for the identity suite")
    v.add_argument("--workers", type=int, default=None, help="worker processes (capped by CONETESS_THREADS)")
    v.add_argument("--out", help="directory for the reports")
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("covariance", help="empirical vs exact covariance of the Lambda vector")
    c.add_argument("--d", type=int, required=True, help="ambient dimension")
    c.add_argument("--n", type=int, required=True, help="number of hyperplanes")
    c.add_argument("--replicates", type=int, default=20000, help="number of replicates")
    c.add_argument("--seed", type=int, default=0, help="master seed")
    c.add_argument("--workers", type=int, default=None, help="worker processes (capped by CONETESS_THREADS)")
    c.add_argument("--out", help="directory for the report")
    c.set_defaults(func=cmd_covariance)

    i = sub.add_parser("identities", help="counting theorems and geometric identities")
    i.add_argument("--d", type=int, required=True, help="ambient dimension (>= 2)")
    i.add_argument("--n", type=int, required=True, help="number of hyperplanes")
    i.add_argument("--arrangements", type=int, default=20, help="fresh arrangements to test")
    i.add_argument("--seed", type=int, default=0, help="master seed")
    i.add_argument("--mc-samples", dest="mc_samples", type=int, default=4096,
                   help="samples per Monte Carlo angle")
    i.add_argument("--out", help="directory for the report")
    i.set_defaults(func=cmd_identities)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, DomainError, ValueError) as exc:
        print(f"conetess {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConetessError as exc:
        print(f"conetess {args.command}: {exc}", file=sys.stderr)
        return EXIT_HARD


if __name__ == "__main__":
    sys.exit(main())
