"""Acceptance criteria 1-9, one PASS/FAIL line each.

Run alone with ``pytest tests/test_acceptance.py -v -s`` or as a script.
Replicate counts and tolerances are the stated ones; nothing is loosened.
"""
import sys
import time
from fractions import Fraction

import pytest

from conetess import moments as M
from conetess.combinatorics import MP, HPReal, theta
from conetess.experiments import (
    ExperimentConfig,
    count_checks,
    covariance_experiment,
    identity_suite,
    e_cone_comparison_check,
    run,
    two_route_check,
    weighted_identity_check,
    write_report,
)
from conetess.sampler import DirectionDistribution, RngStream, sample_arrangement

BIG = 200_000
ANISO = DirectionDistribution("anisotropic_gaussian", (1.0, 2.0, 4.0))


_CAPTURE = {}


@pytest.fixture(autouse=True)
def _uncaptured(capsys):
    _CAPTURE["capsys"] = capsys
    yield
    _CAPTURE.clear()


def verdict(tag: str, ok: bool, detail: str = "") -> None:
    line = f"{tag}: {'PASS' if ok else 'FAIL'}" + (f"  ({detail})" if detail else "")
    with _CAPTURE["capsys"].disabled():
        print("\n" + line, flush=True)
    assert ok, line


def failed(*reports):
    return [f"{r.name} z={r.z}" for rep in reports for r in rep.gated if not r.passed]


def test_ac1_exact_identities():
    t0 = time.perf_counter()
    ok = True
    for d in range(1, 9):
        for n in range(0, 21):
            ok &= sum(M.expected_V_schlafli(n, d, j).rational for j in range(d + 1)) == 1
    worst = MP.mpf(0)
    for d in range(1, 7):
        for n in range(0, 16):
            for s in range(1, d + 1):
                for r in range(1, d + 1):
                    a = M.second_moment_lambda(n, d, s, r).real
                    b = M.second_moment_lambda_nested(n, d, s, r).real
                    worst = max(worst, abs(a.value - b.value))
            for k in range(d):
                a = M.second_moment_lambda(n, d, d - k, d).real
                b = M.mixed_lambda_Vd(n, d, k).as_hpreal()
                worst = max(worst, abs(a.value - b.value))
    for d in range(2, 9):
        for n in range(d, 21):
            for k in range(1, d):
                ok &= M.expected_U_cover_efron(n, d, k).rational == \
                    Fraction(1, 2) - M.expected_U_schlafli(n, d, d - k).rational
            for j in range(d + 1):
                ok &= M.expected_V_cover_efron(n, d, j).rational == M.expected_V_schlafli(n, d, d - j).rational
    elapsed = time.perf_counter() - t0
    ok &= worst < MP.mpf("1e-25")
    verdict("AC1 exact-layer identities", bool(ok) and elapsed < 1.0,
            f"max form difference {MP.nstr(worst, 3)}, {elapsed:.2f} s")


def test_ac2_degenerate_ladder():
    ok = True
    for d in range(1, 7):
        for s in range(1, d + 1):
            n = d - s
            for r in range(1, d + 1):
                got = M.second_moment_lambda(n, d, s, r).as_hpreal()
                ok &= got.close_to(HPReal(M.expected_lambda_schlafli(n, d, r).rational), 1e-25)
    one = HPReal(1)
    ok &= M.second_moment_lambda(1, 2, 1, 1).as_hpreal().close_to(one, 1e-40)
    ok &= M.second_moment_lambda(2, 2, 1, 1).as_hpreal().close_to(one, 1e-40)
    verdict("AC2 degenerate-case ladder", bool(ok))


def test_ac3_hard_combinatorial_assertions():
    t0 = time.perf_counter()
    problems = []
    for d, n in [(2, 6), (3, 6), (4, 7)]:
        for a in range(1000):
            arr = sample_arrangement(n, d, rng=RngStream(3000 + d, a))
            problems += count_checks(arr)
    elapsed = time.perf_counter() - t0
    verdict("AC3 hard combinatorial assertions", not problems and elapsed < 120,
            f"3000 arrangements, {len(problems)} violations, {elapsed:.0f} s")


def test_ac4_first_moment_gates():
    t0 = time.perf_counter()
    s_iso = run(ExperimentConfig(3, 6, "schlafli", ("f_1", "f_2", "U_1", "V_3", "Lambda_1"), BIG,
                                 master_seed=401))
    c_iso = run(ExperimentConfig(3, 6, "cover_efron_direct", ("f_2", "Lambda_2"), BIG, master_seed=402))
    s_an = run(ExperimentConfig(3, 6, "schlafli", ("f_1", "f_2", "U_1"), BIG, distribution=ANISO,
                                master_seed=403))
    c_an = run(ExperimentConfig(3, 6, "cover_efron_direct", ("f_2",), BIG, distribution=ANISO,
                                master_seed=404))
    elapsed = time.perf_counter() - t0
    reps = (s_iso, c_iso, s_an, c_an)
    bad = failed(*reps)
    gates = sum(len(r.gated) for r in reps)
    verdict("AC4 first-moment gates (3,6), 2e5 replicates", not bad and gates == 11,
            f"{gates} gates, failures {bad}, {elapsed / 60:.1f} min")


def test_ac5_theta_and_e_cone():
    ok = all(theta(n, 2).close_to(HPReal(Fraction(1, n + 1)), 1e-25) for n in range(21))
    ok &= theta(1, 3).close_to(HPReal(Fraction(1, 2)), 1e-25)
    e = run(ExperimentConfig(3, 5, "e_cone", ("V_3",), 100_000, master_seed=501))
    lem = e_cone_comparison_check(3, 5, 100_000, 502)
    lem_f1 = [r for r in lem.results if r.name.startswith("e_cone_vs_schlafli:f_1")]
    bad = failed(e) + [f"{r.name} z={r.z}" for r in lem_f1 if not r.passed]
    rec = e.record("V_3")
    verdict("AC5 theta and e-cone", ok and not bad,
            f"V_3 {rec.estimate:.5f} vs theta(5,3) {rec.exact:.5f}, z={rec.z:.2f}; failures {bad}")


def test_ac6_covariance():
    t0 = time.perf_counter()
    reps = [covariance_experiment(d, n, BIG, 600 + d * 10 + n) for d, n in [(2, 4), (2, 6), (3, 6)]]
    elapsed = time.perf_counter() - t0
    bad = failed(*reps)
    entries = sum(1 for rep in reps for r in rep.gated if r.name.startswith("cov("))
    facets = sum(1 for rep in reps for r in rep.gated if r.name.startswith("cover_efron:"))
    diag_ok = all(r.estimate >= 0 for rep in reps for r in rep.gated
                  if r.name.startswith("cov(") and r.name.split(",")[0][4:] == r.name.split(",")[1][:-1])
    verdict("AC6 covariance matrices and E f_{d-1}^2", not bad and entries == 12 and facets == 3 and diag_ok,
            f"{entries} covariance entries, {facets} facet checks, failures {bad}, {elapsed / 60:.1f} min")


def test_ac7_weighted_cones_and_two_routes():
    ck = weighted_identity_check("ckj", 3, 6, 2, 1, 50_000, 701)
    dk = weighted_identity_check("dkj", 3, 6, 2, 1, 50_000, 702)
    two = two_route_check(3, 6, 20_000, 703, level=1e-3)
    bad = failed(ck, dk, two)
    ks = two.results[0]
    verdict("AC7 weighted-cone identities and Cover-Efron routes", not bad,
            f"KS p={ks.estimate:.3f}, chi2 p={two.results[1].estimate:.3f}; failures {bad}")


def test_ac8_geometric_identities():
    exact = [identity_suite(d, n, 20, 800 + d, checks=("identity_73", "CE1"))
             for d, n in [(2, 4), (2, 6), (3, 5), (3, 6)]]
    worst = max(abs(r.estimate) for rep in exact for r in rep.results)
    mc4 = identity_suite(4, 6, 4, 804, mc_samples=8192, checks=("identity_73", "CE1"))
    per_cell = [identity_suite(d, n, 20, 810 + d, mc_samples=8192, checks=("per_cell",))
                for d, n in [(2, 4), (3, 6), (4, 6)]]
    bad = failed(mc4, *per_cell)
    ok = worst < 1e-10 and not bad and all(r.passed for rep in exact for r in rep.results)
    verdict("AC8 deterministic geometric identities", ok,
            f"max exact-path residual {worst:.1e}; 4 SE failures {bad}")


def test_ac9_reproducible_across_workers(tmp_path, monkeypatch):
    monkeypatch.delenv("CONETESS_THREADS", raising=False)
    cfg = ExperimentConfig(3, 6, "schlafli", ("f_1", "Lambda_2", "U_1", "V_3"), 400, master_seed=901)
    blobs = []
    for w in (1, 2, 8):
        path = tmp_path / f"w{w}.json"
        write_report(run(cfg, workers=w, timing=False), path)
        blobs.append((path.read_bytes(), path.with_suffix(".csv").read_bytes()))
    verdict("AC9 byte-identical reports across 1, 2, 8 workers", blobs[0] == blobs[1] == blobs[2])


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
