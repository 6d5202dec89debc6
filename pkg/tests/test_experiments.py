import json
import math

import numpy as np
import pytest

from conetess import experiments as E
from conetess.errors import ConfigurationError, GeneralPositionError
from conetess.experiments import (
    ExperimentConfig,
    ExperimentReport,
    HardAssertionFailure,
    covariance_experiment,
    gate,
    identity_suite,
    jackknife_cov,
    parse_functional,
    read_report,
    report_csv,
    run,
    worker_count,
    write_report,
)


def cfg(**kw):
    base = dict(d=3, n=6, model="schlafli", functionals=("f_1",), replicates=200, master_seed=11)
    base.update(kw)
    return ExperimentConfig(**base)


def test_parse_functionals():
    assert parse_functional("Lambda_1*V_3", 3) == [("Lambda", 1, 1), ("V", 3, 1)]
    assert parse_functional("1/Lambda_2", 3) == [("Lambda", 2, -1)]
    assert parse_functional("1", 3) == []
    for bad in ("W_1", "V_9", "Lambda_0", "f", "U_3"):
        with pytest.raises(ConfigurationError):
            parse_functional(bad, 3)


@pytest.mark.parametrize("kw", [
    {"model": "zero_cell"},
    {"replicates": 0},
    {"model": "ckj"},
    {"model": "ckj", "k": 2, "j": 3},
    {"model": "cover_efron_direct", "n": 2},
    {"d": 1, "n": 3},
    {"sigma_gate": 0},
    {"functionals": ()},
    {"model": "dkj", "k": 2, "j": 1, "distribution": {"kind": "anisotropic_gaussian", "scales": [1, 2, 3]}},
])
def test_invalid_configs(kw):
    with pytest.raises(ConfigurationError):
        cfg(**kw)


def test_config_json_round_trip():
    c = cfg(distribution={"kind": "anisotropic_gaussian", "scales": [1, 2, 3]})
    assert ExperimentConfig.from_json(json.loads(json.dumps(c.to_json()))) == c
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_json({**c.to_json(), "colour": "red"})


def test_halfplane_desk_case():
    rep = run(ExperimentConfig(2, 1, "schlafli", ("Lambda_1*Lambda_1",), 150))
    assert (rep.values == 1.0).all()
    assert rep.results[0].passed


def test_first_moment_small_run():
    rep = run(cfg(functionals=("f_1", "V_3", "Lambda_2", "U_1"), replicates=2000))
    assert rep.passed, rep.results
    assert rep.record("f_1").exact == 3.75


def test_ungated_below_100_replicates():
    rep = run(cfg(replicates=50))
    assert rep.results[0].passed is None
    assert report_csv(rep).count("\n") == 1


def test_config_not_mutated():
    c = cfg()
    before = c.to_json()
    run(c)
    assert c.to_json() == before


def test_gate_rule():
    r = gate("x", 1.0, 0.1, 1.39, 4.0)
    assert r.passed and r.z == pytest.approx(-3.9)
    assert not gate("x", 1.0, 0.1, 1.41, 4.0).passed
    assert gate("x", 2.0, 0.0, 2.0, 4.0).passed
    assert not gate("x", 2.0, 0.0, 2.1, 4.0).passed
    assert gate("x", 1.0, 0.0, None, 4.0).passed is None


def test_jackknife_cov_matches_numpy():
    g = np.random.default_rng(1)
    x = g.standard_normal(400)
    y = x + g.standard_normal(400)
    c, se = jackknife_cov(x, y)
    assert c == pytest.approx(np.cov(x, y)[0, 1], rel=1e-12)
    c2, se2 = jackknife_cov(np.tile(x, 4), np.tile(y, 4))
    assert se2 == pytest.approx(se / 2, rel=0.15)


def test_covariance_experiment_small():
    rep = covariance_experiment(2, 4, 3000, 5)
    names = [r.name for r in rep.results]
    assert "cov(Lambda_1,Lambda_2)" in names and "cover_efron:f_1*f_1" in names
    assert rep.passed, rep.results
    assert rep.record("cov(Lambda_2,Lambda_2)").estimate >= 0


def test_identity_suite_small():
    rep = identity_suite(2, 4, 3, 1)
    assert rep.passed and rep.hard_assertion_failures == 0
    assert any(r.name.startswith("identity_73") for r in rep.results)


def test_report_round_trip_and_csv(tmp_path):
    rep = run(cfg(functionals=("f_1", "Lambda_2"), replicates=300))
    path = tmp_path / "r.json"
    write_report(rep, path)
    back = read_report(path)
    assert back.to_json() == rep.to_json()
    obj = json.loads(path.read_text())
    assert obj["schema_version"] == E.SCHEMA_VERSION
    text = (tmp_path / "r.csv").read_bytes().decode()
    assert "\r" not in text
    lines = text.splitlines()
    assert lines[0] == "name,estimate,se,exact,exact_err,z,pass"
    assert len(lines) - 1 == len(rep.gated)
    obj["schema_version"] = 99
    path.write_text(json.dumps(obj))
    with pytest.raises(ConfigurationError):
        read_report(path)


def test_worker_count_respects_env(monkeypatch):
    monkeypatch.delenv(E.THREADS_ENV, raising=False)
    assert worker_count(None) == 1
    assert worker_count(8) == 8
    monkeypatch.setenv(E.THREADS_ENV, "2")
    assert worker_count(8) == 2
    monkeypatch.setenv(E.THREADS_ENV, "many")
    with pytest.raises(ConfigurationError):
        worker_count(4)


def test_estimates_independent_of_workers(monkeypatch):
    monkeypatch.delenv(E.THREADS_ENV, raising=False)
    c = cfg(functionals=("Lambda_2", "U_1"), replicates=120)
    a = run(c, workers=1, timing=False).to_json()
    b = run(c, workers=3, timing=False).to_json()
    assert a == b


def test_hard_assertion_carries_triage(monkeypatch):
    real = E._draw_cone

    def broken(c, g):
        cone, arr = real(c, g)
        raise GeneralPositionError("cell count mismatch", arrangement=arr)

    monkeypatch.setattr(E, "_draw_cone", broken)
    with pytest.raises(HardAssertionFailure) as info:
        run(cfg(replicates=5))
    assert info.value.replicate == 0
    assert len(info.value.triage["normals"]) == 6
    assert all(isinstance(x, str) and "p" in x for x in info.value.triage["normals"][0])


def test_weighted_and_route_checks_small():
    rep = E.weighted_identity_check("ckj", 3, 6, 2, 1, 400, 2)
    assert [r.name for r in rep.results] == ["ckj[2,1]:1", "ckj[2,1]:f_1", "ckj[2,1]:V_3"]
    assert rep.passed
    lem = E.e_cone_comparison_check(3, 5, 400, 3)
    assert lem.passed
    two = E.two_route_check(3, 6, 300, 4)
    assert all(0 <= r.estimate <= 1 for r in two.results)
