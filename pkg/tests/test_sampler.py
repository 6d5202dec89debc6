import numpy as np
import pytest

from conetess.errors import ConfigurationError, DomainError, UnsupportedInputError
from conetess.geometry import PolyCone, cell_cone, enumerate_cells
from conetess.sampler import (
    ISOTROPIC,
    DirectionDistribution,
    RngStream,
    draw_e_cone,
    intersection_count,
    sample_arrangement,
    sample_cover_efron_direct,
    sample_cover_efron_dual,
    sample_e_cone,
    sample_schlafli,
    sample_weighted_Ckj,
    sample_weighted_Dkj,
)


def test_streams_are_reproducible_and_distinct():
    a = RngStream(7, 3).generator().standard_normal(5)
    b = RngStream(7, 3).generator().standard_normal(5)
    c = RngStream(7, 4).generator().standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_rng_type_check():
    with pytest.raises(TypeError):
        sample_arrangement(3, 2, rng=42)


def test_distribution_validation():
    with pytest.raises(ConfigurationError):
        DirectionDistribution("cauchy")
    with pytest.raises(ConfigurationError):
        DirectionDistribution("anisotropic_gaussian", (1.0, -1.0))
    dist = DirectionDistribution("anisotropic_gaussian", (1, 2, 3))
    assert DirectionDistribution.from_json(dist.to_json()) == dist
    assert DirectionDistribution.from_json(None) == ISOTROPIC
    with pytest.raises(ConfigurationError):
        dist.sample(np.random.default_rng(0), 4, 2)


def test_normals_are_unit_and_anisotropic_is_skewed():
    g = np.random.default_rng(0)
    X = DirectionDistribution("anisotropic_gaussian", (1, 1, 5)).sample(g, 20000, 3)
    assert np.allclose(np.linalg.norm(X, axis=1), 1)
    assert np.abs(X[:, 2]).mean() > 2 * np.abs(X[:, 0]).mean()


def test_arrangement_provenance():
    arr = sample_arrangement(6, 3, rng=RngStream(1))
    assert arr.provenance["resamples"] == 0
    assert arr.general_position_certificate


def test_schlafli_is_uniform_over_cells():
    g = np.random.default_rng(5)
    arr = sample_arrangement(4, 2, rng=g)
    cells = [c.signs for c in enumerate_cells(arr)]
    draws = [cells.index(sample_schlafli(arr, g).signs) for _ in range(8000)]
    counts = np.bincount(draws, minlength=len(cells))
    expected = 8000 / len(cells)
    chi2 = ((counts - expected) ** 2 / expected).sum()
    assert chi2 < 30  # 7 degrees of freedom


def test_e_cone_contains_e():
    g = np.random.default_rng(2)
    for _ in range(20):
        c = draw_e_cone(5, 3, rng=g)
        C = cell_cone(c.arrangement, c.signs)
        assert C.contains(np.array([[1.0, 0, 0]]))[0]
    arr = sample_arrangement(4, 3, rng=g)
    e = np.cross(arr.normals[0], arr.normals[1])
    with pytest.raises(Exception):
        sample_e_cone(arr, e)


def test_cover_efron_routes():
    g = np.random.default_rng(3)
    direct = sample_cover_efron_direct(6, 3, rng=g)
    assert isinstance(direct, PolyCone) and direct.attempts >= 1
    # the positive hull contains every generator of the arrangement
    X = direct.arrangement.normals
    assert direct.contains(X, tol=1e-9).all()
    dual = sample_cover_efron_dual(sample_arrangement(6, 3, rng=g), g)
    assert dual.f(3) == 1 and dual.f(2) >= 3
    with pytest.raises(UnsupportedInputError):
        sample_cover_efron_direct(2, 3, rng=g)


def test_weighted_domains():
    with pytest.raises(DomainError):
        sample_weighted_Ckj(1, 3, 2, 1, rng=np.random.default_rng(0))
    with pytest.raises(DomainError):
        sample_weighted_Ckj(6, 3, 2, 3, rng=np.random.default_rng(0))
    with pytest.raises(DomainError):
        sample_weighted_Dkj(1, 3, 2, 1, rng=np.random.default_rng(0))


def test_weighted_samplers_return_cells():
    g = np.random.default_rng(4)
    for _ in range(10):
        c = sample_weighted_Ckj(6, 3, 2, 1, rng=g)
        assert c.arrangement.n == 6 and 0 not in c.signs
        D = sample_weighted_Dkj(6, 3, 2, 1, rng=g)
        assert D.arrangement.n == 5
        assert c.signs in {x.signs for x in enumerate_cells(c.arrangement)}
        assert D.signs in {x.signs for x in enumerate_cells(D.arrangement)}


def test_weighted_full_subspace_is_schlafli_like():
    # k = j = d: a uniform d-face of the whole tessellation, i.e. a uniform cell
    g = np.random.default_rng(8)
    V = [cell_cone(c.arrangement, c.signs).V(3).value
         for c in (sample_weighted_Ckj(5, 3, 3, 3, rng=g) for _ in range(3000))]
    assert np.mean(V) == pytest.approx(1 / 22, abs=4 * np.std(V) / np.sqrt(3000))


def test_same_stream_same_cone():
    a = sample_weighted_Ckj(6, 3, 2, 1, rng=RngStream(9, 1))
    b = sample_weighted_Ckj(6, 3, 2, 1, rng=RngStream(9, 1))
    assert a.signs == b.signs and np.array_equal(a.arrangement.normals, b.arrangement.normals)


def test_intersection_count():
    assert intersection_count(6, 3, 2) == 6
    assert intersection_count(6, 3, 1) == 15
