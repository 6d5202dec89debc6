"""Random arrangements and the random cone models built on them.

Every routine takes a :class:`numpy.random.Generator` (or an
:class:`RngStream`, which is turned into one) and draws from it in a fixed
order, so a replicate is a deterministic function of its stream.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .combinatorics import binom
from .errors import ConfigurationError, DomainError, GeneralPositionError, UnsupportedInputError
from .geometry import (
    Arrangement,
    ConeRep,
    PolyCone,
    _face_keys,
    cell_cone,
    interior_feasible,
    null_basis,
)

MAX_RETRIES = 10
E_TOL = 1e-12


@dataclass(frozen=True)
class RngStream:
    """Independent stream ``stream_index`` of a master seed."""

    master_seed: int
    stream_index: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_index,))
        return np.random.Generator(np.random.PCG64(ss))


def _gen(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError("rng must be an RngStream or numpy Generator")


@dataclass(frozen=True)
class DirectionDistribution:
    """Law of the hyperplane normals: isotropic, or a centred Gaussian with
    diagonal scales (normalised). Both are even and put no mass on great
    subspheres."""

    kind: str = "isotropic"
    scales: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in ("isotropic", "anisotropic_gaussian"):
            raise ConfigurationError(f"unknown direction distribution {self.kind!r}")
        if self.kind == "anisotropic_gaussian":
            if not self.scales or min(self.scales) <= 0:
                raise ConfigurationError("anisotropic_gaussian needs positive scales")
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))

    @property
    def isotropic(self) -> bool:
        return self.kind == "isotropic"

    def sample(self, rng: np.random.Generator, n: int, d: int) -> np.ndarray:
        X = rng.standard_normal((n, d))
        if self.kind == "anisotropic_gaussian":
            if len(self.scales) != d:
                raise ConfigurationError(f"need {d} scales, got {len(self.scales)}")
            X = X * np.asarray(self.scales)
        return X / np.linalg.norm(X, axis=1)[:, None]

    def to_json(self) -> dict:
        return {"kind": self.kind, "scales": list(self.scales)}

    @classmethod
    def from_json(cls, obj) -> "DirectionDistribution":
        if obj is None or isinstance(obj, str):
            return cls(obj or "isotropic")
        return cls(obj.get("kind", "isotropic"), tuple(obj.get("scales", ())))


ISOTROPIC = DirectionDistribution()


def sample_arrangement(n: int, d: int, dist: DirectionDistribution = ISOTROPIC, rng=None) -> Arrangement:
    """n i.i.d. hyperplanes, resampled until the certificate holds."""
    g = _gen(rng)
    for attempt in range(MAX_RETRIES + 1):
        U = dist.sample(g, n, d)
        try:
            return Arrangement(U, {"resamples": attempt})
        except GeneralPositionError:
            continue
    raise ConfigurationError(f"no certified arrangement after {MAX_RETRIES} retries")


def sample_schlafli(arr: Arrangement, rng) -> ConeRep:
    """Uniform choice among the C(n, d) cells."""
    masks = arr.cell_masks
    m = int(masks[_gen(rng).integers(len(masks))])
    return ConeRep(arr, arr.signs_of(m))


def sample_e_cone(arr: Arrangement, e=None) -> ConeRep:
    """The cell containing the direction ``e`` (default: first basis vector)."""
    if e is None:
        e = np.zeros(arr.d)
        e[0] = 1.0
    v = arr.normals @ np.asarray(e, dtype=float)
    if arr.n and np.abs(v).min() < E_TOL:
        raise GeneralPositionError("direction lies on a hyperplane", arrangement=arr)
    return ConeRep(arr, tuple(-1 if x > 0 else 1 for x in v))


def draw_e_cone(n, d, dist=ISOTROPIC, rng=None, e=None) -> ConeRep:
    g = _gen(rng)
    for _ in range(MAX_RETRIES + 1):
        try:
            return sample_e_cone(sample_arrangement(n, d, dist, g), e)
        except GeneralPositionError:
            continue
    raise ConfigurationError("e lies on a hyperplane too often")


def sample_cover_efron_direct(n: int, d: int, dist: DirectionDistribution = ISOTROPIC,
                              rng=None, max_attempts: int = 1_000_000) -> PolyCone:
    """pos{X_1..X_n} conditioned on not being R^d, by rejection.

    The returned cone has an ``attempts`` attribute (draws used, >= 1).
    """
    if n < d:
        raise UnsupportedInputError("Cover-Efron cones with n < d are not full-dimensional")
    g = _gen(rng)
    for attempt in range(1, max_attempts + 1):
        arr = sample_arrangement(n, d, dist, g)
        plus = (1,) * n
        if interior_feasible(arr, plus):
            cone = PolyCone.from_cell(arr, plus).dual()
            cone.attempts = attempt
            cone.arrangement = arr
            return cone
    raise ConfigurationError("rejection sampler exhausted its attempt budget")


def sample_cover_efron_dual(arr: Arrangement, rng) -> PolyCone:
    """Dual of a uniform Schlaefli cell."""
    if arr.n < arr.d:
        raise UnsupportedInputError("Cover-Efron cones with n < d are not full-dimensional")
    return PolyCone.from_cell(arr, sample_schlafli(arr, rng).signs).dual()


def _random_frame(g: np.random.Generator, d: int, k: int) -> np.ndarray:
    Q, R = np.linalg.qr(g.standard_normal((d, k)))
    return Q * np.sign(np.diag(R))


def _select_in_subspace(arr: Arrangement, basis: np.ndarray, j: int, g) -> tuple:
    """Uniform j-face of the tessellation induced in span(basis), then a
    uniform ambient cell containing the matching ambient face."""
    k = basis.shape[1]
    if arr.n == 0:
        return ()
    induced = arr.restrict(basis)
    keys = _face_keys(induced, j)
    Am, plus = keys[int(g.integers(len(keys)))]
    active = [i for i in range(arr.n) if Am >> i & 1]
    coin = g.integers(2, size=len(active))
    signs = [1 if plus >> i & 1 else -1 for i in range(arr.n)]
    for i, c in zip(active, coin):
        signs[i] = 1 if c else -1
    return tuple(signs)


def _check_kj(d, k, j):
    if not 1 <= k <= d:
        raise DomainError(f"k={k} outside [1, {d}]")
    if not 1 <= j <= k:
        raise DomainError(f"j={j} outside [1, {k}]")


def sample_weighted_Ckj(n: int, d: int, k: int, j: int, dist: DirectionDistribution = ISOTROPIC,
                        rng=None) -> ConeRep:
    """Cone hit by a random k-subspace through a uniformly chosen j-face of the section."""
    _check_kj(d, k, j)
    if n <= k - j:
        raise DomainError(f"need n > k - j, got n={n}, k-j={k - j}")
    g = _gen(rng)
    for _ in range(MAX_RETRIES + 1):
        arr = sample_arrangement(n, d, dist, g)
        basis = np.eye(d) if k == d else _random_frame(g, d, k)
        try:
            return ConeRep(arr, _select_in_subspace(arr, basis, j, g))
        except GeneralPositionError:
            continue
    raise ConfigurationError("random subspace not in general position too often")


def sample_weighted_Dkj(n: int, d: int, k: int, j: int, rng=None) -> ConeRep:
    """Selection inside a random k-dimensional intersection of the hyperplanes.

    The returned cell belongs to the arrangement with the d-k defining
    hyperplanes removed.
    """
    _check_kj(d, k, j)
    if n < d - j:
        raise DomainError(f"need n >= d - j, got n={n}, d-j={d - j}")
    g = _gen(rng)
    for _ in range(MAX_RETRIES + 1):
        arr = sample_arrangement(n, d, ISOTROPIC, g)
        chosen = sorted(int(i) for i in g.choice(n, d - k, replace=False)) if d > k else []
        rest = [i for i in range(n) if i not in chosen]
        basis = null_basis(arr.normals[chosen], d)
        rest_arr = arr.subset(rest)
        try:
            return ConeRep(rest_arr, _select_in_subspace(rest_arr, basis, j, g))
        except GeneralPositionError:
            continue
    raise ConfigurationError("intersection subspace not in general position too often")


def intersection_count(n: int, d: int, k: int) -> int:
    """Number of k-dimensional intersection subspaces of n generic hyperplanes."""
    return binom(n, d - k)


__all__ = [
    "RngStream", "DirectionDistribution", "ISOTROPIC", "sample_arrangement", "sample_schlafli",
    "sample_e_cone", "draw_e_cone", "sample_cover_efron_direct", "sample_cover_efron_dual",
    "sample_weighted_Ckj", "sample_weighted_Dkj", "cell_cone", "intersection_count",
]
