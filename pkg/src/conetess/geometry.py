"""Polyhedral cones cut out by central hyperplane arrangements.

Sign convention: a sign vector ``s`` denotes the open region
``{x : s_i <u_i, x> < 0}``. Cells are encoded internally as bitmasks of the
positions carrying ``+1``.

Cells and faces are enumerated from the *ray table*: every (d-1)-subset of
normals spans a line, and its two unit directions are the only candidates
for extreme rays of any cell. Each ray is adjacent to exactly ``2^(d-1)``
cells (all sign completions on the hyperplanes through it), so the cells are
the distinct completions over all rays. The sign of ``<u_i, r>`` off the
defining subset equals a d x d minor up to a factor <= 1, so the
general-position certificate makes every sign in the table robust.
The LP-based incremental sweep is kept as an independent cross-check.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from itertools import combinations

import numpy as np

from . import _kernels as K
from .combinatorics import face_count_total, schlafli_count
from .errors import DomainError, GeneralPositionError, UnsupportedInputError

log = logging.getLogger(__name__)

CERT_TOL = 1e-9
FEAS_TOL = 1e-9
UNIT_TOL = 1e-12
MAX_HYPERPLANES = 62


@lru_cache(maxsize=None)
def _subsets(n: int, m: int) -> np.ndarray:
    if m > n or m < 0:
        return np.zeros((0, max(m, 0)), dtype=np.int64)
    return np.array(list(combinations(range(n), m)), dtype=np.int64).reshape(-1, m) if m else \
        np.zeros((1, 0), dtype=np.int64)


@lru_cache(maxsize=None)
def _completion_bits(m: int) -> np.ndarray:
    """(2^m, m) 0/1 matrix listing every subset of m positions."""
    return ((np.arange(2**m)[:, None] >> np.arange(m)) & 1).astype(np.int64)


def null_basis(A: np.ndarray, d: int) -> np.ndarray:
    """Orthonormal basis (d x (d - rank)) of the kernel of the rows of ``A``."""
    if A.shape[0] == 0:
        return np.eye(d)
    _, s, vt = np.linalg.svd(A)
    rank = int(np.sum(s > 1e-12 * max(1.0, s[0])))
    return vt[rank:].T.copy()


def span_basis(V: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the row span of ``V`` (columns)."""
    u, s, vt = np.linalg.svd(V, full_matrices=False)
    rank = int(np.sum(s > 1e-10 * max(1.0, s[0])))
    return vt[:rank].T.copy()


# --- arrangement --------------------------------------------------------------


class Arrangement:
    """n unit normals in R^d with a general-position certificate."""

    def __init__(self, normals, provenance: dict | None = None, certify: bool = True):
        U = np.array(normals, dtype=float, copy=True)
        if U.ndim != 2:
            raise DomainError("normals must be an (n, d) array")
        n, d = U.shape
        if d < 1:
            raise DomainError("dimension must be >= 1")
        if n > MAX_HYPERPLANES:
            raise UnsupportedInputError(f"at most {MAX_HYPERPLANES} hyperplanes supported")
        norms = np.linalg.norm(U, axis=1)
        if n and norms.min() < CERT_TOL:
            raise GeneralPositionError("zero normal vector", arrangement=None)
        U /= norms[:, None]
        U.setflags(write=False)
        self.normals = U
        self.n, self.d = n, d
        self.provenance = dict(provenance or {})
        self.min_minor = self._min_minor()
        self.general_position_certificate = self.min_minor >= CERT_TOL
        if certify and not self.general_position_certificate:
            raise GeneralPositionError(
                f"smallest minor {self.min_minor:.3e} below {CERT_TOL}", arrangement=self)

    @classmethod
    def from_normals(cls, normals, provenance=None, certify=True) -> "Arrangement":
        return cls(normals, provenance, certify)

    def _min_minor(self) -> float:
        n, d = self.n, self.d
        if n == 0:
            return math.inf
        m = min(n, d)
        M = self.normals[_subsets(n, m)]
        if m == d:
            return float(np.abs(np.linalg.det(M)).min())
        gram = M @ M.transpose(0, 2, 1)
        return float(np.sqrt(np.clip(np.linalg.det(gram), 0.0, None)).min())

    def subset(self, indices) -> "Arrangement":
        idx = list(indices)
        prov = dict(self.provenance)
        prov["subset"] = idx
        return Arrangement(self.normals[idx], prov)

    def restrict(self, basis: np.ndarray) -> "Arrangement":
        """Induced arrangement inside span(basis), in basis coordinates."""
        W = self.normals @ basis
        if self.n and np.linalg.norm(W, axis=1).min() < CERT_TOL:
            raise GeneralPositionError("hyperplane contains the subspace", arrangement=self)
        return Arrangement(W, {"restricted_from": self.provenance})

    # serialisation for triage: hex floats keep every bit
    def to_json(self) -> dict:
        return {
            "d": self.d,
            "normals": [[float(x).hex() for x in row] for row in self.normals],
            "provenance": self.provenance,
        }

    @classmethod
    def from_json(cls, obj: dict, certify: bool = False) -> "Arrangement":
        rows = [[float.fromhex(x) for x in row] for row in obj["normals"]]
        return cls(np.array(rows, dtype=float).reshape(-1, obj["d"]), obj.get("provenance"), certify)

    # -- ray table --------------------------------------------------------

    @cached_property
    def ray_table(self) -> "RayTable":
        return RayTable.build(self)

    @cached_property
    def cell_masks(self) -> np.ndarray:
        n, d = self.n, self.d
        if n <= d - 1:
            masks = np.arange(2**n, dtype=np.int64)
        else:
            T = self.ray_table
            zpow = np.left_shift(np.int64(1), T.zeros)
            masks = np.unique((T.plus[:, None] + zpow @ _completion_bits(d - 1).T).ravel())
        expected = schlafli_count(n, d)
        if len(masks) != expected:
            raise GeneralPositionError(
                f"found {len(masks)} cells, expected C({n},{d})={expected}", arrangement=self)
        return masks

    def signs_of(self, mask: int) -> tuple:
        return tuple(1 if (mask >> i) & 1 else -1 for i in range(self.n))

    def __repr__(self):
        return f"Arrangement(n={self.n}, d={self.d}, min_minor={self.min_minor:.2e})"


@dataclass(frozen=True)
class RayTable:
    """Unit directions of all lines H_S, |S| = d-1, in both orientations."""

    rays: np.ndarray  # (2c, d)
    zeros: np.ndarray  # (2c, d-1) hyperplane indices through the ray
    base: np.ndarray  # (2c, n) int8 cell signs forced off ``zeros``; 0 on them
    plus: np.ndarray  # (2c,) bitmask of +1 entries of ``base``

    @classmethod
    def build(cls, arr: Arrangement) -> "RayTable":
        n, d = arr.n, arr.d
        U = arr.normals
        if n < d - 1:
            return cls(np.zeros((0, d)), np.zeros((0, d - 1), np.int64),
                       np.zeros((0, n), np.int8), np.zeros(0, np.int64))
        S = _subsets(n, d - 1)
        if d == 1:
            R = np.ones((1, 1))
        elif d == 2:
            R = np.stack([-U[S[:, 0], 1], U[S[:, 0], 0]], axis=1)
        elif d == 3:
            a, b = U[S[:, 0]], U[S[:, 1]]
            R = np.stack([a[:, 1] * b[:, 2] - a[:, 2] * b[:, 1],
                          a[:, 2] * b[:, 0] - a[:, 0] * b[:, 2],
                          a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]], axis=1)
        else:
            R = np.linalg.svd(U[S])[2][:, -1, :]
        R = R / np.linalg.norm(R, axis=1)[:, None]
        V = R @ U.T
        np.put_along_axis(V, S, 0.0, axis=1)
        R = np.concatenate([R, -R])
        V = np.concatenate([V, -V])
        S = np.concatenate([S, S])
        base = (-np.sign(V)).astype(np.int8)
        weights = np.left_shift(np.int64(1), np.arange(n, dtype=np.int64))
        plus = (base == 1).astype(np.int64) @ weights
        return cls(R, S, base, plus)


# --- cone representations ---------------------------------------------------


@dataclass(frozen=True)
class ConeRep:
    """A cell (``active`` empty) or face of an arrangement's tessellation.

    ``signs`` has one entry per hyperplane; entries on ``active`` are 0.
    """

    arrangement: Arrangement = field(compare=False, hash=False, repr=False)
    signs: tuple
    active: tuple = ()
    span_dim: int = -1

    def __post_init__(self):
        if self.span_dim < 0:
            object.__setattr__(self, "span_dim", self.arrangement.d - len(self.active))

    @property
    def key(self) -> tuple:
        return (self.active, self.signs)

    def cone(self) -> "PolyCone | SplitCone":
        if self.active:
            raise UnsupportedInputError("cone() is defined for cells; use faces_of_cell")
        return cell_cone(self.arrangement, self.signs)


@dataclass(frozen=True)
class AngleEstimate:
    value: float
    standard_error: float = 0.0
    method: str = "exact"

    @property
    def exact(self) -> bool:
        return self.method != "monte_carlo"

    def __add__(self, other: "AngleEstimate") -> "AngleEstimate":
        if not isinstance(other, AngleEstimate):
            return NotImplemented
        se = math.hypot(self.standard_error, other.standard_error)
        meth = self.method if self.method == other.method else (
            "monte_carlo" if se > 0 else "exact")
        return AngleEstimate(self.value + other.value, se, meth)

    def __radd__(self, other):
        if other == 0:
            return self
        return NotImplemented

    def __mul__(self, other: "AngleEstimate") -> "AngleEstimate":
        # delta method, independent factors
        se = math.hypot(self.value * other.standard_error, other.value * self.standard_error)
        meth = "monte_carlo" if se > 0 else (self.method if self.method == other.method else "exact")
        return AngleEstimate(self.value * other.value, se, meth)


_ZERO = AngleEstimate(0.0)
_HALF = AngleEstimate(0.5)
_ONE = AngleEstimate(1.0)


def _mc(hits: int, N: int) -> AngleEstimate:
    p = hits / N
    return AngleEstimate(p, math.sqrt(p * (1.0 - p) / N), "monte_carlo")


def _planar_angle(a: np.ndarray, b: np.ndarray) -> float:
    c = float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))
    return math.acos(max(-1.0, min(1.0, c)))


def _cyclic_order(P: np.ndarray) -> np.ndarray:
    """Order the extreme rays of a pointed 3-cone around an interior axis.

    The axis comes from the slack LP, so every ray has a positive inner
    product with it and the gnomonic chart is defined on all of them (the
    centroid of the rays fails this for wide cones).
    """
    t, z = K.max_slack(np.ascontiguousarray(-P), 1.0)
    if t <= 0:
        raise ValueError("rays do not span a pointed cone")
    c = z / np.linalg.norm(z)
    Y = P / (P @ c)[:, None]
    Y = Y - Y.mean(axis=0)
    e1 = Y[0] - np.dot(Y[0], c) * c
    e1 /= np.linalg.norm(e1)
    e2 = np.array([c[1] * e1[2] - c[2] * e1[1], c[2] * e1[0] - c[0] * e1[2],
                   c[0] * e1[1] - c[1] * e1[0]])
    return np.argsort(np.arctan2(Y @ e2, Y @ e1), kind="stable")


def spherical_polygon_fraction(P: np.ndarray) -> float:
    """Solid-angle fraction of pos(P) for a pointed cone in R^3 with extreme rays P."""
    P = P / np.linalg.norm(P, axis=1)[:, None]
    if len(P) > 3:
        P = P[_cyclic_order(P)]
    return float(K.girard_area(np.ascontiguousarray(P))) / (4.0 * math.pi)


def solid_angle(basis: np.ndarray, member=None, rays: np.ndarray | None = None,
                mc_samples: int = 4096, rng: np.random.Generator | None = None,
                exact_max_dim: int = 3) -> AngleEstimate:
    """Fraction of the unit sphere of span(basis) lying in a pointed cone.

    ``rays`` (extreme rays, ambient coordinates) enables the exact paths for
    span dimension <= 3; ``member`` maps an (N, d) array of ambient points to
    a boolean mask and drives the Monte Carlo path.
    """
    m = basis.shape[1]
    if m == 0:
        return _ONE
    if rays is not None and len(rays) == 0:
        return _ONE  # the whole span
    if m == 1 and rays is not None:
        return _HALF
    if rays is not None and m <= exact_max_dim:
        try:
            if m == 2:
                return AngleEstimate(_planar_angle(rays[0], rays[1]) / (2 * math.pi), 0.0, "exact2d")
            return AngleEstimate(spherical_polygon_fraction(rays @ basis), 0.0, "exact3d")
        except (FloatingPointError, ValueError, IndexError):
            log.warning("exact angle path failed; falling back to Monte Carlo")
    if member is None:
        raise DomainError("Monte Carlo solid angle needs a membership predicate")
    if rng is None:
        raise DomainError("Monte Carlo solid angle needs an rng")
    X = rng.standard_normal((mc_samples, m)) @ basis.T
    return _mc(int(np.count_nonzero(member(X))), mc_samples)


def simplicial_angle(G: np.ndarray, mc_samples: int = 4096, rng=None,
                     exact_max_dim: int = 3) -> AngleEstimate:
    """Solid angle of pos(G) in its span, G of full row rank."""
    k = G.shape[0]
    if k == 1:
        return _HALF
    basis = span_basis(G)
    coords = G @ basis
    inv = np.linalg.inv(coords)

    def member(X):
        return ((X @ basis) @ inv >= 0.0).all(axis=1)

    return solid_angle(basis, member, G, mc_samples, rng, exact_max_dim)


class PolyCone:
    """A pointed, full-dimensional cone pos(rays) = {x : H x <= 0}.

    ``faces[k]`` lists the k-faces as ``(ray indices, active halfspace indices)``.
    Face ``k`` of the dual corresponds to face ``d - k`` here with the two
    index sets swapped, which is how :meth:`dual` is built.
    """

    def __init__(self, d, rays, halfspaces, faces, hyperplanes=None, signs=None):
        self.d = d
        self.rays = rays
        self.halfspaces = halfspaces
        self.faces = faces
        self.hyperplanes = hyperplanes  # arrangement index of each halfspace, if any
        self.signs = signs
        self._dual = None
        self._angles: dict = {}

    @classmethod
    def from_cell(cls, arr: Arrangement, signs) -> "PolyCone":
        n, d = arr.n, arr.d
        if n < d or d < 2:
            raise UnsupportedInputError(
                "cell is not pointed (n < d); use the subspace rules via SplitCone")
        sig = np.asarray(signs, dtype=np.int8)
        T = arr.ray_table
        idx = np.flatnonzero(((T.base == sig) | (T.base == 0)).all(axis=1))
        rays = T.rays[idx]
        Z = T.zeros[idx]
        facets = np.unique(Z)
        local = {int(h): i for i, h in enumerate(facets)}
        H = sig[facets, None] * arr.normals[facets]
        Zl = [tuple(local[int(h)] for h in row) for row in Z]
        faces = _simple_faces(d, Zl, len(facets))
        return cls(d, rays, H, faces, hyperplanes=tuple(int(h) for h in facets),
                   signs=tuple(int(s) for s in sig))

    def dual(self) -> "PolyCone":
        if self._dual is None:
            d = self.d
            faces = {k: [(act, rs) for rs, act in self.faces[d - k]] for k in range(d + 1)}
            self._dual = PolyCone(d, self.halfspaces / np.linalg.norm(
                self.halfspaces, axis=1)[:, None], self.rays, faces)
            self._dual._dual = self
        return self._dual

    def generators(self) -> np.ndarray:
        return self.rays

    def f(self, k: int) -> int:
        if not 0 <= k <= self.d:
            raise DomainError(f"face dimension {k} outside [0, {self.d}]")
        return len(self.faces[k])

    def face_angle(self, k: int, i: int, mc_samples=4096, rng=None, exact_max_dim=3) -> AngleEstimate:
        if k == 0:
            return _ONE
        if k == 1:
            return _HALF
        key = (k, i)
        if k <= exact_max_dim and key in self._angles:
            return self._angles[key]
        rays_idx, act = self.faces[k][i]
        R = self.rays[list(rays_idx)]
        if k <= exact_max_dim:
            if k == 2:
                c = float(R[0] @ R[1])
                est = AngleEstimate(math.acos(max(-1.0, min(1.0, c))) / (2 * math.pi), 0.0, "exact2d")
            else:
                P = R if self.d == 3 else R @ span_basis(R)
                est = AngleEstimate(spherical_polygon_fraction(P), 0.0, "exact3d")
            self._angles[key] = est
            return est
        basis = np.eye(self.d) if k == self.d else span_basis(R)
        inactive = np.setdiff1d(np.arange(len(self.halfspaces)), act)
        Hin = np.ascontiguousarray(self.halfspaces[inactive])

        def member(X):
            return (X @ Hin.T <= 0.0).all(axis=1)

        return solid_angle(basis, member, None, mc_samples, rng, exact_max_dim)

    def lam(self, k: int, mc_samples=4096, rng=None, exact_max_dim=3) -> AngleEstimate:
        if not 1 <= k <= self.d:
            raise DomainError(f"Lambda index {k} outside [1, {self.d}]")
        if k == 1:
            return AngleEstimate(0.5 * len(self.faces[1]))
        return sum((self.face_angle(k, i, mc_samples, rng, exact_max_dim)
                    for i in range(len(self.faces[k]))), _ZERO)

    def V(self, m: int, mc_samples=4096, rng=None, exact_max_dim=3) -> AngleEstimate:
        if not 0 <= m <= self.d:
            raise DomainError(f"intrinsic volume index {m} outside [0, {self.d}]")
        D = self.dual()
        total = _ZERO
        for i in range(len(self.faces[m])):
            b = self.face_angle(m, i, mc_samples, rng, exact_max_dim)
            g = D.face_angle(self.d - m, i, mc_samples, rng, exact_max_dim)
            total = total + b * g
        return total

    def U(self, j: int, mc_samples=4096, rng=None) -> AngleEstimate:
        return quermass_mc(self, j, mc_samples, rng)

    def contains(self, X: np.ndarray, tol: float = 0.0) -> np.ndarray:
        return (X @ self.halfspaces.T <= tol).all(axis=1)


def _simple_faces(d: int, Z: list, n_facets: int) -> dict:
    """Face lattice of a simple pointed cone from the facets through each ray."""
    faces = {}
    for k in range(1, d + 1):
        acc: dict = {}
        for ri, z in enumerate(Z):
            for A in combinations(z, d - k):
                acc.setdefault(A, []).append(ri)
        faces[k] = [(tuple(rs), A) for A, rs in sorted(acc.items())]
    faces[0] = [((), tuple(range(n_facets)))]
    return faces


class SplitCone:
    """Cell of n < d generic hyperplanes: C = L + K with L the (d - n)-dimensional
    lineality space and K = C cap L^perp a pointed simplicial cone of dimension n.

    Faces of C are L + (faces of K), orthogonally, so angles and intrinsic
    volumes of C are those of K shifted by dim L.
    """

    def __init__(self, d: int, halfspaces: np.ndarray):
        self.d = d
        self.n = halfspaces.shape[0]
        self.halfspaces = halfspaces
        self.lineality = d - self.n
        self._core = None

    @property
    def core(self):
        """K as a cone in an orthonormal basis of L^perp (None when n <= 1)."""
        if self._core is None and self.n >= 2:
            B = span_basis(self.halfspaces)
            sub = Arrangement(self.halfspaces @ B, certify=False)
            self._core = PolyCone.from_cell(sub, (1,) * self.n)
        return self._core

    def f(self, k: int) -> int:
        from .combinatorics import binom
        return binom(self.n, self.d - k)

    def _core_lam(self, i, mc_samples, rng, exact_max_dim) -> AngleEstimate:
        if i < 0:
            return _ZERO
        if i == 0:
            return _ONE
        if self.n == 1:
            return _HALF
        return self.core.lam(i, mc_samples, rng, exact_max_dim)

    def lam(self, k: int, mc_samples=4096, rng=None, exact_max_dim=3) -> AngleEstimate:
        if not 1 <= k <= self.d:
            raise DomainError(f"Lambda index {k} outside [1, {self.d}]")
        return self._core_lam(k - self.lineality, mc_samples, rng, exact_max_dim)

    def V(self, m: int, mc_samples=4096, rng=None, exact_max_dim=3) -> AngleEstimate:
        if not 0 <= m <= self.d:
            raise DomainError(f"intrinsic volume index {m} outside [0, {self.d}]")
        i = m - self.lineality
        if i < 0:
            return _ZERO
        if self.n == 0:
            return _ONE
        if self.n == 1:
            return _HALF
        return self.core.V(i, mc_samples, rng, exact_max_dim)

    def U(self, j: int, mc_samples=4096, rng=None) -> AngleEstimate:
        if j < self.lineality:
            return _HALF
        return quermass_mc(self, j, mc_samples, rng)

    def contains(self, X, tol=0.0):
        return (X @ self.halfspaces.T <= tol).all(axis=1)


def cell_cone(arr: Arrangement, signs) -> "PolyCone | SplitCone":
    if arr.n >= arr.d >= 2:
        return PolyCone.from_cell(arr, signs)
    sig = np.asarray(signs, dtype=float)
    if arr.d == 1:
        H = (sig[:, None] * arr.normals)[:1]
        return SplitCone(1, H)
    return SplitCone(arr.d, sig[:, None] * arr.normals)


# --- quermassintegrals ----------------------------------------------------------


def quermass_mc(cone, j: int, mc_samples: int, rng: np.random.Generator) -> AngleEstimate:
    """U_j as half the probability that a uniform (d-j)-subspace meets the cone."""
    d = cone.d
    if not 0 <= j <= d - 1:
        raise DomainError(f"quermass index {j} outside [0, {d - 1}]")
    if j == 0:
        return _HALF
    if rng is None:
        raise DomainError("quermass needs an rng")
    N = mc_samples
    H = cone.halfspaces
    L = d - j
    if L == 1:
        B = rng.standard_normal((N, d))
        P = B @ H.T
        hits = int(np.count_nonzero((P <= 0).all(axis=1) | (P >= 0).all(axis=1)))
    elif L == d - 1 and isinstance(cone, PolyCone):
        b = rng.standard_normal((N, d))
        P = b @ cone.rays.T
        hits = N - int(np.count_nonzero((P > 0).all(axis=1) | (P < 0).all(axis=1)))
    else:
        hits = 0
        for _ in range(N):
            Q, _r = np.linalg.qr(rng.standard_normal((d, L)))
            t, _z = K.max_slack(np.ascontiguousarray(H @ Q), 1.0)
            hits += t > FEAS_TOL
    e = _mc(hits, N)
    return AngleEstimate(e.value / 2, e.standard_error / 2, "monte_carlo")


def quermass(cell, j: int, mc_samples: int = 4096, rng=None) -> AngleEstimate:
    cone = cell.cone() if isinstance(cell, ConeRep) else cell
    return cone.U(j, mc_samples, rng)


# --- public operations ---------------------------------------------------------


def interior_feasible(arr: Arrangement, signs, active=()) -> bool:
    """Is {x in H_active : s_i <u_i, x> < 0 for i not active} nonempty (relative interior)?"""
    active = tuple(active)
    act = set(active)
    idx = [i for i in range(arr.n) if i not in act]
    basis = null_basis(arr.normals[list(active)], arr.d)
    if basis.shape[1] == 0:
        return False
    if not idx:
        return True
    M = np.asarray([signs[i] for i in idx], dtype=float)[:, None] * (arr.normals[idx] @ basis)
    t, _ = K.max_slack(np.ascontiguousarray(M), 1.0)
    return bool(t > FEAS_TOL)


def enumerate_cells(arr: Arrangement, method: str = "rays") -> list:
    """All C(n, d) cells, ordered by their +1 bitmask."""
    if method == "rays":
        masks = arr.cell_masks
    elif method == "incremental":
        expected = int(schlafli_count(arr.n, arr.d))
        signs, count = K.incremental_cells(np.ascontiguousarray(arr.normals), FEAS_TOL, expected)
        if count != expected:
            raise GeneralPositionError(
                f"incremental sweep found {'too many' if count < 0 else count} cells, expected {expected}",
                arrangement=arr)
        weights = np.left_shift(np.int64(1), np.arange(arr.n, dtype=np.int64))
        masks = np.sort((signs[:count] == 1).astype(np.int64) @ weights)
    else:
        raise DomainError(f"unknown method {method!r}")
    return [ConeRep(arr, arr.signs_of(int(m))) for m in masks]


def _face_keys(arr: Arrangement, k: int) -> list:
    n, d = arr.n, arr.d
    if not 1 <= k <= d:
        raise DomainError(f"face dimension {k} outside [1, {d}]")
    r = d - k
    keys = set()
    if n <= d - 1:
        for A in combinations(range(n), r):
            rest = [i for i in range(n) if i not in A]
            Am = sum(1 << a for a in A)
            for bits in range(2 ** len(rest)):
                keys.add((Am, sum(1 << rest[t] for t in range(len(rest)) if bits >> t & 1)))
    else:
        T = arr.ray_table
        for z, plus in zip(T.zeros.tolist(), T.plus.tolist()):
            for A in combinations(z, r):
                free = [i for i in z if i not in A]
                Am = sum(1 << a for a in A)
                for bits in range(2 ** len(free)):
                    keys.add((Am, plus | sum(1 << free[t] for t in range(len(free)) if bits >> t & 1)))
    expected = face_count_total(n, d, k)
    if len(keys) != expected:
        raise GeneralPositionError(
            f"found {len(keys)} {k}-faces, expected {expected}", arrangement=arr)
    return sorted(keys)


def _key_to_rep(arr, Am, plus, k):
    act = tuple(i for i in range(arr.n) if Am >> i & 1)
    signs = tuple(0 if Am >> i & 1 else (1 if plus >> i & 1 else -1) for i in range(arr.n))
    return ConeRep(arr, signs, act, k)


def enumerate_k_faces(arr: Arrangement, k: int) -> list:
    """All C(n, d, k) k-faces of the tessellation."""
    return [_key_to_rep(arr, Am, p, k) for Am, p in _face_keys(arr, k)]


def faces_of_cell(cell: ConeRep, k: int) -> list:
    arr = cell.arrangement
    d, n = arr.d, arr.n
    if not 1 <= k <= d:
        raise DomainError(f"face dimension {k} outside [1, {d}]")
    if k == d:
        return [cell]
    if n < d:
        actives = list(combinations(range(n), d - k))
    else:
        P = PolyCone.from_cell(arr, cell.signs)
        actives = [tuple(P.hyperplanes[a] for a in A) for _, A in P.faces[k]]
    out = []
    for A in actives:
        signs = tuple(0 if i in A else s for i, s in enumerate(cell.signs))
        out.append(ConeRep(arr, signs, tuple(sorted(A)), k))
    return out


def cells_containing(arr: Arrangement, face: ConeRep) -> int:
    """Number of cells whose closure contains ``face`` (sign agreement off the active set)."""
    masks = arr.cell_masks
    Am = sum(1 << a for a in face.active)
    plus = sum(1 << i for i, s in enumerate(face.signs) if s == 1)
    keep = ((1 << arr.n) - 1) & ~Am
    return int(np.count_nonzero((masks & keep) == plus))


def dual_generators(cell: ConeRep) -> np.ndarray:
    """Irredundant generators s_i u_i of the dual cone of ``cell``."""
    arr = cell.arrangement
    cone = cell_cone(arr, cell.signs)
    if isinstance(cone, PolyCone):
        return cone.halfspaces.copy()
    return cone.halfspaces.copy()


def intrinsic_volumes(cell, mc_samples=4096, rng=None, exact_max_dim=3) -> list:
    cone = cell.cone() if isinstance(cell, ConeRep) else cell
    if isinstance(cone, SplitCone):
        raise UnsupportedInputError(
            "cone has a lineality space; its intrinsic volumes follow from the subspace rules")
    return [cone.V(m, mc_samples, rng, exact_max_dim) for m in range(cone.d + 1)]


def lambda_vector(cell, mc_samples=4096, rng=None, exact_max_dim=3) -> list:
    cone = cell.cone() if isinstance(cell, ConeRep) else cell
    return [cone.lam(k, mc_samples, rng, exact_max_dim) for k in range(1, cone.d + 1)]


# --- deterministic identities -----------------------------------------------------


@dataclass(frozen=True)
class IdentityResult:
    passed: bool
    residual: float
    standard_error: float
    detail: dict = field(default_factory=dict)


def _gate(residual: float, se: float, sigma: float = 4.0, exact_tol: float = 1e-10) -> bool:
    if se > 0:
        return abs(residual) <= sigma * se + exact_tol
    return abs(residual) < exact_tol


def _meets(arr_sub: Arrangement, signs, basis) -> bool:
    """Does the closed cell meet span(basis) beyond the origin?"""
    W = arr_sub.normals @ basis
    live = np.linalg.norm(W, axis=1) > 1e-9
    if not live.any():
        return True
    M = np.asarray(signs, dtype=float)[live, None] * W[live]
    t, _ = K.max_slack(np.ascontiguousarray(M), 1.0)
    return bool(t > FEAS_TOL)


def check_identity_73(arr: Arrangement, j: int, k: int, r: int, mc_samples=4096,
                      rng=None, exact_max_dim=3, sigma=4.0) -> IdentityResult:
    """Skeleton-content identity around L_j = H_1 cap ... cap H_{d-j} (0-based: first d-j)."""
    n, d = arr.n, arr.d
    if not 1 <= j <= d - 1:
        raise DomainError("need 1 <= j <= d-1")
    if not j <= k <= d:
        raise DomainError("need j <= k <= d")
    if not 1 <= r <= d:
        raise DomainError("need 1 <= r <= d")
    if n <= d - j:
        raise DomainError("need n > d - j")
    Lj = null_basis(arr.normals[: d - j], d)

    keep = [i for i in range(n) if not (k - j <= i < d - j)]
    left_arr = arr.subset(keep)
    lhs = _ZERO
    n_left = 0
    for c in enumerate_cells(left_arr):
        if _meets(left_arr, c.signs, Lj):
            n_left += 1
            lhs = lhs + cell_cone(left_arr, c.signs).lam(r, mc_samples, rng, exact_max_dim)

    right_arr = arr.subset(range(d - j, n))
    Qs = [c for c in enumerate_cells(right_arr) if _meets(right_arr, c.signs, Lj)]
    rhs = _ZERO
    for p in range(max(r, d - k + j), d + 1):
        for I in combinations(range(k - j), d - p):
            basis = null_basis(arr.normals[list(I)], d)
            sub = right_arr.restrict(basis)
            part = _ZERO
            for Q in Qs:
                part = part + cell_cone(sub, Q.signs).lam(r, mc_samples, rng, exact_max_dim)
            rhs = rhs + AngleEstimate(2 ** (d - p) * part.value, 2 ** (d - p) * part.standard_error,
                                      part.method)
    res = lhs.value - rhs.value
    se = math.hypot(lhs.standard_error, rhs.standard_error)
    return IdentityResult(_gate(res, se, sigma), res, se,
                          {"lhs": lhs.value, "rhs": rhs.value, "cells_lhs": n_left, "cells_rhs": len(Qs)})


def check_tiling_CE1(arr: Arrangement, k: int, mc_samples=4096, rng=None,
                     exact_max_dim=3, sigma=4.0) -> IdentityResult:
    """Conjugate faces of the cells around each (d-k)-face tile the normal space."""
    d = arr.d
    if not 1 <= k <= d - 1:
        raise DomainError("need 1 <= k <= d-1")
    worst, worst_se, ok = 0.0, 0.0, True
    faces = enumerate_k_faces(arr, d - k)
    for F in faces:
        A = list(F.active)
        total = _ZERO
        for eps in _completion_bits(k):
            G = (2 * eps - 1)[:, None] * arr.normals[A]
            total = total + simplicial_angle(G, mc_samples, rng, exact_max_dim)
        dev = total.value - 1.0
        ok &= _gate(dev, total.standard_error, sigma)
        if abs(dev) >= abs(worst):
            worst, worst_se = dev, total.standard_error
    return IdentityResult(ok, worst, worst_se, {"faces": len(faces)})
