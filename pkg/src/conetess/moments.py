"""Closed-form first and second moments of random Schlaefli, Cover-Efron and e-cones.

All functions are pure. Rational results carry a :class:`fractions.Fraction`;
anything involving ``theta`` carries an :class:`HPReal` with an error bound.
Degenerate parameter values (too few hyperplanes for the generic formula)
return the boundary values 0, 1 or 1/2 explicitly.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .combinatorics import (
    MP,
    HPReal,
    binom,
    face_count_total,
    multinomial,
    schlafli_count,
    theta,
)
from .errors import DomainError, OutOfRangeError

C = schlafli_count


@dataclass(frozen=True)
class MomentValue:
    """Exactly one of ``rational`` / ``real`` is set."""

    rational: Fraction | None = None
    real: HPReal | None = None

    def __post_init__(self):
        if (self.rational is None) == (self.real is None):
            raise ValueError("MomentValue needs exactly one of rational/real")

    @property
    def is_rational(self) -> bool:
        return self.rational is not None

    def as_hpreal(self) -> HPReal:
        if self.rational is not None:
            return HPReal(self.rational, 0)
        return self.real

    @property
    def error_bound(self) -> float:
        return 0.0 if self.rational is not None else float(self.real.error_bound)

    def __float__(self):
        return float(self.rational) if self.rational is not None else float(self.real)

    def __str__(self):
        if self.rational is not None:
            return str(self.rational)
        return MP.nstr(self.real.value, 17, strip_zeros=False)


def _q(x) -> MomentValue:
    return MomentValue(rational=Fraction(x))


def _r(x: HPReal) -> MomentValue:
    return MomentValue(real=x)


def _range(name, v, lo, hi):
    if not lo <= v <= hi:
        raise DomainError(f"{name}={v} outside [{lo}, {hi}]")


def expected_Y(n: int, d: int, k: int, j: int) -> MomentValue:
    """E Y_{d-k+j, d-k}(S_n) for 1 <= j <= k <= d and n > k - j."""
    _range("k", k, 1, d)
    _range("j", j, 1, k)
    if n <= k - j:
        raise OutOfRangeError(f"expected_Y needs n > k - j, got n={n}, k-j={k - j}")
    return _q(Fraction(2 ** (k - j)) * face_count_total(n, k, j) / (2 * C(n, d)))


def expected_f_schlafli(n: int, d: int, k: int) -> MomentValue:
    _range("k", k, 1, d)
    if n < d - k:
        return _q(0)
    if n == d - k:
        return _q(1)
    return _q(Fraction(2 ** (d - k) * binom(n, d - k)) * C(n - d + k, k) / C(n, d))


def expected_f_cover_efron(n: int, d: int, k: int) -> MomentValue:
    _range("k", k, 0, d - 1)
    return _q(Fraction(2**k * binom(n, k)) * C(n - k, d - k) / C(n, d))


def expected_U_schlafli(n: int, d: int, k: int) -> MomentValue:
    _range("k", k, 0, d - 1)
    if n <= d - k:
        return _q(Fraction(1, 2))
    return _q(C(n, d - k) / (2 * C(n, d)))


def expected_U_cover_efron(n: int, d: int, k: int) -> MomentValue:
    _range("k", k, 1, d - 1)
    if n < k:
        return _q(0)
    return _q((C(n, d) - C(n, k)) / (2 * C(n, d)))


def expected_V_schlafli(n: int, d: int, j: int) -> MomentValue:
    _range("j", j, 0, d)
    if j == 0:
        return _q(binom(n - 1, d - 1) / C(n, d))
    return _q(binom(n, d - j) / C(n, d))


def expected_V_cover_efron(n: int, d: int, j: int) -> MomentValue:
    _range("j", j, 0, d)
    if j == d:
        return _q(binom(n - 1, d - 1) / C(n, d))
    return _q(binom(n, j) / C(n, d))


def expected_lambda_schlafli(n: int, d: int, k: int) -> MomentValue:
    _range("k", k, 1, d)
    return _q(2 ** (d - k) * binom(n, d - k) / C(n, d))


def expected_lambda_cover_efron(n: int, d: int, k: int) -> MomentValue:
    _range("k", k, 1, d - 1)
    if n < k:
        return _q(0)
    return _q(binom(n, k) * C(n - k, d - k) / C(n, d))


def expected_Vd_e_cone(n: int, d: int) -> MomentValue:
    return _r(theta(n, d))


def expected_lambda_e_cone(n: int, d: int, k: int) -> MomentValue:
    """E Lambda_{d-k}(S_n^e), 0 <= k <= d-1."""
    _range("k", k, 0, d - 1)
    if n < k:
        return _q(0)
    if n == k:
        return _q(1)
    return _r(binom(n, k) * theta(n - k, d))


def mixed_lambda_Vd(n: int, d: int, k: int) -> MomentValue:
    """E (Lambda_{d-k} V_d)(S_n), 0 <= k <= d-1."""
    _range("k", k, 0, d - 1)
    if n < k:
        return _q(0)
    return _r(binom(n, k) * theta(n - k, d) / C(n, d))


@lru_cache(maxsize=None)
def second_moment_lambda(n: int, d: int, s: int, r: int) -> MomentValue:
    """E (Lambda_s Lambda_r)(S_n), symmetric form of the Miles-type sum."""
    _range("s", s, 1, d)
    _range("r", r, 1, d)
    if n < 0:
        raise DomainError("n must be nonnegative")
    total = HPReal(0, 0)
    for p in range(max(r, s), d + 1):
        coeff = 2 ** (d - p) * binom(n, d - p) * multinomial(
            n - d + p, p - s, p - r, n - d - p + r + s)
        if coeff:
            total = total + coeff * theta(n - d - p + r + s, p)
    return _r(total / C(n, d))


def second_moment_lambda_nested(n: int, d: int, s: int, r: int) -> MomentValue:
    """Same moment via the nested-binomial form; kept as a cross-check."""
    _range("s", s, 1, d)
    _range("r", r, 1, d)
    if n < d - s or n < d - r:
        return _r(HPReal(0, 0))
    total = HPReal(0, 0)
    for p in range(max(r, s), d + 1):
        coeff = 2 ** (d - p) * binom(d - s, d - p) * binom(n - d + s, p - r)
        if coeff:
            total = total + coeff * theta(n - d - p + r + s, p)
    return _r(binom(n, d - s) * total / C(n, d))


@dataclass(frozen=True)
class CovarianceMatrix:
    d: int
    entries: tuple  # d x d tuple of HPReal

    def __getitem__(self, rs):
        r, s = rs
        return self.entries[r - 1][s - 1]

    def to_numpy(self) -> np.ndarray:
        return np.array([[float(x) for x in row] for row in self.entries])

    def error_bounds(self) -> np.ndarray:
        return np.array([[float(x.error_bound) for x in row] for row in self.entries])


def covariance_matrix_lambda(n: int, d: int) -> CovarianceMatrix:
    """Cov(Lambda_r(S_n), Lambda_s(S_n)) for 1 <= r, s <= d (isotropic hyperplanes)."""
    means = [expected_lambda_schlafli(n, d, k).rational for k in range(1, d + 1)]
    rows = []
    for r in range(1, d + 1):
        row = []
        for s in range(1, d + 1):
            if s < r:
                row.append(rows[s - 1][r - 1])
                continue
            row.append(second_moment_lambda(n, d, s, r).real - means[r - 1] * means[s - 1])
        rows.append(tuple(row))
    return CovarianceMatrix(d, tuple(rows))


def second_moment_facets_cover_efron(n: int, d: int) -> MomentValue:
    """E f_{d-1}(C_n)^2 = 4 E Lambda_1(S_n)^2, valid for n >= d."""
    if n < d:
        raise OutOfRangeError(f"needs n >= d, got n={n}, d={d}")
    return _r(4 * second_moment_lambda(n, d, 1, 1).real)
