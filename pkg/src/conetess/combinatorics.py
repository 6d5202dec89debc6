"""Exact counting functions and the high-precision constant theta(n, d).

Integer-valued results are returned as :class:`fractions.Fraction` so that
everything downstream stays in one exact scalar type. Quantities involving
pi are :class:`HPReal` values carrying a conservative absolute error bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import mpmath

from .errors import DomainError, PrecisionError

# private context so callers' mpmath precision is never touched
MP = mpmath.MPContext()
MP.dps = 60
_ULP = MP.mpf(10) ** (-58)

THETA_RTOL = MP.mpf("1e-30")


def _mpf(x):
    if isinstance(x, Fraction):
        return MP.mpf(x.numerator) / x.denominator
    return MP.mpf(x)


@dataclass(frozen=True)
class HPReal:
    """A real number with at least 50 significant digits and an error bound."""

    value: object  # MP.mpf
    error_bound: object = 0

    def __post_init__(self):
        object.__setattr__(self, "value", _mpf(self.value))
        object.__setattr__(self, "error_bound", abs(_mpf(self.error_bound)))

    @classmethod
    def exact(cls, x) -> "HPReal":
        v = _mpf(x)
        return cls(v, abs(v) * _ULP)

    def _coerce(self, other):
        if isinstance(other, HPReal):
            return other
        if isinstance(other, (int, Fraction)):
            return HPReal.exact(other)
        return NotImplemented

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        v = self.value + o.value
        return HPReal(v, self.error_bound + o.error_bound + abs(v) * _ULP)

    __radd__ = __add__

    def __neg__(self):
        return HPReal(-self.value, self.error_bound)

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return self + (-o)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        v = self.value * o.value
        err = (abs(self.value) * o.error_bound + abs(o.value) * self.error_bound
               + self.error_bound * o.error_bound + abs(v) * _ULP)
        return HPReal(v, err)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, Fraction)):
            q = _mpf(Fraction(other))
            v = self.value / q
            return HPReal(v, self.error_bound / abs(q) + abs(v) * _ULP)
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        if abs(o.value) <= o.error_bound:
            raise ZeroDivisionError("divisor interval contains zero")
        v = self.value / o.value
        lo = abs(o.value) - o.error_bound
        err = (self.error_bound + abs(v) * o.error_bound) / lo + abs(v) * _ULP
        return HPReal(v, err)

    def __float__(self):
        return float(self.value)

    def __repr__(self):
        return f"HPReal({MP.nstr(self.value, 35)} ± {MP.nstr(self.error_bound, 3)})"

    def close_to(self, other, tol=0) -> bool:
        """True when the intervals agree up to an extra absolute ``tol``."""
        o = self._coerce(other)
        return abs(self.value - o.value) <= self.error_bound + o.error_bound + _mpf(tol)

    def rel_diff(self, other):
        o = self._coerce(other)
        scale = max(abs(self.value), abs(o.value))
        if scale == 0:
            return MP.mpf(0)
        return abs(self.value - o.value) / scale


def binom(n: int, k: int) -> int:
    """Binomial coefficient, zero outside 0 <= k <= n."""
    if n < 0 or k < 0 or k > n:
        return 0
    return math.comb(n, k)


def multinomial(n: int, *parts: int) -> int:
    """n! / prod(parts!) with sum(parts) == n; zero if any part is negative."""
    if n < 0 or any(p < 0 for p in parts):
        return 0
    if sum(parts) != n:
        raise DomainError("multinomial parts must sum to n")
    out = math.factorial(n)
    for p in parts:
        out //= math.factorial(p)
    return out


def _check_dim(d: int):
    if d < 1:
        raise DomainError(f"dimension must be >= 1, got {d}")


@lru_cache(maxsize=None)
def schlafli_count(n: int, d: int) -> Fraction:
    """Number C(n, d) of cells cut out by n generic hyperplanes through 0 in R^d."""
    _check_dim(d)
    if n < 0:
        return Fraction(0)
    if n == 0:
        return Fraction(1)
    return Fraction(2 * sum(binom(n - 1, r) for r in range(d)))


def face_count_total(n: int, d: int, k: int) -> Fraction:
    """Number C(n, d, k) of k-faces of the tessellation, 1 <= k <= d."""
    _check_dim(d)
    if not 1 <= k <= d:
        raise DomainError(f"face dimension k={k} outside [1, {d}]")
    if n < d - k:
        return Fraction(0)
    return binom(n, d - k) * schlafli_count(n - d + k, k)


def wendel_probability(n: int, d: int) -> Fraction:
    """P(pos{X_1..X_n} != R^d) for n symmetric points in general position."""
    _check_dim(d)
    if n < 0:
        raise DomainError("n must be nonnegative")
    return schlafli_count(n, d) / 2**n


@lru_cache(maxsize=None)
def _half_gamma(m: int):
    # Gamma(m/2) for integer m >= 1, via Gamma(1/2) = sqrt(pi)
    if m % 2 == 0:
        return MP.mpf(math.factorial(m // 2 - 1))
    g = MP.sqrt(MP.pi)
    for i in range(1, m // 2 + 1):
        g *= MP.mpf(2 * i - 1) / 2
    return g


@lru_cache(maxsize=None)
def sphere_surface(m: int) -> HPReal:
    """omega_m = 2 pi^(m/2) / Gamma(m/2), the surface area of S^(m-1)."""
    if m < 1:
        raise DomainError(f"sphere_surface needs m >= 1, got {m}")
    if m == 1:
        return HPReal(2, 0)
    v = 2 * MP.pi ** (MP.mpf(m) / 2) / _half_gamma(m)
    return HPReal(v, abs(v) * _ULP * 4)


# --- theta ---------------------------------------------------------------

_GL_ORDER = 24


@lru_cache(maxsize=None)
def _gauss_legendre(order: int):
    """Nodes and weights on [-1, 1] by Newton iteration on P_order."""
    nodes, weights = [], []
    for i in range(1, order + 1):
        x = MP.cos(MP.pi * (i - MP.mpf(1) / 4) / (order + MP.mpf(1) / 2))
        for _ in range(100):
            p0, p1 = MP.mpf(1), x
            for k in range(2, order + 1):
                p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
            dp = order * (x * p1 - p0) / (x * x - 1)
            dx = p1 / dp
            x -= dx
            if abs(dx) < MP.mpf(10) ** (-MP.dps + 2):
                break
        p0, p1 = MP.mpf(1), x
        for k in range(2, order + 1):
            p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
        dp = order * (x * p1 - p0) / (x * x - 1)
        nodes.append(x)
        weights.append(2 / ((1 - x * x) * dp * dp))
    return tuple(nodes), tuple(weights)


def _gl(f, a, b):
    nodes, weights = _gauss_legendre(_GL_ORDER)
    half = (b - a) / 2
    mid = (a + b) / 2
    return half * MP.fsum(w * f(mid + half * x) for x, w in zip(nodes, weights))


def adaptive_gauss_legendre(f, a, b, rtol=THETA_RTOL, max_depth=40):
    """Integrate ``f`` on [a, b] by GL panels with bisection.

    Returns ``(value, error_estimate)``. Raises :class:`PrecisionError` if the
    requested relative tolerance is not reached within ``max_depth`` levels.
    """
    a, b = MP.mpf(a), MP.mpf(b)
    whole = _gl(f, a, b)
    scale = abs(whole)
    if scale == 0:
        scale = MP.mpf(1)
    atol = rtol * scale / 16
    total = MP.mpf(0)
    err_total = MP.mpf(0)
    stack = [(a, b, whole, 0)]
    while stack:
        lo, hi, coarse, depth = stack.pop()
        mid = (lo + hi) / 2
        left = _gl(f, lo, mid)
        right = _gl(f, mid, hi)
        fine = left + right
        err = abs(fine - coarse)
        if err <= atol * (hi - lo) / (b - a):
            total += fine
            err_total += err
        elif depth >= max_depth:
            raise PrecisionError("adaptive quadrature did not converge", achieved=err)
        else:
            stack.append((lo, mid, left, depth + 1))
            stack.append((mid, hi, right, depth + 1))
    return total, err_total


def _theta_prefactor(d):
    return sphere_surface(d - 1) / sphere_surface(d)


@lru_cache(maxsize=None)
def theta(n: int, d: int) -> HPReal:
    """theta(n, d) = E V_d(S_n^e) by adaptive Gauss-Legendre quadrature.

    theta(0, d) = 1 and theta(n, d) = 0 for n < 0. For d = 1 the defining
    integral is meaningless; we use theta(0, 1) = 1 and theta(n, 1) = 1/2 for
    n >= 1, the values for which the second-moment formula reproduces the
    direct computation in the plane.
    """
    _check_dim(d)
    if n < 0:
        return HPReal(0, 0)
    if n == 0:
        return HPReal(1, 0)
    if d == 1:
        return HPReal(MP.mpf(1) / 2, 0)
    pi = MP.pi
    m = d - 2

    def integrand(x):
        return (1 - x / pi) ** n * MP.sin(x) ** m

    val, err = adaptive_gauss_legendre(integrand, 0, pi)
    integral = HPReal(val, err + abs(val) * _ULP * 8)
    out = _theta_prefactor(d) * integral
    if out.error_bound > THETA_RTOL * abs(out.value):
        raise PrecisionError("theta quadrature above tolerance", achieved=out.error_bound)
    return out


@lru_cache(maxsize=None)
def _x_pow_sin_integrals(jmax: int, m: int, dps: int):
    """J[j] = int_0^pi x^j sin^m x dx for j <= jmax, by reduction in m."""
    ctx = mpmath.MPContext()
    ctx.dps = dps
    pi = ctx.pi
    # m = 0 and m = 1 rows
    row0 = [pi ** (j + 1) / (j + 1) for j in range(jmax + 1)]
    row1 = []
    for j in range(jmax + 1):
        if j == 0:
            row1.append(ctx.mpf(2))
        elif j == 1:
            row1.append(pi)
        else:
            row1.append(pi**j - j * (j - 1) * row1[j - 2])
    rows = {0: row0, 1: row1}
    for mm in range(2, m + 1):
        prev2 = rows[mm - 2]
        row = []
        for j in range(jmax + 1):
            v = ctx.mpf(mm - 1) / mm * prev2[j]
            if j >= 2:
                v -= ctx.mpf(j * (j - 1)) / (mm * mm) * row[j - 2]
            row.append(v)
        rows[mm] = row
    return ctx, rows[m]


def theta_series(n: int, d: int) -> HPReal:
    """Second, independent evaluator of theta: binomial expansion of (1 - x/pi)^n."""
    _check_dim(d)
    if n < 0:
        return HPReal(0, 0)
    if n == 0:
        return HPReal(1, 0)
    if d == 1:
        return HPReal(MP.mpf(1) / 2, 0)
    dps = 100 + 2 * n
    ctx, J = _x_pow_sin_integrals(n, d - 2, dps)
    pi = ctx.pi
    terms = [binom(n, j) * (-1) ** j * J[j] / pi**j for j in range(n + 1)]
    s = ctx.fsum(terms)
    bound = ctx.fsum(abs(t) for t in terms) * ctx.mpf(10) ** (-dps + 5)
    integral = HPReal(MP.mpf(s), MP.mpf(bound) + abs(MP.mpf(s)) * _ULP)
    return _theta_prefactor(d) * integral
