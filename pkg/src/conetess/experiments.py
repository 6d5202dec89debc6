"""Monte Carlo experiments gated against the exact layer, and their reports.

A replicate ``r`` draws everything from ``RngStream(master_seed, r)``; worker
processes receive contiguous replicate blocks and results are reassembled in
replicate order, so estimates do not depend on the number of workers.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import multiprocessing as mp
import numpy as np
from scipy import stats

from . import moments as M
from .combinatorics import HPReal, schlafli_count
from .errors import ConetessError, ConfigurationError, GeneralPositionError
from .geometry import (
    AngleEstimate,
    cell_cone,
    cells_containing,
    check_identity_73,
    check_tiling_CE1,
    enumerate_cells,
    enumerate_k_faces,
    faces_of_cell,
)
from .sampler import (
    DirectionDistribution,
    RngStream,
    draw_e_cone,
    sample_arrangement,
    sample_cover_efron_direct,
    sample_cover_efron_dual,
    sample_schlafli,
    sample_weighted_Ckj,
    sample_weighted_Dkj,
)

SCHEMA_VERSION = 1
MODELS = ("schlafli", "e_cone", "cover_efron_direct", "cover_efron_dual", "ckj", "dkj")
CSV_HEADER = ["name", "estimate", "se", "exact", "exact_err", "z", "pass"]
THREADS_ENV = "CONETESS_THREADS"
MIN_GATED_REPLICATES = 100
# absolute slack for gates whose combined SE is exactly zero
ZERO_SE_SLACK = 1e-12


class HardAssertionFailure(ConetessError):
    """A counting theorem failed on a certified arrangement."""

    def __init__(self, message: str, triage: dict | None = None, replicate: int | None = None):
        super().__init__(message)
        self.triage = triage
        self.replicate = replicate

    def __reduce__(self):
        return (HardAssertionFailure, (str(self), self.triage, self.replicate))


# --- functional names ---------------------------------------------------------

_BASE = ("f", "Lambda", "V", "U")


def parse_functional(name: str, d: int) -> list:
    """'Lambda_1*V_3' -> [('Lambda', 1, 1), ('V', 3, 1)]; '1/Lambda_2' has power -1.

    The constant functional '1' parses to an empty product.
    """
    out = []
    if name == "1":
        return out
    for part in name.split("*"):
        power = 1
        if part.startswith("1/"):
            part, power = part[2:], -1
        base, sep, idx = part.partition("_")
        if base not in _BASE or not sep or not idx.isdigit():
            raise ConfigurationError(f"cannot parse functional {name!r}")
        i = int(idx)
        lo, hi = {"f": (0, d), "Lambda": (1, d), "V": (0, d), "U": (0, d - 1)}[base]
        if not lo <= i <= hi:
            raise ConfigurationError(f"{name!r}: index {i} outside [{lo}, {hi}]")
        out.append((base, i, power))
    return out


class _Evaluator:
    """Caches base functionals of one cone for one replicate."""

    def __init__(self, cone, inner: int, rng: np.random.Generator):
        self.cone, self.inner, self.rng = cone, inner, rng
        self.cache: dict = {}

    def base(self, kind: str, i: int) -> float:
        key = (kind, i)
        if key not in self.cache:
            c = self.cone
            if kind == "f":
                v = float(c.f(i))
            elif kind == "Lambda":
                v = c.lam(i, self.inner, self.rng).value
            elif kind == "V":
                v = c.V(i, self.inner, self.rng).value
            else:
                v = c.U(i, self.inner, self.rng).value
            self.cache[key] = v
        return self.cache[key]

    def value(self, factors) -> float:
        out = 1.0
        for kind, i, power in factors:
            v = self.base(kind, i)
            out *= v if power == 1 else 1.0 / v
        return out


# --- configuration ------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    d: int
    n: int
    model: str = "schlafli"
    functionals: tuple = ("f_1",)
    replicates: int = 1000
    k: int | None = None
    j: int | None = None
    inner_mc_samples: int = 64
    distribution: DirectionDistribution = field(default_factory=DirectionDistribution)
    master_seed: int = 0
    sigma_gate: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "functionals", tuple(self.functionals))
        if isinstance(self.distribution, (dict, str)) or self.distribution is None:
            object.__setattr__(self, "distribution", DirectionDistribution.from_json(self.distribution))
        self.validate()

    def validate(self):
        if self.d < 1 or self.n < 0:
            raise ConfigurationError("need d >= 1 and n >= 0")
        if self.model not in MODELS:
            raise ConfigurationError(f"model must be one of {MODELS}")
        if self.replicates < 1 or self.inner_mc_samples < 1:
            raise ConfigurationError("replicates and inner_mc_samples must be positive")
        if self.sigma_gate <= 0:
            raise ConfigurationError("sigma_gate must be positive")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigurationError("master_seed must fit in 64 bits")
        if not self.functionals:
            raise ConfigurationError("no functionals requested")
        for f in self.functionals:
            parse_functional(f, self.d)
        if self.model in ("ckj", "dkj"):
            if self.k is None or self.j is None:
                raise ConfigurationError(f"model {self.model} needs k and j")
            if not (1 <= self.k <= self.d and 1 <= self.j <= self.k):
                raise ConfigurationError("need 1 <= j <= k <= d")
            if self.model == "ckj" and self.n <= self.k - self.j:
                raise ConfigurationError("ckj needs n > k - j")
            if self.model == "dkj":
                if self.n < self.d - self.j:
                    raise ConfigurationError("dkj needs n >= d - j")
                if not self.distribution.isotropic:
                    raise ConfigurationError("dkj is defined for the isotropic distribution only")
        if self.model.startswith("cover_efron") and self.n < self.d:
            raise ConfigurationError("Cover-Efron models need n >= d")
        if self.d < 2:
            raise ConfigurationError("simulation needs d >= 2")

    def to_json(self) -> dict:
        out = asdict(self)
        out["functionals"] = list(self.functionals)
        out["distribution"] = self.distribution.to_json()
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(obj) - known
        if extra:
            raise ConfigurationError(f"unknown config fields: {sorted(extra)}")
        return cls(**obj)


# --- replicates -----------------------------------------------------------------


def _draw_cone(cfg: ExperimentConfig, g: np.random.Generator):
    """One cone of the configured model plus the number of resamples spent."""
    n, d, dist = cfg.n, cfg.d, cfg.distribution
    if cfg.model == "schlafli":
        arr = sample_arrangement(n, d, dist, g)
        c = sample_schlafli(arr, g)
        return cell_cone(arr, c.signs), arr
    if cfg.model == "e_cone":
        c = draw_e_cone(n, d, dist, g)
        return cell_cone(c.arrangement, c.signs), c.arrangement
    if cfg.model == "cover_efron_direct":
        cone = sample_cover_efron_direct(n, d, dist, g)
        return cone, cone.arrangement
    if cfg.model == "cover_efron_dual":
        arr = sample_arrangement(n, d, dist, g)
        return sample_cover_efron_dual(arr, g), arr
    if cfg.model == "ckj":
        c = sample_weighted_Ckj(n, d, cfg.k, cfg.j, dist, g)
    else:
        c = sample_weighted_Dkj(n, d, cfg.k, cfg.j, g)
    return cell_cone(c.arrangement, c.signs), c.arrangement


def _run_block(cfg: ExperimentConfig, start: int, stop: int):
    parsed = [parse_functional(f, cfg.d) for f in cfg.functionals]
    out = np.empty((stop - start, len(parsed)))
    resamples = 0
    for r in range(start, stop):
        g = RngStream(cfg.master_seed, r).generator()
        arr = None
        try:
            cone, arr = _draw_cone(cfg, g)
            ev = _Evaluator(cone, cfg.inner_mc_samples, g)
            out[r - start] = [ev.value(p) for p in parsed]
        except GeneralPositionError as exc:
            bad = exc.arrangement if exc.arrangement is not None else arr
            raise HardAssertionFailure(
                f"replicate {r}: {exc}", bad.to_json() if bad is not None else None, r) from None
        resamples += int(arr.provenance.get("resamples", 0)) if arr is not None else 0
    return out, resamples


def worker_count(requested: int | None = None) -> int:
    """Requested workers (default 1), capped by CONETESS_THREADS and the CPU count."""
    want = 1 if requested is None else int(requested)
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            want = min(want, max(1, int(cap)))
        except ValueError:
            raise ConfigurationError(f"{THREADS_ENV} must be an integer") from None
    return max(1, want)


def simulate_values(cfg: ExperimentConfig, workers: int | None = None) -> tuple:
    """Per-replicate functional values (replicates x functionals) and resample count."""
    w = min(worker_count(workers), cfg.replicates)
    if w == 1:
        return _run_block(cfg, 0, cfg.replicates)
    bounds = np.linspace(0, cfg.replicates, w + 1).astype(int)
    with ProcessPoolExecutor(max_workers=w, mp_context=mp.get_context("fork")) as ex:
        futs = [ex.submit(_run_block, cfg, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]
        parts = [f.result() for f in futs]
    return np.concatenate([p[0] for p in parts]), sum(p[1] for p in parts)


# --- exact values ----------------------------------------------------------------


def _hp(x) -> HPReal:
    if isinstance(x, M.MomentValue):
        return x.as_hpreal()
    if isinstance(x, HPReal):
        return x
    return HPReal(Fraction(x), 0)


def _lambda_pair(n, d, a, b) -> HPReal:
    return M.second_moment_lambda(n, d, a, b).real


def _as_lambda(kind, i, d):
    """Rewrite f_1 = 2 Lambda_1 and V_d = Lambda_d; returns (scale, index) or None."""
    if kind == "Lambda":
        return 1, i
    if kind == "f" and i == 1:
        return 2, 1
    if kind == "V" and i == d:
        return 1, d
    return None


def exact_value(cfg: ExperimentConfig, name: str) -> HPReal | None:
    """Closed-form expectation of ``name`` under ``cfg`` or None if none is available."""
    n, d, model = cfg.n, cfg.d, cfg.model
    fac = parse_functional(name, d)
    iso = cfg.distribution.isotropic
    if not fac:
        return HPReal(1, 0)
    if len(fac) == 1 and fac[0][2] == 1:
        kind, i, _ = fac[0]
        if model == "schlafli":
            if kind == "f":
                return _hp(M.expected_f_schlafli(n, d, i)) if i >= 1 else _hp(int(n >= d))
            if kind == "U":
                return _hp(M.expected_U_schlafli(n, d, i))
            if kind == "V":
                return _hp(M.expected_V_schlafli(n, d, i))
            return _hp(M.expected_lambda_schlafli(n, d, i))
        if model.startswith("cover_efron"):
            if kind == "f":
                return _hp(1 if i == d else M.expected_f_cover_efron(n, d, i))
            if kind == "U":
                return _hp(Fraction(1, 2)) if i == 0 else _hp(M.expected_U_cover_efron(n, d, i))
            if kind == "V":
                return _hp(M.expected_V_cover_efron(n, d, i))
            if i == d:
                return _hp(M.expected_V_cover_efron(n, d, d))
            return _hp(M.expected_lambda_cover_efron(n, d, i))
        if model == "e_cone" and iso:
            lam = _as_lambda(kind, i, d)
            if lam is not None:
                s, r = lam
                return s * _hp(M.expected_lambda_e_cone(n, d, d - r))
            if kind == "U" and i == 0:
                return _hp(Fraction(1, 2))
            return None
    if model == "schlafli" and iso:
        lams = [_as_lambda(k, i, d) for k, i, p in fac]
        if len(fac) == 2 and all(x is not None for x in lams) and all(p == 1 for *_, p in fac):
            (s1, a), (s2, b) = lams
            return (s1 * s2) * _lambda_pair(n, d, a, b)
    if model.startswith("cover_efron") and iso and name == f"f_{d - 1}*f_{d - 1}" and n >= d:
        return _hp(M.second_moment_facets_cover_efron(n, d))
    if model in ("ckj", "dkj") and iso and cfg.j == 1:
        m = n if model == "ckj" else n - d + cfg.k
        w = d - cfg.k + 1  # Y_{d-k+1, d-k} = Lambda_{d-k+1}
        denom = _hp(M.expected_lambda_schlafli(m, d, w))
        if len(fac) == 1:
            kind, i, power = fac[0]
            if power == -1 and kind == "Lambda" and i == w:
                return HPReal(1, 0) / denom
            lam = _as_lambda(kind, i, d)
            if power == 1 and lam is not None:
                s, r = lam
                return s * _lambda_pair(m, d, r, w) / denom
    return None


# --- statistics ----------------------------------------------------------------------


def mean_se(x: np.ndarray) -> tuple:
    """Compensated mean in index order and the standard error of the mean."""
    N = len(x)
    mu = math.fsum(x.tolist()) / N
    if N < 2:
        return mu, 0.0
    var = math.fsum(((x - mu) ** 2).tolist()) / (N - 1)
    return mu, math.sqrt(var / N)


def jackknife_cov(x: np.ndarray, y: np.ndarray) -> tuple:
    """Unbiased sample covariance and its leave-one-out jackknife SE."""
    N = len(x)
    xc = x - math.fsum(x.tolist()) / N
    yc = y - math.fsum(y.tolist()) / N
    Sx, Sy = math.fsum(xc.tolist()), math.fsum(yc.tolist())
    Sxy = math.fsum((xc * yc).tolist())
    cov = (Sxy - Sx * Sy / N) / (N - 1)
    sx, sy, sxy = Sx - xc, Sy - yc, Sxy - xc * yc
    loo = (sxy - sx * sy / (N - 1)) / (N - 2)
    se = math.sqrt((N - 1) / N * math.fsum(((loo - loo.mean()) ** 2).tolist()))
    return cov, se


@dataclass
class ResultRecord:
    name: str
    estimate: float
    se: float
    exact: float | None = None
    exact_err: float | None = None
    z: float | None = None
    passed: bool | None = None

    def to_json(self) -> dict:
        return {"name": self.name, "estimate": self.estimate, "se": self.se, "exact": self.exact,
                "exact_err": self.exact_err, "z": self.z, "pass": self.passed}

    @classmethod
    def from_json(cls, obj) -> "ResultRecord":
        return cls(obj["name"], obj["estimate"], obj["se"], obj.get("exact"), obj.get("exact_err"),
                   obj.get("z"), obj.get("pass"))


def gate(name: str, estimate: float, se: float, exact: HPReal | float | None, sigma: float,
         gated: bool = True) -> ResultRecord:
    if exact is None:
        return ResultRecord(name, estimate, se)
    ex = exact if isinstance(exact, HPReal) else HPReal(Fraction(exact), 0)
    val, err = float(ex.value), float(ex.error_bound)
    scale = math.sqrt(se * se + err * err)
    diff = estimate - val
    z = diff / scale if scale > 0 else (0.0 if abs(diff) <= ZERO_SE_SLACK else math.copysign(math.inf, diff))
    ok = abs(diff) <= sigma * scale + ZERO_SE_SLACK if gated else None
    return ResultRecord(name, estimate, se, val, err, z, ok)


@dataclass
class ExperimentReport:
    config: dict
    results: list
    hard_assertion_failures: int = 0
    wall_time_ms: float = 0.0
    seed: int = 0
    resamples: int = 0
    schema_version: int = SCHEMA_VERSION
    values: np.ndarray | None = field(default=None, repr=False, compare=False)
    triage: list = field(default_factory=list, repr=False, compare=False)

    @property
    def passed(self) -> bool:
        return self.hard_assertion_failures == 0 and all(
            r.passed is not False for r in self.results)

    @property
    def gated(self) -> list:
        return [r for r in self.results if r.passed is not None]

    def record(self, name: str) -> ResultRecord:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_json(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "config": self.config,
            "results": [r.to_json() for r in self.results],
            "hard_assertion_failures": self.hard_assertion_failures,
            "wall_time_ms": self.wall_time_ms,
            "seed": self.seed,
            "resamples": self.resamples,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentReport":
        if obj.get("schema_version") != SCHEMA_VERSION:
            raise ConfigurationError(f"unsupported report schema {obj.get('schema_version')!r}")
        return cls(obj["config"], [ResultRecord.from_json(r) for r in obj["results"]],
                   obj["hard_assertion_failures"], obj["wall_time_ms"], obj["seed"],
                   obj.get("resamples", 0))


def run(cfg: ExperimentConfig, workers: int | None = None, timing: bool = True) -> ExperimentReport:
    """Simulate ``cfg`` and gate every functional that has a closed form."""
    t0 = time.perf_counter()
    values, resamples = simulate_values(cfg, workers)
    gated = cfg.replicates >= MIN_GATED_REPLICATES
    results = []
    for col, name in enumerate(cfg.functionals):
        est, se = mean_se(values[:, col])
        results.append(gate(name, est, se, exact_value(cfg, name), cfg.sigma_gate, gated))
    wall = (time.perf_counter() - t0) * 1e3 if timing else 0.0
    return ExperimentReport(cfg.to_json(), results, 0, wall, cfg.master_seed, resamples, values=values)


# --- composite experiments ------------------------------------------------------------


def covariance_experiment(d: int, n: int, replicates: int, seed: int, workers: int | None = None,
                          sigma: float = 4.0, inner_mc_samples: int = 64,
                          facet_check: bool = True, timing: bool = True) -> ExperimentReport:
    """Empirical covariance of (Lambda_1..Lambda_d) against the exact matrix."""
    t0 = time.perf_counter()
    names = tuple(f"Lambda_{k}" for k in range(1, d + 1))
    cfg = ExperimentConfig(d, n, "schlafli", names, replicates, inner_mc_samples=inner_mc_samples,
                           master_seed=seed, sigma_gate=sigma)
    base = run(cfg, workers, timing=False)
    exact_cov = M.covariance_matrix_lambda(n, d)
    results = list(base.results)
    X = base.values
    for r in range(d):
        for s in range(r, d):
            cov, se = jackknife_cov(X[:, r], X[:, s])
            results.append(gate(f"cov(Lambda_{r + 1},Lambda_{s + 1})", cov, se,
                                exact_cov[r + 1, s + 1], sigma))
    resamples = base.resamples
    if facet_check and n >= d:
        name = f"f_{d - 1}*f_{d - 1}"
        ce = ExperimentConfig(d, n, "cover_efron_direct", (name,), replicates,
                              inner_mc_samples=inner_mc_samples, master_seed=seed + 1, sigma_gate=sigma)
        rep = run(ce, workers, timing=False)
        results.append(ResultRecord(**{**vars(rep.results[0]), "name": f"cover_efron:{name}"}))
        resamples += rep.resamples
    wall = (time.perf_counter() - t0) * 1e3 if timing else 0.0
    conf = {"experiment": "covariance", "d": d, "n": n, "replicates": replicates,
            "inner_mc_samples": inner_mc_samples, "master_seed": seed, "sigma_gate": sigma}
    return ExperimentReport(conf, results, 0, wall, seed, resamples, values=X)


def _two_sample(name, a: np.ndarray, b: np.ndarray, scale_b: float, exact, sigma) -> list:
    """Gate both samples against the exact value and against each other."""
    ma, sa = mean_se(a)
    mb, sb = mean_se(b)
    mb, sb = mb * scale_b, sb * scale_b
    return [
        gate(f"{name}:lhs", ma, sa, exact, sigma),
        gate(f"{name}:rhs", mb, sb, exact, sigma),
        gate(f"{name}:difference", ma - mb, math.hypot(sa, sb), 0.0, sigma),
    ]


def e_cone_comparison_check(d: int, n: int, replicates: int, seed: int, workers=None, sigma=4.0,
                  inner_mc_samples: int = 64) -> ExperimentReport:
    """E f(S_n^e) = C(n,d) E(f V_d)(S_n) for f in {f_1, Lambda_1, V_d}."""
    fs = ("f_1", "Lambda_1", f"V_{d}")
    e_cfg = ExperimentConfig(d, n, "e_cone", fs, replicates, inner_mc_samples=inner_mc_samples,
                             master_seed=seed, sigma_gate=sigma)
    s_cfg = ExperimentConfig(d, n, "schlafli", tuple(f"{f}*V_{d}" for f in fs), replicates,
                             inner_mc_samples=inner_mc_samples, master_seed=seed + 1, sigma_gate=sigma)
    e_vals, _ = simulate_values(e_cfg, workers)
    s_vals, _ = simulate_values(s_cfg, workers)
    C = float(schlafli_count(n, d))
    results = []
    for i, f in enumerate(fs):
        results += _two_sample(f"e_cone_vs_schlafli:{f}", e_vals[:, i], s_vals[:, i], C,
                               exact_value(e_cfg, f), sigma)
    conf = {"experiment": "e_cone_vs_schlafli", "d": d, "n": n, "replicates": replicates, "master_seed": seed}
    return ExperimentReport(conf, results, seed=seed)


def weighted_identity_check(model: str, d: int, n: int, k: int, j: int, replicates: int, seed: int,
                            workers=None, sigma=4.0, inner_mc_samples: int = 64) -> ExperimentReport:
    """E g(C^{[k,j]}) = E(g Y)(S)/E Y(S) for g in {1, f_1, V_d}, with Y = Lambda_{d-k+1} (j = 1).

    For g = 1 both sides are the total mass; the inverse form E[1/Y] = 1/E Y
    is available as a functional but has infinite variance under the weighted law.
    """
    names = ("1", "f_1", f"V_{d}")
    cfg = ExperimentConfig(d, n, model, names, replicates, k=k, j=j, inner_mc_samples=inner_mc_samples,
                           master_seed=seed, sigma_gate=sigma)
    rep = run(cfg, workers, timing=False)
    for r in rep.results:
        r.name = f"{model}[{k},{j}]:{r.name}"
    rep.config = {"experiment": "weighted_identity", **cfg.to_json()}
    return rep


def two_route_check(d: int, n: int, replicates: int, seed: int, workers=None,
                    level: float = 1e-3) -> ExperimentReport:
    """Two-sample agreement of the direct and dual Cover-Efron routes."""
    names = (f"V_{d}", f"f_{d - 1}")
    a = simulate_values(ExperimentConfig(d, n, "cover_efron_direct", names, replicates, master_seed=seed),
                        workers)[0]
    b = simulate_values(ExperimentConfig(d, n, "cover_efron_dual", names, replicates, master_seed=seed + 1),
                        workers)[0]
    ks = stats.ks_2samp(a[:, 0], b[:, 0])
    levels = np.union1d(a[:, 1], b[:, 1])
    table = np.array([[np.count_nonzero(a[:, 1] == v) for v in levels],
                      [np.count_nonzero(b[:, 1] == v) for v in levels]])
    table = table[:, table.sum(axis=0) > 0]
    chi_p = 1.0 if table.shape[1] < 2 else float(stats.chi2_contingency(table)[1])
    results = [
        ResultRecord(f"ks_pvalue:V_{d}", float(ks.pvalue), 0.0, level, 0.0, None, bool(ks.pvalue > level)),
        ResultRecord(f"chi2_pvalue:f_{d - 1}", chi_p, 0.0, level, 0.0, None, bool(chi_p > level)),
    ]
    conf = {"experiment": "two_routes", "d": d, "n": n, "replicates": replicates, "master_seed": seed}
    return ExperimentReport(conf, results, seed=seed)


def _pooled(name, residuals, ses, sigma, exact_only_tol=1e-10) -> ResultRecord:
    """One gate for many independent zero-mean residuals: their sum against the pooled SE."""
    res = np.asarray(residuals, dtype=float)
    se = np.asarray(ses, dtype=float)
    if len(res) == 0:
        return ResultRecord(name, 0.0, 0.0, 0.0, 0.0, 0.0, True)
    if not np.any(se > 0):
        worst = float(np.max(np.abs(res)))
        return ResultRecord(name, worst, 0.0, 0.0, 0.0, 0.0, worst < exact_only_tol)
    total = math.fsum(res.tolist())
    pooled = math.sqrt(math.fsum((se**2).tolist()))
    z = total / pooled
    return ResultRecord(name, total, pooled, 0.0, 0.0, z, abs(total) <= sigma * pooled + exact_only_tol)


def count_checks(arr) -> list:
    """Hard assertions on one arrangement; returns a list of failure strings."""
    n, d = arr.n, arr.d
    problems = []
    cells = enumerate_cells(arr)
    seen: dict = {}
    for c in cells:
        for k in range(1, d):
            for F in faces_of_cell(c, k):
                seen[F.key] = seen.get(F.key, 0) + 1
    for k in range(1, d + 1):
        faces = enumerate_k_faces(arr, k)
        for F in faces:
            m = cells_containing(arr, F)
            if m != 2 ** (d - k):
                problems.append(f"{k}-face in {m} cells, expected {2 ** (d - k)}")
            if k < d and seen.get(F.key, 0) != 2 ** (d - k):
                problems.append(f"{k}-face listed by {seen.get(F.key, 0)} cells")
        if k < d and len(faces) != sum(1 for key in seen if len(key[0]) == d - k):
            problems.append(f"cell-wise and global {k}-face sets differ")
    return problems


def identity_suite(d: int, n: int, arrangements: int, seed: int, mc_samples: int = 4096,
                   exact_max_dim: int = 3, sigma: float = 4.0, checks=("counts", "identity_73", "CE1",
                   "per_cell"), timing: bool = True) -> ExperimentReport:
    """Counting theorems and deterministic identities over fresh arrangements."""
    t0 = time.perf_counter()
    acc: dict = {}
    failures = 0
    triage = []

    def add(name, res, se):
        acc.setdefault(name, ([], []))
        acc[name][0].append(res)
        acc[name][1].append(se)

    for a in range(arrangements):
        g = RngStream(seed, a).generator()
        try:
            arr = sample_arrangement(n, d, rng=g)
            if "counts" in checks:
                probs = count_checks(arr)
                if probs:
                    raise GeneralPositionError("; ".join(probs), arrangement=arr)
                add("counts", 0.0, 0.0)
        except GeneralPositionError as exc:
            failures += 1
            bad = exc.arrangement
            triage.append({"arrangement": a, "error": str(exc),
                           "normals": bad.to_json() if bad is not None else None})
            continue
        if "identity_73" in checks:
            for j in range(1, d):
                if n <= d - j:
                    continue
                for k in range(j, d + 1):
                    if n - (d - k) < 0:
                        continue
                    for r in range(1, d + 1):
                        res = check_identity_73(arr, j, k, r, mc_samples, g, exact_max_dim, sigma)
                        add(f"identity_73[j={j},k={k},r={r}]", res.residual, res.standard_error)
        if "CE1" in checks:
            for k in range(1, d):
                res = check_tiling_CE1(arr, k, mc_samples, g, exact_max_dim, sigma)
                add(f"CE1[k={k}]", res.residual, res.standard_error)
        if "per_cell" in checks and n >= d:
            cell = sample_schlafli(arr, g)
            C = cell_cone(arr, cell.signs)
            D = C.dual()
            V = [C.V(m, mc_samples, g, exact_max_dim) for m in range(d + 1)]
            U = [C.U(jj, mc_samples, g) for jj in range(d)]
            UD = [D.U(jj, mc_samples, g) for jj in range(d)]
            tot = sum(V[1:], V[0])
            add("sum_V", tot.value - 1.0, tot.standard_error)
            for jj in range(1, d):
                s = U[jj] + UD[d - jj]
                add(f"duality_U[j={jj}]", s.value - 0.5, s.standard_error)
                crof = sum((V[m] for m in range(jj + 1, d + 1, 2)), AngleEstimate(0.0))
                diff = U[jj].value - crof.value
                add(f"crofton[j={jj}]", diff, math.hypot(U[jj].standard_error, crof.standard_error))
            for m in range(d + 1):
                vd = D.V(d - m, mc_samples, g, exact_max_dim)
                add(f"duality_V[m={m}]", V[m].value - vd.value,
                    math.hypot(V[m].standard_error, vd.standard_error))
    results = [_pooled(name, r, s, sigma) for name, (r, s) in acc.items()]
    wall = (time.perf_counter() - t0) * 1e3 if timing else 0.0
    conf = {"experiment": "identities", "d": d, "n": n, "arrangements": arrangements,
            "master_seed": seed, "mc_samples": mc_samples, "checks": list(checks)}
    return ExperimentReport(conf, results, failures, wall, seed, triage=triage)


# --- persistence ----------------------------------------------------------------------


def write_report(report: ExperimentReport, path, include_timing: bool = True) -> None:
    """Write ``path`` (JSON) and the CSV export next to it (same stem, .csv)."""
    obj = report.to_json()
    if not include_timing:
        obj["wall_time_ms"] = 0.0
    path = os.fspath(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
    with open(os.path.splitext(path)[0] + ".csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(report_csv(report))


def read_report(path) -> ExperimentReport:
    with open(path, encoding="utf-8") as fh:
        return ExperimentReport.from_json(json.load(fh))


def _csv_cell(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def report_csv(report: ExperimentReport) -> str:
    """CSV export of the gated records (LF line endings)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in report.gated:
        w.writerow([_csv_cell(v) for v in (r.name, r.estimate, r.se, r.exact, r.exact_err, r.z, r.passed)])
    return buf.getvalue()


def write_triage(failure: HardAssertionFailure, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump({"error": str(failure), "replicate": failure.replicate,
                   "arrangement": failure.triage}, fh, indent=2)
        fh.write("\n")


__all__ = [
    "ExperimentConfig", "ExperimentReport", "ResultRecord", "HardAssertionFailure", "run",
    "covariance_experiment", "identity_suite", "e_cone_comparison_check", "weighted_identity_check",
    "two_route_check", "write_report", "read_report", "report_csv", "write_triage",
    "exact_value", "parse_functional", "simulate_values", "worker_count", "jackknife_cov",
    "mean_se", "count_checks",
]
