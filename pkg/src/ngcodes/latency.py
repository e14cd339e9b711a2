"""Exact latency distributions under the shifted-exponential worker model.

Each non-failing worker needs gamma + eps + u*rho plus an Erlang(u, lambda)
stochastic part to deliver its u-th response; workers fail outright with
probability p_e. A fixed-tolerance code decodes once n - sigma workers have
finished sigma + 1 tasks; the nested scheme decodes at the first task count u
for which n - u + 1 workers are done. Both iteration-latency CDFs are computed
in closed form by marginalizing over the failure count and over worker
order statistics (fixed tolerance) or layer occupancy vectors (nested).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class InvalidTaskCount(ValueError):
    """Task counts must be positive integers."""


class InvalidParams(ValueError):
    """Cluster or scheme parameters outside their valid range."""


@dataclass(frozen=True)
class ClusterParams:
    """Stochastic worker model: rate, shifts, signaling, failure probability."""

    lam: float    # exponential rate of the stochastic part, > 0
    rho: float    # deterministic time per task
    gamma: float  # one-off communication delay
    eps: float    # signaling overhead charged per response
    p_e: float    # probability a worker fails for the whole iteration
    n: int        # worker count

    def __post_init__(self):
        if self.lam <= 0:
            raise InvalidParams(f"lam must be positive, got {self.lam}")
        if self.rho < 0 or self.gamma < 0 or self.eps < 0:
            raise InvalidParams("rho, gamma, eps must be non-negative")
        if not 0.0 <= self.p_e <= 1.0:
            raise InvalidParams(f"p_e must lie in [0, 1], got {self.p_e}")
        if self.n < 1:
            raise InvalidParams(f"n must be at least 1, got {self.n}")


@dataclass(frozen=True)
class Scheme:
    """A latency scheme: uncoded, gc (fixed sigma) or ngc (max tolerance s_max)."""

    kind: str
    tolerance: int = 0

    def __post_init__(self):
        if self.kind not in ("uncoded", "gc", "ngc"):
            raise InvalidParams(f"unknown scheme kind {self.kind!r}")
        if self.tolerance < 0:
            raise InvalidParams("tolerance must be non-negative")
        if self.kind == "uncoded" and self.tolerance != 0:
            raise InvalidParams("uncoded scheme has no tolerance parameter")

    @property
    def label(self) -> str:
        if self.kind == "uncoded":
            return "uncoded"
        return f"{self.kind}:{self.tolerance}"


def parse_scheme(text: str) -> Scheme:
    """Parse 'uncoded', 'gc:SIGMA' or 'ngc:SMAX'."""
    text = text.strip()
    if text == "uncoded":
        return Scheme("uncoded")
    kind, sep, value = text.partition(":")
    if sep and kind in ("gc", "ngc"):
        try:
            return Scheme(kind, int(value))
        except ValueError as exc:
            raise InvalidParams(f"bad scheme tolerance in {text!r}") from exc
    raise InvalidParams(f"cannot parse scheme {text!r}")


@dataclass(frozen=True)
class LatencyCurve:
    """A sampled CDF: P(T <= t) over a strictly increasing time grid."""

    grid: np.ndarray
    values: np.ndarray
    label: str

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        if grid.ndim != 1 or values.shape != grid.shape:
            raise InvalidParams("grid and values must be matching 1-d arrays")
        if grid.size >= 2 and not np.all(np.diff(grid) > 0):
            raise InvalidParams("grid must be strictly increasing")
        if np.any(values < -1e-12) or np.any(values > 1 + 1e-12):
            raise InvalidParams("curve values must lie in [0, 1]")
        if values.size >= 2 and np.any(np.diff(values) < -1e-12):
            raise InvalidParams("curve values must be nondecreasing")


def _layer_cdf(u: int, ts: np.ndarray, p: ClusterParams) -> np.ndarray:
    """P(worker finishes u tasks by t): shifted Erlang(u, lam), vectorized in t."""
    x = p.lam * (ts - (p.gamma + p.eps + u * p.rho))
    out = np.zeros_like(ts, dtype=float)
    pos = x > 0
    if not np.any(pos):
        return out
    xp = np.minimum(x[pos], 1e300)  # t = inf evaluates to 1 instead of NaN
    # survival = sum_{k=0}^{u-1} exp(-x) x^k / k!, summed in log space
    ks = np.arange(u, dtype=float)
    lgk = np.array([math.lgamma(k + 1) for k in range(u)])
    logterms = ks[:, None] * np.log(xp)[None, :] - lgk[:, None] - xp[None, :]
    top = logterms.max(axis=0)
    survival = np.exp(top + np.log(np.exp(logterms - top).sum(axis=0)))
    out[pos] = 1.0 - survival
    return np.clip(out, 0.0, 1.0)


def task_time_cdf(u: int, t: float, p: ClusterParams) -> float:
    """CDF of the time one non-failing worker needs to complete u tasks."""
    if not isinstance(u, (int, np.integer)) or u < 1:
        raise InvalidTaskCount(f"task count must be a positive integer, got {u!r}")
    return float(_layer_cdf(int(u), np.asarray([t], dtype=float), p)[0])


def failure_count_pmf(kappa: int, n: int, p_e: float) -> float:
    """Binomial probability that exactly kappa of n workers fail outright."""
    if not 0 <= kappa <= n:
        raise InvalidParams(f"kappa must lie in [0, {n}], got {kappa}")
    return math.comb(n, kappa) * p_e**kappa * (1.0 - p_e) ** (n - kappa)


def _binom_tail(n_alive: int, need: int, f: np.ndarray) -> np.ndarray:
    """P(Binomial(n_alive, f) >= need), elementwise in f."""
    total = np.zeros_like(f, dtype=float)
    for tau in range(need, n_alive + 1):
        total += math.comb(n_alive, tau) * f**tau * (1.0 - f) ** (n_alive - tau)
    return np.clip(total, 0.0, 1.0)


def _check_tolerance(value: int, p: ClusterParams, name: str):
    if not 0 <= value <= p.n - 1:
        raise InvalidParams(f"{name} must lie in [0, n-1], got {value} with n={p.n}")


def _gc_cdf_grid(ts: np.ndarray, sigma: int, p: ClusterParams) -> np.ndarray:
    f = _layer_cdf(sigma + 1, ts, p)
    out = np.zeros_like(ts, dtype=float)
    for kappa in range(sigma + 1):
        weight = failure_count_pmf(kappa, p.n, p.p_e)
        if weight == 0.0:
            continue
        out += weight * _binom_tail(p.n - kappa, p.n - sigma, f)
    return np.clip(out, 0.0, 1.0)


def gc_latency_cdf(t: float, sigma: int, p: ClusterParams) -> float:
    """P(T <= t) for a fixed-tolerance code: the (n - sigma)-th order statistic
    of the sigma+1-task completion times, marginalized over failures."""
    _check_tolerance(sigma, p, "sigma")
    return float(_gc_cdf_grid(np.asarray([t], dtype=float), sigma, p)[0])


@lru_cache(maxsize=None)
def _no_decode_profiles(n: int, kappa: int, s_bar: int):
    """Occupancy vectors of the n - kappa alive workers that block every layer.

    A vector (i_0, ..., i_{s_bar+1}) counts workers that have finished exactly
    that many tasks. Layer u is decodable once n - u + 1 workers hold >= u
    tasks, so blocking all layers means sum_{v>=u} i_v <= n - u for every
    u >= 1. Enumerated top layer down with the recursive limit
    i_u <= min(n - u, alive) - sum_{v>u} i_v; i_0 takes the remainder.
    Returns (occupancies, log multinomial coefficients).
    """
    alive = n - kappa
    rows = []
    vec = [0] * (s_bar + 2)

    def walk(u: int, committed: int):
        if u == 0:
            vec[0] = alive - committed
            rows.append(tuple(vec))
            return
        cap = min(n - u, alive) - committed
        for count in range(cap + 1):
            vec[u] = count
            walk(u - 1, committed + count)
        vec[u] = 0

    walk(s_bar + 1, 0)
    occupancy = np.array(rows, dtype=np.int64)
    lg = np.array([math.lgamma(i + 1) for i in range(alive + 1)])
    logcoef = lg[alive] - lg[occupancy].sum(axis=1)
    return occupancy, logcoef


def _conditional_decode_prob(weights: np.ndarray, n: int, kappa: int, s_bar: int) -> np.ndarray:
    """P(some layer decodable by t | kappa failures) from per-layer weights.

    ``weights[u]`` is the probability one alive worker has finished exactly u
    tasks by t (row s_bar+1 means all tasks), shape (s_bar + 2, len(grid)).
    """
    occupancy, logcoef = _no_decode_profiles(n, kappa, s_bar)
    # 0 * log(0) counts as 0: layers an occupancy vector never uses cannot
    # zero the whole term even when their weight vanishes
    with np.errstate(divide="ignore", invalid="ignore"):
        logw = np.log(weights)
        exponents = np.where(
            occupancy[:, :, None] > 0, occupancy[:, :, None] * logw[None, :, :], 0.0
        ).sum(axis=1)
    no_decode = np.exp(logcoef[:, None] + exponents).sum(axis=0)
    return np.clip(1.0 - no_decode, 0.0, 1.0)


def _ngc_weights(ts: np.ndarray, s_bar: int, p: ClusterParams) -> np.ndarray:
    layer = np.stack([_layer_cdf(u, ts, p) for u in range(1, s_bar + 2)])
    w = np.empty((s_bar + 2, ts.size))
    w[0] = 1.0 - layer[0]
    for u in range(1, s_bar + 1):
        w[u] = layer[u - 1] - layer[u]
    w[s_bar + 1] = layer[s_bar]
    return np.clip(w, 0.0, 1.0)


def _ngc_cdf_grid(ts: np.ndarray, s_max: int, p: ClusterParams) -> np.ndarray:
    weights = _ngc_weights(ts, s_max, p)
    out = np.zeros_like(ts, dtype=float)
    for kappa in range(s_max + 1):
        pmf = failure_count_pmf(kappa, p.n, p.p_e)
        if pmf == 0.0:
            continue
        out += pmf * _conditional_decode_prob(weights, p.n, kappa, s_max)
    return np.clip(out, 0.0, 1.0)


def ngc_latency_cdf(t: float, s_max: int, p: ClusterParams) -> float:
    """P(T <= t) for the nested scheme with maximum tolerance s_max."""
    _check_tolerance(s_max, p, "s_max")
    return float(_ngc_cdf_grid(np.asarray([t], dtype=float), s_max, p)[0])


def _zero_shift_weights(ts: np.ndarray, s_bar: int, p: ClusterParams) -> np.ndarray:
    """Per-layer weights in closed Poisson form, valid only for rho = 0.

    With no per-task shift all layers share the offset gamma + eps, and the
    probability of exactly u finished tasks collapses to the Poisson term
    exp(-x) x^u / u! with x = lam * (t - gamma - eps).
    """
    x = p.lam * (ts - (p.gamma + p.eps))
    w = np.zeros((s_bar + 2, ts.size))
    w[0] = 1.0
    pos = x > 0
    if not np.any(pos):
        return w
    xp = x[pos]
    logx = np.log(xp)
    poisson = np.empty((s_bar + 1, xp.size))
    for u in range(s_bar + 1):
        poisson[u] = np.exp(u * logx - math.lgamma(u + 1) - xp)
    w[: s_bar + 1, pos] = poisson
    w[s_bar + 1, pos] = 1.0 - poisson.sum(axis=0)
    return np.clip(w, 0.0, 1.0)


def _ngc_zero_shift_grid(ts: np.ndarray, s_max: int, p: ClusterParams) -> np.ndarray:
    weights = _zero_shift_weights(ts, s_max, p)
    out = np.zeros_like(ts, dtype=float)
    for kappa in range(s_max + 1):
        pmf = failure_count_pmf(kappa, p.n, p.p_e)
        if pmf == 0.0:
            continue
        out += pmf * _conditional_decode_prob(weights, p.n, kappa, s_max)
    return np.clip(out, 0.0, 1.0)


def ngc_latency_cdf_zero_shift(t: float, s_max: int, p: ClusterParams) -> float:
    """Specialized nested-scheme CDF for rho = 0; agrees with ngc_latency_cdf."""
    if p.rho != 0:
        raise InvalidParams(f"zero-shift form requires rho = 0, got rho={p.rho}")
    _check_tolerance(s_max, p, "s_max")
    return float(_ngc_zero_shift_grid(np.asarray([t], dtype=float), s_max, p)[0])


def latency_curve(scheme: Scheme, grid, p: ClusterParams) -> LatencyCurve:
    """Evaluate the analytic CDF of a scheme over a strictly increasing grid."""
    ts = np.asarray(grid, dtype=float)
    if ts.ndim != 1 or ts.size < 1:
        raise InvalidParams("grid must be a non-empty 1-d array")
    if ts.size >= 2 and not np.all(np.diff(ts) > 0):
        raise InvalidParams("grid must be strictly increasing")
    if scheme.kind == "uncoded":
        values = _gc_cdf_grid(ts, 0, p)
    elif scheme.kind == "gc":
        _check_tolerance(scheme.tolerance, p, "sigma")
        values = _gc_cdf_grid(ts, scheme.tolerance, p)
    else:
        _check_tolerance(scheme.tolerance, p, "s_max")
        values = _ngc_cdf_grid(ts, scheme.tolerance, p)
    return LatencyCurve(grid=ts, values=values, label=scheme.label)
