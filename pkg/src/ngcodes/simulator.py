"""Monte Carlo simulation of one coded gradient-descent iteration.

Each trial samples per-worker failure flags and task completion times from the
shifted-exponential model, applies the decode rule of the chosen scheme, and
reports the iteration latency together with the work each worker completed by
the time the iteration could stop. Trials are seeded individually
(sub-seed = seed XOR trial index) so results do not depend on execution order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .latency import ClusterParams, InvalidParams, LatencyCurve, Scheme


@dataclass(frozen=True)
class WorkerTrace:
    """One worker's iteration: failure flag plus cumulative completion times.

    ``finish_times[j]`` is the time at which task j+1 completes; empty when the
    worker failed.
    """

    failed: bool
    finish_times: np.ndarray


@dataclass(frozen=True)
class IterationOutcome:
    """Result of one simulated iteration.

    ``latency`` and ``decoded_sigma`` are None when more workers failed than
    the scheme tolerates. ``tasks_done`` counts completed tasks per worker at
    the moment the iteration stopped (all assigned tasks when it never could).
    """

    latency: float | None
    decoded_sigma: int | None
    tasks_done: np.ndarray
    kappa: int


def sample_worker_trace(rng: np.random.Generator, p: ClusterParams, u_max: int) -> WorkerTrace:
    """Draw one worker: Bernoulli(p_e) failure, else shifted-Erlang finish times."""
    if u_max < 1:
        raise InvalidParams(f"u_max must be at least 1, got {u_max}")
    if rng.random() < p.p_e:
        return WorkerTrace(failed=True, finish_times=np.empty(0))
    waits = rng.exponential(scale=1.0 / p.lam, size=u_max)
    tasks = np.arange(1, u_max + 1)
    times = p.gamma + p.eps + p.rho * tasks + np.cumsum(waits)
    return WorkerTrace(failed=False, finish_times=times)


def _draw_traces(rng, p: ClusterParams, u_max: int) -> list[WorkerTrace]:
    return [sample_worker_trace(rng, p, u_max) for _ in range(p.n)]


def _tasks_at(traces, latency: float | None, u_max: int) -> np.ndarray:
    done = np.zeros(len(traces), dtype=np.int64)
    for i, tr in enumerate(traces):
        if tr.failed:
            continue
        if latency is None:
            done[i] = u_max  # no stop signal ever arrives; the schedule runs out
        else:
            done[i] = int(np.searchsorted(tr.finish_times, latency, side="right"))
    return done


def simulate_ngc_iteration(
    rng: np.random.Generator, s_max: int, p: ClusterParams, final_signal_delay: float = 0.0
) -> IterationOutcome:
    """One nested-scheme iteration: stop at the first layer reaching quorum.

    Layer u (u = 1..s_max+1) is decodable once n - u + 1 alive workers have
    finished u tasks; the latency is the earliest such moment and the component
    used is sigma = u - 1, ties resolved toward the smaller tolerance.
    ``final_signal_delay`` adds an optional terminal signaling round trip.
    """
    if not 0 <= s_max <= p.n - 1:
        raise InvalidParams(f"s_max must lie in [0, n-1], got {s_max} with n={p.n}")
    u_max = s_max + 1
    traces = _draw_traces(rng, p, u_max)
    kappa = sum(tr.failed for tr in traces)
    if kappa > s_max:
        return IterationOutcome(None, None, _tasks_at(traces, None, u_max), kappa)
    times = np.stack([tr.finish_times for tr in traces if not tr.failed])
    order = np.sort(times, axis=0)
    best_time, best_u = math.inf, None
    for u in range(1, u_max + 1):
        need = p.n - u + 1
        if order.shape[0] < need:
            continue
        quorum_time = order[need - 1, u - 1]
        if quorum_time < best_time:
            best_time, best_u = quorum_time, u
    tasks_done = _tasks_at(traces, best_time, u_max)
    return IterationOutcome(float(best_time) + final_signal_delay, best_u - 1, tasks_done, kappa)


def simulate_gc_iteration(rng: np.random.Generator, sigma: int, p: ClusterParams) -> IterationOutcome:
    """One fixed-tolerance iteration: wait for n - sigma full responses.

    Every alive worker computes all sigma + 1 assigned tasks regardless of the
    decode time (fixed computation load).
    """
    if not 0 <= sigma <= p.n - 1:
        raise InvalidParams(f"sigma must lie in [0, n-1], got {sigma} with n={p.n}")
    u_max = sigma + 1
    traces = _draw_traces(rng, p, u_max)
    kappa = sum(tr.failed for tr in traces)
    tasks_done = np.array([0 if tr.failed else u_max for tr in traces], dtype=np.int64)
    if kappa > sigma:
        return IterationOutcome(None, None, tasks_done, kappa)
    finals = np.sort([tr.finish_times[-1] for tr in traces if not tr.failed])
    latency = float(finals[p.n - sigma - 1])
    return IterationOutcome(latency, sigma, tasks_done, kappa)


@dataclass(frozen=True)
class LoadStats:
    mean_load: float
    p95_load: float
    undecodable_rate: float


@dataclass(frozen=True)
class ExperimentResult:
    curve: LatencyCurve
    loads: LoadStats


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """The per-trial generator: independent stream keyed by seed XOR trial."""
    return np.random.default_rng(np.random.SeedSequence(seed ^ trial))


def run_experiment(
    scheme: Scheme,
    trials: int,
    seed: int,
    p: ClusterParams,
    grid,
    final_signal_delay: float = 0.0,
) -> ExperimentResult:
    """Empirical latency CDF and load statistics over independent trials.

    Undecodable trials count as infinite latency (never <= t). Deterministic
    for fixed (seed, trials) because every trial owns its sub-seeded stream.
    """
    if trials < 1:
        raise InvalidParams(f"trials must be at least 1, got {trials}")
    if seed < 0:
        raise InvalidParams("seed must be a non-negative integer")
    ts = np.asarray(grid, dtype=float)
    if ts.ndim != 1 or ts.size < 1 or (ts.size >= 2 and not np.all(np.diff(ts) > 0)):
        raise InvalidParams("grid must be a non-empty strictly increasing 1-d array")

    latencies = np.empty(trials)
    loads = np.empty((trials, p.n), dtype=np.int64)
    for trial in range(trials):
        rng = trial_rng(seed, trial)
        if scheme.kind == "ngc":
            out = simulate_ngc_iteration(rng, scheme.tolerance, p, final_signal_delay)
        else:
            sigma = 0 if scheme.kind == "uncoded" else scheme.tolerance
            out = simulate_gc_iteration(rng, sigma, p)
        latencies[trial] = math.inf if out.latency is None else out.latency
        loads[trial] = out.tasks_done

    ordered = np.sort(latencies)
    values = np.searchsorted(ordered, ts, side="right") / trials
    curve = LatencyCurve(grid=ts, values=values, label=scheme.label)
    stats = LoadStats(
        mean_load=float(loads.mean()),
        p95_load=float(np.percentile(loads.reshape(-1), 95)),
        undecodable_rate=float(np.mean(np.isinf(latencies))),
    )
    return ExperimentResult(curve=curve, loads=stats)
