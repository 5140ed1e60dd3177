"""Straggler latency under the shifted-exponential worker model.

Each worker finishes after ``c * (gamma + E / mu)`` with ``E`` a standard
exponential and ``c`` the fraction of the full product one worker computes.
A job completes at the ``K``-th arrival, or, for the grouped baseline, once
every group has delivered its own quota.

The closed forms use ``log(N / (N - K))`` for the expected ``K``-th order
statistic of ``N`` unit exponentials; the exact value is ``H_N - H_{N-K}``
and both are exposed.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

CSV_SCHEMA = "pspc-latency-csv/1"
CSV_COLUMNS = ["scheme", "N", "M", "m", "n", "K", "mu", "gamma", "analytic_time",
               "mc_mean", "mc_ci_low", "mc_ci_high", "trials", "seed",
               "exact_time", "note"]

VARIANTS = ("conventional", "private_secure", "grouped_baseline")

# trials per independent random stream; fixed so results never depend on threads
BLOCK_TRIALS = 8192


@dataclass(frozen=True)
class LatencyParams:
    mu: float
    gamma: float
    N: int
    trials: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")


@dataclass(frozen=True)
class SchemeSpec:
    """Which scheme to time.

    ``conventional`` is the plain polynomial code with threshold ``K``
    (defaults to ``n(m+1)``) and per-worker load ``1/K``.  The two private
    schemes share ``K = n(m+1)`` and load ``1/((m+1)(n-1))``.
    ``grouped_baseline`` splits workers into ``groups`` (default ``n``)
    equal groups, each of which must return ``K / groups`` results.
    """

    variant: str
    N: int
    m: int = 1
    n: int = 2
    M: int = 1
    K_override: int | None = None
    groups: int | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown scheme {self.variant!r}")
        if self.m < 1 or self.n < 2:
            raise ValueError("need m >= 1 and n >= 2")
        if self.K_override is not None and self.variant != "conventional":
            raise ValueError("K can only be set directly for the conventional scheme")
        if not 1 <= self.K <= self.N:
            raise ValueError(f"K = {self.K} must lie in 1..N = {self.N}")
        if self.variant == "grouped_baseline":
            g = self.group_count
            if self.N % g:
                raise ValueError(f"{g} groups do not divide N = {self.N}")
            if self.K % g:
                raise ValueError(f"{g} groups do not divide K = {self.K}")
            if self.K // g > self.N // g:
                raise ValueError("per-group quota exceeds group size")

    @property
    def K(self) -> int:
        if self.K_override is not None:
            return self.K_override
        return self.n * (self.m + 1)

    @property
    def group_count(self) -> int:
        return self.groups if self.groups is not None else self.n

    @property
    def workload(self) -> float:
        if self.variant == "conventional":
            return 1.0 / self.K
        return 1.0 / ((self.m + 1) * (self.n - 1))


def harmonic(k: int) -> float:
    return math.fsum(1.0 / i for i in range(1, k + 1))


def expected_order_statistic(N: int, K: int, mu: float) -> float:
    """Exact mean of the ``K``-th smallest of ``N`` iid Exp(mu) draws."""
    if not 0 <= K <= N:
        raise ValueError(f"need 0 <= K <= N, got K={K}, N={N}")
    return (harmonic(N) - harmonic(N - K)) / mu


def analytic_conventional(params: LatencyParams, K: int) -> float:
    N = params.N
    if not 1 <= K < N:
        raise ValueError(f"need 1 <= K < N for the log formula, got K={K}, N={N}")
    return (params.gamma + math.log(N / (N - K)) / params.mu) / K


def analytic_private_secure(params: LatencyParams, m: int, n: int) -> float:
    N, K = params.N, n * (m + 1)
    if m < 1 or n < 2:
        raise ValueError("need m >= 1 and n >= 2")
    if K >= N:
        raise ValueError(f"n(m+1) = {K} must be below N = {N}")
    return (params.gamma + math.log(N / (N - K)) / params.mu) / ((m + 1) * (n - 1))


def exact_mean(spec: SchemeSpec, params: LatencyParams) -> float:
    """Exact expected completion time for the order-statistic schemes."""
    if spec.variant == "grouped_baseline":
        raise ValueError("no closed form for the grouped baseline")
    return spec.workload * (params.gamma + expected_order_statistic(spec.N, spec.K, params.mu))


@dataclass(frozen=True)
class McResult:
    mean: float
    ci_low: float
    ci_high: float
    stderr: float
    trials: int


def _block_times(spec: SchemeSpec, params: LatencyParams, block: int, size: int) -> np.ndarray:
    # stream ``block`` of a Philox generator keyed by the seed; row t column i
    # is worker i in trial ``block * BLOCK_TRIALS + t``
    bitgen = np.random.Philox(key=params.seed).jumped(block)
    draws = np.random.Generator(bitgen).standard_exponential((size, spec.N))
    times = spec.workload * (params.gamma + draws / params.mu)
    if spec.variant == "grouped_baseline":
        g = spec.group_count
        per_group = times.reshape(size, g, spec.N // g)
        quota = spec.K // g
        kth = np.partition(per_group, quota - 1, axis=2)[:, :, quota - 1]
        return kth.max(axis=1)
    return np.partition(times, spec.K - 1, axis=1)[:, spec.K - 1]


def mc_samples(spec: SchemeSpec, params: LatencyParams, threads: int = 1) -> np.ndarray:
    """Per-trial completion times, identical for any ``threads``."""
    if spec.N != params.N:
        raise ValueError(f"scheme has N={spec.N} but latency params have N={params.N}")
    sizes = [min(BLOCK_TRIALS, params.trials - lo) for lo in range(0, params.trials, BLOCK_TRIALS)]
    jobs = list(enumerate(sizes))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda job: _block_times(spec, params, *job), jobs))
    else:
        parts = [_block_times(spec, params, *job) for job in jobs]
    return np.concatenate(parts)


def summarize(samples: np.ndarray, z: float = 1.959963984540054) -> McResult:
    mean = float(samples.mean())
    stderr = float(samples.std(ddof=1) / math.sqrt(samples.size)) if samples.size > 1 else 0.0
    return McResult(mean, mean - z * stderr, mean + z * stderr, stderr, int(samples.size))


def mc_simulate(spec: SchemeSpec, params: LatencyParams, threads: int = 1) -> McResult:
    return summarize(mc_samples(spec, params, threads))


def grouped_baseline_simulate(params: LatencyParams, m: int, n: int, M: int, N: int,
                              threads: int = 1) -> McResult:
    """Reconstructed baseline: ``n`` groups, each must return ``m + 1`` results.

    Encoding ``A`` and the library in separate variables splits the workers
    into groups; the job waits for the slowest group.
    """
    if N % n:
        raise ValueError(f"n = {n} groups do not divide N = {N}")
    return mc_simulate(SchemeSpec("grouped_baseline", N, m, n, M), params, threads)


@dataclass(frozen=True)
class SweepRow:
    scheme: str
    N: int
    M: int
    m: int | None
    n: int | None
    K: int
    mu: float
    gamma: float
    analytic_time: float | None = None
    mc_mean: float | None = None
    mc_ci_low: float | None = None
    mc_ci_high: float | None = None
    trials: int | None = None
    seed: int | None = None
    exact_time: float | None = None
    note: str = ""

    def as_list(self) -> list:
        return [_fmt(getattr(self, col)) for col in CSV_COLUMNS]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def sweep_point(N: int, M: int, m: int, n: int, mu: float, gamma: float, trials: int,
                seed: int, threads: int = 1) -> list[SweepRow]:
    """Rows for the three schemes at one operating point.

    All schemes reuse ``seed``, so comparisons use common random numbers.
    """
    K = n * (m + 1)
    lp = LatencyParams(mu, gamma, N, trials, seed)
    if K >= N:
        note = f"skipped: K={K} >= N={N}, log formula diverges"
        return [SweepRow(v, N, M, m, n, K, mu, gamma, trials=trials, seed=seed, note=note)
                for v in VARIANTS]
    rows = []
    for variant in VARIANTS:
        spec = SchemeSpec(variant, N, m, n, M)
        res = mc_simulate(spec, lp, threads)
        if variant == "conventional":
            analytic, exact, note = analytic_conventional(lp, K), exact_mean(spec, lp), ""
        elif variant == "private_secure":
            analytic, exact, note = analytic_private_secure(lp, m, n), exact_mean(spec, lp), ""
        elif N % spec.group_count:
            rows.append(SweepRow(variant, N, M, m, n, K, mu, gamma, trials=trials, seed=seed,
                                 note=f"skipped: {n} groups do not divide N={N}"))
            continue
        else:
            analytic, exact, note = None, None, "reconstructed baseline"
        rows.append(SweepRow(variant, N, M, m, n, K, mu, gamma, analytic, res.mean,
                             res.ci_low, res.ci_high, trials, seed, exact, note))
    return rows


def fig2_sweep(trials: int = 100_000, seed: int = 0, threads: int = 1,
               N: int = 12, M: int = 4, n: int = 2, mu: float = 0.1, gamma: float = 0.1,
               Ks=(4, 6, 8, 10)) -> list[SweepRow]:
    """Completion time against recovery threshold, ``K = n(m+1)``."""
    rows = []
    for K in Ks:
        if K % n:
            raise ValueError(f"K = {K} is not a multiple of n = {n}")
        rows += sweep_point(N, M, K // n - 1, n, mu, gamma, trials, seed, threads)
    return rows


def fig3_sweep(trials: int = 100_000, seed: int = 0, threads: int = 1,
               N: int = 12, M: int = 4, K: int = 4, gamma: float = 1.0,
               mus=None, n: int = 2) -> list[SweepRow]:
    """Completion time against straggling rate, log-spaced over [0.1, 10]."""
    if mus is None:
        mus = np.logspace(-1, 1, 9)
    rows = []
    for mu in mus:
        rows += sweep_point(N, M, K // n - 1, n, float(mu), gamma, trials, seed, threads)
    return rows


def rows_to_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"# schema={CSV_SCHEMA}"])
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(row.as_list())
    return buf.getvalue()


def relative_reduction(rows: list[SweepRow], key: str = "K") -> dict:
    """``1 - private_secure / grouped_baseline`` per sweep value of ``key``."""
    ps = {getattr(r, key): r.mc_mean for r in rows if r.scheme == "private_secure"}
    gb = {getattr(r, key): r.mc_mean for r in rows if r.scheme == "grouped_baseline"}
    return {k: 1.0 - ps[k] / gb[k] for k in ps
            if k in gb and ps[k] is not None and gb[k] is not None}
