"""Monte Carlo checks of the tail bounds, the e-processes and the weighted-sum lemma.

Suprema over k >= m are truncated at a finite horizon N.  That can only miss
crossings, so every estimated probability is a lower estimate of the quantity
the bound controls and "estimate <= bound" remains a sound one-sided check.

Replication r always uses ``stream_rng(seed, r)`` and results are aggregated
as integer counts, so outputs do not depend on the number of workers.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from fractions import Fraction
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import bounds as bd
from .distributions import (AbsQ, CenteredSquare, DistributionSpec, LogMoment, MomentNotFinite, NormalizedSquare,
                            _draw, stream_rng, trunc_moment)
from .eprocess import EProcessSchedule, first_latch_times
from .trajectory import TrajectoryState

__all__ = ["TrajectoryState", "SimConfig", "CrossingEstimate", "StoppingRule", "wilson_interval",
           "estimate_crossing", "run_campaign", "estimate_eprocess_mean", "eprocess_battery",
           "empirical_lil_ratio", "lil_ratio_path", "weighted_sum_ratio", "verify_weighted_sum_lemma",
           "baum_katz_partial_sum", "stopping_battery", "dominance_grid", "write_records"]

STATISTICS = ("l1", "lq", "lil", "studentized-lil", "darling-robbins")
Z95 = 1.959963984540054
HORIZON_NOTE = "lower estimate: sup over k>=m truncated at N"


def wilson_interval(successes: int, trials: int, z: float = Z95) -> tuple[float, float]:
    if trials <= 0:
        raise ValueError("trials must be positive")
    p = successes / trials
    denom = 1 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z / denom * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials))
    return max(0.0, min(p, center - half)), min(1.0, max(p, center + half))


@dataclass(frozen=True)
class SimConfig:
    """One cell: a law, a crossing statistic with its level, a window [m, N] and a replication budget.

    ``statistic`` also selects the analytic bound the estimate is compared with:
    l1 and lq both watch |S_k|/k^(1/q) >= eps (l1 forces q = 1).
    """

    spec: DistributionSpec
    statistic: str
    m: int
    N: int
    eps: float
    reps: int
    seed: int
    q: float = 1.0
    lam: float | None = None
    sigma_bar: float | None = None
    workers: int = 1

    def __post_init__(self):
        if self.statistic not in STATISTICS:
            raise ValueError(f"unknown statistic {self.statistic!r}; expected one of {STATISTICS}")
        if not 1 <= self.m <= self.N:
            raise ValueError(f"need 1 <= m <= N, got m={self.m}, N={self.N}")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if not (self.eps > 0 and math.isfinite(self.eps)):
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.statistic == "l1" and self.q != 1:
            raise ValueError("the l1 statistic uses q = 1")
        if self.statistic == "lq" and not 1 <= self.q < 2:
            raise ValueError(f"q out of range: need q in [1, 2), got {self.q}")
        if self.statistic in ("lil", "studentized-lil") and self.m < 2:
            raise ValueError("iterated-logarithm statistics need m >= 2")
        if self.statistic == "darling-robbins" and self.m < 3:
            raise ValueError("the Darling-Robbins boundary needs m >= 3")
        if self.lam is not None and self.statistic in ("lq", "darling-robbins"):
            raise ValueError(f"lambda is not a parameter of the {self.statistic} bound")
        if self.lam is not None and not 0 < self.lam < 0.5:
            raise ValueError(f"lambda must lie in (0, 1/2), got {self.lam}")
        self._check_moments()

    def _check_moments(self):
        spec, st = self.spec, self.statistic
        if st in ("l1", "lq") and not spec.abs_moment_finite(self.q):
            raise MomentNotFinite(f"moment hypothesis violated: E|X|^{self.q:g} infinite for {spec}")
        if st in ("lil", "studentized-lil"):
            if not spec.abs_moment_finite(2.0):
                raise MomentNotFinite(f"moment hypothesis violated: infinite variance for {spec}")
            if st == "lil" and self.sigma_bar is not None and self.sigma_bar < spec.sd * (1 - 1e-12):
                raise ValueError(f"sigma_bar={self.sigma_bar} below the standard deviation {spec.sd:g} of {spec}")
        if st == "darling-robbins":
            proxy = spec.subgaussian_proxy
            if proxy is None:
                raise MomentNotFinite(f"moment hypothesis violated: {spec} is not sub-Gaussian")
            if self.sigma_bar is not None and self.sigma_bar < proxy * (1 - 1e-12):
                raise ValueError(f"sigma_bar={self.sigma_bar} below the sub-Gaussian proxy {proxy:g} of {spec}")

    @property
    def lam_used(self) -> float | None:
        if self.statistic in ("lq", "darling-robbins"):
            return None
        if self.lam is not None:
            return self.lam
        return 0.25 if self.statistic == "l1" else 1 / 3

    @property
    def sigma_used(self) -> float:
        if self.sigma_bar is not None:
            return self.sigma_bar
        if self.statistic == "darling-robbins":
            return self.spec.subgaussian_proxy
        return self.spec.sd if self.statistic in ("lil", "studentized-lil") else 1.0

    def bound(self) -> bd.BoundValue:
        spec, st = self.spec, self.statistic
        if st == "l1":
            return bd.l1_bound(bd.L1Params(self.m, self.eps, self.lam_used), bd.moment_function(spec, AbsQ(1.0)))
        if st == "lq":
            return bd.lq_bound(bd.LqParams(self.m, self.eps, self.q), bd.moment_function(spec, AbsQ(self.q)))
        if st == "lil":
            p = bd.LilParams(self.m, self.eps, self.sigma_used, self.lam_used)
            return bd.lil_bound(p, bd.moment_function(spec, CenteredSquare()))
        if st == "studentized-lil":
            p = bd.LilParams(self.m, self.eps, spec.sd, self.lam_used)
            return bd.studentized_lil_bound(p, bd.moment_function(spec, NormalizedSquare()))
        return bd.darling_robbins_bound(self.m, self.eps)

    def fields(self) -> dict:
        """Everything needed to re-run the cell (worker count excluded: it cannot change results)."""
        return {"dist": str(self.spec), "statistic": self.statistic, "m": self.m, "N": self.N, "eps": self.eps,
                "q": self.q, "lambda": self.lam_used, "sigma_bar": self.sigma_used, "reps": self.reps,
                "seed": self.seed}

    def detector(self) -> "_Detector":
        ks = np.arange(self.m, self.N + 1, dtype=float)
        st, e = self.statistic, self.eps
        if st in ("l1", "lq"):
            return _Detector("abs", e * ks ** (1 / self.q), self.m)
        if st == "lil":
            return _Detector("abs", bd.lil_boundary(ks, e, self.sigma_used), self.m)
        if st == "darling-robbins":
            return _Detector("abs", bd.darling_robbins_boundary(ks, e, self.sigma_used), self.m)
        # compare S_k^2 >= sigma_hat_k^2 b_k^2 with b_k the unit-scale studentized boundary
        return _Detector("studentized", bd.studentized_lil_boundary(ks, e, 1.0) ** 2, self.m)


@dataclass(frozen=True)
class _Detector:
    mode: str
    level: np.ndarray  # thresholds for k = m..N
    m: int

    @property
    def key(self) -> tuple:
        return self.mode, self.m, self.level.tobytes()

    def crossed(self, S: np.ndarray, absS: np.ndarray, Q: np.ndarray | None) -> np.ndarray:
        n = self.m - 1 + len(self.level)
        if self.mode == "abs":
            return np.any(absS[:, self.m - 1:n] >= self.level, axis=1)
        s = S[:, self.m - 1:n]
        ks = np.arange(self.m, n + 1, dtype=float)
        mean = s / ks
        var = np.maximum(Q[:, self.m - 1:n] / ks - mean * mean, 0.0)
        return np.any((s * s >= var * self.level) & (s != 0), axis=1)


@dataclass(frozen=True)
class CrossingEstimate:
    crossings: int
    reps: int
    phat: float
    wilson_ci: tuple[float, float]
    analytic_bound: bd.BoundValue

    @property
    def half_width(self) -> float:
        return (self.wilson_ci[1] - self.wilson_ci[0]) / 2

    @property
    def dominated(self) -> bool:
        """phat minus the Wilson half-width does not exceed the clamped bound."""
        return bool(self.phat - self.half_width <= self.analytic_bound.clamped)


def _count_block(spec: DistributionSpec, seed: int, start: int, stop: int, N: int,
                 detectors: Sequence[_Detector], rows: int = 32) -> list[int]:
    counts = [0] * len(detectors)
    need_q = any(d.mode == "studentized" for d in detectors)
    X = np.empty((min(rows, stop - start), N))
    for lo in range(start, stop, rows):
        hi = min(lo + rows, stop)
        block = X[: hi - lo]
        for i, r in enumerate(range(lo, hi)):
            block[i] = _draw(spec, stream_rng(seed, r), N)
        Q = np.cumsum(block * block, axis=1) if need_q else None
        S = np.cumsum(block, axis=1)
        absS = np.abs(S)
        for i, d in enumerate(detectors):
            counts[i] += int(np.count_nonzero(d.crossed(S, absS, Q)))
    return counts


def _chunks(reps: int, workers: int) -> list[tuple[int, int]]:
    pieces = max(1, min(reps, 4 * workers))
    edges = np.linspace(0, reps, pieces + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _map(fn, jobs: list[tuple], workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*jobs)))


def _estimate(cfg: SimConfig, crossings: int) -> CrossingEstimate:
    return CrossingEstimate(crossings, cfg.reps, crossings / cfg.reps, wilson_interval(crossings, cfg.reps),
                            cfg.bound())


def estimate_crossing(cfg: SimConfig) -> CrossingEstimate:
    """Fraction of replications whose statistic crosses its level at some k in [m, N]."""
    return run_campaign([cfg], workers=cfg.workers)[0][1]


def run_campaign(cfgs: Sequence[SimConfig], workers: int = 1) -> list[tuple[SimConfig, CrossingEstimate]]:
    """Estimate many cells, sharing streams between cells with the same (law, N, reps, seed)."""
    groups: dict[tuple, list[int]] = {}
    for i, c in enumerate(cfgs):
        groups.setdefault((c.spec, c.N, c.reps, c.seed), []).append(i)
    results: list[CrossingEstimate | None] = [None] * len(cfgs)
    for (spec, N, reps, seed), idx in groups.items():
        unique: dict[tuple, int] = {}
        dets, slot = [], []
        for i in idx:
            d = cfgs[i].detector()
            if d.key not in unique:
                unique[d.key] = len(dets)
                dets.append(d)
            slot.append(unique[d.key])
        jobs = [(spec, seed, a, b, N, dets) for a, b in _chunks(reps, workers)]
        totals = np.sum(_map(_count_block, jobs, workers), axis=0)
        for i, u in zip(idx, slot):
            results[i] = _estimate(cfgs[i], int(totals[u]))
    return list(zip(cfgs, results))


def crossing_record(cfg: SimConfig, est: CrossingEstimate, runtime: float | None = None) -> dict:
    rec = cfg.fields()
    rec.update(crossings=est.crossings, phat=est.phat, wilson_lo=est.wilson_ci[0], wilson_hi=est.wilson_ci[1],
               bound_raw=est.analytic_bound.raw, bound_clamped=est.analytic_bound.clamped,
               dominated=est.dominated, note=HORIZON_NOTE)
    if runtime is not None:
        rec["runtime_s"] = round(runtime, 3)
    return rec


def _plain(v):
    return v.item() if isinstance(v, np.generic) else v


def write_records(records: Iterable[dict], out: io.TextIOBase, fmt: str = "csv") -> None:
    """CSV with a header row (floats written with ``repr`` so they round-trip) or JSON lines."""
    records = [{k: _plain(v) for k, v in r.items()} for r in records]
    if fmt == "jsonl":
        for r in records:
            out.write(json.dumps(r) + "\n")
        return
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    if not records:
        return
    keys = list(records[0])
    for r in records[1:]:
        keys += [k for k in r if k not in keys]
    writer = csv.DictWriter(out, fieldnames=keys, lineterminator="\n")
    writer.writeheader()
    for r in records:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def dominance_grid(seed: int, reps: int = 10_000, ms: Sequence[int] = (100, 1_000, 10_000)) -> list[SimConfig]:
    """The acceptance campaign: every (law, inequality) pair whose moment hypothesis holds, N = 10 m."""
    laws = [DistributionSpec("two-point", 1.0), DistributionSpec("gaussian", 1.0),
            DistributionSpec("uniform", 1.0), DistributionSpec("pareto", 1.5)]
    cells = []
    for m in ms:
        for spec in laws:
            shapes = [dict(statistic="l1", eps=e) for e in (0.5, 1.0)]
            shapes += [dict(statistic="lq", q=q, eps=e) for q in (1.0, 1.5) for e in (0.5, 1.0)]
            shapes += [dict(statistic="lil", eps=1.0), dict(statistic="studentized-lil", eps=1.0)]
            if spec.family == "gaussian":
                shapes.append(dict(statistic="darling-robbins", eps=0.5))
            for shape in shapes:
                try:
                    cells.append(SimConfig(spec=spec, m=m, N=10 * m, reps=reps, seed=seed, **shape))
                except MomentNotFinite:
                    continue
    return cells


# e-process validity ------------------------------------------------------------

@dataclass(frozen=True)
class StoppingRule:
    """tau = n0 (``fixed``) or tau = inf{k : |S_k| >= c sqrt(k)} capped at ``cap``."""

    name: str
    fixed: int | None = None
    c: float | None = None
    cap: int = 10_000

    def __post_init__(self):
        if (self.fixed is None) == (self.c is None):
            raise ValueError("give exactly one of fixed or c")
        if self.fixed is not None and not 0 <= self.fixed <= self.cap:
            raise ValueError("fixed stopping time must lie in [0, cap]")

    def tau(self, S: np.ndarray) -> int:
        if self.fixed is not None:
            return self.fixed
        ks = np.arange(1, self.cap + 1)
        hit = np.flatnonzero(np.abs(S[: self.cap]) >= self.c * np.sqrt(ks))
        return int(hit[0]) + 1 if hit.size else self.cap


def stopping_battery() -> list[StoppingRule]:
    return [StoppingRule("n=100", fixed=100), StoppingRule("n=1000", fixed=1_000),
            StoppingRule("n=10000", fixed=10_000), StoppingRule("first |S_k|>=2sqrt(k), cap 10000", c=2.0)]


def _eprocess_block(schedule: EProcessSchedule, spec: DistributionSpec, seed: int, start: int, stop: int,
                    rules: Sequence[StoppingRule], N: int) -> np.ndarray:
    out = np.zeros((stop - start, len(rules)), dtype=np.int64)
    for i, r in enumerate(range(start, stop)):
        xs = _draw(spec, stream_rng(seed, r), N)
        latch = first_latch_times(schedule, xs)
        S = np.cumsum(xs)
        for jr, rule in enumerate(rules):
            out[i, jr] = int(np.count_nonzero(latch <= rule.tau(S)))
    return out


def eprocess_battery(schedule: EProcessSchedule, spec: DistributionSpec, rules: Sequence[StoppingRule],
                     reps: int, seed: int, workers: int = 1) -> list[tuple[StoppingRule, float, float]]:
    """(rule, mean E_tau, standard error) for each rule, all rules sharing the same streams."""
    if reps < 2:
        raise ValueError("need at least 2 replications for a standard error")
    N = max(max(r.cap for r in rules), max((r.fixed or 0) for r in rules))
    if schedule.kind == "generic":
        workers = 1  # lattices are arbitrary callables and may not pickle
    else:
        # latching needs only the thresholds; the bound closure does not pickle
        schedule = replace(schedule, bound=None)
    jobs = [(schedule, spec, seed, a, b, rules, N) for a, b in _chunks(reps, workers)]
    values = np.concatenate(_map(_eprocess_block, jobs, workers), axis=0)
    out = []
    for jr, rule in enumerate(rules):
        v = values[:, jr].astype(float)
        out.append((rule, float(v.mean()), float(v.std(ddof=1) / math.sqrt(reps))))
    return out


def estimate_eprocess_mean(schedule: EProcessSchedule, stopping: StoppingRule, spec: DistributionSpec,
                           reps: int, seed: int, workers: int = 1) -> tuple[float, float]:
    """Sample mean and standard error of E at the (bounded) stopping time."""
    (_, mean, se), = eprocess_battery(schedule, spec, [stopping], reps, seed, workers)
    return mean, se


# iterated-logarithm ratio ------------------------------------------------------------

def lil_ratio_path(xs: np.ndarray, sigma: float, m: int) -> float:
    """max over n in [m, len(xs)] of |S_n| / (sigma sqrt(2 n log log n))."""
    if m < 3:
        raise ValueError("need m >= 3 so that log log n > 0")
    S = np.cumsum(np.asarray(xs, dtype=float))[m - 1:]
    n = np.arange(m, m + len(S), dtype=float)
    return float(np.max(np.abs(S) / (sigma * np.sqrt(2 * n * np.log(np.log(n)))))) if len(S) else 0.0


def _lil_block(spec, seed, start, stop, N, m):
    return [lil_ratio_path(_draw(spec, stream_rng(seed, r), N), spec.sd, m) for r in range(start, stop)]


def empirical_lil_ratio(spec: DistributionSpec, m: int, N: int, reps: int, seed: int, workers: int = 1) -> dict:
    if not spec.abs_moment_finite(2.0):
        raise MomentNotFinite(f"infinite variance for {spec}")
    if not 3 <= m <= N:
        raise ValueError("need 3 <= m <= N")
    per_rep = np.concatenate(_map(_lil_block, [(spec, seed, a, b, N, m) for a, b in _chunks(reps, workers)],
                                  workers))
    return {"per_rep": per_rep, "mean": float(per_rep.mean()),
            "sd": float(per_rep.std(ddof=1)) if reps > 1 else 0.0}


# weighted-sum lemma ----------------------------------------------------------------

def weighted_sum_ratio(a: Sequence, b: Sequence) -> float | Fraction:
    """max_k |b_1+..+b_k| / a_k divided by 2 max_k |b_1/a_1+..+b_k/a_k| (0 when both vanish).

    Integer or Fraction inputs are handled in exact rational arithmetic.
    """
    if len(a) != len(b) or not len(a):
        raise ValueError("a and b must be nonempty and of equal length")
    if all(isinstance(v, (int, Fraction)) for v in (*a, *b)):
        t = u = Fraction(0)
        lhs = rhs = Fraction(0)
        for ai, bi in zip(a, b):
            t += bi
            u += Fraction(bi) / ai
            lhs, rhs = max(lhs, abs(t) / ai), max(rhs, 2 * abs(u))
        return Fraction(0) if lhs == 0 else (lhs / rhs if rhs else math.inf)
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    lhs = np.max(np.abs(np.cumsum(b)) / a)
    rhs = 2 * np.max(np.abs(np.cumsum(b / a)))
    if rhs == 0:
        return 0.0 if lhs == 0 else math.inf
    return float(lhs / rhs)


def verify_weighted_sum_lemma(trials: int, max_len: int, seed: int, batch: int = 512) -> float:
    """Worst LHS/RHS over random instances; the lemma says it never exceeds 1.

    a: a random power of ten (1e-6..1e6) times cumulative sums of log-normal
    draws with random log-scale; b: Gaussian or Cauchy entries, sometimes with
    sparse large spikes.
    """
    if trials < 1 or max_len < 1:
        raise ValueError("trials and max_len must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    worst = 0.0
    done = 0
    while done < trials:
        g = min(batch, trials - done)
        lengths = np.minimum(np.exp(rng.uniform(0, math.log(max_len + 1), g)).astype(int), max_len)
        lengths = np.maximum(lengths, 1)
        L = int(lengths.max())
        spread = rng.uniform(0, 4, (g, 1))
        a = np.cumsum(np.exp(spread * rng.standard_normal((g, L))), axis=1) * 10.0 ** rng.uniform(-6, 6, (g, 1))
        heavy = rng.random((g, 1)) < 0.5
        b = np.where(heavy, rng.standard_cauchy((g, L)), rng.standard_normal((g, L)))
        spikes = rng.random((g, L)) < 0.01
        b = np.where(spikes, b * 1e3, b) * 10.0 ** rng.uniform(-3, 3, (g, 1))
        if not (np.all(a > 0) and np.all(np.diff(a, axis=1) >= 0)):
            raise RuntimeError("weighted-sum generator produced a non-positive or decreasing a")
        mask = np.arange(L) < lengths[:, None]
        lhs = np.max(np.where(mask, np.abs(np.cumsum(b, axis=1)) / a, 0.0), axis=1)
        rhs = 2 * np.max(np.where(mask, np.abs(np.cumsum(b / a, axis=1)), 0.0), axis=1)
        ratio = np.divide(lhs, rhs, out=np.zeros_like(lhs), where=rhs > 0)
        worst = max(worst, float(ratio.max()))
        done += g
    return worst


# Baum-Katz partial sums ------------------------------------------------------------

def _bk_block(spec, seed, start, stop, N, q, eps, M_max):
    counts = np.zeros(M_max, dtype=np.int64)
    scale = np.arange(1, N + 1, dtype=float) ** (1 / q)
    for r in range(start, stop):
        ratio = np.abs(np.cumsum(_draw(spec, stream_rng(seed, r), N))) / scale
        tail_max = np.maximum.accumulate(ratio[::-1])[::-1]
        counts += tail_max[:M_max] >= eps
    return counts


@dataclass
class BaumKatzEstimate:
    partial_sum: float
    bound: bd.BoundValue
    phat: np.ndarray = field(repr=False)


def baum_katz_partial_sum(spec: DistributionSpec, q: float, eps: float, M_max: int, N: int, reps: int,
                          seed: int, workers: int = 1) -> BaumKatzEstimate:
    """Monte Carlo sum_{m<=M_max} P_m / m with every m read off the same streams."""
    if not spec.abs_moment_finite(q):
        raise MomentNotFinite(f"moment hypothesis violated: E|X|^{q:g} log(...) infinite for {spec}")
    if not 1 <= M_max <= N:
        raise ValueError("need 1 <= M_max <= N")
    jobs = [(spec, seed, a, b, N, q, eps, M_max) for a, b in _chunks(reps, workers)]
    counts = np.sum(_map(_bk_block, jobs, workers), axis=0)
    phat = counts / reps
    partial = math.fsum(phat / np.arange(1, M_max + 1))
    log_moment = trunc_moment(spec, LogMoment(q, eps), 0.0)
    return BaumKatzEstimate(partial, bd.baum_katz_series_bound(q, eps, log_moment), phat)


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0
