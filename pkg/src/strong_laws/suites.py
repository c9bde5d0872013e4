"""Verification suites shared by ``strong-laws verify``/``table`` and the acceptance tests.

Each suite returns a :class:`SuiteResult` with one record per checked item so
the same data can be printed as CSV/JSON lines or asserted on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import bounds as bd
from . import simulate as sim
from .distributions import (AbsQ, CenteredSquare, DistributionSpec, MomentNotFinite, NormalizedSquare,
                            sample_stream, trunc_moment, trunc_moment_quadrature_oracle)
from .eprocess import (build_lil_eprocess, build_scale_invariant_eprocess, build_slln_eprocess,
                       first_latch_times, minimality_report, run_stream)

SUITES = ("moments", "dominance", "eprocess", "thresholds", "lemma", "baum-katz", "monotonicity", "lil-ratio")
SCALE_INVARIANT_M1 = 524 ** 3


@dataclass
class SuiteResult:
    name: str
    passed: bool
    records: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def _laws(*texts: str) -> list[DistributionSpec]:
    return [DistributionSpec.parse(t) for t in texts]


# truncated moments -------------------------------------------------------------

MOMENT_KINDS = (("abs-1", AbsQ(1.0)), ("abs-1.5", AbsQ(1.5)), ("centered-square", CenteredSquare()),
                ("normalized-square", NormalizedSquare()))


def moment_agreement(levels: int = 50, tol: float = 1e-8) -> SuiteResult:
    """Closed forms against the quadrature oracle on a log grid of truncation levels.

    Pareto(1.5) has no finite 1.5-th or fourth moment, so the grid uses Pareto(3)
    for every kind plus Pareto(1.5) for the first absolute moment, and checks
    that the remaining Pareto(1.5) kinds are rejected.
    """
    xs = np.concatenate([[0.0], np.geomspace(1e-3, 50.0, levels - 1)])
    cases = [(spec, name, kind) for spec in _laws("two-point:1", "gaussian:1", "uniform:1", "pareto:3")
             for name, kind in MOMENT_KINDS]
    cases.append((DistributionSpec("pareto", 1.5), "abs-1", AbsQ(1.0)))
    records, worst = [], 0.0
    for spec, name, kind in cases:
        for x in xs:
            closed = trunc_moment(spec, kind, float(x))
            oracle = trunc_moment_quadrature_oracle(spec, kind, float(x))
            err = abs(closed - oracle)
            worst = max(worst, err)
            records.append({"dist": str(spec), "kind": name, "x": float(x), "closed": closed, "oracle": oracle,
                            "abs_err": err, "ok": err <= tol})
    rejected = True
    heavy = DistributionSpec("pareto", 1.5)
    for _, kind in MOMENT_KINDS[1:]:
        try:
            trunc_moment(heavy, kind, 1.0)
            rejected = False
        except MomentNotFinite:
            pass
    return SuiteResult("moments", worst <= tol and rejected, records,
                       {"max_abs_err": worst, "pareto_1.5_infinite_kinds_rejected": rejected})


# crossing-probability dominance ----------------------------------------------------

def dominance(seed: int, reps: int = 10_000, workers: int = 1, ms=(100, 1_000, 10_000)) -> SuiteResult:
    cells = sim.dominance_grid(seed, reps, ms)
    results = sim.run_campaign(cells, workers)
    records = [sim.crossing_record(c, e) for c, e in results]
    bad = [r for r in records if not r["dominated"]]
    return SuiteResult("dominance", not bad, records, {"cells": len(records), "violations": len(bad)})


# e-processes ---------------------------------------------------------------------

def eprocess_builders(J: int = 20) -> list[tuple[str, object, DistributionSpec]]:
    two1, gauss, two3 = _laws("two-point:1", "gaussian:1", "two-point:3")
    return [("slln(q=1)", build_slln_eprocess(1.0, two1, J), two1),
            ("slln(q=1.5)", build_slln_eprocess(1.5, gauss, J), gauss),
            ("lil", build_lil_eprocess(gauss, J=J), gauss),
            ("scale-invariant", build_scale_invariant_eprocess(J), two3)]


def eprocess_validity(seed: int, reps: int = 10_000, workers: int = 1) -> SuiteResult:
    records = []
    for name, schedule, spec in eprocess_builders():
        for rule, mean, se in sim.eprocess_battery(schedule, spec, sim.stopping_battery(), reps, seed, workers):
            records.append({"builder": name, "dist": str(spec), "rule": rule.name, "reps": reps, "seed": seed,
                            "finite_levels": len(schedule.finite()), "mean": mean, "se": se,
                            "ok": mean <= 1 + 3 * se})
    return SuiteResult("eprocess", all(r["ok"] for r in records), records,
                       {"triples": len(records), "max_mean": max(r["mean"] for r in records)})


def threshold_minimality(J: int = 20) -> SuiteResult:
    records = []
    si_m1 = None
    for name, schedule, _ in eprocess_builders(J):
        for row in minimality_report(schedule):
            records.append({"builder": name, **row})
        for j, m in enumerate(schedule.thresholds, start=1):
            if m is None:
                records.append({"builder": name, "kind": schedule.kind, "j": j, "m_j": None, "ok": True})
        if schedule.kind == "scale-invariant":
            si_m1 = schedule.thresholds[0]
    records.sort(key=lambda r: (r["builder"], r["j"]))
    closed_ok = si_m1 == SCALE_INVARIANT_M1
    return SuiteResult("thresholds", closed_ok and all(r["ok"] for r in records), records,
                       {"scale_invariant_m1": si_m1, "closed_form": SCALE_INVARIANT_M1})


# weighted-sum lemma ---------------------------------------------------------------

def lemma(trials: int = 100_000, max_len: int = 1_000, seed: int = 0) -> SuiteResult:
    worst = sim.verify_weighted_sum_lemma(trials, max_len, seed)
    hand = sim.weighted_sum_ratio([1, 2, 3], [1, -1, 2])
    records = [{"trials": trials, "max_len": max_len, "seed": seed, "worst_ratio": worst, "hand_example": str(hand)}]
    return SuiteResult("lemma", worst <= 1 and hand == sim.Fraction(3, 7), records,
                       {"worst_ratio": worst, "hand_example": str(hand)})


# Baum-Katz --------------------------------------------------------------------------

def baum_katz(seed: int, reps: int = 1_000, M_max: int = 1_000, N: int = 10_000, workers: int = 1) -> SuiteResult:
    spec = DistributionSpec("two-point", 1.0)
    est = sim.baum_katz_partial_sum(spec, 1.0, 0.5, M_max, N, reps, seed, workers)
    rec = {"dist": str(spec), "q": 1.0, "eps": 0.5, "M_max": M_max, "N": N, "reps": reps, "seed": seed,
           "partial_sum": est.partial_sum, "bound": est.bound.raw, "ok": est.partial_sum <= est.bound.raw}
    return SuiteResult("baum-katz", rec["ok"], [rec], {"partial_sum": est.partial_sum, "bound": est.bound.raw})


# monotonicity -----------------------------------------------------------------------

def _random_spec(rng: np.random.Generator, min_alpha: float) -> DistributionSpec:
    family = ("two-point", "gaussian", "uniform", "pareto")[rng.integers(4)]
    if family == "pareto":
        return DistributionSpec(family, float(rng.uniform(min_alpha + 0.05, 6.0)))
    return DistributionSpec(family, float(np.exp(rng.uniform(-2, 2))))


def _nonincreasing(values, rtol: float = 1e-12) -> bool:
    v = np.asarray(values, dtype=float)
    return bool(np.all(v[1:] <= v[:-1] + rtol * np.abs(v[:-1])))


def _random_bound_path(rng: np.random.Generator, which: str) -> tuple[dict, list[float]]:
    eps = float(np.exp(rng.uniform(np.log(0.02), np.log(3.0))))
    lo = 3 if which in ("lil", "studentized-lil", "darling-robbins") else 1
    ms = np.unique(np.exp(rng.uniform(np.log(lo), np.log(1e12), 8)).astype(np.int64))
    ms = ms[ms >= lo]
    if which == "l1":
        spec, lam = _random_spec(rng, 1.0), float(rng.uniform(0.01, 0.49))
        U = bd.moment_function(spec, AbsQ(1.0))
        vals = [bd.l1_bound(bd.L1Params(int(m), eps, lam), U).raw for m in ms]
        params = {"dist": str(spec), "lambda": lam}
    elif which == "lq":
        q = float(rng.uniform(1, 1.99))
        spec = _random_spec(rng, q)
        U = bd.moment_function(spec, AbsQ(q))
        vals = [bd.lq_bound(bd.LqParams(int(m), eps, q), U).raw for m in ms]
        params = {"dist": str(spec), "q": q}
    elif which in ("lil", "studentized-lil"):
        spec, lam = _random_spec(rng, 2.0), float(rng.uniform(0.01, 0.49))
        if which == "lil":
            sb = spec.sd * float(rng.uniform(1, 3))
            U = bd.moment_function(spec, CenteredSquare())
            vals = [bd.lil_bound(bd.LilParams(int(m), eps, sb, lam), U).raw for m in ms]
        else:
            sb = spec.sd
            U = bd.moment_function(spec, NormalizedSquare())
            vals = [bd.studentized_lil_bound(bd.LilParams(int(m), eps, sb, lam), U).raw for m in ms]
        params = {"dist": str(spec), "lambda": lam, "sigma_bar": sb}
    else:
        vals = [bd.darling_robbins_bound(int(m), eps).raw for m in ms]
        params = {}
    return {"eps": eps, "m_min": int(ms[0]), "m_max": int(ms[-1]), **params}, vals


def monotonicity(seed: int, draws: int = 1_000, stream_len: int = 300) -> SuiteResult:
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    records = []
    for which in ("l1", "lq", "lil", "studentized-lil", "darling-robbins"):
        bad = 0
        for _ in range(draws):
            params, vals = _random_bound_path(rng, which)
            if not _nonincreasing(vals):
                bad += 1
                records.append({"check": f"bound:{which}", "ok": False, **params})
        records.append({"check": f"bound:{which}", "draws": draws, "violations": bad, "ok": bad == 0})

    kinds = [AbsQ(1.0), AbsQ(1.5), CenteredSquare(), NormalizedSquare()]
    bad = 0
    for _ in range(draws):
        kind = kinds[rng.integers(len(kinds))]
        spec = _random_spec(rng, 1.5 if kind == AbsQ(1.5) else (1.0 if kind == AbsQ(1.0) else 2.0))
        xs = np.sort(np.concatenate([[0.0], np.exp(rng.uniform(-8, 5, 7))]))
        if not _nonincreasing([trunc_moment(spec, kind, float(x)) for x in xs]):
            bad += 1
    records.append({"check": "moments", "draws": draws, "violations": bad, "ok": bad == 0})

    # small thresholds so that levels actually latch on short streams
    schedules = [build_slln_eprocess(1.0, DistributionSpec("two-point", 0.01)),
                 build_slln_eprocess(1.5, DistributionSpec("two-point", 0.01))]
    bad = fired = 0
    for i in range(draws):
        spec = _random_spec(rng, 1.5)
        xs = sample_stream(spec, seed, stream_len, replication=i) + float(rng.choice([0.0, 0.1, -0.3]))
        schedule = schedules[i % 2]
        values = run_stream(schedule, xs)
        latch = first_latch_times(schedule, xs)
        offline = [int(np.count_nonzero(latch <= n)) for n in range(1, stream_len + 1)]
        fired += values[-1] > 0
        if np.any(np.diff(values) < 0) or values != offline:
            bad += 1
    records.append({"check": "eprocess", "draws": draws, "violations": bad, "streams_with_latches": fired,
                    "ok": bad == 0})
    return SuiteResult("monotonicity", all(r["ok"] for r in records), records,
                       {"violations": sum(r.get("violations", 0) for r in records)})


# iterated-logarithm ratio ---------------------------------------------------------------

def lil_ratio(seed: int, m: int = 1_000, N: int = 1_000_000, reps: int = 100, workers: int = 1,
              band: tuple[float, float] = (0.5, 1.3)) -> SuiteResult:
    spec = DistributionSpec("gaussian", 1.0)
    out = sim.empirical_lil_ratio(spec, m, N, reps, seed, workers)
    ok = band[0] <= out["mean"] <= band[1]
    rec = {"dist": str(spec), "m": m, "N": N, "reps": reps, "seed": seed, "mean": out["mean"], "sd": out["sd"],
           "band_lo": band[0], "band_hi": band[1], "ok": ok}
    return SuiteResult("lil-ratio", ok, [rec], {"mean": out["mean"]})


def run_suite(name: str, seed: int | None = None, workers: int = 1, **kw) -> SuiteResult:
    if name == "moments":
        return moment_agreement(**kw)
    if name == "thresholds":
        return threshold_minimality(**kw)
    if seed is None:
        raise ValueError(f"suite {name!r} is stochastic and needs a seed")
    if name == "dominance":
        return dominance(seed, workers=workers, **kw)
    if name == "eprocess":
        return eprocess_validity(seed, workers=workers, **kw)
    if name == "lemma":
        return lemma(seed=seed, **kw)
    if name == "baum-katz":
        return baum_katz(seed, workers=workers, **kw)
    if name == "monotonicity":
        return monotonicity(seed, **kw)
    if name == "lil-ratio":
        return lil_ratio(seed, workers=workers, **kw)
    raise ValueError(f"unknown suite {name!r}; expected one of {SUITES}")


def finite_or_none(x):
    return None if x is None or (isinstance(x, float) and math.isinf(x)) else x
