"""``strong-laws`` command-line interface.

Every flag can also come from ``--config file.json``, a single JSON object
whose keys are the flag names without leading dashes.  Flags given on the
command line override the file.  Exit codes: 0 success, 1 a verification
found a violation, 2 usage or domain error.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import sys
import time
from dataclasses import dataclass
from typing import Any, Callable

from . import bounds as bd
from . import simulate as sim
from . import suites
from .distributions import (AbsQ, CenteredSquare, DistributionSpec, LogDeltaMoment, LogMoment, MomentNotFinite,
                            NormalizedSquare, kind_from_name, sample_stream, trunc_moment,
                            trunc_moment_quadrature_oracle)
from .eprocess import (DEFAULT_SEARCH_CAP, CertificateViolated, EProcessState, ScaleUndefined, build_lil_eprocess,
                       build_scale_invariant_eprocess, build_slln_eprocess, compute_mj)

INEQUALITIES = ("l1", "line-crossing", "lq", "lil", "studentized-lil", "darling-robbins", "baum-katz",
                "baum-katz-lil")
MOMENT_KINDS = ("abs-q", "centered-square", "normalized-square", "log-moment", "log-delta")
SCHEDULE_KINDS = ("slln", "lil", "scale-invariant")
TABLES = ("dominance", "eprocess", "thresholds")


class UsageError(Exception):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class Opt:
    name: str
    type: Callable[[str], Any]
    domain: str
    check: Callable[[Any], bool] | None = None
    choices: tuple[str, ...] | None = None
    flag: bool = False


def _positive(x):
    return x > 0 and math.isfinite(x)


def _dist(text: str) -> DistributionSpec:
    try:
        return DistributionSpec.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


DIST = Opt("dist", _dist, "family:param, family in {two-point, gaussian, uniform, pareto}")
SEED = Opt("seed", int, "integer >= 0", lambda v: v >= 0)
WORKERS = Opt("workers", int, "integer >= 1, default 1", lambda v: v >= 1)
REPS = Opt("reps", int, "integer >= 2", lambda v: v >= 2)
EPS = Opt("eps", float, "real > 0", _positive)
Q = Opt("q", float, "real in [1, 2), default 1", lambda v: 1 <= v < 2)
LAMBDA = Opt("lambda", float, "real in (0, 1/2)", lambda v: 0 < v < 0.5)
SIGMA_BAR = Opt("sigma-bar", float, "real > 0", _positive)
TIMING = Opt("timing", bool, "add a runtime_s column (makes output run-dependent)", flag=True)

COMMANDS: dict[str, tuple[str, list[Opt]]] = {
    "bound": ("Evaluate one tail bound.", [
        Opt("ineq", str, "inequality", choices=INEQUALITIES), DIST,
        Opt("m", int, "integer >= 1 (>= 2 for lil kinds, >= 3 for darling-robbins)", lambda v: v >= 1),
        EPS, LAMBDA, Q, SIGMA_BAR,
        Opt("gamma", float, "real > 0 (line-crossing)", _positive),
        Opt("x", float, "real > 0 (line-crossing)", _positive),
        Opt("delta", float, "real > 0 (baum-katz-lil)", _positive),
        Opt("tol", float, "real > 0, series tolerance (baum-katz-lil), default 1e-6", _positive)]),
    "moment": ("Evaluate a truncated moment.", [
        DIST, Opt("kind", str, "moment kind", choices=MOMENT_KINDS),
        Opt("x", float, "truncation level, real >= 0", lambda v: v >= 0 and math.isfinite(v)),
        Opt("q", float, "real in [1, 2] (abs-q, log-moment)", lambda v: 1 <= v <= 2),
        Opt("eps", float, "real > 0 (log-moment)", _positive),
        Opt("delta", float, "real > 0 (log-delta)", _positive),
        Opt("oracle", bool, "also evaluate the quadrature oracle", flag=True)]),
    "mj": ("Compute e-process thresholds m_j.", [
        Opt("kind", str, "schedule kind", choices=SCHEDULE_KINDS),
        Opt("dist", _dist, "family:param (slln, lil)"), Q,
        Opt("j", int, "integer >= 1; omit for the whole schedule", lambda v: v >= 1),
        Opt("J", int, "integer >= 1, default 20", lambda v: v >= 1),
        Opt("search-cap", int, "integer >= 2, default 2^62", lambda v: v >= 2)]),
    "eprocess-run": ("Stream observations through an e-process.", [
        Opt("kind", str, "schedule kind", choices=SCHEDULE_KINDS),
        Opt("dist", _dist, "family:param; law for thresholds and, with --n, for the stream"), Q,
        Opt("J", int, "integer >= 1, default 20", lambda v: v >= 1),
        Opt("input", str, "file with one observation per line, '-' for stdin"),
        Opt("n", int, "integer >= 0, sample this many observations from --dist (needs --seed)",
            lambda v: v >= 0),
        SEED,
        Opt("every", int, "integer >= 1, print every k-th step, default 1", lambda v: v >= 1)]),
    "simulate": ("Estimate a finite-horizon crossing probability.", [
        DIST, Opt("statistic", str, "crossing statistic", choices=sim.STATISTICS),
        Opt("m", int, "integer >= 1", lambda v: v >= 1), Opt("N", int, "integer >= m", lambda v: v >= 1),
        EPS, Q, LAMBDA, SIGMA_BAR, Opt("reps", int, "integer >= 1", lambda v: v >= 1), SEED, WORKERS, TIMING]),
    "verify": ("Run a verification suite; exit 1 on a violation.", [
        Opt("suite", str, "suite name", choices=suites.SUITES), SEED, WORKERS, REPS,
        Opt("trials", int, "integer >= 1 (lemma instances, monotonicity draws)", lambda v: v >= 1),
        Opt("max-len", int, "integer >= 1 (lemma)", lambda v: v >= 1)]),
    "table": ("Reproduce an acceptance grid as records.", [
        Opt("grid", str, "grid name", choices=TABLES), SEED, WORKERS, REPS, TIMING]),
}

REQUIRED = {"bound": ("ineq",), "moment": ("dist", "kind", "x"), "mj": ("kind",), "eprocess-run": ("kind",),
            "simulate": ("dist", "statistic", "m", "N", "eps", "reps", "seed"), "verify": ("suite",),
            "table": ("grid",)}


def _dest(name: str) -> str:
    return name.replace("-", "_")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="strong-laws", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    for cmd, (text, opts) in COMMANDS.items():
        p = sub.add_parser(cmd, help=text, description=text)
        for o in opts:
            kw: dict[str, Any] = {"dest": _dest(o.name), "default": argparse.SUPPRESS}
            req = " [required]" if o.name in REQUIRED[cmd] else ""
            if o.flag:
                p.add_argument(f"--{o.name}", action="store_true", help=o.domain + req, **kw)
            else:
                p.add_argument(f"--{o.name}", type=o.type, choices=o.choices, help=o.domain + req, **kw)
        p.add_argument("--config", help="JSON object with flag names as keys; flags override it",
                       default=argparse.SUPPRESS)
        p.add_argument("--output", help="output path, default standard output", default=argparse.SUPPRESS)
        p.add_argument("--format", choices=("csv", "jsonl"), help="record format, default csv",
                       default=argparse.SUPPRESS)
    return parser


def _from_config(cmd: str, path: str) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError("--config", f"cannot read {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("--config", "must contain a single JSON object")
    opts = {o.name: o for o in COMMANDS[cmd][1]}
    out = {}
    for key, value in data.items():
        if key in ("output", "format"):
            out[key] = value
            continue
        if key not in opts:
            raise UsageError(f"--config key {key!r}", f"unknown for command {cmd!r}")
        o = opts[key]
        if o.flag:
            if not isinstance(value, bool):
                raise UsageError(f"--config key {key!r}", "must be true or false")
            out[_dest(key)] = value
            continue
        try:
            converted = o.type(str(value)) if o.type is not str else value
            if o.type is int and isinstance(value, float) and value != int(value):
                raise ValueError("not an integer")
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"--config key {key!r}", str(exc)) from exc
        if o.choices and converted not in o.choices:
            raise UsageError(f"--config key {key!r}", f"must be one of {o.choices}")
        out[_dest(key)] = converted
    return out


def resolve(argv: list[str]) -> dict:
    """Parse flags, merge the config file underneath them and validate every domain."""
    ns = vars(build_parser().parse_args(argv))
    cmd = ns.pop("command")
    values = _from_config(cmd, ns.pop("config")) if "config" in ns else {}
    values.update(ns)
    values.setdefault("output", None)
    values.setdefault("format", "csv")
    if values["format"] not in ("csv", "jsonl"):
        raise UsageError("--format", "must be csv or jsonl")
    for o in COMMANDS[cmd][1]:
        d = _dest(o.name)
        if o.flag:
            values.setdefault(d, False)
        elif d in values and o.check is not None and not o.check(values[d]):
            raise UsageError(f"--{o.name}", f"must be {o.domain} (got {values[d]!r})")
    for name in REQUIRED[cmd]:
        if _dest(name) not in values:
            raise UsageError(f"--{name}", "is required")
    values["command"] = cmd
    return values


def _need(v: dict, name: str, why: str):
    if _dest(name) not in v:
        raise UsageError(f"--{name}", f"is required {why}")
    return v[_dest(name)]


# commands -------------------------------------------------------------------

def _bound(v: dict) -> tuple[list[dict], bool]:
    ineq = v["ineq"]
    eps = _need(v, "eps", f"for --ineq {ineq}")
    rec: dict[str, Any] = {"ineq": ineq, "eps": eps}
    if ineq in ("baum-katz", "baum-katz-lil", "darling-robbins"):
        spec = _need(v, "dist", f"for --ineq {ineq}") if ineq != "darling-robbins" else None
    else:
        spec = _need(v, "dist", f"for --ineq {ineq}")
    if spec is not None:
        rec["dist"] = str(spec)
    if ineq == "l1":
        m, lam = _need(v, "m", "for l1"), v.get("lambda", 0.25)
        rec.update(m=m, **{"lambda": lam})
        b = bd.l1_bound(bd.L1Params(m, eps, lam), bd.moment_function(spec, AbsQ(1.0)))
    elif ineq == "line-crossing":
        gamma, x = _need(v, "gamma", "for line-crossing"), _need(v, "x", "for line-crossing")
        rec.update(gamma=gamma, x=x)
        b = bd.line_crossing_bound(eps, gamma, x, bd.moment_function(spec, AbsQ(1.0)))
    elif ineq == "lq":
        m, q = _need(v, "m", "for lq"), v.get("q", 1.0)
        rec.update(m=m, q=q)
        b = bd.lq_bound(bd.LqParams(m, eps, q), bd.moment_function(spec, AbsQ(q)))
    elif ineq in ("lil", "studentized-lil"):
        m, lam = _need(v, "m", f"for {ineq}"), v.get("lambda", 1 / 3)
        if ineq == "lil":
            sb = v.get("sigma_bar", spec.sd)
            b = bd.lil_bound(bd.LilParams(m, eps, sb, lam, sigma_P=spec.sd),
                             bd.moment_function(spec, CenteredSquare()))
        else:
            sb = spec.sd
            b = bd.studentized_lil_bound(bd.LilParams(m, eps, sb, lam), bd.moment_function(spec, NormalizedSquare()))
        rec.update(m=m, **{"lambda": lam, "sigma_bar": sb})
    elif ineq == "darling-robbins":
        m = _need(v, "m", "for darling-robbins")
        rec["m"] = m
        b = bd.darling_robbins_bound(m, eps)
    elif ineq == "baum-katz":
        q = v.get("q", 1.0)
        rec["q"] = q
        b = bd.baum_katz_series_bound(q, eps, trunc_moment(spec, LogMoment(q, eps), 0.0))
    else:
        delta = _need(v, "delta", "for baum-katz-lil")
        rec["delta"] = delta
        b = bd.baum_katz_lil_series_bound(eps, delta, trunc_moment(spec, LogDeltaMoment(delta), 0.0),
                                          tol=v.get("tol", 1e-6))
    rec.update(raw=b.raw, clamped=b.clamped, error=b.error)
    rec.update({f"component:{name}": val for name, val in b.components})
    return [rec], True


def _moment(v: dict) -> tuple[list[dict], bool]:
    spec, x = v["dist"], v["x"]
    kind = kind_from_name(v["kind"], v.get("q"), v.get("eps"), v.get("delta"))
    rec = {"dist": str(spec), "kind": v["kind"], "x": x, "value": trunc_moment(spec, kind, x)}
    if v["oracle"]:
        rec["oracle"] = trunc_moment_quadrature_oracle(spec, kind, x)
    return [rec], True


def _schedule(v: dict, J: int, search_cap: int = DEFAULT_SEARCH_CAP):
    kind = v["kind"]
    if kind == "scale-invariant":
        return build_scale_invariant_eprocess(J, search_cap)
    spec = _need(v, "dist", f"for --kind {kind}")
    if kind == "slln":
        return build_slln_eprocess(v.get("q", 1.0), spec, J, search_cap)
    return build_lil_eprocess(spec, J=J, search_cap=search_cap)


def _mj(v: dict) -> tuple[list[dict], bool]:
    cap = v.get("search_cap", DEFAULT_SEARCH_CAP)
    if "j" in v:
        sched = _schedule(v, 1, cap)
        m = compute_mj(sched.bound, v["j"], cap)
        rows = [(v["j"], m)]
    else:
        sched = _schedule(v, v.get("J", 20), cap)
        rows = list(enumerate(sched.thresholds, start=1))
    return [{"kind": v["kind"], "j": j, "m_j": "saturated" if m is None else m} for j, m in rows], True


def _read_stream(path: str) -> list[float]:
    fh = sys.stdin if path == "-" else open(path)
    try:
        out = []
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(float(line))
            except ValueError as exc:
                raise UsageError("--input", f"line {lineno} is not a number: {line!r}") from exc
        return out
    finally:
        if fh is not sys.stdin:
            fh.close()


def _eprocess_run(v: dict) -> tuple[list[dict], bool]:
    if ("input" in v) == ("n" in v):
        raise UsageError("--input/--n", "give exactly one stream source")
    if "n" in v:
        seed = _need(v, "seed", "when sampling a stream with --n")
        spec = _need(v, "dist", "when sampling a stream with --n")
        xs = [float(x) for x in sample_stream(spec, seed, v["n"])]
    else:
        xs = _read_stream(v["input"])
    state = EProcessState.start(_schedule(v, v.get("J", 20)))
    every, rows = v.get("every", 1), []
    for x in xs:
        state.update(x)
        if state.n % every == 0 or state.n == len(xs):
            rows.append({"n": state.n, "x": x, "S_n": state.trajectory.S_n, "E_n": state.value})
    return rows, True


def _simulate(v: dict) -> tuple[list[dict], bool]:
    cfg = sim.SimConfig(spec=v["dist"], statistic=v["statistic"], m=v["m"], N=v["N"], eps=v["eps"],
                        reps=v["reps"], seed=v["seed"], q=v.get("q", 1.0), lam=v.get("lambda"),
                        sigma_bar=v.get("sigma_bar"), workers=v.get("workers", 1))
    t0 = time.perf_counter()
    est = sim.estimate_crossing(cfg)
    rt = time.perf_counter() - t0 if v["timing"] else None
    return [sim.crossing_record(cfg, est, rt)], True


def _suite_kwargs(v: dict, name: str) -> dict:
    kw = {}
    if "reps" in v:
        if name not in ("dominance", "eprocess", "baum-katz", "lil-ratio"):
            raise UsageError("--reps", f"not used by suite {name!r}")
        kw["reps"] = v["reps"]
    if "trials" in v:
        if name not in ("lemma", "monotonicity"):
            raise UsageError("--trials", f"not used by suite {name!r}")
        kw["trials" if name == "lemma" else "draws"] = v["trials"]
    if "max_len" in v:
        if name != "lemma":
            raise UsageError("--max-len", "only used by suite 'lemma'")
        kw["max_len"] = v["max_len"]
    return kw


def _verify(v: dict) -> tuple[list[dict], bool]:
    name = v["suite"]
    if name not in ("moments", "thresholds") and "seed" not in v:
        raise UsageError("--seed", f"is required for the stochastic suite {name!r}")
    res = suites.run_suite(name, v.get("seed"), v.get("workers", 1), **_suite_kwargs(v, name))
    print(f"{'PASS' if res.passed else 'FAIL'} {name} {json.dumps(res.summary)}", file=sys.stderr)
    return res.records, res.passed


def _table(v: dict) -> tuple[list[dict], bool]:
    grid = v["grid"]
    t0 = time.perf_counter()
    if grid == "thresholds":
        res = suites.threshold_minimality()
    else:
        seed = _need(v, "seed", f"for the stochastic grid {grid!r}")
        reps = v.get("reps", 10_000)
        fn = suites.dominance if grid == "dominance" else suites.eprocess_validity
        res = fn(seed, reps=reps, workers=v.get("workers", 1))
    if v["timing"]:
        print(f"runtime_s={time.perf_counter() - t0:.3f}", file=sys.stderr)
    return res.records, True


HANDLERS = {"bound": _bound, "moment": _moment, "mj": _mj, "eprocess-run": _eprocess_run, "simulate": _simulate,
            "verify": _verify, "table": _table}


def run(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        v = resolve(argv)
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"strong-laws: error: {exc}", file=sys.stderr)
        return 2
    try:
        records, ok = HANDLERS[v["command"]](v)
    except UsageError as exc:
        print(f"strong-laws {v['command']}: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, MomentNotFinite, ScaleUndefined, CertificateViolated, bd.BoundaryUndefined) as exc:
        print(f"strong-laws {v['command']}: error: {exc}", file=sys.stderr)
        return 2
    buf = io.StringIO()
    sim.write_records(records, buf, v["format"])
    if v["output"]:
        with open(v["output"], "w") as fh:
            fh.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0 if ok else 1


def main(argv: list[str] | None = None) -> int:
    return run(argv)
