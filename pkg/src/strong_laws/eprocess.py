"""E-processes obtained by inverting time-uniform tail bounds.

Each schedule fixes thresholds m_1, ..., m_J with

    m_j = min{m >= domain_min : B(m, 1/j) <= 2^-j},

and the e-process value after n observations is the number of levels j whose
crossing event has occurred at some step k in [m_j, n].  Because the tail mass
of level j is at most 2^-j, E[E_tau] <= 1 at every stopping time.  Thresholds
beyond ``search_cap`` are saturated (``None``) and never latch; truncating at
a finite J only drops nonnegative terms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .bounds import (L1Params, LilParams, LqParams, c_eps, ell_eps, l1_bound, lil_bound, lq_bound,
                     moment_function)
from .distributions import AbsQ, CenteredSquare, DistributionSpec, MomentNotFinite
from .trajectory import TrajectoryState

DEFAULT_J = 20
DEFAULT_SEARCH_CAP = 2 ** 62
KINDS = ("slln", "lil", "scale-invariant", "generic")


class CertificateViolated(ValueError):
    """A bound declared nonincreasing in m was observed to increase."""


class ScaleUndefined(ValueError):
    """The scale-invariant statistic needs a nonzero first observation."""


def _increased(later: float, earlier: float) -> bool:
    return later > earlier * (1 + 1e-9) + 1e-300


@dataclass(frozen=True)
class BoundFunction:
    """``eval(m, eps)``: a tail bound certified nonincreasing in ``m``.

    The certificate is spot-checked on construction.
    """

    eval: Callable[[int, float], float]
    domain_min: int = 1
    name: str = ""

    def __post_init__(self):
        grid = sorted({self.domain_min, self.domain_min + 1, 2 * self.domain_min, 10, 100, 10 ** 4,
                       10 ** 6, 10 ** 9, 10 ** 12, 10 ** 15} - set(range(self.domain_min)))
        for eps in (1.0, 0.5, 0.05):
            values = [self.eval(m, eps) for m in grid]
            for (m1, b1), (m2, b2) in zip(zip(grid, values), zip(grid[1:], values[1:])):
                if b1 < 0 or b2 < 0 or _increased(b2, b1):
                    raise CertificateViolated(
                        f"{self.name or 'bound'} not nonincreasing: B({m1},{eps})={b1} < B({m2},{eps})={b2}")

    def __call__(self, m: int, eps: float) -> float:
        return self.eval(m, eps)


def compute_mj(B: BoundFunction, j: int, search_cap: int = DEFAULT_SEARCH_CAP) -> int | None:
    """Smallest m in [domain_min, search_cap] with B(m, 1/j) <= 2^-j; None if there is none.

    Doubling brackets the threshold and bisection pins it down; both steps rely
    on (and check) monotonicity in m.
    """
    if j < 1:
        raise ValueError(f"j must be >= 1, got {j}")
    if search_cap < max(2, B.domain_min):
        raise ValueError(f"search_cap must be >= max(2, domain_min), got {search_cap}")
    eps, target = 1.0 / j, 2.0 ** -j

    lo = B.domain_min
    b_lo = B(lo, eps)
    if b_lo <= target:
        return lo
    hi = lo
    while True:
        hi = min(2 * hi, search_cap)
        b_hi = B(hi, eps)
        if _increased(b_hi, b_lo):
            raise CertificateViolated(f"B({hi}) = {b_hi} > B({lo}) = {b_lo} at j={j}")
        if b_hi <= target:
            break
        if hi >= search_cap:
            return None
        lo, b_lo = hi, b_hi
    # B(lo) > target >= B(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        b_mid = B(mid, eps)
        if _increased(b_mid, b_lo) or _increased(b_hi, b_mid):
            raise CertificateViolated(f"B not monotone on [{lo}, {hi}] at j={j}")
        if b_mid <= target:
            hi, b_hi = mid, b_mid
        else:
            lo, b_lo = mid, b_mid
    return hi


@dataclass(frozen=True)
class EventLattice:
    """Events A_k^(eps) given by ``membership(prefix, eps)``, where ``prefix`` holds X_1..X_k.

    Membership must be adapted (depend on the prefix only) and monotone:
    member at eps2 implies member at every eps1 <= eps2.
    """

    membership: Callable[[np.ndarray, float], bool]
    name: str = ""


def slln_lattice(q: float) -> EventLattice:
    """A_k^(eps) = {|S_k| / k^(1/q) >= eps}."""
    return EventLattice(lambda prefix, eps: abs(float(np.sum(prefix))) / len(prefix) ** (1 / q) >= eps,
                        f"slln(q={q:g})")


@dataclass(frozen=True)
class EProcessSchedule:
    kind: str
    thresholds: tuple[int | None, ...]
    bound: BoundFunction
    q: float = 1.0
    sigma: float = 1.0
    lattice: EventLattice | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not self.thresholds:
            raise ValueError("a schedule needs J >= 1")
        if self.kind == "generic" and self.lattice is None:
            raise ValueError("generic schedules need an event lattice")

    @property
    def J(self) -> int:
        return len(self.thresholds)

    def finite(self) -> list[tuple[int, int]]:
        """(j, m_j) for every non-saturated level."""
        return [(j, m) for j, m in enumerate(self.thresholds, start=1) if m is not None]

    def hits(self, j: int, k: int, s_k: float, x1: float | None = None, prefix=None) -> bool:
        """Whether the level-j crossing event holds at step k."""
        if self.kind == "slln":
            return abs(s_k) / k ** (1 / self.q) >= 1 / j
        if self.kind == "lil":
            return abs(s_k) / self.sigma >= _lil_level(k, 1 / j)
        if self.kind == "scale-invariant":
            return abs(s_k) / (k * abs(x1)) >= 1 / j
        return bool(self.lattice.membership(np.asarray(prefix[:k], dtype=float), 1 / j))

    def hits_path(self, j: int, ks: np.ndarray, s: np.ndarray, x1: float | None = None) -> np.ndarray:
        """Vectorised :meth:`hits` over steps ``ks`` with partial sums ``s`` (not for generic)."""
        if self.kind == "slln":
            return np.abs(s) / ks ** (1 / self.q) >= 1 / j
        if self.kind == "lil":
            return np.abs(s) / self.sigma >= _lil_level(ks, 1 / j)
        if self.kind == "scale-invariant":
            return np.abs(s) / (ks * abs(x1)) >= 1 / j
        raise TypeError("generic schedules are evaluated step by step")


def _lil_level(k, eps):
    kf = np.asarray(k, dtype=float)
    out = c_eps(eps) * np.sqrt(kf * (np.log(np.log((1 + eps) ** 2 * kf)) + ell_eps(eps)))
    return float(out) if np.ndim(out) == 0 else out


def _schedule(kind, B, J, search_cap, **kw) -> EProcessSchedule:
    if J < 1:
        raise ValueError(f"J must be >= 1, got {J}")
    return EProcessSchedule(kind, tuple(compute_mj(B, j, search_cap) for j in range(1, J + 1)), B, **kw)


def build_slln_eprocess(q: float, spec: DistributionSpec, J: int = DEFAULT_J,
                        search_cap: int = DEFAULT_SEARCH_CAP) -> EProcessSchedule:
    """Levels |S_k|/k^(1/q) >= 1/j, thresholds from the L^q strong-law bound at eps = 1/j."""
    if not spec.abs_moment_finite(q):
        raise MomentNotFinite(f"E|X|^{q:g} is infinite for {spec}")
    Uq = moment_function(spec, AbsQ(q))
    B = BoundFunction(lambda m, eps: lq_bound(LqParams(m, eps, q), Uq).raw, 1, f"lq(q={q:g}, {spec})")
    return _schedule("slln", B, J, search_cap, q=q)


def build_lil_eprocess(spec: DistributionSpec, sigma_P: float | None = None, J: int = DEFAULT_J,
                       search_cap: int = DEFAULT_SEARCH_CAP) -> EProcessSchedule:
    """Levels |S_k/sigma_P| >= c_{1/j} sqrt(k (log log((1+1/j)^2 k) + ell_{1/j})).

    Thresholds invert the L^2 iterated-logarithm bound with lambda = 1/3,
    eps = 1/j, sigma_bar = sigma_P, and the stitching addend taken at 2m/3.
    Most deep levels saturate: that addend decays like a small power of log m.
    """
    if spec.family == "pareto" and spec.param <= 2:
        raise MomentNotFinite(f"variance is infinite for {spec}")
    sigma = spec.sd if sigma_P is None else sigma_P
    Ubar2 = moment_function(spec, CenteredSquare())
    B = BoundFunction(
        lambda m, eps: lil_bound(LilParams(m, eps, sigma_bar=sigma, lam=1 / 3), Ubar2, log_arg_factor=2 / 3).raw,
        2, f"lil({spec})")
    return _schedule("lil", B, J, search_cap, sigma=sigma)


_UNIT_TWO_POINT = moment_function(DistributionSpec("two-point", 1.0), AbsQ(1.0))


def build_scale_invariant_eprocess(J: int = DEFAULT_J, search_cap: int = DEFAULT_SEARCH_CAP) -> EProcessSchedule:
    """Levels |S_k| / (k |X_1|) >= 1/j, valid for every symmetric two-point law at once.

    Given |X_1| = b the rescaled stream behaves like the unit two-point law, so
    thresholds come from the L^1 bound for that law with lambda = 1/3.
    """
    B = BoundFunction(lambda m, eps: l1_bound(L1Params(m, eps, lam=1 / 3), _UNIT_TWO_POINT).raw,
                      2, "l1(two-point:1, lambda=1/3)")
    return _schedule("scale-invariant", B, J, search_cap)


def build_generic_eprocess(lattice: EventLattice, B: BoundFunction, J: int = DEFAULT_J,
                           search_cap: int = DEFAULT_SEARCH_CAP) -> EProcessSchedule:
    """Thresholds from any bound B(m, eps) >= sup_P P[union_{k>=m} A_k^(eps)]."""
    return _schedule("generic", B, J, search_cap, lattice=lattice)


@dataclass
class EProcessState:
    """Online e-process value for one stream; create with :meth:`start`."""

    schedule: EProcessSchedule
    n: int = 0
    value: int = 0
    latches: list[bool] = field(default_factory=list)
    trajectory: TrajectoryState = field(default_factory=TrajectoryState)
    x1: float | None = None
    prefix: list[float] | None = None

    @classmethod
    def start(cls, schedule: EProcessSchedule) -> "EProcessState":
        return cls(schedule, latches=[False] * schedule.J,
                   prefix=[] if schedule.kind == "generic" else None)

    def update(self, x: float) -> "EProcessState":
        sched = self.schedule
        if self.n == 0:
            if sched.kind == "scale-invariant" and x == 0:
                raise ScaleUndefined("scale-invariant statistic undefined: first observation is 0")
            self.x1 = x
        self.trajectory.push(x)
        if self.prefix is not None:
            self.prefix.append(x)
        self.n += 1
        n, s = self.n, self.trajectory.S_n
        for i, m in enumerate(sched.thresholds):
            if self.latches[i] or m is None or n < m:
                continue
            if sched.hits(i + 1, n, s, self.x1, self.prefix):
                self.latches[i] = True
                self.value += 1
        return self


def update(state: EProcessState, x: float) -> EProcessState:
    return state.update(x)


def run_stream(schedule: EProcessSchedule, xs: Sequence[float]) -> list[int]:
    """E_1, ..., E_n along ``xs``."""
    state = EProcessState.start(schedule)
    return [state.update(float(x)).value for x in xs]


def first_latch_times(schedule: EProcessSchedule, xs: np.ndarray) -> np.ndarray:
    """Per level j, the first step k >= m_j where level j is crossed (inf if never within len(xs)).

    E_n equals the number of entries <= n, so one call gives the whole path.
    """
    xs = np.asarray(xs, dtype=float)
    n = len(xs)
    if schedule.kind == "scale-invariant" and n and xs[0] == 0:
        raise ScaleUndefined("scale-invariant statistic undefined: first observation is 0")
    out = np.full(schedule.J, math.inf)
    live = [(j, m) for j, m in schedule.finite() if m <= n]
    if not live:
        return out
    s = np.cumsum(xs)
    ks = np.arange(1, n + 1, dtype=float)
    for j, m in live:
        if schedule.kind == "generic":
            hit = next((k for k in range(m, n + 1) if schedule.hits(j, k, s[k - 1], xs[0], xs)), None)
            if hit is not None:
                out[j - 1] = hit
            continue
        idx = np.flatnonzero(schedule.hits_path(j, ks[m - 1:], s[m - 1:], xs[0]))
        if idx.size:
            out[j - 1] = m + idx[0]
    return out


def minimality_report(schedule: EProcessSchedule) -> list[dict]:
    """For each finite m_j: B(m_j, 1/j), B(m_j - 1, 1/j) and whether m_j is the minimal threshold."""
    rows = []
    B = schedule.bound
    for j, m in schedule.finite():
        eps, target = 1 / j, 2.0 ** -j
        at = B(m, eps)
        below = B(m - 1, eps) if m > B.domain_min else math.inf
        rows.append({"kind": schedule.kind, "j": j, "m_j": m, "B_at": at, "B_below": below, "target": target,
                     "ok": at <= target < below})
    return rows
