"""Zero-mean i.i.d. families, samplers and truncated-moment functionals.

Random streams
--------------
Every stream is drawn from numpy's ``PCG64`` bit generator seeded through
``numpy.random.SeedSequence``.  Replication ``r`` of a run with master seed
``seed`` uses ``SeedSequence(seed, spawn_key=(r,))``; this is the splitting
rule, and it does not depend on how replications are scheduled over workers.
Draws are consumed in a fixed order per family (see ``_draw``), so a stream is
a function of ``(spec, seed, r, n)`` only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy import integrate, optimize, special

FAMILIES = ("two-point", "gaussian", "uniform", "pareto")


class MomentNotFinite(ValueError):
    """Requested functional diverges for this family."""


class QuadratureFailure(RuntimeError):
    """Numerical integration did not reach the requested tolerance."""


@dataclass(frozen=True)
class DistributionSpec:
    """A symmetric (hence mean-zero) law.

    ``param`` is ``b`` for two-point (X = +-b), ``sigma`` for gaussian,
    ``a`` for uniform on [-a, a] and the tail index ``alpha`` for pareto
    (random sign, P[|X| > t] = t**-alpha for t >= 1).
    """

    family: str
    param: float

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if not (math.isfinite(self.param) and self.param > 0):
            raise ValueError(f"{self.family} parameter must be positive, got {self.param}")
        if self.family == "pareto" and self.param <= 1:
            raise ValueError(f"pareto tail index must exceed 1, got {self.param}")

    @classmethod
    def parse(cls, text: str) -> "DistributionSpec":
        """Parse ``"family:param"``, e.g. ``"two-point:1"`` or ``"pareto:1.5"``."""
        family, sep, value = text.partition(":")
        if not sep:
            raise ValueError(f"distribution must look like family:param, got {text!r}")
        try:
            param = float(value)
        except ValueError:
            raise ValueError(f"bad distribution parameter in {text!r}") from None
        return cls(family.strip(), param)

    def __str__(self):
        return f"{self.family}:{self.param:g}"

    def abs_moment_finite(self, q: float) -> bool:
        return self.family != "pareto" or q < self.param

    def abs_moment(self, q: float) -> float:
        """E|X|**q."""
        p = self.param
        if self.family == "two-point":
            return p ** q
        if self.family == "gaussian":
            return p ** q * 2 ** (q / 2) * special.gamma((q + 1) / 2) / math.sqrt(math.pi)
        if self.family == "uniform":
            return p ** q / (q + 1)
        if q >= p:
            raise MomentNotFinite(f"E|X|^{q:g} is infinite for {self}")
        return p / (p - q)

    @property
    def variance(self) -> float:
        return self.abs_moment(2.0)

    @property
    def sd(self) -> float:
        return math.sqrt(self.variance)

    @property
    def subgaussian_proxy(self) -> float | None:
        """Smallest sigma with E exp(tX) <= exp(t^2 sigma^2 / 2), or None."""
        if self.family == "pareto":
            return None
        if self.family == "uniform":
            return self.param / math.sqrt(3.0)
        return self.param


# truncated-moment kinds -----------------------------------------------------

@dataclass(frozen=True)
class AbsQ:
    """E[|X|^q 1{|X|^q >= x}]."""

    q: float

    def __post_init__(self):
        if not 1 <= self.q <= 2:
            raise ValueError(f"AbsQ needs q in [1, 2], got {self.q}")


@dataclass(frozen=True)
class CenteredSquare:
    """E[|X^2 - s^2| 1{|X^2 - s^2| >= x}] with s^2 the variance."""


@dataclass(frozen=True)
class NormalizedSquare:
    """E[(X^2/s^2) 1{X^2/s^2 >= x}] with s^2 the variance."""


@dataclass(frozen=True)
class LogMoment:
    """E[g 1{g >= x}], g = |X|^q log(38 |X|^q / eps^q + 1)."""

    q: float
    eps: float


@dataclass(frozen=True)
class LogDeltaMoment:
    """E[g 1{g >= x}], g = X^2 log^delta(X^2 + 1)."""

    delta: float


TruncatedMomentKind = Union[AbsQ, CenteredSquare, NormalizedSquare, LogMoment, LogDeltaMoment]


def _require_finite(spec: DistributionSpec, kind) -> None:
    if spec.family != "pareto":
        return
    alpha = spec.param
    if isinstance(kind, (AbsQ, LogMoment)):
        ok = kind.q < alpha
    else:
        ok = alpha > 2
    if not ok:
        raise MomentNotFinite(f"{type(kind).__name__} is infinite for {spec}")


def _transform(spec: DistributionSpec, kind, variance: float) -> Callable[[np.ndarray], np.ndarray]:
    """The functional's integrand as a function of |X| = u."""
    if isinstance(kind, AbsQ):
        return lambda u: u ** kind.q
    if isinstance(kind, CenteredSquare):
        return lambda u: np.abs(u * u - variance)
    if isinstance(kind, NormalizedSquare):
        return lambda u: u * u / variance
    if isinstance(kind, LogMoment):
        return lambda u: u ** kind.q * np.log(38.0 * u ** kind.q / kind.eps ** kind.q + 1.0)
    if isinstance(kind, LogDeltaMoment):
        return lambda u: u * u * np.log(u * u + 1.0) ** kind.delta
    raise TypeError(f"unknown truncated moment kind {kind!r}")


# closed forms --------------------------------------------------------------

def _upper_gamma(a: float, y: float) -> float:
    return special.gammaincc(a, y) * special.gamma(a)


def _gauss_abs(q: float, t: float, sigma: float) -> float:
    # E[|X|^q 1{|X| >= t}], X ~ N(0, sigma^2)
    return sigma ** q * 2 ** (q / 2) * _upper_gamma((q + 1) / 2, (t / sigma) ** 2 / 2) / math.sqrt(math.pi)


def _gauss_centered(x: float, sigma: float) -> float:
    y = x / sigma ** 2
    # W = Z^2 ~ chi2(1); E[W 1{W >= c}] = P[chi2(3) >= c]
    hi = 1.0 + y
    total = special.gammaincc(1.5, hi / 2) - special.gammaincc(0.5, hi / 2)
    if y < 1:
        lo = 1.0 - y
        total += special.gammainc(0.5, lo / 2) - special.gammainc(1.5, lo / 2)
    return sigma ** 2 * total


def _uniform_centered(x: float, a: float) -> float:
    y = x / a ** 2
    total = 0.0
    if y <= 2 / 3:
        u1 = math.sqrt(1 / 3 + y)
        total += (1 - u1 ** 3) / 3 - (1 - u1) / 3
    if y <= 1 / 3:
        u0 = math.sqrt(1 / 3 - y)
        total += u0 / 3 - u0 ** 3 / 3
    return a ** 2 * total


def _pareto_centered(x: float, alpha: float) -> float:
    var = alpha / (alpha - 2)

    def second(t):  # E[X^2 1{|X| >= t}], t >= 1
        return alpha / (alpha - 2) * t ** (2 - alpha)

    t_up = math.sqrt(var + x)
    total = second(t_up) - var * t_up ** -alpha
    if var - x > 1:
        t_lo = math.sqrt(var - x)
        total += var * (1 - t_lo ** -alpha) - (second(1.0) - second(t_lo))
    return total


def trunc_moment(spec: DistributionSpec, kind: TruncatedMomentKind, x: float) -> float:
    """Closed-form truncated moment of ``spec`` at truncation level ``x``.

    The log-weighted kinds have no closed form here and fall back to the
    quadrature path.
    """
    if x < 0 or math.isnan(x):
        raise ValueError(f"truncation level must be nonnegative, got {x}")
    _require_finite(spec, kind)
    if isinstance(kind, (LogMoment, LogDeltaMoment)):
        return trunc_moment_quadrature_oracle(spec, kind, x)

    fam, p = spec.family, spec.param
    if isinstance(kind, AbsQ):
        q = kind.q
        if fam == "two-point":
            return p ** q if x <= p ** q else 0.0
        t = x ** (1 / q)
        if fam == "gaussian":
            return _gauss_abs(q, t, p)
        if fam == "uniform":
            return 0.0 if t >= p else (p ** (q + 1) - t ** (q + 1)) / ((q + 1) * p)
        return p / (p - q) * max(t, 1.0) ** (q - p)

    if isinstance(kind, NormalizedSquare):
        if fam == "two-point":
            return 1.0 if x <= 1 else 0.0
        if fam == "gaussian":
            return _gauss_abs(2.0, math.sqrt(x), 1.0)
        if fam == "uniform":
            t = math.sqrt(x / 3)
            return 0.0 if t >= 1 else 1 - t ** 3
        var = p / (p - 2)
        t = max(math.sqrt(x * var), 1.0)
        return t ** (2 - p) * p / (p - 2) / var

    if isinstance(kind, CenteredSquare):
        if fam == "two-point":
            return 0.0
        if fam == "gaussian":
            return _gauss_centered(x, p)
        if fam == "uniform":
            return _uniform_centered(x, p)
        return _pareto_centered(x, p)

    raise TypeError(f"unknown truncated moment kind {kind!r}")


# quadrature oracle -----------------------------------------------------------

def _abs_law(spec: DistributionSpec):
    """(point masses, density, support) for |X|; density None for atoms."""
    p = spec.param
    if spec.family == "two-point":
        return {p: 1.0}, None, (p, p)
    if spec.family == "gaussian":
        return None, (lambda u: 2 * np.exp(-0.5 * (u / p) ** 2) / (p * math.sqrt(2 * math.pi))), (0.0, math.inf)
    if spec.family == "uniform":
        return None, (lambda u: 1.0 / p), (0.0, p)
    return None, (lambda u: p * u ** (-p - 1)), (1.0, math.inf)


_TOL = 1e-10


def _quad(f, a, b):
    if math.isinf(b):
        # u = a' * e^v turns power-law tails into exponential ones
        base = max(a, 1.0)
        head = 0.0
        if a < base:
            head, err0 = integrate.quad(f, a, base, epsabs=_TOL / 10, epsrel=1e-12, limit=400)
            if err0 > _TOL:
                raise QuadratureFailure(f"error estimate {err0:.2e} on [{a}, {base}]")

        def stretched(v):
            if v > 300:  # every supported integrand is negligible past u = e^300
                return 0.0
            u = base * math.exp(v)
            return f(u) * u

        val, err = integrate.quad(stretched, 0.0, math.inf, epsabs=_TOL / 10, epsrel=1e-12, limit=400)
        if err > _TOL:
            raise QuadratureFailure(f"error estimate {err:.2e} on [{base}, inf)")
        return head + val
    val, err = integrate.quad(f, a, b, epsabs=_TOL / 10, epsrel=1e-12, limit=400)
    if err > _TOL:
        raise QuadratureFailure(f"error estimate {err:.2e} on [{a}, {b}]")
    return val


def _level_crossings(g, x, lo, hi):
    """Points in (lo, hi) where g - x changes sign, located on a log grid."""
    top = hi if math.isfinite(hi) else max(lo, 1.0) * 1e8
    start = lo if lo > 0 else 1e-12
    grid = np.unique(np.concatenate([[lo], np.geomspace(start, top, 4000), np.linspace(lo, min(top, 50.0), 4000)]))
    grid = grid[(grid >= lo) & (grid <= top)]
    vals = g(grid) - x
    # a dip of g below x can fall between two grid points; polish each discrete local minimum
    dips = [i for i in range(1, len(grid) - 1) if vals[i] < vals[i - 1] and vals[i] <= vals[i + 1]]
    if dips:
        extra = [optimize.minimize_scalar(g, bounds=(grid[i - 1], grid[i + 1]), method="bounded",
                                          options={"xatol": 1e-14}).x for i in dips]
        grid = np.unique(np.concatenate([grid, extra]))
        vals = g(grid) - x
    roots = []
    for i in np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]:
        if vals[i] == 0:
            roots.append(grid[i])
            continue
        roots.append(optimize.brentq(lambda u: g(np.float64(u)) - x, grid[i], grid[i + 1], xtol=1e-15, rtol=1e-15))
    return roots


def trunc_moment_quadrature_oracle(spec: DistributionSpec, kind: TruncatedMomentKind, x: float) -> float:
    """Same functional as :func:`trunc_moment`, by adaptive quadrature over the law of |X|.

    Shares nothing with the closed forms: the variance used by the squared
    kinds is itself integrated numerically.
    """
    if x < 0 or math.isnan(x):
        raise ValueError(f"truncation level must be nonnegative, got {x}")
    _require_finite(spec, kind)
    atoms, density, (lo, hi) = _abs_law(spec)

    if atoms is not None:
        variance = sum(u * u * w for u, w in atoms.items())
        g = _transform(spec, kind, variance)
        return float(sum(w * g(np.float64(u)) for u, w in atoms.items() if g(np.float64(u)) >= x))

    variance = _quad(lambda u: u * u * density(u), lo, hi)
    g = _transform(spec, kind, variance)
    integrand = lambda u: g(np.float64(u)) * density(u)  # noqa: E731

    cuts = [lo, *_level_crossings(g, x, lo, hi), hi]
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b <= a:
            continue
        mid = (a + 2 * b) / 3 if math.isfinite(b) else max(2 * a, a + 1.0)
        if g(np.float64(mid)) >= x:
            total += _quad(integrand, a, b)
    return total


# sampling ----------------------------------------------------------------

def stream_rng(seed: int, replication: int = 0) -> np.random.Generator:
    """Generator for replication ``replication`` of master seed ``seed``."""
    if seed < 0 or replication < 0:
        raise ValueError("seed and replication index must be nonnegative")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replication,))))


def _draw(spec: DistributionSpec, rng: np.random.Generator, n: int) -> np.ndarray:
    p = spec.param
    if spec.family == "two-point":
        return np.where(rng.random(n) < 0.5, -p, p)
    if spec.family == "gaussian":
        return p * rng.standard_normal(n)
    if spec.family == "uniform":
        return rng.uniform(-p, p, n)
    mag = (1.0 - rng.random(n)) ** (-1.0 / p)
    return np.where(rng.random(n) < 0.5, -mag, mag)


def sample_stream(spec: DistributionSpec, seed: int, n: int, replication: int = 0) -> np.ndarray:
    """``n`` i.i.d. draws from ``spec`` for the given (seed, replication)."""
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}")
    return _draw(spec, stream_rng(seed, replication), n)


def kind_from_name(name: str, q: float | None = None, eps: float | None = None,
                   delta: float | None = None) -> TruncatedMomentKind:
    """Build a moment kind from its CLI name."""
    if name == "abs-q":
        return AbsQ(1.0 if q is None else q)
    if name == "centered-square":
        return CenteredSquare()
    if name == "normalized-square":
        return NormalizedSquare()
    if name == "log-moment":
        if eps is None:
            raise ValueError("log-moment needs eps")
        return LogMoment(1.0 if q is None else q, eps)
    if name == "log-delta":
        if delta is None:
            raise ValueError("log-delta needs delta")
        return LogDeltaMoment(delta)
    raise ValueError(f"unknown moment kind {name!r}")
