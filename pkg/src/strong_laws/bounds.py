"""Right-hand sides of the time-uniform tail inequalities, plus their boundaries.

Every tail bound returns a :class:`BoundValue` holding the raw (possibly > 1 or
infinite) value and its labelled addends.  Truncated-moment arguments are plain
callables ``x -> U(x)``; build them with :func:`moment_function`.

``log_b^{-e}(y)`` is read as ``(log y / log b) ** -e``; a nonpositive base-b
logarithm makes that addend ``+inf``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from .distributions import DistributionSpec, TruncatedMomentKind, trunc_moment

MomentFn = Callable[[float], float]


class BoundaryUndefined(ValueError):
    """The boundary's radicand is negative (or its logarithms undefined) at ``k``."""

    def __init__(self, k, message: str | None = None):
        self.k = k
        super().__init__(message or f"boundary undefined at k={k}")


@dataclass(frozen=True)
class BoundValue:
    raw: float
    components: tuple[tuple[str, float], ...] = ()
    # absolute numerical error of ``raw`` (nonzero only for truncated series)
    error: float = 0.0

    @property
    def clamped(self) -> float:
        return clamp(self)


def clamp(b: BoundValue) -> float:
    """The bound as a probability: ``min(1, max(0, raw))``."""
    return min(1.0, max(0.0, b.raw))


def _value(*parts: tuple[str, float], error: float = 0.0) -> BoundValue:
    return BoundValue(sum(v for _, v in parts), tuple(parts), error)


def _check_eps(eps: float) -> None:
    if not (eps > 0 and math.isfinite(eps)):
        raise ValueError(f"eps must be positive and finite, got {eps}")


@dataclass(frozen=True)
class L1Params:
    m: int
    eps: float
    lam: float = 0.25

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be an integer >= 1, got {self.m}")
        _check_eps(self.eps)
        if not 0 < self.lam < 0.5:
            raise ValueError(f"lambda must lie in (0, 1/2), got {self.lam}")


@dataclass(frozen=True)
class LqParams:
    m: int
    eps: float
    q: float = 1.0

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be an integer >= 1, got {self.m}")
        _check_eps(self.eps)
        if not 1 <= self.q < 2:
            raise ValueError(f"q out of range: need q in [1, 2), got {self.q}")


@dataclass(frozen=True)
class LilParams:
    m: int
    eps: float
    sigma_bar: float = 1.0
    lam: float = 1 / 3
    sigma_P: float | None = None

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 2:
            raise ValueError(f"m must be an integer >= 2, got {self.m}")
        _check_eps(self.eps)
        if not 0 < self.lam < 0.5:
            raise ValueError(f"lambda must lie in (0, 1/2), got {self.lam}")
        if not self.sigma_bar > 0:
            raise ValueError(f"sigma_bar must be positive, got {self.sigma_bar}")
        if self.sigma_P is not None and not self.sigma_P <= self.sigma_bar * (1 + 1e-12):
            raise ValueError(f"variance proxy too small: sigma_P={self.sigma_P} > sigma_bar={self.sigma_bar}")


def moment_function(spec: DistributionSpec, kind: TruncatedMomentKind) -> MomentFn:
    return lambda x: trunc_moment(spec, kind, x)


# special functions ---------------------------------------------------------

# B_2, B_4, ..., B_20
_BERNOULLI = (1 / 6, -1 / 30, 1 / 42, -1 / 30, 5 / 66, -691 / 2730, 7 / 6, -3617 / 510, 43867 / 798, -174611 / 330)
_ZETA_TERMS = 20


def zeta(s: float) -> float:
    """Riemann zeta for real ``s > 1``.

    Partial sum up to N-1, the integral tail N^(1-s)/(s-1), and Euler-Maclaurin
    corrections at N; the first omitted correction bounds the remainder and is
    kept below 1e-13 relative.
    """
    if not s > 1:
        raise ValueError(f"zeta domain: need s > 1, got {s}")
    n = _ZETA_TERMS
    head = math.fsum(k ** -s for k in range(1, n))
    tail = n ** (1 - s) / (s - 1) + 0.5 * n ** -s
    rising = s  # s (s+1) ... (s + 2k - 2)
    fact = 2.0  # (2k)!
    corrections = []
    for k, b in enumerate(_BERNOULLI[:-1], start=1):
        corrections.append(b / fact * rising * n ** (-s - 2 * k + 1))
        rising *= (s + 2 * k - 1) * (s + 2 * k)
        fact *= (2 * k + 1) * (2 * k + 2)
    k = len(_BERNOULLI)
    remainder = abs(_BERNOULLI[-1] / fact * rising * n ** (-s - 2 * k + 1))
    value = head + tail + math.fsum(corrections)
    if remainder > 1e-13 * value:
        raise ArithmeticError(f"zeta({s}) remainder {remainder:.2e} too large")
    return value


def c_eps(eps: float) -> float:
    _check_eps(eps)
    return ((1 + eps) ** 1.25 + (1 + eps) ** 0.75) / math.sqrt(2)


def ell_eps(eps: float) -> float:
    _check_eps(eps)
    return math.log(2 * zeta(1 + eps) / math.log1p(eps))


def _root(m: float, r: float) -> float:
    """m ** r, with the square/cube/fourth roots taken exactly where possible."""
    if r == 0.5:
        return math.sqrt(m)
    if r == 0.25:
        return math.sqrt(math.sqrt(m))
    if r == 1 / 3:
        return float(np.cbrt(m))
    return m ** r


def _poly_term(m: int, lam: float) -> float:
    # m ** (2 lam - 1); exact roots for lam in {1/4, 1/3} keep threshold searches honest at the boundary
    if lam == 0.25:
        return 1 / math.sqrt(m)
    if lam == 1 / 3:
        return 1 / float(np.cbrt(m))
    return float(m) ** (2 * lam - 1)


def _log_power(y: float, base: float, power: float) -> float:
    """(log_base y) ** -power, +inf when log_base y <= 0."""
    lg = math.log(y) / math.log(base)
    return math.inf if lg <= 0 else lg ** -power


# strong-law bounds ----------------------------------------------------------

def l1_bound(p: L1Params, U: MomentFn) -> BoundValue:
    """Bound on P[sup_{k>=m} |S_k|/k >= eps] from the truncated first moment U."""
    c = 262 / min(p.eps ** 2, 1.0)
    return _value(("polynomial", c * _poly_term(p.m, p.lam)),
                  ("truncated moment", c * U(_root(p.m, p.lam))))


def line_crossing_bound(eps: float, gamma: float, x: float, U: MomentFn) -> BoundValue:
    """Bound on P[sup_k |S_k|/(k + gamma) >= eps + U(x)]."""
    _check_eps(eps)
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if x < 0:
        raise ValueError(f"x must be nonnegative, got {x}")
    return _value(("truncation", 8 * x * x / (gamma * eps * eps)),
                  ("truncated moment", (16 / eps ** 2 + 2) * U(x)))


def lq_bound(p: LqParams, Uq: MomentFn) -> BoundValue:
    """Bound on P[sup_{k>=m} |S_k|/k^(1/q) >= eps] from the truncated q-th moment Uq."""
    q = p.q
    expo = 2 * math.exp(-(float(p.m) ** (1 / q - 0.5))) / (2 - q)
    level = p.eps ** q * _root(float(p.m), 0.5 - q / 4) / 38
    return _value(("exponential", expo), ("truncated moment", 451 / min(p.eps ** 2, 1.0) * Uq(level)))


# iterated-logarithm bounds ------------------------------------------------------

def lil_bound(p: LilParams, Ubar2: MomentFn, log_arg_factor: float = 1 / 3) -> BoundValue:
    """Bound on P[sup_{k>=m} |S_k|/sigma_bar >= lil_boundary(k)/sigma_bar].

    ``Ubar2`` is the truncated centred-square moment at the true variance.  The
    first addend uses log_{1+eps}(log_arg_factor * m); the default is m/3 and the
    LIL e-process passes 2/3.
    """
    e = p.eps
    first = _log_power(log_arg_factor * p.m, 1 + e, e) / (e * zeta(1 + e))
    c = 262 / min(e * e * p.sigma_bar ** 4, 1.0)
    return _value(("stitching", first),
                  ("polynomial", c * _poly_term(p.m, p.lam)),
                  ("truncated moment", c * Ubar2(_root(p.m, p.lam))))


def studentized_lil_bound(p: LilParams, Uhat2: MomentFn) -> BoundValue:
    """Bound for the sample-variance-normalised iterated-logarithm crossing."""
    e = p.eps
    first = _log_power(2 * p.m / 3, 1 + e, e) / (e * zeta(1 + e))
    c = 786 / min(e * e, 1.0)
    return _value(("stitching", first),
                  ("polynomial", c * _poly_term(p.m, p.lam)),
                  ("truncated moment", c * Uhat2(_root(p.m, p.lam))))


def _checked_sqrt(radicand, k):
    radicand = np.asarray(radicand, dtype=float)
    bad = ~(radicand >= 0)
    if np.any(bad):
        raise BoundaryUndefined(np.asarray(k)[bad].tolist() if np.ndim(k) else k)
    return np.sqrt(radicand)


def lil_boundary(k, eps: float, sigma_bar: float):
    """sigma_bar * c_eps * sqrt(k (log log((1+eps)^2 k) + ell_eps)); vectorised over k."""
    kf = np.asarray(k, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        rad = kf * (np.log(np.log((1 + eps) ** 2 * kf)) + ell_eps(eps))
    out = sigma_bar * c_eps(eps) * _checked_sqrt(rad, k)
    return float(out) if np.ndim(out) == 0 else out


def studentized_lil_boundary(k, eps: float, sigma_hat):
    """sigma_hat * c_eps * sqrt((1+2 eps) k (log log((1+eps)^2 k) + ell_eps))."""
    if np.any(np.asarray(sigma_hat) < 0):
        raise ValueError("sigma_hat must be nonnegative")
    kf = np.asarray(k, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        rad = (1 + 2 * eps) * kf * (np.log(np.log((1 + eps) ** 2 * kf)) + ell_eps(eps))
    out = sigma_hat * c_eps(eps) * _checked_sqrt(rad, k)
    return float(out) if np.ndim(out) == 0 else out


def darling_robbins_boundary(k, eps: float, sigma_bar: float):
    """sigma_bar * sqrt(k (2 (1+eps)^2 log log k + 2 (1+eps) log 2)); sub-Gaussian data only."""
    _check_eps(eps)
    kf = np.asarray(k, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        rad = kf * (2 * (1 + eps) ** 2 * np.log(np.log(kf)) + 2 * (1 + eps) * math.log(2))
    out = sigma_bar * _checked_sqrt(rad, k)
    return float(out) if np.ndim(out) == 0 else out


def darling_robbins_bound(m: int, eps: float) -> BoundValue:
    if int(m) != m or m < 2:
        raise ValueError(f"m must be an integer >= 2, got {m}")
    _check_eps(eps)
    return _value(("stitching", _log_power(m, 1 + eps, eps) / eps))


# series bounds -------------------------------------------------------------

def baum_katz_series_bound(q: float, eps: float, log_moment: float) -> BoundValue:
    """Bound on sum_{m>=1} P[sup_{k>=m} |S_k|/k^(1/q) >= eps] / m.

    ``log_moment`` is E[|X|^q log(38 |X|^q / eps^q + 1)].
    """
    if not 1 <= q < 2:
        raise ValueError(f"q out of range: need q in [1, 2), got {q}")
    _check_eps(eps)
    if log_moment < 0:
        raise ValueError("log_moment must be nonnegative")
    cq = 2 / (2 - q)
    return _value(("leading", 1.0),
                  ("exponential series", cq / (math.e * math.log(2 ** (1 / q - 0.5)))),
                  ("moment", 2603 * log_moment / ((2 - q) * min(eps ** 2, 1.0))))


@dataclass
class _Series:
    f: Callable[[np.ndarray], np.ndarray]  # decreasing on m >= 2
    tail: Callable[[float], float]  # integral of f over [t, inf)
    weight: float

    def half_width(self, n: int) -> float:
        return self.weight * (self.tail(n) - self.tail(n + 1)) / 2


def _series_sum(s: _Series, n: int, chunk: int = 1 << 20) -> float:
    parts = []
    for start in range(2, n + 1, chunk):
        m = np.arange(start, min(start + chunk, n + 1), dtype=float)
        parts.append(float(np.sum(s.f(m))))
    tail_mid = (s.tail(n) + s.tail(n + 1)) / 2
    return s.weight * (math.fsum(parts) + tail_mid)


def baum_katz_lil_series_bound(eps: float, delta: float, log_delta_moment: float,
                               tol: float = 1e-6) -> BoundValue:
    """Upper bound on sum_{m>=2} P_m / (m log m) for the iterated-logarithm crossings.

    Each of the three series is summed to a common N and its tail replaced by
    the midpoint of [int_{N+1}^inf f, int_N^inf f]; the summed half-widths are
    at most ``tol`` and are reported as ``error``.
    """
    _check_eps(eps)
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if not (log_delta_moment >= 0 and math.isfinite(log_delta_moment)):
        raise ValueError("log_delta_moment must be finite and nonnegative")
    if not (0 < tol < 1):
        raise ValueError(f"tol must lie in (0, 1), got {tol}")

    a = math.log1p(eps) ** eps * zeta(1 + eps) / eps
    c = (1 + log_delta_moment) * 3 ** delta
    w = 262 / eps ** 2
    series = {
        "stitching series": _Series(lambda m: a / (m * np.log(2 * m / 3) ** (1 + eps)),
                                    lambda t: a / (eps * math.log(2 * t / 3) ** eps), 1.0),
        "polynomial series": _Series(lambda m: m ** (-4 / 3) / np.log(m),
                                     lambda t: float(special.exp1(math.log(t) / 3)), w),
        "moment series": _Series(lambda m: c / (m * np.log(m) ** (1 + delta)),
                                 lambda t: c / (delta * math.log(t) ** delta), w),
    }
    n = 64
    while sum(s.half_width(n) for s in series.values()) > tol:
        n *= 2
        if n > 1 << 34:
            raise ArithmeticError("series truncation point exceeds 2^34; loosen tol")
    err = sum(s.half_width(n) for s in series.values())
    return _value(*((name, _series_sum(s, n)) for name, s in series.items()), error=err)
