import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from strong_laws import bounds as bd
from strong_laws.distributions import AbsQ, CenteredSquare, DistributionSpec, NormalizedSquare

mp.mp.dps = 40

TWO1 = bd.moment_function(DistributionSpec("two-point", 1.0), AbsQ(1.0))
ZERO = lambda x: 0.0  # noqa: E731
GAUSS = DistributionSpec("gaussian", 1.0)


# zeta and constants ---------------------------------------------------------------

def test_zeta_known_values():
    assert bd.zeta(2) == pytest.approx(math.pi ** 2 / 6, rel=1e-14)
    assert bd.zeta(4) == pytest.approx(math.pi ** 4 / 90, rel=1e-14)
    assert bd.zeta(1.5) == pytest.approx(2.612375348685488, rel=1e-14)


@pytest.mark.parametrize("s", [1.0001, 1.01, 1.05, 1.2, 1.5, 3.0, 7.5, 30.0])
def test_zeta_against_mpmath(s):
    assert bd.zeta(s) == pytest.approx(float(mp.zeta(s)), rel=1e-12)


def test_zeta_domain():
    for s in (1.0, 0.5, -2.0):
        with pytest.raises(ValueError, match="zeta domain"):
            bd.zeta(s)


@settings(max_examples=80, deadline=None)
@given(st.floats(1.001, 4.0))
def test_zeta_integral_sandwich(s):
    # integral comparison of sum_{k>=2} k^-s with int_2^inf x^-s dx
    z = bd.zeta(s) - 1
    assert 2 ** -s < z
    assert 2 ** (1 - s) / (s - 1) < z < 2 ** -s * (s + 1) / (s - 1)


def test_c_eps_and_ell_eps_one():
    c1 = (mp.mpf(2) ** 1.25 + mp.mpf(2) ** 0.75) / mp.sqrt(2)
    ell1 = mp.log(2 * mp.zeta(2) / mp.log(2))
    assert bd.c_eps(1.0) == pytest.approx(float(c1), rel=1e-14)
    assert bd.ell_eps(1.0) == pytest.approx(float(ell1), rel=1e-13)
    assert bd.c_eps(1.0) == pytest.approx(2.87099994551015, rel=1e-13)
    assert bd.ell_eps(1.0) == pytest.approx(1.5573604036123552, rel=1e-13)


def test_c_eps_increasing():
    vals = [bd.c_eps(e) for e in np.linspace(0.01, 5, 200)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


# strong-law bounds -------------------------------------------------------------------

def test_l1_example_values():
    b = bd.l1_bound(bd.L1Params(100, 0.5, 0.25), TWO1)
    assert b.raw == pytest.approx(104.8, rel=1e-14)
    assert b.clamped == 1.0
    assert dict(b.components)["truncated moment"] == 0.0
    b = bd.l1_bound(bd.L1Params(10 ** 8, 1.0, 0.25), TWO1)
    assert b.raw == pytest.approx(0.0262, rel=1e-14)
    assert bd.clamp(b) == pytest.approx(0.0262)


@pytest.mark.parametrize("m,lam,eps", [(7, 0.1, 1.0), (1000, 0.3, 2.5), (5, 0.45, 1.0)])
def test_l1_zero_moment(m, lam, eps):
    assert bd.l1_bound(bd.L1Params(m, eps, lam), ZERO).raw == pytest.approx(262 * m ** (2 * lam - 1), rel=1e-13)


def test_l1_components_sum():
    U = bd.moment_function(GAUSS, AbsQ(1.0))
    b = bd.l1_bound(bd.L1Params(50, 0.3, 0.2), U)
    assert b.raw == pytest.approx(sum(v for _, v in b.components))
    assert dict(b.components)["truncated moment"] == pytest.approx(262 / 0.09 * U(50 ** 0.2))


@pytest.mark.parametrize("bad", [dict(m=0, eps=1.0), dict(m=2.5, eps=1.0), dict(m=3, eps=0.0),
                                 dict(m=3, eps=1.0, lam=0.5), dict(m=3, eps=1.0, lam=0.0)])
def test_l1_params_validation(bad):
    with pytest.raises(ValueError):
        bd.L1Params(**bad)


def test_line_crossing():
    assert bd.line_crossing_bound(1.0, 1.0, 0.0, ZERO).raw == 0.0
    b = bd.line_crossing_bound(0.5, 100.0, 2.0, lambda x: 0.1)
    assert b.raw == pytest.approx(7.88, rel=1e-14)
    vals = [bd.line_crossing_bound(0.5, g, 2.0, lambda x: 0.1).raw for g in (1, 10, 100, 1000)]
    assert vals == sorted(vals, reverse=True)


def test_lq_first_addend_q1():
    b = bd.lq_bound(bd.LqParams(49, 1.0, 1.0), ZERO)
    assert b.raw == pytest.approx(2 * math.exp(-7.0), rel=1e-14)


def test_lq_example_three_million():
    b = bd.lq_bound(bd.LqParams(3_000_000, 1.0, 1.0), TWO1)
    assert dict(b.components)["truncated moment"] == 0.0
    assert b.raw == pytest.approx(2 * math.exp(-math.sqrt(3e6)), rel=1e-12)
    assert b.raw < 1e-300


def test_lq_q_out_of_range():
    with pytest.raises(ValueError, match="q out of range"):
        bd.LqParams(10, 1.0, 2.0)


def test_lq_threshold_matches_definition():
    spec = DistributionSpec("pareto", 2.0)
    U = bd.moment_function(spec, AbsQ(1.5))
    m, eps, q = 10 ** 6, 0.7, 1.5
    b = bd.lq_bound(bd.LqParams(m, eps, q), U)
    level = eps ** q * m ** (0.5 - q / 4) / 38
    assert dict(b.components)["truncated moment"] == pytest.approx(451 / eps ** 2 * U(level), rel=1e-12)


def test_lq_q1_moment_addend_dominated():
    # for q = 1 the lq moment threshold eps m^(1/4)/38 is at most the l1 threshold m^(1/4) when eps <= 38
    U = bd.moment_function(GAUSS, AbsQ(1.0))
    for m in (10, 10 ** 3, 10 ** 5):
        a, b = 0.5 * m ** 0.25 / 38, m ** 0.25
        assert a <= b and U(a) >= U(b)


@pytest.mark.parametrize("spec", ["two-point:1", "gaussian:1", "uniform:2", "pareto:4"])
def test_strong_law_bounds_vanish(spec):
    spec = DistributionSpec.parse(spec)
    U1 = bd.moment_function(spec, AbsQ(1.0))
    for eps in (0.5, 1.0):
        lo = bd.l1_bound(bd.L1Params(10 ** 4, eps), U1).raw
        hi = bd.l1_bound(bd.L1Params(10 ** 12, eps), U1).raw
        assert hi < 1e-3 * lo
    Uq = bd.moment_function(spec, AbsQ(1.0))
    assert bd.lq_bound(bd.LqParams(10 ** 12, 1.0, 1.0), Uq).raw < 1e-3 * bd.lq_bound(
        bd.LqParams(10 ** 4, 1.0, 1.0), Uq).raw


# iterated-logarithm bounds -------------------------------------------------------------

UBAR = bd.moment_function(GAUSS, CenteredSquare())
UHAT = bd.moment_function(GAUSS, NormalizedSquare())


def test_lil_infinite_at_three():
    b = bd.lil_bound(bd.LilParams(3, 1.0), UBAR)
    assert b.raw == math.inf and b.clamped == 1.0
    assert bd.lil_bound(bd.LilParams(2, 1.0), UBAR).raw == math.inf


def test_lil_first_addend_example():
    m = 3 * 2 ** 40
    b = bd.lil_bound(bd.LilParams(m, 1.0, 1.0, 1 / 3), UBAR)
    first = 1 / (40 * math.pi ** 2 / 6)
    assert dict(b.components)["stitching"] == pytest.approx(first, rel=1e-13)
    assert first == pytest.approx(0.015199, abs=1e-6)
    assert dict(b.components)["polynomial"] == pytest.approx(262 / np.cbrt(m), rel=1e-13)
    assert dict(b.components)["truncated moment"] == pytest.approx(262 * UBAR(np.cbrt(m)), rel=1e-13)


def test_lil_sigma_bar_constant():
    b = bd.lil_bound(bd.LilParams(10 ** 6, 0.5, 3.0, 0.25), ZERO)
    assert dict(b.components)["polynomial"] == pytest.approx(262 * 1e-3)
    b = bd.lil_bound(bd.LilParams(10 ** 6, 0.5, 1.0, 0.25), ZERO)
    assert dict(b.components)["polynomial"] == pytest.approx(262 / 0.25 * 1e-3)


def test_lil_first_addend_decreasing():
    vals = [dict(bd.lil_bound(bd.LilParams(m, 0.5), ZERO).components)["stitching"] for m in range(5, 200)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_lil_params_validation():
    with pytest.raises(ValueError):
        bd.LilParams(1, 1.0)
    with pytest.raises(ValueError, match="variance proxy"):
        bd.LilParams(10, 1.0, sigma_bar=1.0, sigma_P=2.0)


def test_studentized_lil_example():
    m = 3 * 2 ** 39
    b = bd.studentized_lil_bound(bd.LilParams(m, 1.0), UHAT)
    assert dict(b.components)["stitching"] == pytest.approx(1 / (40 * math.pi ** 2 / 6), rel=1e-13)
    l1_style = 262 * (m ** (-1 / 3) + UHAT(np.cbrt(m)))
    assert dict(b.components)["polynomial"] + dict(b.components)["truncated moment"] == pytest.approx(
        3 * l1_style, rel=1e-12)
    assert math.isfinite(bd.studentized_lil_bound(bd.LilParams(2, 1.0), UHAT).raw)


def test_lil_boundary_example():
    k, e = mp.mpf(10) ** 6, 1
    c = (mp.mpf(2) ** 1.25 + mp.mpf(2) ** 0.75) / mp.sqrt(2)
    ell = mp.log(2 * mp.zeta(2) / mp.log(2))
    ref = c * mp.sqrt(k * (mp.log(mp.log(4 * k)) + ell))
    assert bd.lil_boundary(10 ** 6, 1.0, 1.0) == pytest.approx(float(ref), rel=1e-13)
    assert math.log(math.log(4e6)) == pytest.approx(2.7214141654792, rel=1e-12)
    assert bd.lil_boundary(10 ** 6, 1.0, 2.5) == pytest.approx(2.5 * float(ref), rel=1e-13)
    assert bd.studentized_lil_boundary(10 ** 6, 1.0, 1.0) == pytest.approx(math.sqrt(3) * float(ref), rel=1e-13)


def test_lil_boundary_asymptotic_ratio():
    # ratio / (c_eps / sqrt 2) = sqrt((log log((1+eps)^2 k) + ell_eps) / log log k), which tends to 1
    # only at rate 1/log log k: about 1.218 at k = 1e12
    target = bd.c_eps(1.0) / math.sqrt(2)
    devs = []
    for k in (1e6, 1e12, 1e50, 1e300):
        ratio = bd.lil_boundary(k, 1.0, 1.0) / math.sqrt(2 * k * math.log(math.log(k)))
        exact = math.sqrt((math.log(math.log(4 * k)) + bd.ell_eps(1.0)) / math.log(math.log(k)))
        assert ratio / target == pytest.approx(exact, rel=1e-12)
        devs.append(ratio / target - 1)
    assert devs == sorted(devs, reverse=True) and devs[-1] < 0.15
    assert devs[1] == pytest.approx(0.2182, abs=1e-3)


def test_lil_boundary_over_sqrt_increasing():
    ks = np.arange(3, 100_000, dtype=float)
    r = bd.lil_boundary(ks, 0.3, 1.0) / np.sqrt(ks)
    assert np.all(np.diff(r) > 0)
    assert np.all(np.diff(bd.lil_boundary(ks, 0.3, 1.0)) > 0)


def test_studentized_boundary_relations():
    ks = np.array([5.0, 50.0, 5e4])
    np.testing.assert_allclose(bd.studentized_lil_boundary(ks, 0.4, 1.3),
                               bd.lil_boundary(ks, 0.4, 1.3) * math.sqrt(1.8), rtol=1e-14)
    assert bd.studentized_lil_boundary(100, 0.4, 0.0) == 0.0


def test_boundary_undefined_reports_k():
    # log log((1+eps)^2 k) + ell_eps < 0 needs a large ell deficit; the Darling-Robbins radicand
    # goes negative for k = 1 (log log 1 undefined) and k = 2
    with pytest.raises(bd.BoundaryUndefined) as info:
        bd.darling_robbins_boundary(np.array([1.0, 10.0]), 0.5, 1.0)
    assert 1.0 in np.atleast_1d(info.value.k).tolist()


def test_darling_robbins():
    e = 0.3
    # at m = (1+eps)^e the log is e, giving e^-eps / eps (m need not be an integer for the formula)
    assert (math.log((1 + e) ** math.e) / math.log1p(e)) ** -e / e == pytest.approx(math.exp(-e) / e)
    m = 10 ** 6
    assert bd.darling_robbins_bound(m, e).raw == pytest.approx((math.log(m) / math.log1p(e)) ** -e / e)
    vals = [bd.darling_robbins_bound(m, 0.5).raw for m in (3, 10, 100, 10 ** 4)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    ref = math.sqrt(1e6 * (2 * 1.21 * math.log(math.log(1e6)) + 2.2 * math.log(2)))
    assert bd.darling_robbins_boundary(10 ** 6, 0.1, 1.0) == pytest.approx(ref, rel=1e-14)
    assert math.log(math.log(1e6)) == pytest.approx(2.6257919144760, rel=1e-12)


# series bounds --------------------------------------------------------------------------

def test_baum_katz_constant_q1():
    ref = 1 + 2 / (mp.e * mp.log(mp.sqrt(2)))
    b = bd.baum_katz_series_bound(1.0, 0.5, 0.0)
    assert b.raw == pytest.approx(float(ref), rel=1e-9)
    assert b.raw == pytest.approx(3.1229513816921, rel=1e-12)


def test_baum_katz_formula():
    q, eps, L = 1.5, 0.5, 2.0
    ref = 1 + (2 / (2 - q)) / (mp.e * mp.log(mp.mpf(2) ** (1 / q - 0.5))) + 2603 * L / ((2 - q) * 0.25)
    assert bd.baum_katz_series_bound(q, eps, L).raw == pytest.approx(float(ref), rel=1e-12)
    vals = [bd.baum_katz_series_bound(1.2, 1.0, L).raw for L in (0, 0.1, 1, 10)]
    assert vals == sorted(vals) and len(set(vals)) == 4
    with pytest.raises(ValueError, match="q out of range"):
        bd.baum_katz_series_bound(2.0, 1.0, 0.0)


def _mp_series(f, start=2):
    return mp.nsum(f, [start, mp.inf])


def test_baum_katz_lil_polynomial_series_below_zeta():
    b = bd.baum_katz_lil_series_bound(1.0, 1.0, 0.0)
    s2 = dict(b.components)["polynomial series"] / 262
    assert s2 < bd.zeta(4 / 3) - 1


def test_baum_katz_lil_against_mpmath():
    mp.mp.dps = 20
    eps, delta, E = 1.0, 1.0, 0.7
    b = bd.baum_katz_lil_series_bound(eps, delta, E, tol=1e-7)
    a = mp.log(1 + eps) ** eps * mp.zeta(1 + eps) / eps
    # the slowly converging sums are compared through tail-corrected partial sums
    n = 10 ** 5

    def sum_with_tail(f):
        # Euler-Maclaurin tail, integral taken in u = log m
        tail = mp.quad(lambda u: f(mp.exp(u)) * mp.exp(u), [mp.log(n), mp.inf])
        return mp.fsum(f(mp.mpf(m)) for m in range(2, n)) + tail + f(mp.mpf(n)) / 2

    s1 = sum_with_tail(lambda m: a / (m * mp.log(2 * m / 3) ** (1 + eps)))
    s2 = sum_with_tail(lambda m: m ** (-mp.mpf(4) / 3) / mp.log(m))
    s3 = sum_with_tail(lambda m: (1 + E) * 3 ** delta / (m * mp.log(m) ** (1 + delta)))
    ref = s1 + 262 / eps ** 2 * (s2 + s3)
    assert b.raw == pytest.approx(float(ref), abs=1e-6 + 2 * b.error)
    mp.mp.dps = 40


def test_baum_katz_lil_tol_accounting():
    a = bd.baum_katz_lil_series_bound(0.5, 0.5, 1.0, tol=1e-4)
    b = bd.baum_katz_lil_series_bound(0.5, 0.5, 1.0, tol=2e-4)
    assert a.error <= 1e-4 and b.error <= 2e-4
    assert abs(a.raw - b.raw) <= a.error + b.error


def test_baum_katz_lil_zero_moment_numerator():
    b0 = bd.baum_katz_lil_series_bound(1.0, 0.5, 0.0)
    b1 = bd.baum_katz_lil_series_bound(1.0, 0.5, 1.0)
    # moment series scales with (1 + E)
    assert dict(b1.components)["moment series"] == pytest.approx(2 * dict(b0.components)["moment series"],
                                                                 rel=1e-12)


@pytest.mark.parametrize("bad", [dict(tol=0.0), dict(tol=-1.0), dict(tol=1.0)])
def test_baum_katz_lil_bad_tol(bad):
    with pytest.raises(ValueError):
        bd.baum_katz_lil_series_bound(1.0, 1.0, 0.0, **bad)


def test_clamp():
    assert bd.clamp(bd.BoundValue(104.8)) == 1.0
    assert bd.clamp(bd.BoundValue(0.0262)) == 0.0262
    assert bd.clamp(bd.BoundValue(math.inf)) == 1.0


# monotonicity in m ------------------------------------------------------------------------

@settings(max_examples=100, deadline=None)
@given(m=st.integers(1, 10 ** 12), dm=st.integers(1, 10 ** 9), eps=st.floats(0.05, 4.0),
       lam=st.floats(0.01, 0.49), fam=st.sampled_from(["two-point:1", "gaussian:1", "uniform:3", "pareto:1.6"]))
def test_l1_nonincreasing(m, dm, eps, lam, fam):
    U = bd.moment_function(DistributionSpec.parse(fam), AbsQ(1.0))
    a = bd.l1_bound(bd.L1Params(m, eps, lam), U).raw
    b = bd.l1_bound(bd.L1Params(m + dm, eps, lam), U).raw
    assert 0 <= b <= a * (1 + 1e-12)


@settings(max_examples=100, deadline=None)
@given(m=st.integers(3, 10 ** 12), dm=st.integers(1, 10 ** 9), eps=st.floats(0.05, 4.0),
       lam=st.floats(0.01, 0.49), sb=st.floats(1.0, 3.0))
def test_lil_nonincreasing(m, dm, eps, lam, sb):
    a = bd.lil_bound(bd.LilParams(m, eps, sb, lam), UBAR).raw
    b = bd.lil_bound(bd.LilParams(m + dm, eps, sb, lam), UBAR).raw
    assert 0 <= b <= a * (1 + 1e-12)
    a = bd.studentized_lil_bound(bd.LilParams(m, eps, 1.0, lam), UHAT).raw
    b = bd.studentized_lil_bound(bd.LilParams(m + dm, eps, 1.0, lam), UHAT).raw
    assert 0 <= b <= a * (1 + 1e-12)
