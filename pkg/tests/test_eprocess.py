import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from strong_laws import bounds as bd
from strong_laws.distributions import AbsQ, CenteredSquare, DistributionSpec, sample_stream
from strong_laws.eprocess import (BoundFunction, CertificateViolated, EProcessState, EventLattice, ScaleUndefined,
                                  build_generic_eprocess, build_lil_eprocess, build_scale_invariant_eprocess,
                                  build_slln_eprocess, compute_mj, first_latch_times, minimality_report,
                                  run_stream, slln_lattice, update)

TWO1 = DistributionSpec("two-point", 1.0)
SMALL = DistributionSpec("two-point", 0.01)  # small moment scale, so thresholds are small
GAUSS = DistributionSpec("gaussian", 1.0)


@pytest.fixture(scope="module")
def small_slln():
    return build_slln_eprocess(1.0, SMALL)


@pytest.fixture(scope="module")
def small_slln15():
    return build_slln_eprocess(1.5, SMALL)


def brute_force_value(schedule, xs, n):
    """Defining sum: levels j with a crossing at some k in [m_j, n], by full scans."""
    s = np.cumsum(xs[:n])
    total = 0
    for j, m in schedule.finite():
        if any(schedule.hits(j, k, s[k - 1], xs[0], xs) for k in range(m, n + 1)):
            total += 1
    return total


# compute_mj ---------------------------------------------------------------------

def test_mj_reciprocal():
    assert compute_mj(BoundFunction(lambda m, e: 1 / m), 5) == 32
    for j in range(1, 30):
        assert compute_mj(BoundFunction(lambda m, e: 1 / m), j) == 2 ** j


def test_mj_zero_bound_is_domain_min():
    assert compute_mj(BoundFunction(lambda m, e: 0.0), 7) == 1
    assert compute_mj(BoundFunction(lambda m, e: 0.0, domain_min=2), 3) == 2


def test_mj_saturates():
    assert compute_mj(BoundFunction(lambda m, e: 1 / m), 5, search_cap=31) is None
    assert compute_mj(BoundFunction(lambda m, e: 1 / m), 5, search_cap=32) == 32


def test_certificate_checked():
    with pytest.raises(CertificateViolated):
        BoundFunction(lambda m, e: float(m))
    # increasing between spot-check points is caught during the search
    sneaky = BoundFunction(lambda m, e: 1 / m if m <= 16 or m >= 100 else 0.06 + (m - 16) * 1e-4)
    with pytest.raises(CertificateViolated):
        compute_mj(sneaky, 5)


def test_mj_rejects_bad_args():
    with pytest.raises(ValueError):
        compute_mj(BoundFunction(lambda m, e: 1 / m), 0)
    with pytest.raises(ValueError):
        compute_mj(BoundFunction(lambda m, e: 1 / m), 1, search_cap=1)


# builders ------------------------------------------------------------------------

def test_slln_two_point_thresholds_closed_form():
    # 2 exp(-sqrt m) is negligible; the moment term vanishes exactly once m^(1/4) / (38 j) > 1
    sched = build_slln_eprocess(1.0, TWO1)
    assert sched.thresholds == tuple((38 * j) ** 4 + 1 for j in range(1, 21))
    assert sched.thresholds[0] == 2085137


def test_slln_scan_oracle_j1():
    U = bd.moment_function(TWO1, AbsQ(1.0))
    B = lambda m: bd.lq_bound(bd.LqParams(m, 1.0, 1.0), U).raw  # noqa: E731
    m1 = build_slln_eprocess(1.0, TWO1, J=1).thresholds[0]
    scan = [m for m in range(m1 - 50, m1 + 51) if B(m) <= 0.5]
    assert scan[0] == m1 and all(B(m) > 0.5 for m in range(m1 - 50, m1))


def test_scale_invariant_closed_form():
    sched = build_scale_invariant_eprocess()
    exact = [math.ceil((262 * j * j * 2 ** j) ** 3) for j in range(1, 21)]
    assert exact[0] == 143_877_824 == sched.thresholds[0]
    # below 2^53 the float search is exact
    assert list(sched.thresholds[:4]) == exact[:4]
    for j, m in enumerate(sched.thresholds, start=1):
        if m is not None:
            assert m == pytest.approx(exact[j - 1], rel=1e-14)
        else:
            assert exact[j - 1] > 2 ** 62


def test_lil_gaussian_m1_scan_oracle():
    sched = build_lil_eprocess(GAUSS, J=3)
    m1 = sched.thresholds[0]
    Ubar = bd.moment_function(GAUSS, CenteredSquare())
    mp.mp.dps = 30

    def B(m):  # independent evaluation at eps = 1, sigma = 1, lambda = 1/3, log argument 2m/3
        first = 1 / (mp.log(mp.mpf(2) * m / 3, 2) * mp.zeta(2))
        return first + 262 * (mp.cbrt(m) ** -1 + Ubar(float(mp.cbrt(m))))

    assert B(m1) <= 0.5 < B(m1 - 1)
    assert m1 == 165_454_314


def test_slln15_gaussian_saturated():
    sched = build_slln_eprocess(1.5, GAUSS)
    assert all(m is None for m in sched.thresholds)


@pytest.mark.parametrize("builder", [lambda: build_slln_eprocess(1.0, TWO1), lambda: build_slln_eprocess(1.0, SMALL),
                                     lambda: build_slln_eprocess(1.5, SMALL), lambda: build_lil_eprocess(GAUSS),
                                     build_scale_invariant_eprocess])
def test_thresholds_nondecreasing_and_minimal(builder):
    sched = builder()
    ms = [math.inf if m is None else m for m in sched.thresholds]
    assert ms == sorted(ms)
    assert all(row["ok"] for row in minimality_report(sched))


def test_slln_requires_moment():
    with pytest.raises(ValueError):
        build_slln_eprocess(1.5, DistributionSpec("pareto", 1.2))
    with pytest.raises(ValueError):
        build_lil_eprocess(DistributionSpec("pareto", 1.9))


# online updates ------------------------------------------------------------------------

def test_zero_streams_stay_zero(small_slln):
    for sched in (small_slln, build_lil_eprocess(GAUSS, J=3)):
        assert run_stream(sched, np.zeros(3000)) == [0] * 3000


def test_constant_drift_reaches_all_finite_levels(small_slln15):
    values = run_stream(small_slln15, np.ones(14_000))
    finite = small_slln15.finite()
    for j, m in finite:
        if m > 14_000:
            continue
        assert values[m - 1] >= sum(1 for _, mm in finite if mm <= m)
    assert values[-1] == sum(1 for _, m in finite if m <= 14_000)


def test_first_update_bookkeeping(small_slln):
    state = EProcessState.start(small_slln)
    assert state.value == 0 and state.n == 0
    update(state, 0.5)
    assert state.n == 1 and 0 <= state.value <= small_slln.J


def test_replay_deterministic(small_slln):
    xs = sample_stream(GAUSS, 4, 500)
    assert run_stream(small_slln, xs) == run_stream(small_slln, xs)


@pytest.mark.parametrize("seed", range(6))
def test_online_matches_brute_force(small_slln, small_slln15, seed):
    rng = np.random.default_rng(seed)
    xs = sample_stream(GAUSS, seed, 2000) + rng.choice([0.0, 0.05, -0.2])
    for sched in (small_slln, small_slln15):
        values = run_stream(sched, xs)
        for n in (1, 7, 100, 999, 2000):
            assert values[n - 1] == brute_force_value(sched, xs, n)
        latch = first_latch_times(sched, xs)
        assert values == [int(np.count_nonzero(latch <= n)) for n in range(1, 2001)]


def test_values_nondecreasing_integer_bounded(small_slln):
    for seed in range(20):
        xs = sample_stream(DistributionSpec("uniform", 2.0), seed, 1500) + 0.03 * (seed % 3)
        v = run_stream(small_slln, xs)
        assert all(isinstance(x, int) for x in v)
        assert all(0 <= a <= b <= small_slln.J for a, b in zip(v, v[1:]))


def test_truncation_in_J_only_removes_terms():
    full = build_slln_eprocess(1.0, SMALL, J=20)
    short = build_slln_eprocess(1.0, SMALL, J=8)
    for seed in range(10):
        xs = sample_stream(GAUSS, seed, 1000) + 0.05
        a, b = run_stream(short, xs), run_stream(full, xs)
        assert all(x <= y for x, y in zip(a, b))


def test_scale_invariant_zero_first_observation():
    sched = build_scale_invariant_eprocess(J=2)
    state = EProcessState.start(sched)
    with pytest.raises(ScaleUndefined, match="undefined"):
        state.update(0.0)
    with pytest.raises(ScaleUndefined):
        first_latch_times(sched, np.array([0.0, 1.0, -1.0]))


@settings(max_examples=30, deadline=None)
@given(signs=st.lists(st.sampled_from([-1.0, 1.0]), min_size=5, max_size=400),
       b=st.sampled_from([0.5, 2.0, 3.0, 17.25]), j=st.integers(1, 20))
def test_scale_invariant_statistic_scale_free(signs, b, j):
    sched = build_scale_invariant_eprocess(J=1)
    s = np.cumsum(signs)
    ks = np.arange(1, len(s) + 1, dtype=float)
    assert np.array_equal(sched.hits_path(j, ks, b * s, b * signs[0]), sched.hits_path(j, ks, s, signs[0]))


# generic schedules ------------------------------------------------------------------------

def test_generic_never_member():
    lat = EventLattice(lambda prefix, eps: False, "never")
    sched = build_generic_eprocess(lat, BoundFunction(lambda m, e: 1 / m), J=6)
    assert run_stream(sched, np.ones(200)) == [0] * 200


def test_generic_always_member():
    lat = EventLattice(lambda prefix, eps: True, "always")
    sched = build_generic_eprocess(lat, BoundFunction(lambda m, e: 1 / m), J=8)
    values = run_stream(sched, np.zeros(600))
    assert values == [sum(1 for j in range(1, 9) if 2 ** j <= n) for n in range(1, 601)]


def test_generic_slln_lattice_equivalence(small_slln):
    generic = build_generic_eprocess(slln_lattice(1.0), small_slln.bound, J=small_slln.J)
    assert generic.thresholds == small_slln.thresholds
    for r in range(100):
        xs = sample_stream(GAUSS, 99, 300, replication=r) + (0.1 if r % 2 else 0.0)
        assert run_stream(generic, xs) == run_stream(small_slln, xs)
