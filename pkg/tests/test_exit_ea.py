import itertools

import numpy as np
import pytest
import sympy

from ldgmq import bounds, exit_ea, pacing
from ldgmq.codes import DegreeDistribution

R0 = 0.4461


@pytest.fixture(scope="module")
def table1():
    return {d_b: exit_ea.optimize_binary_ea(R0, d_b) for d_b in range(6, 12)}


# ---------------------------------------------------------------- lp_solve


def test_lp_one_variable():
    res = exit_ea.lp_solve([1.0], A_ub=[[-1.0]], b_ub=[-3.0], bounds=[(None, None)])
    assert res.x[0] == pytest.approx(3.0) and res.fun == pytest.approx(3.0)


def test_lp_equality_only():
    res = exit_ea.lp_solve([1.0, 1.0], A_eq=[[1.0, 1.0], [1.0, -1.0]], b_eq=[4.0, 2.0],
                           bounds=[(None, None)] * 2)
    np.testing.assert_allclose(res.x, [3.0, 1.0])


def test_lp_errors():
    with pytest.raises(exit_ea.LpInfeasible):
        exit_ea.lp_solve([1.0], A_ub=[[1.0], [-1.0]], b_ub=[1.0, -2.0])
    with pytest.raises(exit_ea.LpUnbounded):
        exit_ea.lp_solve([-1.0], A_ub=[[-1.0]], b_ub=[0.0])


def _vertex_enumeration(c, A, b):
    """min c.x over {A x <= b} by checking every basis (bounded problems)."""
    n = len(c)
    best = np.inf
    for rows in itertools.combinations(range(len(A)), n):
        M = A[list(rows)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, b[list(rows)])
        if np.all(A @ x <= b + 1e-9):
            best = min(best, float(c @ x))
    return best


@pytest.mark.parametrize("seed", range(8))
def test_lp_against_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    A = np.vstack([rng.normal(size=(5, n)), np.eye(n), -np.eye(n)])
    b = np.concatenate([rng.uniform(0.5, 2, 5), np.full(n, 5.0), np.full(n, 5.0)])
    c = rng.normal(size=n)
    res = exit_ea.lp_solve(c, A_ub=A, b_ub=b, bounds=[(None, None)] * n)
    assert res.fun == pytest.approx(_vertex_enumeration(c, A, b), abs=1e-8)


# ---------------------------------------------------------------- EBP curves


@pytest.mark.parametrize("d_b, d_c, thr", [(4, 2, 1 / 3), (5, 3, 7 / 16)])
def test_regular_thresholds(d_b, d_c, thr):
    dist = DegreeDistribution.regular(d_b, d_c)
    assert exit_ea.ic_threshold(dist) == pytest.approx(thr, abs=1e-4)
    assert exit_ea.is_monotone(dist, thr - 1e-4)
    assert not exit_ea.is_monotone(dist, thr + 1e-3)


def test_regular_s_values():
    dist = DegreeDistribution.regular(4, 2)
    x = np.linspace(0, 1, 100001)
    assert exit_ea.s_of_x(dist, np.array([1.0]))[0] == pytest.approx(1.0)
    assert exit_ea.s_of_x(dist, x).max() == pytest.approx(3.0, abs=1e-6)


def test_ebp_endpoints():
    dist, _ = exit_ea.optimize_binary_ea(R0, 8)
    Ic = 0.43
    c = exit_ea.ebp_curve(dist, Ic, np.array([0.0, 1.0]))
    assert c.Ib[1] == pytest.approx(1.0)
    assert c.Ib_ext[1] == pytest.approx(1 - (1 - Ic) ** 8)
    with_v1 = DegreeDistribution(1, R0, 8, {1: 0.01, 3: 0.99})
    assert exit_ea.ebp_curve(with_v1, Ic, np.array([0.0])).Ib_ext[0] > 0


def test_ebp_slope_matches_finite_difference():
    dist, thr = exit_ea.optimize_binary_ea(R0, 8)
    x = np.linspace(0.01, 0.99, 50)
    h = 1e-6
    fd = (exit_ea.ebp_curve(dist, thr, x + h).Ib - exit_ea.ebp_curve(dist, thr, x - h).Ib) / (2 * h)
    np.testing.assert_allclose(exit_ea.ebp_slope(dist, thr, x), fd, atol=1e-5)


def test_ebp_area():
    dist, thr = exit_ea.optimize_binary_ea(R0, 8)
    assert exit_ea.ebp_area(dist, thr) == pytest.approx(thr / R0, abs=1e-4)
    assert exit_ea.ebp_area(dist, 0.0) == pytest.approx(0.0, abs=1e-12)
    # a little degree-1 mass: the area shrinks, but by less than d_b I_c v_1
    dist2, _ = exit_ea.optimize_binary_ea(R0, 8, L=200)
    v1 = dist2.v.get(1, 0.0)
    assert v1 > 0
    Ic = 0.44
    area = exit_ea.ebp_area(dist2, Ic)
    assert Ic / R0 - 8 * Ic * v1 < area < Ic / R0


# ---------------------------------------------------------------- binary LP


def test_table1_thresholds(table1):
    want = {6: (0.4110, 6), 7: (0.4294, 10), 8: (0.4376, 19), 9: (0.4416, 37),
            10: (0.4437, 70), 11: (0.4448, 127)}
    from ldgmq.codes import degree_set
    ds = degree_set()
    for d_b, (thr, dmax) in want.items():
        dist, got = table1[d_b]
        assert got == pytest.approx(thr, abs=0.002)
        assert abs(ds.index(dist.max_degree) - ds.index(dmax)) <= 1
    thrs = [table1[d][1] for d in range(6, 12)]
    assert all(a < b for a, b in zip(thrs, thrs[1:]))


def test_optimized_threshold_brackets(table1):
    for d_b in (6, 9, 11):
        dist, thr = table1[d_b]
        dist.check()
        assert exit_ea.ic_threshold(dist) == pytest.approx(thr, abs=1e-3)
        assert exit_ea.is_monotone(dist, thr - 1e-3)
        assert not exit_ea.is_monotone(dist, thr + 1e-2)


def test_single_degree_lp_gives_regular_threshold():
    dist, thr = exit_ea.optimize_binary_ea(0.6, 5, degrees=[3])
    assert dist.v == {3: pytest.approx(1.0)}
    assert thr == pytest.approx(1.0 / exit_ea.s_of_x(dist, exit_ea.X_GRID).max(), rel=1e-9)


# ---------------------------------------------------------------- pacing-aware LP


def test_pacing_aware_limits():
    x = np.linspace(0, 1, 11)
    q = pacing.q_of_x(x, 12, 100)
    assert np.all(q >= 0) and np.isfinite(q[0])
    np.testing.assert_allclose(pacing.q_of_x(x, 12, 1e9), 1 - x, atol=1e-6)
    assert exit_ea.pace_v1_bound(12, 1e9) == pytest.approx(0.0, abs=1e-6)
    _, plain = exit_ea.optimize_binary_ea(R0, 12)
    _, huge = exit_ea.optimize_binary_ea(R0, 12, L=1e9)
    assert huge == pytest.approx(plain, abs=1e-6)


def test_pacing_aware_threshold_exceeds_plain():
    _, plain = exit_ea.optimize_binary_ea(R0, 12)
    dist, paced = exit_ea.optimize_binary_ea(R0, 12, L=100)
    assert paced > plain
    assert dist.v.get(1, 0.0) <= exit_ea.pace_v1_bound(12, 100) / paced + 1e-9


# ---------------------------------------------------------------- m-ary


def test_mary_channel_binary_case():
    for t in (1.0, 4.0):
        ch = exit_ea.mary_channel(1, t)
        assert ch.Ic == pytest.approx(1 - bounds.entropy_Ht(bounds.SourceModel(1, t)), abs=1e-6)


def test_mary_channel_identity_and_ordering():
    ch = exit_ea.mary_channel(2, 2.0)
    assert 2 * ch.Ic == pytest.approx(2 - bounds.entropy_Ht(bounds.SourceModel(2, 2.0)), abs=1e-6)
    for t in np.linspace(0.3, 12, 15):
        c = exit_ea.mary_channel(2, round(float(t), 6))
        assert c.Ic_k[1] >= c.Ic_k[0] - 1e-12
    with pytest.raises(ValueError):
        exit_ea.mary_channel(4, 1.0)


def test_alpha_telescopes_symbolically():
    x = sympy.symbols("x")
    for K in (1, 2, 3):
        for d in range(1, 6):
            tot = sum(sympy.binomial(K - 1, kp) * x ** (d * (kp + 1) - 1) * (1 - x ** d) ** (K - kp - 1)
                      for kp in range(K))
            assert sympy.expand(tot - x ** (d - 1)) == 0
            xs = np.linspace(0, 1, 9)
            num = sum(exit_ea.alpha(K, kp, d, xs) for kp in range(K))
            np.testing.assert_allclose(num, xs ** (d - 1), atol=1e-14)


def test_alpha_derivative():
    xs = np.linspace(0.05, 0.95, 19)
    h = 1e-6
    for kp, d in [(0, 3), (1, 4), (1, 2)]:
        fd = (exit_ea.alpha(2, kp, d, xs + h) - exit_ea.alpha(2, kp, d, xs - h)) / (2 * h)
        np.testing.assert_allclose(exit_ea.alpha_prime(2, kp, d, xs), fd, atol=1e-6)


def test_mary_reduces_to_binary():
    dist_b, thr_b = exit_ea.optimize_binary_ea(R0, 8)
    dist_m, t_thr = exit_ea.optimize_mary_ea(R0, 8, 1)
    assert dist_m.threshold == pytest.approx(thr_b, abs=2e-3)
    assert t_thr == pytest.approx(bounds.solve_t0(thr_b, 1), abs=5e-3)


def test_quaternary_design():
    dist, t_thr = exit_ea.optimize_mary_ea(0.9531, 11, 2)
    dist.check()
    assert 0.93 <= 2 * dist.threshold <= 0.9531
    assert dist.v.get(1, 0.0) == 0.0
