import itertools

import numpy as np
import pytest

from ldgmq import beq, codes, exit_ea


@pytest.fixture(scope="module")
def code_1e4():
    dist, _ = exit_ea.optimize_binary_ea(0.4461, 8)
    return codes.sample_code(dist, 10_000, seed=1)


def test_all_erased_has_no_unsatisfied():
    dist = codes.DegreeDistribution.regular(5, 3)
    code = codes.sample_code(dist, 300, seed=0)
    inst = beq.BeqInstance(np.full(300, beq.ERASED, dtype=np.int8), 1.0)
    r = beq.beq_quantize(inst, code, beq.BeqConfig(L0=20))
    assert r.unsat == 0 and r.n_g == code.n_b and r.n_i == 0


@pytest.mark.parametrize("seed", range(8))
def test_untouched_equations_hold_by_substitution(seed):
    rng = np.random.default_rng(seed)
    dist = codes.DegreeDistribution.regular(5, 3)
    code = codes.sample_code(dist, 48, seed=seed)
    inst = beq.BeqInstance.random(48, 0.5, rng)
    r = beq.beq_quantize(inst, code, beq.BeqConfig(L0=10, seed=seed))
    c = (r.b.astype(np.int64) @ code.dense_matrix()) % 2
    ne = inst.y != beq.ERASED
    # every non-erased equation holds against the (possibly flipped) prior
    assert np.array_equal(c[ne], r.prior[ne])
    untouched = ne & (r.prior == inst.y)
    assert np.array_equal(c[untouched], inst.y[untouched])
    assert r.unsat == r.flipped


def test_unsatisfied_count_tracks_ignored_equations(code_1e4):
    rng = np.random.default_rng(7)
    n_i = []
    unsat = []
    for run in range(100):
        inst = beq.BeqInstance.random(code_1e4.n, 1 - 0.4461, rng)
        r = beq.beq_quantize(inst, code_1e4, beq.BeqConfig(L0=100, seed=run))
        assert r.n_i == r.n_ne - (r.n_b - r.n_g)
        assert r.unsat <= max(r.n_i, 0)
        assert abs(r.unsat - r.n_i / 2) <= 4 * np.sqrt(max(r.n_i, 1))
        n_i.append(r.n_i)
        unsat.append(r.unsat)
    # pooled mean agrees with one half
    ratio = np.sum(unsat) / np.sum(n_i)
    assert abs(ratio - 0.5) < 0.05


def test_below_threshold_nearly_all_satisfied():
    dist, thr = exit_ea.optimize_binary_ea(0.4461, 8)
    code = codes.sample_code(dist, 100_000, seed=2)
    inst = beq.BeqInstance.random(code.n, 1 - (thr - 0.02), np.random.default_rng(0))
    r = beq.beq_quantize(inst, code, beq.BeqConfig(L0=1000, seed=1))
    assert r.unsat < 0.01 * r.n_ne


def test_gf2_zero_matrix():
    A = np.zeros((5, 7), dtype=np.uint8)
    assert beq.gf2_solve_matrix(A, np.zeros(5)).solvable
    s = beq.gf2_solve_matrix(A, np.eye(5)[0])
    assert s.rank == 0 and not s.solvable


def test_gf2_identity_unique():
    rhs = np.array([1, 0, 1, 1, 0, 0, 1, 0, 1, 1])
    s = beq.gf2_solve_matrix(np.eye(10, dtype=np.uint8), rhs)
    assert s.rank == 10 and np.array_equal(s.b, rhs)


def test_gf2_wide_matrix_words():
    rng = np.random.default_rng(5)
    A = rng.integers(0, 2, (70, 150)).astype(np.uint8)
    x = rng.integers(0, 2, 150)
    s = beq.gf2_solve_matrix(A, A @ x % 2)
    assert s.solvable and np.array_equal(A @ s.b % 2, A @ x % 2)


def test_gf2_solvable_fraction_matches_rank():
    rng = np.random.default_rng(11)
    A = (rng.integers(0, 2, (64, 60)) @ rng.integers(0, 2, (60, 128)) % 2).astype(np.uint8)
    n_r = beq.gf2_solve_matrix(A, np.zeros(64)).rank
    trials = 10_000
    hits = sum(beq.gf2_solve_matrix(A, rng.integers(0, 2, 64)).solvable for _ in range(trials))
    p = 2.0 ** (n_r - 64)
    sigma = np.sqrt(p * (1 - p) / trials)
    assert abs(hits / trials - p) <= 3 * sigma


@pytest.mark.parametrize("seed", range(6))
def test_gf2_matches_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    dist = codes.DegreeDistribution.regular(5, 3)
    code = codes.sample_code(dist, 24, seed=seed)
    inst = beq.BeqInstance.random(24, 0.3, rng)
    G = code.dense_matrix().astype(np.int64)
    ne = inst.y != beq.ERASED
    found = any(
        np.array_equal(np.array(b) @ G[:, ne] % 2, inst.y[ne])
        for b in itertools.product((0, 1), repeat=code.n_b)
    )
    s = beq.gf2_solve(inst, code)
    assert s.solvable == found
    if found:
        assert np.array_equal(s.b @ G[:, ne] % 2, inst.y[ne])
