import numpy as np
import pytest

from ldgmq import codes, exit_ea
from ldgmq.codes import DegreeDistribution, GrayMap


def _direct_recurrence(beta, bound):
    out = [2]
    while True:
        # integer arithmetic: ceil(beta * d) with beta = p / q
        p, q = int(round(beta * 10)), 10
        nxt = -(-p * out[-1] // q)
        if nxt > bound:
            return out
        out.append(nxt)


def test_degree_set():
    ds = codes.degree_set(1.1, 1000)
    assert ds[:12] == [2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 13, 15]
    assert ds == _direct_recurrence(1.1, 1000)
    assert codes.degree_set(2, 16) == [2, 4, 8, 16]
    assert min(ds) >= 2 and all(a < b for a, b in zip(ds, ds[1:]))
    with pytest.raises(ValueError):
        codes.degree_set(1.0)


def test_gray_map_quaternary():
    g = GrayMap(2)
    assert g.phi((0, 0)) == 0 and g.phi((1, 0)) == 1 and g.phi((1, 1)) == 2 and g.phi((0, 1)) == 3


@pytest.mark.parametrize("K", [1, 2, 3, 4])
def test_gray_property(K):
    g = GrayMap(K)
    for v in range(g.m):
        a = np.array(g.phi_inv(v))
        b = np.array(g.phi_inv((v + 1) % g.m))
        assert np.sum(a != b) == 1
        assert g.phi(g.phi_inv(v)) == v
    np.testing.assert_array_equal(g.table(), [g.phi_inv(u) for u in range(g.m)])


def test_distribution_constraints():
    dist, _ = exit_ea.optimize_binary_ea(0.4461, 8)
    dist.check()
    assert sum(dist.v.values()) == pytest.approx(1, abs=1e-9)
    assert sum(x / d for d, x in dist.v.items()) == pytest.approx(1 / (0.4461 * 8), abs=1e-9)
    assert sum(dist.node_fractions().values()) == pytest.approx(1, abs=1e-9)
    back = DegreeDistribution.from_json(dist.to_json())
    assert back.v == dist.v and back.threshold == dist.threshold
    with pytest.raises(ValueError):
        DegreeDistribution(1, 0.5, 4, {3: 1.0}).check()


def test_regular_small_code_edges():
    dist = DegreeDistribution.regular(4, 2)
    code = codes.sample_code(dist, 8, seed=3)
    assert code.n_b == 4
    removed = 16 - code.n_edges
    assert removed >= 0 and removed % 2 == 0
    key = code.edge_b * code.n_c + code.edge_c
    assert np.unique(key).size == key.size


def test_sampling_is_deterministic():
    dist, _ = exit_ea.optimize_binary_ea(0.4461, 6)
    a = codes.sample_code(dist, 2000, seed=11)
    b = codes.sample_code(dist, 2000, seed=11)
    c = codes.sample_code(dist, 2000, seed=12)
    np.testing.assert_array_equal(a.edge_b, b.edge_b)
    np.testing.assert_array_equal(a.edge_c, b.edge_c)
    assert a.digest() == b.digest() != c.digest()


@pytest.mark.parametrize("K, R, d_b", [(1, 0.4461, 8), (2, 0.9531, 11)])
def test_degree_histogram(K, R, d_b):
    if K == 1:
        dist, _ = exit_ea.optimize_binary_ea(R, d_b)
    else:
        dist, _ = exit_ea.optimize_mary_ea(R, d_b, K)
    n = 10_000
    code = codes.sample_code(dist, n, seed=5)
    assert code.n_b == round(n * R)
    # parallel pairs only lower degrees, so count them back in
    extra = (code.n_b * d_b - code.n_edges) // 2
    hist = np.bincount(code.u_degrees(), minlength=dist.max_degree + 1)
    for d, w in dist.node_fractions().items():
        assert abs(hist[d] - w * n) <= 2 + 2 * extra, d
    # all K c-nodes of a u-node were given the same degree
    if K > 1 and extra == 0:
        cd = code.c_degrees().reshape(n, K)
        assert np.all(cd == cd[:, :1])


def test_b_degrees_after_pair_removal():
    dist, _ = exit_ea.optimize_binary_ea(0.4461, 8)
    code = codes.sample_code(dist, 5000, seed=2)
    bd = code.b_degrees()
    assert bd.min() >= 2 and bd.max() == 8
    assert np.all((8 - bd) % 2 == 0)


def test_encode_matches_dense_oracle():
    dist = DegreeDistribution.regular(6, 3)
    code = codes.sample_code(dist, 32, seed=7)
    assert code.n_b == 16
    G = code.dense_matrix().astype(np.int64)
    rng = np.random.default_rng(1)
    for _ in range(20):
        b = rng.integers(0, 2, 16)
        c, u = codes.encode(code, b)
        np.testing.assert_array_equal(c, b @ G % 2)
        np.testing.assert_array_equal(u, c)
    c0, u0 = codes.encode(code, np.zeros(16, dtype=int))
    assert not c0.any() and not u0.any()
    with pytest.raises(ValueError):
        codes.encode(code, np.zeros(15, dtype=int))


def test_encode_linear_and_gray_symbols():
    dist = DegreeDistribution.regular(6, 3, K=2)
    code = codes.sample_code(dist, 40, seed=2)
    rng = np.random.default_rng(4)
    b1, b2 = rng.integers(0, 2, (2, code.n_b))
    c1, _ = codes.encode(code, b1)
    c2, _ = codes.encode(code, b2)
    c12, u12 = codes.encode(code, b1 ^ b2)
    np.testing.assert_array_equal(c12, c1 ^ c2)
    g = GrayMap(2)
    expect = [g.phi(c12[2 * j:2 * j + 2]) for j in range(code.n)]
    np.testing.assert_array_equal(u12, expect)


def test_code_file_round_trip(tmp_path):
    dist, _ = exit_ea.optimize_binary_ea(0.4461, 6)
    code = codes.sample_code(dist, 500, seed=9)
    p = tmp_path / "code.txt"
    code.save(p)
    back = codes.LdgmCode.load(p)
    np.testing.assert_array_equal(back.edge_b, code.edge_b)
    np.testing.assert_array_equal(back.edge_c, code.edge_c)
    assert (back.n, back.n_b, back.K, back.d_b, back.seed) == (code.n, code.n_b, code.K, code.d_b, code.seed)
    assert back.dist.v == pytest.approx(code.dist.v)
    assert back.digest() == code.digest()


def test_largest_remainder():
    out = codes.largest_remainder([1, 1, 1], 10)
    assert out.sum() == 10 and sorted(out.tolist()) == [3, 3, 4]
