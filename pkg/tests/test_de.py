import numpy as np
import pytest

from ldgmq import bounds, de, exit_ea
from ldgmq.codes import DegreeDistribution
from ldgmq.messages import SymDensity

SMALL = de.DeConfig(M=128, L_max=25.0, steps=32, tol=1e-7, max_iter=400, prior_pts=4001)


# ---------------------------------------------------------------- priors


@pytest.mark.parametrize("t", [2.5, 3.7, 4.0])
def test_binary_prior_information(t):
    dens = de.prior_density(t, de.DeConfig().grid)
    ht = bounds.entropy_Ht(bounds.SourceModel(1, t))
    assert dens.mi() == pytest.approx(1.0 - ht, abs=1e-3)


def test_quaternary_channel_information():
    eng = de.DeEngine(DegreeDistribution.regular(6, 4, K=2), 2.0, de.DeConfig(M=256))
    ch = exit_ea.mary_channel(2, 2.0)
    np.testing.assert_allclose(eng.Ic_k, ch.Ic_k, atol=1e-3)
    ht = bounds.entropy_Ht(bounds.SourceModel(2, 2.0))
    assert 2 * eng.Ic == pytest.approx(2 - ht, abs=2e-3)


def test_unode_output_between_endpoints():
    g = de.DeConfig(M=256).grid
    lo = de.de_unode_combine(SymDensity.erasure(0.0, g), 2.0).mi()
    hi = de.de_unode_combine(SymDensity.erasure(1.0, g), 2.0).mi()
    for s in (0.2, 0.5, 0.8):
        mid = de.de_unode_combine(SymDensity.erasure(s, g), 2.0).mi()
        assert lo - 1e-9 <= mid <= hi + 1e-9
        # erasure mixtures are linear in the sure fraction
        assert mid == pytest.approx(lo + s * (hi - lo), abs=1e-6)
    with pytest.raises(ValueError):
        de.de_unode_combine(SymDensity.erasure(0.0, g), 2.0, K=3)


# ---------------------------------------------------------------- EA degeneracy


def _ea_dist():
    return exit_ea.optimize_binary_ea(0.4461, 8)[0]


@pytest.mark.parametrize("x", [0.0, 0.3, 0.7, 0.95])
@pytest.mark.parametrize("Ib", [0.0, 0.4])
def test_erasure_prior_degenerates_to_ea(x, Ib):
    dist = _ea_dist()
    Ic = 0.42
    eng = de.DeEngine(dist, 1.0, SMALL, prior=de.erasure_prior(Ic, SMALL.grid))
    C = eng.cnode(SymDensity.erasure(x, SMALL.grid))
    f = sum(v * x ** (d - 1) for d, v in dist.v.items())
    assert C.mi() == pytest.approx(Ic * f, abs=1e-4)
    B, ext = eng.bnode(C, Ib)
    y = 1 - Ic * f
    assert B.mi() == pytest.approx(1 - (1 - Ib) * y ** (dist.d_b - 1), abs=1e-4)
    assert ext.mi() == pytest.approx(1 - y ** dist.d_b, abs=1e-4)


def test_erasure_sweep_recovers_ea_curves():
    dist = DegreeDistribution.regular(5, 3)
    Ic = 0.40
    rec = de.de_sweep(dist, 1.0, "up", SMALL, prior=de.erasure_prior(Ic, SMALL.grid))
    c = de.extract_fgh(rec)
    xs = np.linspace(0.05, 0.95, 10)
    np.testing.assert_allclose(c.f_of(xs), xs ** 2, atol=1e-3)
    ys = np.linspace(max(c.y[0], 1 - Ic) + 0.01, c.y[-1] - 0.01, 10)
    np.testing.assert_allclose(c.g_of(ys), ys ** 4, atol=1e-3)
    np.testing.assert_allclose(c.h_of(ys), ys ** 5, atol=1e-3)


def test_ea_curves_reproduce_ea_threshold():
    dist, thr = exit_ea.optimize_binary_ea(0.4461, 8)
    c = de.ea_curves(dist, thr)
    th = de.mono_threshold_de(c, dist, x=np.linspace(0, 0.999, 2000))
    assert th.Ic_thr == pytest.approx(thr, abs=2e-4)
    rx, r = de.correction_factor(c, dist, x=np.linspace(0, 0.999, 500))
    np.testing.assert_allclose(r, 1.0, atol=1e-3)


@pytest.mark.parametrize("d_b, d_c, thr", [(4, 2, 1 / 3), (5, 3, 7 / 16)])
def test_regular_thresholds_from_curves(d_b, d_c, thr):
    dist = DegreeDistribution.regular(d_b, d_c)
    c = de.ea_curves(dist, thr, n=20001)
    th = de.mono_threshold_de(c, dist, x=np.linspace(0, 0.999, 1000))
    assert th.Ic_thr == pytest.approx(thr, abs=1e-3)


# ---------------------------------------------------------------- sweeps


def test_up_sweep_iterations_monotone():
    dist = DegreeDistribution.regular(5, 3)
    t = bounds.solve_t0(0.30, 1)
    rec = de.de_sweep(dist, t, "up", SMALL)
    assert rec.converged.all()
    # within one I_b value the b->c information approaches its fixed point from below
    for Ib in rec.Ib[:8]:
        rows = rec.data[rec.data[:, 0] == Ib]
        assert np.all(np.diff(rows[:, 3]) >= -1e-9)


def test_hysteresis_brackets_threshold():
    dist = DegreeDistribution.regular(5, 3)
    gaps = {}
    for Ic in (0.25, 0.60):
        t = bounds.solve_t0(Ic, 1)
        up = de.de_sweep(dist, t, "up", SMALL)
        down = de.de_sweep(dist, t, "down", SMALL)
        gaps[Ic] = de.hysteresis_gap(up, down)
        if Ic == 0.25:
            assert down.fixed[-1, 0] < 1e-3  # I_b = 0 end of the down sweep
    assert gaps[0.25] < 5e-3
    assert gaps[0.60] > 5e-2


def test_sweep_record_round_trip():
    dist = DegreeDistribution.regular(4, 2)
    rec = de.de_sweep(dist, 3.0, "up", SMALL, Ib_grid=np.linspace(0, 1, 5))
    back = de.SweepRecord.from_json(rec.to_json())
    np.testing.assert_array_equal(back.data, rec.data)
    assert back.dist.v == dist.v and back.direction == "up"
    with pytest.raises(ValueError):
        de.de_sweep(dist, 3.0, "sideways", SMALL)


def test_monotonicity_gate_rejects_large_drops():
    with pytest.raises(de.CurveError):
        de._monotone_table(np.linspace(0, 1, 10), np.r_[np.linspace(0, 1, 9), 0.5])
    x, v = de._monotone_table(np.linspace(0, 1, 10), np.r_[np.linspace(0, 1, 9), 0.9995])
    assert np.all(np.diff(v) >= 0)


def test_too_few_points_rejected():
    dist = DegreeDistribution.regular(4, 2)
    rec = de.de_sweep(dist, 3.0, "up", SMALL, Ib_grid=np.linspace(0, 1, 3))
    with pytest.raises(de.CurveError):
        de.extract_fgh(rec, min_points=10**6)
