"""Quantized density evolution, f/g/h extraction and DE-refined design.

Densities are symmetric (consistent) L-value densities relative to the
all-zero reference codeword, stored by magnitude (messages.SymDensity).
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import isotonic_regression

from . import bounds, exit_ea
from .codes import DegreeDistribution, GrayMap
from .messages import (Grid, QuantizedDensity, SymDensity, split_to_grid,
                       sym_cn_combine, sym_vn_power, symmetrize)
from .pacing import q_of_x

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DeConfig:
    M: int = 512
    L_max: float = 25.0
    steps: int = 512
    tol: float = 1e-7
    max_iter: int = 2000
    ybins: int = 256
    prior_pts: int = 20001

    @property
    def grid(self) -> Grid:
        return Grid(self.M, self.L_max)


def _identity(grid: Grid) -> SymDensity:
    """Neutral element of ⊕ (a sure message)."""
    return SymDensity(np.zeros(grid.M + 1), 1.0, grid)


# ------------------------------------------------------------- priors


def prior_density(t: float, grid: Grid, npts: int = 20001) -> SymDensity:
    """Density of the binary c-prior L-value t((z-1)_I^2 - z^2), z ~ p_z."""
    z = -1.0 + (np.arange(npts) + 0.5) * (2.0 / npts)
    w = bounds.pdf(z, bounds.SourceModel(1, t))
    w /= w.sum()
    L = t * (bounds.wrap(z - 1.0, 2) ** 2 - z * z)
    p = split_to_grid(L, w, grid)
    return symmetrize(QuantizedDensity(p, 0.0, 0.0, grid))


def erasure_prior(Ic: float, grid: Grid) -> SymDensity:
    """Synthetic erasure-like prior (sure with probability Ic)."""
    return SymDensity.erasure(Ic, grid)


@lru_cache(maxsize=4)
def _unode_matrix(t: float, M: int, L_max: float, ybins: int, sub: int = 8):
    """Row j: output density (signed bins) for incoming signed bin j; last row = sure."""
    K, m = 2, 4
    grid = Grid(M, L_max)
    bits = GrayMap(K).table()
    model = bounds.SourceModel(K, t)
    n_in = grid.size + 1
    Lin = np.concatenate([grid.values(), [np.inf]])
    # sub-sampled bins over [0, m)
    dy = m / ybins
    ys = (np.arange(ybins * sub) + 0.5) * (dy / sub)
    out = np.zeros(n_in * grid.size)
    Pu = bounds.prior_for_symbol(ys, model)  # (ny, m), rows sum to 1
    for ustar in range(m):
        wy = bounds.pdf(bounds.wrap(ys - ustar, m), model)
        wy = wy / wy.sum() / (2 * m)
        for k in range(K):
            kp = 1 - k
            sgn_in = 1.0 if bits[ustar, kp] == 0 else -1.0
            sgn_out = 1.0 if bits[ustar, k] == 0 else -1.0
            with np.errstate(over="ignore"):
                p0 = 1.0 / (1.0 + np.exp(-sgn_in * Lin))  # (n_in,)
            a = np.zeros((2, ys.size, n_in))
            for u in range(m):
                pk = p0 if bits[u, kp] == 0 else 1.0 - p0
                a[bits[u, k]] += Pu[:, u, None] * pk[None, :]
            with np.errstate(divide="ignore"):
                Lout = sgn_out * (np.log(a[0]) - np.log(a[1]))
            f = np.clip(Lout / grid.step, -M, M)
            lo = np.minimum(np.floor(f).astype(np.int64), M - 1)
            wt = f - lo
            base = (np.arange(n_in)[None, :] * grid.size)
            mass = np.broadcast_to(wy[:, None], Lout.shape)
            out += np.bincount((base + lo + M).ravel(), (mass * (1 - wt)).ravel(), out.size)
            out += np.bincount((base + lo + M + 1).ravel(), (mass * wt).ravel(), out.size)
    return out.reshape(n_in, grid.size)


def de_unode_combine(density: SymDensity, t: float, K: int = 2, ybins: int = 256) -> SymDensity:
    """u->c density given the density of the one other incoming c->u message."""
    if K != 2:
        raise ValueError("u-node density tables are only available for K = 2")
    g = density.grid
    T = _unode_matrix(round(float(t), 12), g.M, g.L_max, ybins)
    s = density.to_signed()
    vec = np.concatenate([s.p, [density.sure]])
    return symmetrize(QuantizedDensity(vec @ T, 0.0, 0.0, g))


# ------------------------------------------------------------- node updates


class DeEngine:
    """Edge-averaged c-node and b-node density maps for one (dist, t)."""

    def __init__(self, dist: DegreeDistribution, t: float, config: DeConfig = DeConfig(),
                 prior: SymDensity | None = None):
        if dist.K not in (1, 2):
            raise ValueError("density evolution supports K = 1 and K = 2")
        self.dist, self.t, self.cfg = dist, float(t), config
        self.grid = config.grid
        self.K = dist.K
        if self.K == 1:
            self.prior = prior if prior is not None else prior_density(t, self.grid, config.prior_pts)
            self.Ic = self.prior.mi()
        else:
            self.prior = None
            e = de_unode_combine(SymDensity.erasure(0.0, self.grid), t, ybins=config.ybins)
            s = de_unode_combine(_identity(self.grid), t, ybins=config.ybins)
            self.Ic_k = (e.mi(), s.mi())
            self.Ic = float(np.mean(self.Ic_k))
        self.degrees = list(dist.degrees)
        self.fractions = np.asarray(dist.fractions, dtype=float)

    def _powers(self, B: SymDensity, exps):
        cache = {0: _identity(self.grid), 1: B}

        def bpow(g):
            if g not in cache:
                h = bpow(g // 2)
                r = sym_cn_combine(h, h)
                cache[g] = sym_cn_combine(r, B) if g % 2 else r
            return cache[g]

        out = {}
        prev_e, cur = 0, cache[0]
        for e in sorted(set(exps)):
            cur = sym_cn_combine(cur, bpow(e - prev_e)) if e > prev_e else cur
            out[e] = cur
            prev_e = e
        return out

    def cnode(self, B: SymDensity) -> SymDensity:
        """Edge-averaged c->b density."""
        if self.K == 1:
            # ⊕ is bilinear, so the prior is applied once to the edge mixture
            X = self._powers(B, [d - 1 for d in self.degrees])
            rho = sum(v * X[d - 1].rho for d, v in zip(self.degrees, self.fractions))
            sure = sum(v * X[d - 1].sure for d, v in zip(self.degrees, self.fractions))
            return sym_cn_combine(self.prior, SymDensity(rho, sure, self.grid))
        else:
            X = self._powers(B, [d - 1 for d in self.degrees] + list(self.degrees))
            parts = []
            for d in self.degrees:
                U = de_unode_combine(X[d], self.t, ybins=self.cfg.ybins)
                parts.append(sym_cn_combine(U, X[d - 1]))
        rho = sum(v * p.rho for v, p in zip(self.fractions, parts))
        sure = sum(v * p.sure for v, p in zip(self.fractions, parts))
        return SymDensity(rho, sure, self.grid)

    def bnode(self, C: SymDensity, Ib: float):
        """(b->c density including the erasure-like b-prior, extrinsic density)."""
        d_b = self.dist.d_b
        inner = sym_vn_power(C, d_b - 1)
        B = SymDensity(inner.rho * (1 - Ib), Ib + (1 - Ib) * inner.sure, self.grid)
        return B, sym_vn_power(C, d_b)


# ------------------------------------------------------------- sweeps


@dataclass
class SweepRecord:
    K: int
    t: float
    Ic: float
    direction: str
    Ib: np.ndarray  # grid
    fixed: np.ndarray  # per grid point: Ibc, Icb, Iext
    iters: np.ndarray
    converged: np.ndarray
    data: np.ndarray  # per iteration: Ib, Ibc_in, Icb, Ibc_out, Iext
    dist: DegreeDistribution | None = None
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "K": self.K, "t": self.t, "Ic": self.Ic, "direction": self.direction,
            "Ib": self.Ib.tolist(), "fixed": self.fixed.tolist(), "iters": self.iters.tolist(),
            "converged": self.converged.tolist(), "data": self.data.tolist(),
            "dist": None if self.dist is None else self.dist.to_json(), "meta": self.meta,
        }

    @classmethod
    def from_json(cls, d: dict) -> "SweepRecord":
        return cls(d["K"], d["t"], d["Ic"], d["direction"], np.array(d["Ib"]),
                   np.array(d["fixed"]).reshape(-1, 3), np.array(d["iters"]),
                   np.array(d["converged"], dtype=bool), np.array(d["data"]).reshape(-1, 5),
                   None if d.get("dist") is None else DegreeDistribution.from_json(d["dist"]),
                   d.get("meta", {}))


def de_sweep(dist: DegreeDistribution, t: float, direction: str = "up",
             config: DeConfig = DeConfig(), prior: SymDensity | None = None,
             Ib_grid=None) -> SweepRecord:
    """Track DE fixed points while I_b moves slowly up (from all-*) or down (from all-0)."""
    if direction not in ("up", "down"):
        raise ValueError("direction must be up or down")
    eng = DeEngine(dist, t, config, prior)
    grid = np.linspace(0.0, 1.0, config.steps + 1) if Ib_grid is None else np.asarray(Ib_grid)
    if direction == "down":
        grid = grid[::-1]
        B = _identity(eng.grid)
    else:
        B = SymDensity.erasure(0.0, eng.grid)
    fixed, iters, conv, data = [], [], [], []
    for Ib in grid:
        I_prev = B.mi()
        ok = False
        for it in range(1, config.max_iter + 1):
            C = eng.cnode(B)
            B_new, ext = eng.bnode(C, Ib)
            I_new = B_new.mi()
            data.append((Ib, I_prev, C.mi(), I_new, ext.mi()))
            B = B_new
            if abs(I_new - I_prev) < config.tol:
                ok = True
                break
            I_prev = I_new
        if not ok:
            log.warning("DE did not converge at I_b=%.4f", Ib)
        fixed.append((B.mi(), data[-1][2], data[-1][4]))
        iters.append(it)
        conv.append(ok)
    meta = asdict(config)
    meta["note"] = "one data row per DE iteration"
    rec = SweepRecord(dist.K, float(t), eng.Ic, direction, grid, np.array(fixed),
                      np.array(iters), np.array(conv), np.array(data), dist, meta)
    if dist.K == 2:
        rec.meta["Ic_k"] = list(eng.Ic_k)
    return rec


def hysteresis_gap(up: SweepRecord, down: SweepRecord) -> float:
    """Largest |I_bc| difference between the two sweeps at equal I_b."""
    a = np.interp(up.Ib, down.Ib[::-1], down.fixed[::-1, 0])
    return float(np.max(np.abs(a - up.fixed[:, 0])))


# ------------------------------------------------------------- f, g, h


class CurveError(ValueError):
    pass


def _monotone_table(xs, vs, n=2001, what="curve", strict=1e-3):
    order = np.argsort(xs, kind="stable")
    xs, vs = xs[order], vs[order]
    drop = float(np.max(np.maximum.accumulate(vs) - vs)) if vs.size else 0.0
    if drop > strict:
        raise CurveError(f"{what} violates monotonicity by {drop:.2e}")
    fit = isotonic_regression(vs, increasing=True).x
    ux, inv = np.unique(xs, return_inverse=True)
    uv = np.bincount(inv, fit) / np.bincount(inv)
    grid = np.linspace(ux[0], ux[-1], n)
    return grid, np.interp(grid, ux, uv)


@dataclass
class FghCurves:
    x: np.ndarray
    f: np.ndarray
    fp: np.ndarray
    y: np.ndarray
    g: np.ndarray
    dlng: np.ndarray  # g'/g
    h: np.ndarray
    hp: np.ndarray
    Ic: float
    t: float
    K: int
    d_b: int
    Ic_k: tuple | None = None

    def f_of(self, x):
        return np.interp(x, self.x, self.f, left=np.nan, right=np.nan)

    def fp_of(self, x):
        return np.interp(x, self.x, self.fp, left=np.nan, right=np.nan)

    def g_of(self, y):
        return np.interp(y, self.y, self.g, left=np.nan, right=np.nan)

    def dlng_of(self, y):
        return np.interp(y, self.y, self.dlng, left=np.nan, right=np.nan)

    def h_of(self, y):
        return np.interp(y, self.y, self.h, left=np.nan, right=np.nan)

    def hp_of(self, y):
        return np.interp(y, self.y, self.hp, left=np.nan, right=np.nan)

    def g_inv(self, w):
        return float(np.interp(w, self.g, self.y))

    def to_json(self) -> dict:
        d = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()}
        d["Ic_k"] = None if self.Ic_k is None else list(self.Ic_k)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "FghCurves":
        kw = {k: (np.asarray(v) if isinstance(v, list) and k != "Ic_k" else v) for k, v in d.items()}
        return cls(**kw)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def extract_fgh(sweep: SweepRecord, n: int = 2001, min_points: int = 64,
                strict: float = 1e-3) -> FghCurves:
    """Interpolate the per-iteration MI tuples into monotone f, g, h tables."""
    D = sweep.data
    if D.shape[0] < min_points:
        raise CurveError(f"only {D.shape[0]} DE data points")
    Ib, Ibc, Icb, Ibc2, Iext = D.T
    x, f = _monotone_table(Ibc, Icb / sweep.Ic, n, "f", strict)
    ok = (1.0 - Ib) >= 1e-3
    yv = 1.0 - Icb[ok]
    y, g = _monotone_table(yv, (1.0 - Ibc2[ok]) / (1.0 - Ib[ok]), n, "g", strict)
    y2, h = _monotone_table(1.0 - Icb, 1.0 - Iext, n, "h", strict)
    h = np.interp(y, y2, h)
    with np.errstate(divide="ignore", invalid="ignore"):
        lng = np.log(np.maximum(g, 1e-300))
    K = sweep.K
    d_b = sweep.dist.d_b if sweep.dist is not None else int(sweep.meta.get("d_b", 0))
    Ic_k = tuple(sweep.meta["Ic_k"]) if "Ic_k" in sweep.meta else None
    return FghCurves(x, f, np.gradient(f, x), y, g, np.gradient(lng, y), h,
                     np.gradient(h, y), sweep.Ic, sweep.t, K, d_b, Ic_k)


def ea_curves(dist: DegreeDistribution, Ic: float, n: int = 2001) -> FghCurves:
    """Closed-form erasure-approximation curves (binary)."""
    x = np.linspace(0, 1, n)
    y = np.linspace(0, 1, n)
    d_b = dist.d_b
    f = sum(v * x ** (d - 1) for d, v in zip(dist.degrees, dist.fractions))
    fp = sum(v * (d - 1) * x ** max(d - 2, 0) for d, v in zip(dist.degrees, dist.fractions) if d > 1)
    fp = np.zeros_like(x) + fp
    with np.errstate(divide="ignore"):
        dlng = np.where(y > 0, (d_b - 1) / np.maximum(y, 1e-300), np.inf)
    return FghCurves(x, f, fp, y, y ** (d_b - 1), dlng, y ** d_b, d_b * y ** (d_b - 1),
                     Ic, float("nan"), 1, d_b)


# ------------------------------------------------------------- thresholds


def ic_de_of_x(curves: FghCurves, x, L: float | None = None, tol: float = 1e-8):
    """Largest I_c satisfying g/g' >= I_c q(x) f'(x) at each x (NaN if undetermined)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    q = q_of_x(x, curves.d_b, L)
    f = curves.f_of(x)
    fp = curves.fp_of(x)
    ymin, ymax = curves.y[0], curves.y[-1]
    scan = np.linspace(0.0, 1.0, 1001)
    out = np.full(x.size, np.nan)

    def margin(i, Ic):
        y = 1.0 - Ic * f[i]
        if y < ymin - 1e-12 or y > ymax + 1e-12:
            return np.nan
        dl = curves.dlng_of(min(max(y, ymin), ymax))
        return 1.0 - dl * Ic * q[i] * fp[i]

    for i in range(x.size):
        if not np.isfinite(f[i]) or not np.isfinite(fp[i]):
            continue
        prev = 0.0
        fail = None
        for Ic in scan[1:]:
            mg = margin(i, Ic)
            if np.isnan(mg):
                break
            if mg < 0:
                fail = Ic
                break
            prev = Ic
        else:
            out[i] = 1.0
            continue
        if fail is None:
            continue
        lo, hi = prev, fail
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if margin(i, mid) >= 0:
                lo = mid
            else:
                hi = mid
        out[i] = lo
    return out


@dataclass
class DeThreshold:
    Ic_thr: float
    x: np.ndarray
    Ic_x: np.ndarray

    @property
    def s_de(self) -> np.ndarray:
        return 1.0 / self.Ic_x


def mono_threshold_de(curves: FghCurves, dist: DegreeDistribution | None = None, x=None,
                      L: float | None = None) -> DeThreshold:
    """I_c^thr = 1 / max_x s^de(x); points whose y leaves the DE data are dropped."""
    if x is None:
        x = np.linspace(0.0, min(curves.x[-1], 0.999), 400)
    Icx = ic_de_of_x(curves, x, L)
    valid = np.isfinite(Icx)
    if not valid.any():
        raise CurveError("no x with a determined threshold")
    return DeThreshold(float(np.min(Icx[valid])), np.asarray(x)[valid], Icx[valid])


def ea_s(dist: DegreeDistribution, x, Ic_k=None, L: float | None = None):
    """Reference s(x) (γ-weighted for K = 2)."""
    q = None if L is None else q_of_x(x, dist.d_b, L)
    if dist.K == 1:
        return exit_ea.s_of_x(dist, x, q=q)
    gamma = np.asarray(Ic_k) / np.mean(Ic_k)
    return exit_ea.s_of_x(dist, x, weights=gamma, q=q)


def correction_factor(curves: FghCurves, dist: DegreeDistribution, x=None):
    """(x, r(x) = s^de(x)/s(x)) over the x where s^de is determined."""
    th = mono_threshold_de(curves, dist, x)
    s = ea_s(dist, th.x, curves.Ic_k)
    good = s > 0
    return th.x[good], th.s_de[good] / s[good]


# ------------------------------------------------------------- refinement


def t_for_ic(Ic: float, K: int) -> float:
    return bounds.solve_t0(K * Ic, K)


@dataclass
class RefineRound:
    dist: DegreeDistribution
    t_base: float
    Ic_thr_de: float
    Ic_pred: float
    r_x: np.ndarray
    r: np.ndarray


def refine(base: DegreeDistribution, rounds: int = 3, config: DeConfig = DeConfig(),
           L: float | None = None, t_base: float | None = None, degrees=None):
    """extract -> correction factor -> LP, repeated; returns (final dist, history)."""
    dist = base
    hist = []
    K = base.K
    for rnd in range(rounds):
        if t_base is None:
            t_base = t_for_ic(dist.threshold, K)
        sweep = de_sweep(dist, t_base, "up", config)
        curves = extract_fgh(sweep)
        th = mono_threshold_de(curves, dist)
        rx, r = correction_factor(curves, dist)
        if L is not None:
            # pacing constraints bind at small x, where s^de is often undetermined;
            # hold r constant beyond the measured range instead of dropping those x
            r = np.interp(exit_ea.X_GRID, rx, r)
            rx = exit_ea.X_GRID
        if K == 1:
            new, pred = exit_ea.optimize_binary_ea(dist.R, dist.d_b, degrees=degrees, r=r, x=rx,
                                                   L=L, g_inv=curves.g_inv if L else None)
        else:
            gamma = np.asarray(curves.Ic_k) / np.mean(curves.Ic_k)
            from .codes import degree_set
            out = exit_ea.design_lp(K, dist.R, dist.d_b, degree_set() if degrees is None else degrees,
                                    gamma, x=rx, r=r, L=L,
                                    g_inv=curves.g_inv if L else None)
            new, pred = out.dist, 1.0 / out.s_max
            new.threshold = pred
        new.meta = {"method": "DE-PO" if L else "DE", "round": rnd + 1, "pace_L": L,
                    "t_base": t_base, "Ic_thr_base_de": th.Ic_thr}
        hist.append(RefineRound(new, t_base, th.Ic_thr, pred, rx, r))
        log.info("round %d: base I_c^thr(DE)=%.4f, predicted %.4f", rnd + 1, th.Ic_thr, pred)
        dist = new
        t_base = None
    return dist, hist
