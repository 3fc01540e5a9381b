"""EXIT analysis under the erasure approximation and LP code design.

All c-side curves are written through alpha_{k',d}(x); for K = 1 the only
term is alpha_{0,d}(x) = x^{d-1}, which gives the binary formulas.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np
from scipy import integrate
from scipy.optimize import linprog

from . import bounds
from .codes import DegreeDistribution, GrayMap, degree_set
from .pacing import p_plus, q_of_x

log = logging.getLogger(__name__)

X_GRID = np.linspace(0.0, 1.0, 1000)


# ------------------------------------------------------------------ LP


class LpError(RuntimeError):
    pass


class LpInfeasible(LpError):
    pass


class LpUnbounded(LpError):
    pass


@dataclass
class LpResult:
    x: np.ndarray
    fun: float


def lp_solve(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None) -> LpResult:
    """Minimize c.x subject to A_ub x <= b_ub, A_eq x = b_eq and bounds."""
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=bounds if bounds is not None else (0, None), method="highs")
    if res.status == 2:
        raise LpInfeasible(res.message)
    if res.status == 3:
        raise LpUnbounded(res.message)
    if res.status != 0:
        raise LpError(res.message)
    return LpResult(np.asarray(res.x), float(res.fun))


# ------------------------------------------------------- curve building


def _xpow(x, e):
    # x**e, with the convention that negative exponents only appear
    # multiplied by a zero coefficient
    if e < 0:
        return np.zeros_like(x)
    return x ** e


def alpha(K, kp, d, x):
    x = np.asarray(x, dtype=float)
    return comb(K - 1, kp) * _xpow(x, d * (kp + 1) - 1) * _xpow(1 - x ** d, K - kp - 1)


def alpha_prime(K, kp, d, x):
    x = np.asarray(x, dtype=float)
    a = d * (kp + 1) - 1
    b = K - kp - 1
    xd = 1 - x ** d
    t1 = a * _xpow(x, a - 1) * _xpow(xd, b) if a else np.zeros_like(x)
    t2 = b * d * _xpow(x, a + d - 1) * _xpow(xd, b - 1) if b else np.zeros_like(x)
    return comb(K - 1, kp) * (t1 - t2)


def s_components(K, degrees, d_b, x, q=None):
    """S[k', i, j] = alpha + q (d_b - 1) alpha' for degree degrees[j] at x_i."""
    x = np.asarray(x, dtype=float)
    q = 1 - x if q is None else np.asarray(q, dtype=float)
    out = np.empty((K, x.size, len(degrees)))
    for kp in range(K):
        for j, d in enumerate(degrees):
            out[kp, :, j] = alpha(K, kp, d, x) + q * (d_b - 1) * alpha_prime(K, kp, d, x)
    return out


def s_of_x(dist: DegreeDistribution, x, weights=None, q=None):
    """s(x) for a binary distribution, or sum_k' w_k' s_k'(x) for K >= 2."""
    w = np.ones(1) if weights is None else np.asarray(weights, dtype=float)
    S = s_components(dist.K, list(dist.degrees), dist.d_b, x, q)
    return np.einsum("k,kij,j->i", w[:dist.K], S, dist.fractions)


@dataclass(frozen=True)
class MaryChannel:
    K: int
    t: float
    Ic_k: tuple  # I_c^{k'} for k' = 0..K-1

    @property
    def Ic(self) -> float:
        return float(np.mean(self.Ic_k))

    @property
    def gamma(self) -> np.ndarray:
        return np.asarray(self.Ic_k) / self.Ic


def _cond_entropy_table(K, t, npts=48, panels=2):
    m = 1 << K
    xs, ws = bounds.gauss_legendre_unit(npts, panels)
    y = (np.arange(m)[:, None] + xs[None, :]).ravel()
    w = np.tile(ws, m) / m
    P = bounds.prior_for_symbol(y, bounds.SourceModel(K, t))  # (N, m)
    bits = GrayMap(K).table()  # (m, K)
    H = {}
    for k in range(K):
        others = [j for j in range(K) if j != k]
        for mask in range(1 << len(others)):
            S = tuple(others[i] for i in range(len(others)) if mask >> i & 1)
            h = np.zeros_like(y)
            for pat in range(1 << len(S)):
                sel = np.ones(m, dtype=bool)
                for i, j in enumerate(S):
                    sel &= bits[:, j] == (pat >> i & 1)
                p0 = P[:, sel & (bits[:, k] == 0)].sum(axis=1)
                p1 = P[:, sel & (bits[:, k] == 1)].sum(axis=1)
                ps = p0 + p1
                for pb in (p0, p1):
                    with np.errstate(divide="ignore", invalid="ignore"):
                        h -= np.where(pb > 0, pb * np.log2(pb / ps), 0.0)
            H[(k, S)] = float(np.dot(w, h))
    return H


@lru_cache(maxsize=512)
def mary_channel(K: int, t: float) -> MaryChannel:
    """Component MIs I_c^{k'} = 1 - (average H(c_k | c_S, y) over |S| = k')."""
    if K < 1 or K > 3:
        raise ValueError("K must be 1, 2 or 3")
    H = _cond_entropy_table(K, float(t))
    Ik = []
    for kp in range(K):
        vals = [h for (k, S), h in H.items() if len(S) == kp]
        Ik.append(1.0 - float(np.mean(vals)))
    return MaryChannel(K, float(t), tuple(Ik))


def conditional_entropies(K, t):
    return _cond_entropy_table(K, float(t))


def _channel_weights(dist, chan):
    if isinstance(chan, MaryChannel):
        return np.asarray(chan.Ic_k)
    return np.full(dist.K, float(chan))


def cb_curve(dist: DegreeDistribution, chan, x):
    """I_cb(x) and its derivative; chan is I_c (binary) or a MaryChannel."""
    w = _channel_weights(dist, chan)
    x = np.asarray(x, dtype=float)
    val = np.zeros_like(x)
    der = np.zeros_like(x)
    for kp in range(dist.K):
        for d, v in dist.v.items():
            val += w[kp] * v * alpha(dist.K, kp, d, x)
            der += w[kp] * v * alpha_prime(dist.K, kp, d, x)
    return val, der


@dataclass
class EbpCurve:
    x: np.ndarray
    Ib: np.ndarray
    Ib_ext: np.ndarray
    Icb: np.ndarray


def ebp_curve(dist: DegreeDistribution, chan, x=None) -> EbpCurve:
    x = X_GRID if x is None else np.asarray(x, dtype=float)
    icb, _ = cb_curve(dist, chan, x)
    y = 1.0 - icb
    with np.errstate(divide="ignore"):
        Ib = 1.0 - (1.0 - x) / y ** (dist.d_b - 1)
    return EbpCurve(x, Ib, 1.0 - y ** dist.d_b, icb)


def ebp_slope(dist, chan, x):
    """dI_b/dx in closed form."""
    icb, der = cb_curve(dist, chan, x)
    y = 1.0 - icb
    d_b = dist.d_b
    return y ** (1 - d_b) - (1 - x) * (d_b - 1) * y ** (-d_b) * der


def is_monotone(dist, chan, npts=20001) -> bool:
    """I_b(0) >= 0 and dI_b/dx >= 0 on a fine grid."""
    x = np.linspace(0, 1, npts)
    c = ebp_curve(dist, chan, x)
    return bool(c.Ib[0] >= -1e-12 and np.all(np.diff(c.Ib) >= -1e-12))


def ebp_area(dist: DegreeDistribution, chan) -> float:
    """Area below the EBP curve: the rectangle under I_b^ext(0) plus the
    region swept by the curve above it, integral of (1 - I_b) dI_b^ext."""
    d_b = dist.d_b

    def integrand(x):
        icb, der = cb_curve(dist, chan, np.array([x]))
        y = 1.0 - icb[0]
        one_minus_ib = (1.0 - x) / y ** (d_b - 1)
        dext = d_b * y ** (d_b - 1) * der[0]
        return one_minus_ib * dext

    icb0, _ = cb_curve(dist, chan, np.array([0.0]))
    lower = 1.0 - (1.0 - icb0[0]) ** d_b
    upper, _ = integrate.quad(integrand, 0.0, 1.0, limit=400, epsabs=1e-12)
    return float(lower + upper)


def ic_threshold(dist: DegreeDistribution, x=None, weights=None) -> float:
    """1 / max_x s(x) (EA monotonicity threshold for fixed component ratios)."""
    if dist.v.get(1, 0.0) > 0:
        return 0.0
    x = np.linspace(0, 1, 20001) if x is None else x
    return float(1.0 / s_of_x(dist, x, weights).max())


# ------------------------------------------------------- LP design


def pace_v1_bound(d_b, L, g_inv=None) -> float:
    """1 - g^{-1}(1 - p+(0)); EA uses g(y) = y^{d_b - 1}."""
    w = 1.0 - float(p_plus(0.0, d_b, L))
    if g_inv is None:
        return 1.0 - w ** (1.0 / (d_b - 1))
    return 1.0 - float(g_inv(w))


def pacing_aware_constraints(K, degrees, d_b, x, L, weights, r=None, g_inv=None):
    """Rows of r(x) sum_k' w_k' s^{(L)}_k'(x) <= s_max and the v_1 row.

    Returns (A, v1_row) over the variable vector (v_d..., s_max); v1_row is
    None when degree 1 is not in the set.
    """
    q = q_of_x(x, d_b, L)
    A = _s_rows(K, degrees, d_b, x, weights, q, r)
    v1_row = None
    if 1 in degrees:
        v1_row = np.zeros(len(degrees) + 1)
        v1_row[list(degrees).index(1)] = 1.0
        v1_row[-1] = -pace_v1_bound(d_b, L, g_inv) / weights[0]
    return A, v1_row


def _s_rows(K, degrees, d_b, x, weights, q, r):
    S = s_components(K, degrees, d_b, x, q)
    rows = np.einsum("k,kij->ij", np.asarray(weights, dtype=float)[:K], S)
    if r is not None:
        rows = rows * np.asarray(r, dtype=float)[:, None]
    return np.hstack([rows, -np.ones((x.size, 1))])


@dataclass
class LpDesign:
    dist: DegreeDistribution
    s_max: float


def design_lp(K, R, d_b, degrees, weights, x=None, r=None, L=None, g_inv=None) -> LpDesign:
    """min s_max s.t. r(x) sum_k' w_k' s_k'(x) <= s_max, rate/normalization."""
    x = X_GRID if x is None else np.asarray(x, dtype=float)
    degrees = list(degrees)
    if L is None:
        degrees = [d for d in degrees if d >= 2]
        A = _s_rows(K, degrees, d_b, x, weights, None, r)
        extra = None
    else:
        if 1 not in degrees:
            degrees = [1] + degrees
        A, extra = pacing_aware_constraints(K, degrees, d_b, x, L, weights, r, g_inv)
    if extra is not None:
        A = np.vstack([A, extra])
    nv = len(degrees)
    A_eq = np.zeros((2, nv + 1))
    A_eq[0, :nv] = 1.0
    A_eq[1, :nv] = 1.0 / np.asarray(degrees, dtype=float)
    b_eq = [1.0, K / (R * d_b)]
    c = np.zeros(nv + 1)
    c[-1] = 1.0
    res = lp_solve(c, A_ub=A, b_ub=np.zeros(A.shape[0]), A_eq=A_eq, b_eq=b_eq,
                   bounds=[(0, None)] * (nv + 1))
    v = {d: float(val) for d, val in zip(degrees, res.x[:nv]) if val > 1e-12}
    tot = sum(v.values())
    v = {d: val / tot for d, val in v.items()}
    return LpDesign(DegreeDistribution(K=K, R=R, d_b=d_b, v=v), float(res.x[-1]))


def optimize_binary_ea(R, d_b, degrees=None, r=None, x=None, L=None, g_inv=None):
    """EA (r = None) or correction-weighted LP design for K = 1.

    Returns (dist, I_c^thr) with I_c^thr = 1 / s_max. With L given the design
    is pacing aware and the threshold is I_c^{thr,L}.
    """
    degrees = degree_set(1.1, 1000) if degrees is None else degrees
    out = design_lp(1, R, d_b, degrees, [1.0], x=x, r=r, L=L, g_inv=g_inv)
    thr = 1.0 / out.s_max
    out.dist.threshold = thr
    out.dist.meta = {"method": "EA" if r is None else "DE",
                     "pace_L": L, "s_max": out.s_max}
    return out.dist, thr


def optimize_mary_ea(R, d_b, K, degrees=None, L=None, t_tol=1e-3, r=None, x=None,
                     g_inv=None, t_bracket=(0.05, 64.0)):
    """Largest t at which the LP with weights I_c^{k'}(t) reaches s_max <= 1.

    Returns (dist, t_thr); dist.threshold holds I_c at t_thr.
    """
    degrees = degree_set(1.1, 1000) if degrees is None else degrees

    def solve(t):
        ch = mary_channel(K, round(t, 12))
        return design_lp(K, R, d_b, degrees, ch.Ic_k, x=x, r=r, L=L, g_inv=g_inv), ch

    lo, hi = t_bracket
    best = None
    out_lo, _ = solve(lo)
    if out_lo.s_max > 1:
        raise LpInfeasible("monotonicity cannot be met at any t in the bracket")
    best = (out_lo, lo)
    while hi - lo > t_tol:
        mid = 0.5 * (lo + hi)
        out, _ = solve(mid)
        if out.s_max <= 1.0:
            lo, best = mid, (out, mid)
        else:
            hi = mid
    out, t_thr = best
    ch = mary_channel(K, round(t_thr, 12))
    out.dist.threshold = ch.Ic
    out.dist.meta = {"method": "EA" if r is None else "DE", "pace_L": L,
                     "t_thr": t_thr, "K_Ic_thr": K * ch.Ic}
    return out.dist, t_thr


def optimize_mary_gamma(R, d_b, K, t_star, degrees=None, L=None, rounds=4, r=None,
                        x=None, g_inv=None):
    """gamma-form design: freeze I_c^{k'}/I_c at t*, solve, refresh t*."""
    degrees = degree_set(1.1, 1000) if degrees is None else degrees
    t = t_star
    for _ in range(rounds):
        ch = mary_channel(K, round(t, 12))
        out = design_lp(K, R, d_b, degrees, ch.gamma, x=x, r=r, L=L, g_inv=g_inv)
        ic_thr = 1.0 / out.s_max
        t_new = bounds.solve_t0(K * ic_thr, K)
        if abs(t_new - t) < 1e-4:
            t = t_new
            break
        t = t_new
    out.dist.threshold = ic_thr
    out.dist.meta = {"method": "EA-gamma", "pace_L": L, "t_thr": t}
    return out.dist, ic_thr
