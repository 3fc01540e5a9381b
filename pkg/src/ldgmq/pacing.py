"""Decimation pacing: approximate and optimal paces, delta-area accounting.

Notation: x is I_bc, y = 1 - I_cb. The EXIT functions f, g, h satisfy
I_cb = Ic f(x), I_bc' = 1 - (1 - I_b) g(1 - I_cb), I_b^ext = 1 - h(1 - I_cb).
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import integrate

from . import bounds

log = logging.getLogger(__name__)


# ------------------------------------------------------- approximate pace


def approx_exponent(d_b: int) -> float:
    return 2.0 * (d_b - 1) / d_b


def approx_rate(x, d_b: int, L: float):
    """dx/dl of the approximate pace."""
    x = np.asarray(x, dtype=float)
    a = (d_b - 2) / (2.0 * (d_b - 1))
    return 2.0 * (d_b - 1) / (L * d_b) * np.clip(1.0 - x, 0.0, None) ** a


def approx_x_of_l(l, d_b: int, L: float):
    l = np.clip(np.asarray(l, dtype=float), 0.0, L)
    return 1.0 - (1.0 - l / L) ** approx_exponent(d_b)


def approx_l_of_x(x, d_b: int, L: float):
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return L * (1.0 - (1.0 - x) ** (1.0 / approx_exponent(d_b)))


def p_plus(x, d_b: int, L: float):
    """x(l(x) + 1): the I_bc reached one iteration after x."""
    c = approx_exponent(d_b)
    base = np.clip((1.0 - np.asarray(x, dtype=float)) ** (1.0 / c) - 1.0 / L, 0.0, None)
    return 1.0 - base ** c


def p_plus_prime(x, d_b: int, L: float):
    c = approx_exponent(d_b)
    x = np.asarray(x, dtype=float)
    r = np.clip(1.0 - x, 0.0, None) ** (1.0 / c)
    base = np.clip(r - 1.0 / L, 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = base ** (c - 1.0) * np.where(r > 0, r ** (1.0 - c), 0.0)
    return np.where(base > 0, out, 0.0)


def q_of_x(x, d_b: int, L: float | None):
    """(1 - p+(x)) / p+'(x); reduces to 1 - x as L -> inf."""
    x = np.asarray(x, dtype=float)
    if L is None or np.isinf(L):
        return 1.0 - x
    c = approx_exponent(d_b)
    r = np.clip(1.0 - x, 0.0, None) ** (1.0 / c)
    return np.clip(r - 1.0 / L, 0.0, None) * np.clip(1.0 - x, 0.0, None) ** (1.0 - 1.0 / c)


@dataclass
class PaceSchedule:
    """x(l) for l = 0..L, or a callable increment rule Delta+(x)."""
    L0: float
    x: np.ndarray | None = None
    kind: str = "table"
    d_b: int | None = None

    def delta_plus(self, x_now: float) -> float:
        if self.kind == "uniform":
            return 1.0 / self.L0
        if self.kind == "approx":
            return float(approx_rate(x_now, self.d_b, self.L0))
        # table: the step from the current position along x(l)
        xs = self.x
        l = np.interp(x_now, xs, np.arange(xs.size))
        return float(np.interp(l + 1, np.arange(xs.size), xs) - x_now)


def uniform_pace(L0: float) -> PaceSchedule:
    return PaceSchedule(L0=L0, x=np.linspace(0, 1, int(round(L0)) + 1), kind="uniform")


def approx_pace(d_b: int, L0: float) -> PaceSchedule:
    if d_b < 2:
        raise ValueError("d_b must be at least 2")
    n = int(np.ceil(L0))
    xs = approx_x_of_l(np.arange(n + 1) * (L0 / n), d_b, L0)
    return PaceSchedule(L0=L0, x=xs, kind="approx", d_b=d_b)


# ------------------------------------------------------- curve helpers
#
# `curves` is any object with f_of, fp_of, g_of, h_of, hp_of (e.g. de.FghCurves).


def _profile(curves, Ic, x):
    """(y, Ic f'(x) h'(y), g(y)) along the EXIT path y = 1 - Ic f(x)."""
    y = 1.0 - Ic * curves.f_of(x)
    return y, Ic * curves.fp_of(x) * curves.hp_of(y), curves.g_of(y)


def _xgrid(curves, n=20001):
    hi = min(1.0, float(getattr(curves, "x", np.array([1.0]))[-1]))
    return np.linspace(0.0, hi, n)


def _trapz(v, x):
    v = np.where(np.isfinite(v), v, 0.0)
    return float(np.sum(0.5 * (v[1:] + v[:-1]) * np.diff(x)))


def lai_optimal(curves, Ic: float) -> float:
    """L * A_i of the continuous optimal pace: (int sqrt(Ic f' h' / g) dx)^2."""
    x = _xgrid(curves)
    _, fh, g = _profile(curves, Ic, x)
    return _trapz(np.sqrt(np.clip(fh / g, 0.0, None)), x) ** 2


def lai_uniform(curves, Ic: float) -> float:
    """L * A_i of uniform pacing: int Ic f' h' / g dx."""
    x = _xgrid(curves)
    _, fh, g = _profile(curves, Ic, x)
    return _trapz(fh / g, x)


def lai_for_shape(curves, Ic: float, phi) -> float:
    """L * A_i for a pace dx/dl proportional to phi(x)."""
    x = _xgrid(curves)
    _, fh, g = _profile(curves, Ic, x)
    ph = phi(x)
    with np.errstate(divide="ignore"):
        inv = np.where(ph > 0, 1.0 / ph, 0.0)
    return _trapz(inv, x) * _trapz(ph * fh / g, x)


def lai_approx(curves, Ic: float, d_b: int) -> float:
    """L * A_i of the approximate pace (1 - x)^((d_b-2)/(2(d_b-1)))."""
    a = (d_b - 2) / (2.0 * (d_b - 1))
    return lai_for_shape(curves, Ic, lambda x: np.clip(1.0 - x, 0.0, None) ** a)


def lai_ea_close_fit(d_b: int, n: int = 200001) -> float:
    """Optimal L * A_i with EA g, h and Ic f'(x) g'(y) = 1, x = 1 - g(y)."""
    # integrate in y: dx = g'(y) dy, integrand sqrt(h' / (g g'))
    y = np.linspace(0.0, 1.0, n)[1:]
    g = y ** (d_b - 1)
    gp = (d_b - 1) * y ** (d_b - 2)
    hp = d_b * y ** (d_b - 1)
    v = np.sqrt(hp / (g * gp)) * gp
    return _trapz(np.concatenate([[0.0], v]), np.concatenate([[0.0], y])) ** 2


def ebp_area_curves(curves, Ic: float, n: int = 20001) -> float:
    """Area below the EBP curve implied by f, g, h (I_b* unclipped)."""
    x = _xgrid(curves, n)
    y = 1.0 - Ic * curves.f_of(x)
    if hasattr(curves, "y"):
        # the path may end a hair outside the tabulated y range
        y = np.clip(y, curves.y[0], curves.y[-1])
    Ib = 1.0 - (1.0 - x) / curves.g_of(y)
    E = 1.0 - curves.h_of(y)
    return float(E[0] + np.sum(0.5 * ((1 - Ib[1:]) + (1 - Ib[:-1])) * np.diff(E)))


# ------------------------------------------------------- staircase areas


@dataclass
class PaceResult:
    x: np.ndarray  # I_bc after each iteration, x[0] = 0
    Ib: np.ndarray  # I_b^(l), l = 0..L
    Iext: np.ndarray  # I_b^ext(l), l = 0..L
    A_d: float
    A_ne: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def L(self) -> int:
        return self.x.size - 1

    @property
    def A_i(self) -> float:
        return float("nan") if self.A_ne is None else self.A_ne - self.A_d

    def schedule(self) -> PaceSchedule:
        return PaceSchedule(L0=self.L, x=self.x.copy(), kind="table")

    def monotone(self, tol=1e-12) -> bool:
        """I_b^(1) >= 0 and I_b^(l) non-decreasing; tol may be per-step (length L)."""
        tol = np.broadcast_to(np.asarray(tol, dtype=float), (self.L,))
        return bool(self.Ib[1] >= -tol[0] and np.all(np.diff(self.Ib[1:]) >= -tol[1:]))


def staircase(curves, Ic: float, x_sched, A_ne: float | None = None) -> PaceResult:
    """Iterate the EXIT recursion along a given I_bc schedule x_0=0 < ... < x_L=1."""
    xs = np.asarray(x_sched, dtype=float)
    L = xs.size - 1
    Ib = np.zeros(L + 1)
    E = np.zeros(L + 1)
    for l in range(1, L + 1):
        y = 1.0 - Ic * float(curves.f_of(xs[l - 1]))
        Ib[l] = 1.0 - (1.0 - xs[l]) / float(curves.g_of(y))
        E[l] = 1.0 - float(curves.h_of(y))
    Ib[L] = 1.0
    A_d = float(np.sum((1.0 - Ib[:-1]) * np.diff(E)))
    return PaceResult(xs, Ib, E, A_d, A_ne)


_NF = 200001  # fine uniform table for Hx and G


def _tables(curves, Ic):
    x = np.linspace(0.0, 1.0, _NF)
    y = 1.0 - Ic * curves.f_of(x)
    Hx = 1.0 - curves.h_of(y)
    G = curves.g_of(y)
    ok = np.isfinite(Hx) & np.isfinite(G) & (G > 0)
    if not ok.all():
        last = np.flatnonzero(ok)[-1]
        Hx[~ok] = Hx[last]
        G[~ok] = G[last]
    return Hx, G


@numba.njit(cache=True)
def _lerp_u(tab, x):
    """Linear interpolation on the uniform grid over [0, 1]."""
    n = tab.size - 1
    s = min(max(x, 0.0), 1.0) * n
    k = min(int(s), n - 1)
    w = s - k
    return tab[k] * (1.0 - w) + tab[k + 1] * w


@numba.njit(cache=True)
def _lerp_g(xg, tab, x):
    k = np.searchsorted(xg, x, side="right") - 1
    k = min(max(k, 0), xg.size - 2)
    w = (x - xg[k]) / (xg[k + 1] - xg[k])
    return tab[k] * (1.0 - w) + tab[k + 1] * w


@numba.njit(cache=True)
def _value(x, g, hx, ibf, span, r, xg, Anext, Ibnext, Hx, constrained):
    d = span * r
    xp = min(1.0, x + d * g)
    ib = ibf + d
    if constrained and (ib < 0.0 or ib > _lerp_g(xg, Ibnext, xp) + 1e-12):
        return -np.inf, xp, ib
    return (1.0 - xp) * (_lerp_u(Hx, xp) - hx) / g + _lerp_g(xg, Anext, xp), xp, ib


@numba.njit(cache=True)
def _best(x, xg, Anext, Ibnext, Hx, G, rel, constrained):
    """Best decision from state x: returns (value, x', I_b)."""
    g = _lerp_u(G, x)
    hx = _lerp_u(Hx, x)
    ibf = 1.0 - (1.0 - x) / g
    span = 1.0 - ibf  # the jump to x' = 1
    best = -np.inf
    bk = 0
    for k in range(rel.size):
        v, xp, ib = _value(x, g, hx, ibf, span, rel[k], xg, Anext, Ibnext, Hx, constrained)
        if v > best:
            best = v
            bk = k
    if best == -np.inf:
        return _lerp_g(xg, Anext, x), x, ibf
    # golden-section polish between the neighbouring grid decisions
    a = rel[max(bk - 1, 0)]
    b = rel[min(bk + 1, rel.size - 1)]
    br = rel[bk]
    phi = 0.6180339887498949
    c1 = b - phi * (b - a)
    c2 = a + phi * (b - a)
    v1 = _value(x, g, hx, ibf, span, c1, xg, Anext, Ibnext, Hx, constrained)[0]
    v2 = _value(x, g, hx, ibf, span, c2, xg, Anext, Ibnext, Hx, constrained)[0]
    for _ in range(24):
        if v1 >= v2:
            b, c2, v2 = c2, c1, v1
            c1 = b - phi * (b - a)
            v1 = _value(x, g, hx, ibf, span, c1, xg, Anext, Ibnext, Hx, constrained)[0]
        else:
            a, c1, v1 = c1, c2, v2
            c2 = a + phi * (b - a)
            v2 = _value(x, g, hx, ibf, span, c2, xg, Anext, Ibnext, Hx, constrained)[0]
    if max(v1, v2) > best:
        br = c1 if v1 >= v2 else c2
    v, xp, ib = _value(x, g, hx, ibf, span, br, xg, Anext, Ibnext, Hx, constrained)
    return v, xp, ib


@numba.njit(cache=True)
def _dp(xg, Hx, G, L, rel, constrained):
    N = xg.size
    A = np.zeros((L + 1, N))
    Ib = np.ones((L + 1, N))
    for l in range(L - 1, 0, -1):
        for i in range(N):
            v, xp, ib = _best(xg[i], xg, A[l + 1], Ib[l + 1], Hx, G, rel, constrained)
            A[l, i] = v
            Ib[l, i] = ib
    # forward pass along the exact path
    xs = np.zeros(L + 1)
    for l in range(1, L):
        v, xp, ib = _best(xs[l - 1], xg, A[l + 1], Ib[l + 1], Hx, G, rel, constrained)
        xs[l] = xp
    xs[L] = 1.0
    return xs, A[1, 0]


def dp_optimal_pace(curves, Ic: float, L: int, npts: int | None = None, nsteps: int = 128,
                    A_ne: float | None = None, constrained: bool | None = None) -> PaceResult:
    """Maximize A_d over I_bc^(1..L-1) by dynamic programming.

    States are I_bc grid nodes; the decision is the gap dI_b between I_b and the
    EBP value, on a log grid, with A^(l+1) interpolated at the resulting I_bc.
    constrained=None solves without the I_b monotonicity constraint first and
    re-solves with it imposed greedily only if the result violates it.
    """
    if L < 1:
        raise ValueError("L must be at least 1")
    npts = npts or max(1024, 2 * L)
    Hx, G = _tables(curves, Ic)
    term0 = float(Hx[0])
    if L == 1:
        return PaceResult(np.array([0.0, 1.0]), np.array([0.0, 1.0]), np.array([0.0, term0]),
                          term0, A_ne, {"grid": npts})
    rel = np.concatenate([[0.0], np.logspace(-8, 0, nsteps - 1)])
    xg = np.linspace(0.0, 1.0, npts)
    modes = [False, True] if constrained is None else [bool(constrained)]
    for mode in modes:
        xs, A1 = _dp(xg, Hx, G, L, rel, mode)
        res = staircase(curves, Ic, xs, A_ne)
        res.meta = {"grid": npts, "steps": nsteps, "constrained": mode, "A_d_table": term0 + A1}
        # choices may land a cell either side: I_b dips below 2h/g are noise
        tol = 2.0 * (xg[1] - xg[0]) / np.interp(xs[:-1], np.linspace(0.0, 1.0, _NF), G)
        if mode or res.monotone(tol):
            break
    return res


def uniform_result(curves, Ic: float, L: int, A_ne=None) -> PaceResult:
    return staircase(curves, Ic, np.linspace(0.0, 1.0, L + 1), A_ne)


def approx_result(curves, Ic: float, L: int, d_b: int, A_ne=None) -> PaceResult:
    return staircase(curves, Ic, approx_x_of_l(np.arange(L + 1), d_b, L), A_ne)


def continuous_optimal_pace(curves, Ic: float, L: float, n: int = 20001) -> PaceSchedule:
    """x(l) with dl/dx proportional to sqrt(Ic f' h' / g), scaled to L iterations."""
    x = _xgrid(curves, n)
    _, fh, g = _profile(curves, Ic, x)
    dens = np.sqrt(np.clip(np.where(np.isfinite(fh / g), fh / g, 0.0), 0.0, None))
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(x))])
    if cum[-1] <= 0:
        raise ValueError("degenerate curves: zero pace integral")
    # strictly increasing l(x) for inversion
    lx = L * cum / cum[-1] + np.linspace(0.0, 1e-12, x.size)
    nL = int(np.ceil(L))
    xs = np.interp(np.arange(nL + 1) * (L / nL), lx, x)
    xs[0], xs[-1] = 0.0, 1.0
    return PaceSchedule(L0=L, x=xs, kind="table")


# ------------------------------------------------------- simulation areas


def actual_area(traj) -> float:
    """Area below the actual curve: sum over iterations of dI_b * I_b^ext.

    `traj` is a Trajectory or its array form (columns I_b, I_b^ext, ...).
    """
    if isinstance(traj, np.ndarray):
        Ib, E = traj[:, 0], traj[:, 1]
    else:
        Ib, E = traj.Ib, traj.Ib_ext
    Ib = np.concatenate([[0.0], np.asarray(Ib, dtype=float)])
    E = np.nan_to_num(np.asarray(E, dtype=float), nan=0.0)
    return float(np.sum(np.diff(Ib) * E))


def delta_area(traj, ebp_area: float) -> float:
    """A_i = A_ne - A_d for a recorded quantizer trajectory."""
    return float(ebp_area - actual_area(traj))


def mse_estimate(A_i: float, Ic: float, R: float, t: float, K: int = 1) -> float:
    """(1 - a) P_t + a P_0 with a = A_i / (K Ic / R)."""
    A_ne = K * Ic / R
    a = A_i / A_ne
    if a < 0 or a > 1:
        warnings.warn(f"A_i={A_i:.4g} outside [0, {A_ne:.4g}]; clipped")
        a = min(max(a, 0.0), 1.0)
    m = 1 << K
    Pt = bounds.power_Pt(bounds.SourceModel(K, t))
    return (1 - a) * Pt + a * m * m / 12.0
