"""Belief-propagation quantization with decimation.

Messages are stored as L-values ln(mu0/mu1) per edge, with edges in b-major
order (the order of code.edge_b). Decimated bits send exactly sure messages
(+-inf); every other message is clipped to +-L_CLIP.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import bounds
from .codes import GrayMap, LdgmCode, encode, make_rng
from .messages import entropy_of_L, h_of_L
from .pacing import PaceSchedule, approx_pace, uniform_pace

log = logging.getLogger(__name__)

L_CLIP = 25.0


# ------------------------------------------------------------- kernels


@numba.njit(cache=True, inline="always")
def _atanh2(v):
    if v >= 1.0:
        return L_CLIP
    if v <= -1.0:
        return -L_CLIP
    L = np.log((1.0 + v) / (1.0 - v))
    if L > L_CLIP:
        return L_CLIP
    if L < -L_CLIP:
        return -L_CLIP
    return L


@numba.njit(cache=True, inline="always")
def _th(L):
    # tanh(L/2), exact at +-inf
    e = np.exp(-abs(L))
    v = (1.0 - e) / (1.0 + e)
    return v if L >= 0 else -v


@numba.njit(cache=True)
def _c_update(m_bc, m_cb, c_ptr, c_perm, c_prior, m_cu, want_cu):
    n_c = c_ptr.size - 1
    maxdeg = 0
    for j in range(n_c):
        maxdeg = max(maxdeg, c_ptr[j + 1] - c_ptr[j])
    tb = np.empty(maxdeg + 1)
    pre = np.empty(maxdeg + 1)
    for j in range(n_c):
        s = c_ptr[j]
        deg = c_ptr[j + 1] - s
        acc = 1.0
        for k in range(deg):
            t = _th(m_bc[c_perm[s + k]])
            tb[k] = t
            pre[k] = acc
            acc *= t
        if want_cu:
            m_cu[j] = _atanh2(acc)
        suf = _th(c_prior[j])
        for k in range(deg - 1, -1, -1):
            m_cb[c_perm[s + k]] = _atanh2(pre[k] * suf)
            suf *= tb[k]


@numba.njit(cache=True)
def _c_extrinsic(m_bc, c_ptr, c_perm):
    """P(c_j = 1) from the ⊕ of all incoming b->c messages."""
    n_c = c_ptr.size - 1
    q = np.empty(n_c)
    for j in range(n_c):
        acc = 1.0
        for k in range(c_ptr[j], c_ptr[j + 1]):
            acc *= _th(m_bc[c_perm[k]])
        q[j] = 0.5 * (1.0 - acc)
    return q


@numba.njit(cache=True)
def _b_update(m_cb, m_bc, b_ptr, decided, bval, ext, hsum):
    n_b = b_ptr.size - 1
    total = 0.0
    for i in range(n_b):
        s = b_ptr[i]
        e = b_ptr[i + 1]
        S = 0.0
        for k in range(s, e):
            S += m_cb[k]
        ext[i] = S
        if decided[i]:
            v = np.inf if bval[i] == 0 else -np.inf
            for k in range(s, e):
                m_bc[k] = v
            hsum[i] = 0.0
        else:
            h = 0.0
            for k in range(s, e):
                L = S - m_cb[k]
                if L > L_CLIP:
                    L = L_CLIP
                elif L < -L_CLIP:
                    L = -L_CLIP
                m_bc[k] = L
                h += h_of_L(L)
            hsum[i] = h
            total += h
    return total


@numba.njit(cache=True)
def _u_update(m_cu, m_uc, Pu, bits):
    n, m = Pu.shape
    K = bits.shape[1]
    p = np.empty((K, 2))
    for j in range(n):
        for k in range(K):
            L = m_cu[j * K + k]
            p0 = 1.0 / (1.0 + np.exp(-L))
            p[k, 0] = p0
            p[k, 1] = 1.0 - p0
        for k in range(K):
            a0 = 0.0
            a1 = 0.0
            for u in range(m):
                w = Pu[j, u]
                for k2 in range(K):
                    if k2 != k:
                        w *= p[k2, bits[u, k2]]
                if bits[u, k] == 0:
                    a0 += w
                else:
                    a1 += w
            if a1 <= 0.0:
                m_uc[j * K + k] = L_CLIP
            elif a0 <= 0.0:
                m_uc[j * K + k] = -L_CLIP
            else:
                L = np.log(a0 / a1)
                m_uc[j * K + k] = min(max(L, -L_CLIP), L_CLIP)


# ------------------------------------------------------------- state


@dataclass
class BpState:
    code: LdgmCode
    c_prior: np.ndarray  # K = 1: prior L-values of c; K >= 2: u->c messages
    Pu: np.ndarray | None = None  # K >= 2: u priors (n, m)
    m_bc: np.ndarray = None
    m_cb: np.ndarray = None
    m_cu: np.ndarray = None
    ext: np.ndarray = None
    hsum: np.ndarray = None
    decided: np.ndarray = None
    bval: np.ndarray = None
    h_total: float = 0.0

    def __post_init__(self):
        E = self.code.n_edges
        if self.m_bc is None:
            self.m_bc = np.zeros(E)
            self.m_cb = np.zeros(E)
            self.m_cu = np.zeros(self.code.n_c)
            self.ext = np.zeros(self.code.n_b)
            self.hsum = np.zeros(self.code.n_b)
            self.decided = np.zeros(self.code.n_b, dtype=np.bool_)
            self.bval = np.zeros(self.code.n_b, dtype=np.int8)
            self.h_total = float(E)

    @property
    def undecided(self) -> np.ndarray:
        return np.flatnonzero(~self.decided)

    def ext_probs(self) -> np.ndarray:
        """(n_b, 2) extrinsic probabilities."""
        p0 = 1.0 / (1.0 + np.exp(-self.ext))
        return np.stack([p0, 1.0 - p0], axis=1)

    def fix(self, idx, vals):
        """Decimate bits idx to vals."""
        self.decided[idx] = True
        self.bval[idx] = vals
        code = self.code
        for i, v in zip(np.atleast_1d(idx), np.atleast_1d(vals)):
            self.m_bc[code.b_ptr[i]:code.b_ptr[i + 1]] = np.inf if v == 0 else -np.inf


def binary_prior_L(y, t):
    """ln p_z((y)_I) / p_z((y - 1)_I) on I = [-1, 1)."""
    a = bounds.wrap(y, 2)
    b = bounds.wrap(np.asarray(y, dtype=float) - 1.0, 2)
    return t * (b * b - a * a)


def init_state(code: LdgmCode, y, t) -> BpState:
    if code.K == 1:
        return BpState(code, binary_prior_L(y, t))
    Pu = bounds.prior_for_symbol(y, bounds.SourceModel(code.K, t))
    return BpState(code, np.zeros(code.n_c), Pu=np.ascontiguousarray(Pu))


def bp_iteration(state: BpState, code: LdgmCode | None = None, priors=None) -> BpState:
    """One flooding sweep (u-nodes, c-nodes, b-nodes); updates in place."""
    code = state.code if code is None else code
    if priors is not None:
        state.c_prior[:] = priors
    K = code.K
    if K >= 2:
        _u_update(state.m_cu, state.c_prior, state.Pu, GrayMap(K).table())
    _c_update(state.m_bc, state.m_cb, code.c_ptr, code.c_perm, state.c_prior,
              state.m_cu, K >= 2)
    state.h_total = _b_update(state.m_cb, state.m_bc, code.b_ptr, state.decided,
                              state.bval, state.ext, state.hsum)
    return state


def estimate_Ibc(state: BpState) -> float:
    """1 - mean H over all b->c messages."""
    return float(1.0 - state.h_total / max(state.code.n_edges, 1))


def message_entropy_mean(m_bc) -> float:
    return float(np.mean(entropy_of_L(m_bc))) if m_bc.size else 0.0


# ------------------------------------------------------------- decimation


def _neglog_choice(L_abs):
    # -ln of the probability of the more likely value
    return np.log1p(np.exp(-L_abs))


def greedy_order(state: BpState) -> np.ndarray:
    """Undecimated bits by decreasing certainty, lowest index first on ties."""
    cand = state.undecided
    cert = np.abs(state.ext[cand])
    return cand[np.argsort(-cert, kind="stable")]


def decimate_greedy(state: BpState):
    """(index, bit) of the most certain undecimated bit."""
    cand = state.undecided
    if cand.size == 0:
        raise ValueError("no undecimated bits")
    i = int(greedy_order(state)[0])
    return i, int(state.ext[i] < 0)


class TypicalStream:
    """Random visiting order plus one uniform tau per bit, both seeded."""

    def __init__(self, n_b, rng):
        self.order = rng.permutation(n_b)
        self.tau = rng.random(n_b)
        self.pos = 0

    def next_candidates(self, decided):
        o = self.order[self.pos:]
        return o[~decided[o]]


def typical_value(L, tau):
    """Bit 0 iff tau < nu(0)."""
    p0 = 1.0 / (1.0 + np.exp(-np.asarray(L, dtype=float)))
    return (np.asarray(tau) >= p0).astype(np.int8)


def decimate_typical(state: BpState, rng):
    """(index, bit): index uniform over E, bit drawn from the extrinsic."""
    cand = state.undecided
    if cand.size == 0:
        raise ValueError("no undecimated bits")
    i = int(cand[rng.integers(cand.size)])
    return i, int(typical_value(state.ext[i], rng.random()))


@dataclass
class PaceController:
    pace: PaceSchedule
    throttle: bool = False
    delta_max: float = 0.0
    I_bc: float = 0.0

    def target(self) -> float:
        return self.I_bc + self.pace.delta_plus(self.I_bc)

    def update(self, delta: float, I_next: float):
        self.delta_max = max(0.8 * self.delta_max, 1.25 * delta)
        self.I_bc = I_next


def pace_step(controller: PaceController, Ibc_now: float, Ibc_next_est: float):
    """Decimation budget: (I_bc gain still needed, cap on delta or inf)."""
    need = Ibc_now + controller.pace.delta_plus(Ibc_now) - Ibc_next_est
    cap = controller.delta_max if controller.throttle else np.inf
    return need, cap


def _cut(order, dI, cost, need, cap):
    """Number of bits the listing's inner repeat loop decimates."""
    if need <= 0 or order.size == 0:
        return 0
    cum_i = np.cumsum(dI)
    k = int(np.searchsorted(cum_i, need - 1e-15, side="left"))
    if np.isfinite(cap):
        cum_d = np.cumsum(cost)
        k = min(k, int(np.searchsorted(cum_d, cap, side="right")))
    return min(k + 1, order.size)


# ------------------------------------------------------------- recovery


class Recovery:
    """Prior adjustment y -> y_hat so that the CDF of y given the c-extrinsic
    q matches (1-q) p_z(y) + q p_z((y-1)_I) (binary only)."""

    def __init__(self, t, ny=65, nq=33, nfine=4001):
        self.t = t
        self.ygrid = np.linspace(-1.0, 1.0, ny)
        self.qgrid = np.linspace(0.0, 1.0, nq)
        yf = np.linspace(-1.0, 1.0, nfine)
        model = bounds.SourceModel(1, t)
        pa = bounds.pdf(yf, model)
        pb = bounds.pdf(bounds.wrap(yf - 1.0, 2), model)
        Fa = _cumtrapz(pa, yf)
        Fb = _cumtrapz(pb, yf)
        Fa /= Fa[-1]
        Fb /= Fb[-1]
        self.yfine = yf
        self.F0f = (yf + 1.0) / 2.0
        self.Gf = Fb - Fa  # F_1 - F_0
        self.G = np.interp(self.ygrid, yf, self.Gf)
        self.F0 = (self.ygrid + 1.0) / 2.0

    def F_q(self, q, y):
        return (y + 1.0) / 2.0 + (q - 0.5) * np.interp(y, self.yfine, self.Gf)

    def F_q_inv(self, q, v):
        Fq = self.F0f + (q - 0.5) * self.Gf
        Fq = np.maximum.accumulate(Fq)
        return np.interp(v, Fq, self.yfine)

    def estimate_G(self, y, q):
        """Ĝ on the y-grid, or None when the extrinsics carry no information."""
        w = q - 0.5
        den = float(np.dot(w, w))
        if den < 1e-9:
            return None
        # sum of (q_j - 1/2) over y_j <= y_grid, by interval binning
        idx = np.searchsorted(self.ygrid, y, side="left")
        acc = np.cumsum(np.bincount(idx, weights=w, minlength=self.ygrid.size)[:self.ygrid.size])
        G = (acc - w.sum() * self.F0) / den
        return self.project(G)

    def project(self, G):
        """Make F0 +- G/2 non-decreasing and within [0, 1]."""
        dF = np.diff(self.F0)
        steps = np.clip(np.diff(G), -2 * dF, 2 * dF)
        G = np.concatenate([[0.0], np.cumsum(steps)])
        band = 2.0 * np.minimum(self.F0, 1.0 - self.F0)
        return np.clip(G, -band, band)

    def adjust(self, y, q, G_hat):
        """y_hat_j = F_{q_j}^{-1}(F̂_{q_j}(y_j)) by bilinear interpolation."""
        table = np.empty((self.qgrid.size, self.ygrid.size))
        for a, qq in enumerate(self.qgrid):
            target = self.F0 + (qq - 0.5) * G_hat
            table[a] = self.F_q_inv(qq, target)
        interp = RegularGridInterpolator((self.qgrid, self.ygrid), table)
        return interp(np.column_stack([np.clip(q, 0, 1), np.clip(y, -1, 1)]))


def _cumtrapz(f, x):
    out = np.zeros_like(f)
    out[1:] = np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(x))
    return out


def recover_binary(state: BpState, y, q=None, recovery: Recovery | None = None, t=None):
    """Recompute c-priors from adjusted y_hat; returns the new prior L-values."""
    if state.code.K != 1:
        raise ValueError("recovery is implemented for K = 1 only")
    rec = recovery or Recovery(t)
    yI = bounds.wrap(y, 2)
    if q is None:
        q = _c_extrinsic(state.m_bc, state.code.c_ptr, state.code.c_perm)
    G = rec.estimate_G(yI, q)
    if G is None:
        return state.c_prior
    y_hat = rec.adjust(yI, q, G)
    state.c_prior[:] = binary_prior_L(y_hat, rec.t)
    return state.c_prior


# ------------------------------------------------------------- quantizer


@dataclass
class QuantizerConfig:
    t: float
    L0: float = 100
    pace: PaceSchedule | str = "approx"
    decimator: str = "greedy"
    throttle: bool = False
    recovery: bool = False
    seed: int = 0

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError("t must be positive")
        if self.L0 < 1:
            raise ValueError("L0 must be at least 1")


@dataclass
class Trajectory:
    Ib: list = field(default_factory=list)
    Ib_ext: list = field(default_factory=list)
    Ibc: list = field(default_factory=list)
    count: list = field(default_factory=list)

    def as_array(self) -> np.ndarray:
        return np.column_stack([self.Ib, self.Ib_ext, self.Ibc, self.count])


@dataclass
class QuantResult:
    b: np.ndarray
    c: np.ndarray
    u: np.ndarray
    z: np.ndarray
    mse: float
    L: int
    trajectory: Trajectory
    n_guess_like: float = 0.0  # sum of H(ext) at decimation, in bits


def _resolve_pace(cfg: QuantizerConfig, d_b: int) -> PaceSchedule:
    if isinstance(cfg.pace, PaceSchedule):
        return cfg.pace
    if cfg.pace == "uniform":
        return uniform_pace(cfg.L0)
    if cfg.pace == "approx":
        return approx_pace(d_b, cfg.L0)
    raise ValueError(f"unknown pace {cfg.pace!r}")


def quantize(y, code: LdgmCode, config: QuantizerConfig) -> QuantResult:
    """Quantize y in [0, m)^n to the nearest-found point of U + m Z^n."""
    y = np.asarray(y, dtype=float)
    if y.shape != (code.n,):
        raise ValueError("source length does not match the code")
    K, m = code.K, 1 << code.K
    if config.recovery and K != 1:
        raise ValueError("recovery is implemented for K = 1 only")
    rng = make_rng(config.seed)
    state = init_state(code, y, config.t)
    ctrl = PaceController(_resolve_pace(config, code.d_b), config.throttle)
    typical = TypicalStream(code.n_b, rng) if config.decimator == "typical" else None
    if config.decimator not in ("greedy", "typical"):
        raise ValueError("decimator must be greedy or typical")
    rec = Recovery(config.t) if config.recovery else None
    E = max(code.n_edges, 1)
    traj = Trajectory()
    cap_iters = int(np.ceil(4 * config.L0))
    hsum_ext = 0.0
    it = 0
    while not state.decided.all():
        it += 1
        if rec is not None and it > 1:
            recover_binary(state, y, recovery=rec)
        bp_iteration(state)
        I_next = estimate_Ibc(state)
        if it >= cap_iters:
            order = greedy_order(state)
            count = order.size
            vals = (state.ext[order] < 0).astype(np.int8)
        else:
            need, cap = pace_step(ctrl, ctrl.I_bc, I_next)
            if typical is not None:
                order = typical.next_candidates(state.decided)
                vals_all = typical_value(state.ext[order], typical.tau[order])
            else:
                order = greedy_order(state)
                vals_all = (state.ext[order] < 0).astype(np.int8)
            Lo = state.ext[order]
            # -ln of the probability of the chosen value
            signed = np.where(vals_all == 0, Lo, -Lo)
            cost = np.logaddexp(0.0, -signed)
            count = _cut(order, state.hsum[order] / E, cost, need, cap)
            vals = vals_all[:count]
            order = order[:count]
            delta = float(cost[:count].sum())
            if typical is not None:
                typical.pos = 0
        if count:
            I_next += float(state.hsum[order].sum()) / E
            hx = entropy_of_L(state.ext[order])
            hsum_ext += float(hx.sum())
            state.fix(order, vals)
            ext_mi = float(1.0 - hx.mean())
        else:
            ext_mi = np.nan
            delta = 0.0
        if it < cap_iters:
            ctrl.update(delta, I_next)
        traj.Ib.append(float(state.decided.mean()))
        traj.Ib_ext.append(ext_mi)
        traj.Ibc.append(float(min(max(I_next, 0.0), 1.0)))
        traj.count.append(int(count))
    b = state.bval.astype(np.int8)
    c, u = encode(code, b)
    z = bounds.wrap(y - u, m)
    return QuantResult(b, c, u, z, float(np.mean(z * z)), it, traj, hsum_ext)
