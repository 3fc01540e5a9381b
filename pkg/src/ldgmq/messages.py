"""Binary message algebra and quantized L-value densities.

Messages are probability pairs (mu0, mu1). Densities live on the uniform grid
L_k = k*step, k = -M..M with step = L_max/M, plus point masses at +inf
(sure 0, agreeing with the all-zero reference) and -inf (sure 1).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np
from scipy.signal import fftconvolve

ONE0 = (1.0, 0.0)
ONE1 = (0.0, 1.0)
STAR = (0.5, 0.5)

L_MAX = 25.0
HALF_BINS = 1024


class Contradiction(ValueError):
    """Raised when two opposite sure messages meet in a variable node."""


def _norm(a0, a1):
    s = a0 + a1
    if s <= 0:
        raise Contradiction("opposite sure messages")
    return (a0 / s, a1 / s)


def vn_combine(a, b):
    """Variable-node product a ⊙ b."""
    return _norm(a[0] * b[0], a[1] * b[1])


def cn_combine(a, b):
    """Check-node combination a ⊕ b."""
    return (a[0] * b[0] + a[1] * b[1], a[0] * b[1] + a[1] * b[0])


def entropy(mu) -> float:
    """Binary entropy H(mu) in bits."""
    h = 0.0
    for p in mu:
        if p > 0:
            h -= p * np.log2(p)
    return h


def to_lvalue(mu) -> float:
    if mu[1] == 0:
        return np.inf
    if mu[0] == 0:
        return -np.inf
    return float(np.log(mu[0] / mu[1]))


def from_lvalue(L):
    if L == np.inf:
        return ONE0
    if L == -np.inf:
        return ONE1
    p0 = 1.0 / (1.0 + np.exp(-L))
    return (p0, 1.0 - p0)


def entropy_of_L(L):
    """H of the message with L-value L (vectorized, inf gives 0)."""
    a = np.abs(np.asarray(L, dtype=float))
    with np.errstate(over="ignore", invalid="ignore"):
        e = np.exp(-a)
        h = (np.log1p(e) + a * e / (1.0 + e)) / np.log(2.0)
    return np.where(np.isinf(a), 0.0, h)


@numba.njit(cache=True)
def h_of_L(L):
    a = abs(L)
    if a > 700.0:
        return 0.0
    e = np.exp(-a)
    return (np.log1p(e) + a * e / (1.0 + e)) / np.log(2.0)


# ------------------------------------------------------------ the grid


@dataclass(frozen=True)
class Grid:
    M: int = HALF_BINS
    L_max: float = L_MAX

    @property
    def step(self) -> float:
        return self.L_max / self.M

    @property
    def size(self) -> int:
        return 2 * self.M + 1

    def values(self) -> np.ndarray:
        return np.arange(-self.M, self.M + 1) * self.step

    def magnitudes(self) -> np.ndarray:
        return np.arange(self.M + 1) * self.step


@lru_cache(maxsize=8)
def _entropy_table(M, L_max):
    return entropy_of_L(np.arange(M + 1) * (L_max / M))


@lru_cache(maxsize=4)
def cn_table(M, L_max):
    """Magnitude ⊕ table: lower output index and upper-bin weight."""
    step = L_max / M
    th = np.tanh(np.arange(M + 1) * step / 2.0)
    prod = np.clip(th[:, None] * th[None, :], 0.0, 1.0)
    with np.errstate(divide="ignore"):
        f = 2.0 * np.arctanh(prod) / step
    f = np.minimum(f, M)
    lo = np.floor(f).astype(np.int32)
    lo = np.minimum(lo, M - 1)
    w = f - lo
    return lo, w


@lru_cache(maxsize=4)
def cn_table_signed(M, L_max):
    """Signed ⊕ table: lower index and the split weights for each sign.

    The weight w interpolates e^{-|L|} linearly between the two bins, and the
    negative side is reweighted so that both splits keep their mass. A
    symmetric input pair then lands on bins in the exact ratio e^{-L_k}.
    """
    lo, _ = cn_table(M, L_max)
    step = L_max / M
    th = np.tanh(np.arange(M + 1) * step / 2.0)
    prod = np.clip(th[:, None] * th[None, :], 0.0, 1.0)
    # e^{-f} for f = 2 atanh(prod), written to stay finite at prod = 1
    ef = (1.0 - prod) / (1.0 + prod)
    ek = np.exp(-lo * step)
    ek1 = np.exp(-(lo + 1) * step)
    w_pos = np.clip((ek - ef) / (ek - ek1), 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        upper = np.where(ef > 0, w_pos * ek1 / ef, w_pos)
    w_neg = np.clip(upper, 0.0, 1.0)
    return lo, w_pos, w_neg


def split_to_grid(values, weights, grid: Grid, signed=True):
    """Mass-preserving two-point projection of point masses onto the grid."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    off = grid.M if signed else 0
    lo_lim = -grid.M if signed else 0
    f = np.clip(values / grid.step, lo_lim, grid.M)
    lo = np.floor(f).astype(np.int64)
    lo = np.minimum(lo, grid.M - 1)
    w = f - lo
    n = grid.size if signed else grid.M + 1
    out = np.bincount(lo + off, weights=weights * (1 - w), minlength=n)
    out += np.bincount(lo + off + 1, weights=weights * w, minlength=n)
    return out[:n]


# --------------------------------------------------- signed densities


@dataclass
class QuantizedDensity:
    p: np.ndarray
    s0: float = 0.0
    s1: float = 0.0
    grid: Grid = Grid()

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        if self.p.shape != (self.grid.size,):
            raise ValueError("bin count does not match grid")

    @classmethod
    def point(cls, L, grid: Grid = Grid()):
        if L == np.inf:
            return cls(np.zeros(grid.size), 1.0, 0.0, grid)
        if L == -np.inf:
            return cls(np.zeros(grid.size), 0.0, 1.0, grid)
        return cls(split_to_grid([L], [1.0], grid), 0.0, 0.0, grid)

    @classmethod
    def erasure(cls, I, grid: Grid = Grid()):
        """Mass I at +inf and 1-I at L=0."""
        p = np.zeros(grid.size)
        p[grid.M] = 1.0 - I
        return cls(p, I, 0.0, grid)

    @classmethod
    def from_samples(cls, L, grid: Grid = Grid()):
        L = np.asarray(L, dtype=float)
        fin = np.isfinite(L)
        w = np.full(L.size, 1.0 / L.size)
        return cls(split_to_grid(L[fin], w[fin], grid),
                   float(np.sum(L == np.inf)) / L.size,
                   float(np.sum(L == -np.inf)) / L.size, grid)

    def total(self) -> float:
        return float(self.p.sum() + self.s0 + self.s1)

    def mi(self) -> float:
        M = self.grid.M
        h = _entropy_table(M, self.grid.L_max)
        hs = np.concatenate([h[:0:-1], h])
        return float(1.0 - np.dot(self.p, hs))

    def sample(self, size, rng):
        vals = np.concatenate([self.grid.values(), [np.inf, -np.inf]])
        probs = np.concatenate([self.p, [self.s0, self.s1]])
        probs = np.clip(probs, 0, None)
        return rng.choice(vals, size=size, p=probs / probs.sum())

    def symmetry_error(self) -> float:
        """max_k |p(-L_k) - e^{-L_k} p(L_k)| over k > 0."""
        M = self.grid.M
        pos = self.p[M + 1:]
        neg = self.p[:M][::-1]
        e = np.exp(-self.grid.magnitudes()[1:])
        return float(np.max(np.abs(neg - e * pos))) if M else 0.0


def _check_same(p, q):
    if p.grid != q.grid:
        raise ValueError("densities use different binning")


def _fold_tails(full, M):
    """Collapse a convolution result over [-kM, kM] onto [-M, M] by clipping."""
    c = full.size // 2
    out = full[c - M:c + M + 1].copy()
    out[0] += full[:c - M].sum()
    out[-1] += full[c + M + 1:].sum()
    return out


def density_vn_convolve(p: QuantizedDensity, q: QuantizedDensity) -> QuantizedDensity:
    """Density of L_a + L_b (variable node, ⊙)."""
    _check_same(p, q)
    M = p.grid.M
    full = np.clip(fftconvolve(p.p, q.p), 0.0, None)
    out = _fold_tails(full, M)
    pt, qt = p.p.sum(), q.p.sum()
    s0 = p.s0 * (qt + q.s0) + pt * q.s0
    s1 = p.s1 * (qt + q.s1) + pt * q.s1
    # opposite sure messages carry no usable information: map to L = 0
    out[M] += p.s0 * q.s1 + p.s1 * q.s0
    return QuantizedDensity(out, s0, s1, p.grid)


@numba.njit(cache=True)
def _cn_signed(a, b, lo, w, wn, M):
    n = 2 * M + 1
    out = np.zeros(n)
    for i in range(n):
        ai = a[i]
        if ai == 0.0:
            continue
        mi = abs(i - M)
        si = 1 if i >= M else -1
        for j in range(n):
            bj = b[j]
            if bj == 0.0:
                continue
            mj = abs(j - M)
            sj = 1 if j >= M else -1
            k = lo[mi, mj]
            mass = ai * bj
            if si * sj > 0:
                ww = w[mi, mj]
                out[M + k] += mass * (1.0 - ww)
                out[M + k + 1] += mass * ww
            else:
                ww = wn[mi, mj]
                out[M - k] += mass * (1.0 - ww)
                out[M - k - 1] += mass * ww
    return out


def density_cn_combine(p: QuantizedDensity, q: QuantizedDensity) -> QuantizedDensity:
    """Density of L_a ⊕ L_b (check node), by pairwise table lookup."""
    _check_same(p, q)
    g = p.grid
    lo, w, wn = cn_table_signed(g.M, g.L_max)
    out = _cn_signed(p.p, q.p, lo, w, wn, g.M)
    # sure-0 is the identity, sure-1 flips the sign
    out += q.s0 * p.p + q.s1 * p.p[::-1]
    out += p.s0 * q.p + p.s1 * q.p[::-1]
    s0 = p.s0 * q.s0 + p.s1 * q.s1
    s1 = p.s0 * q.s1 + p.s1 * q.s0
    return QuantizedDensity(out, s0, s1, g)


# -------------------------------------------- symmetric (magnitude) densities
#
# A symmetric density obeys p(-L) = e^{-L} p(L); it is fully described by the
# distribution of |L|. Both node operations preserve symmetry, and |a ⊕ b|
# depends only on |a| and |b|, so the check-node step runs on magnitudes.


@dataclass
class SymDensity:
    rho: np.ndarray  # mass at |L| = k*step, k = 0..M
    sure: float = 0.0
    grid: Grid = Grid()

    @classmethod
    def erasure(cls, I, grid: Grid = Grid()):
        rho = np.zeros(grid.M + 1)
        rho[0] = 1.0 - I
        return cls(rho, I, grid)

    @classmethod
    def from_signed(cls, q: QuantizedDensity):
        M = q.grid.M
        rho = q.p[M:].copy()
        rho[1:] += q.p[:M][::-1]
        return cls(rho, q.s0 + q.s1, q.grid)

    def to_signed(self) -> QuantizedDensity:
        M = self.grid.M
        wpos = 1.0 / (1.0 + np.exp(-self.grid.magnitudes()))
        p = np.empty(2 * M + 1)
        p[M:] = self.rho * wpos
        p[M] = self.rho[0]
        p[:M] = (self.rho[1:] * (1.0 - wpos[1:]))[::-1]
        return QuantizedDensity(p, self.sure, 0.0, self.grid)

    def mi(self) -> float:
        h = _entropy_table(self.grid.M, self.grid.L_max)
        return float(1.0 - np.dot(self.rho, h))

    def total(self) -> float:
        return float(self.rho.sum() + self.sure)

    def scaled(self, a: float):
        return SymDensity(self.rho * a, self.sure * a, self.grid)

    def __add__(self, other):
        return SymDensity(self.rho + other.rho, self.sure + other.sure, self.grid)


@numba.njit(cache=True)
def _cn_mag(a, b, lo, w):
    # the table is symmetric, so each unordered pair (i, j) is visited once
    n = a.size
    out = np.zeros(n)
    for i in range(n):
        ai = a[i]
        bi = b[i]
        if ai < 1e-300 and bi < 1e-300:
            continue
        mass = ai * bi
        k = lo[i, i]
        ww = w[i, i]
        out[k] += mass * (1.0 - ww)
        out[k + 1] += mass * ww
        for j in range(i + 1, n):
            mass = ai * b[j] + a[j] * bi
            k = lo[i, j]
            ww = w[i, j]
            out[k] += mass * (1.0 - ww)
            out[k + 1] += mass * ww
    return out


def sym_cn_combine(a: SymDensity, b: SymDensity) -> SymDensity:
    g = a.grid
    lo, w = cn_table(g.M, g.L_max)
    rho = _cn_mag(a.rho, b.rho, lo, w)
    rho += a.sure * b.rho + b.sure * a.rho
    return SymDensity(rho, a.sure * b.sure, g)


def _fft_power(p, k, M):
    """k-fold self convolution of a signed bin vector, tails clipped to ±M."""
    if k == 0:
        out = np.zeros(2 * M + 1)
        out[M] = 1.0
        return out
    n = k * 2 * M + 1
    nfft = 1 << int(np.ceil(np.log2(n)))
    F = np.fft.rfft(p, nfft) ** k
    full = np.clip(np.fft.irfft(F, nfft)[:n], 0.0, None)
    return _fold_tails(full, M)


def sym_vn_power(a: SymDensity, k: int) -> SymDensity:
    """Density of the sum of k independent draws from a."""
    g = a.grid
    fin = a.rho.sum()
    if k == 0:
        return SymDensity.erasure(0.0, g)
    s = a.to_signed()
    pk = _fft_power(s.p / fin, k, g.M) if fin > 0 else np.zeros(g.size)
    out = SymDensity.from_signed(QuantizedDensity(pk, 0.0, 0.0, g))
    return SymDensity(out.rho * fin ** k, 1.0 - fin ** k, g)


def symmetrize(q: QuantizedDensity) -> SymDensity:
    return SymDensity.from_signed(q)
