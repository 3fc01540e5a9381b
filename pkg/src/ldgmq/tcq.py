"""Trellis-coded quantization over U + 4Z^n with a rate-1/2 feedforward trellis.

Each step shifts one input bit into a nu-bit register; two parities of the
(nu+1)-bit window give the 4-ary label u = o0 + 2 o1.  Start and end states
are free, so a length-n block has 2^(n+nu) codewords and R = 1 + nu/n.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .bounds import shaping_loss_db
from .codes import make_rng

M = 4  # alphabet period


def _gf2_gcd(a: int, b: int) -> int:
    while b:
        # polynomial remainder of a by b
        while a and a.bit_length() >= b.bit_length():
            a ^= b << (a.bit_length() - b.bit_length())
        a, b = b, a
    return a


@dataclass(frozen=True)
class Trellis:
    nu: int
    g0: int  # bit k multiplies the input delayed by k steps
    g1: int

    def __post_init__(self):
        if self.nu < 1:
            raise ValueError("nu must be at least 1")
        top = 1 << (self.nu + 1)
        if not (0 < self.g0 < top and 0 < self.g1 < top):
            raise ValueError("generators must be nonzero with degree <= nu")

    @property
    def n_states(self) -> int:
        return 1 << self.nu

    def admissible(self) -> bool:
        """Delay-free, full memory and coprime generators."""
        g0, g1, nu = self.g0, self.g1, self.nu
        return bool(((g0 | g1) & 1) and ((g0 | g1) >> nu) & 1 and _gf2_gcd(g0, g1) == 1)

    def labels(self) -> np.ndarray:
        """labels[reg] for the (nu+1)-bit window reg = (state << 1) | input."""
        reg = np.arange(1 << (self.nu + 1))
        par = lambda g: np.array([bin(r & g).count("1") & 1 for r in reg], dtype=np.int8)
        return (par(self.g0) + 2 * par(self.g1)).astype(np.int8)

    def octal(self) -> str:
        return f"{self.g0:o} {self.g1:o}"

    @classmethod
    def from_octal(cls, nu: int, text: str) -> "Trellis":
        a, b = text.split()
        return cls(nu, int(a, 8), int(b, 8))

    def encode(self, bits: np.ndarray, state0: int = 0) -> np.ndarray:
        lab = self.labels()
        mask = self.n_states - 1
        s = state0
        out = np.empty(len(bits), dtype=np.int8)
        for j, b in enumerate(bits):
            reg = (s << 1) | int(b)
            out[j] = lab[reg]
            s = reg & mask
        return out


@dataclass
class TcqResult:
    mse: float
    u: np.ndarray  # 4-ary labels along the survivor
    x: np.ndarray  # reconstruction points
    R: float

    @property
    def loss_dB(self) -> float:
        return shaping_loss_db(self.mse, self.R, 2)


@numba.njit(cache=True)
def _sym_cost(y, u):
    e = (y - u) % 4.0
    return min(e, 4.0 - e) ** 2


@numba.njit(cache=True)
def _viterbi(y, labels, nu):
    S = 1 << nu
    n = y.size
    metric = np.zeros(S)
    new = np.empty(S)
    back = np.empty((n, S), dtype=np.uint8)
    for j in range(n):
        yj = y[j]
        for ns in range(S):
            # ns = reg & (S-1); reg's top bit is the predecessor's oldest bit
            b = ns & 1
            best = np.inf
            bp = 0
            for p in range(2):
                s = (ns >> 1) | (p << (nu - 1))
                reg = (s << 1) | b
                v = metric[s] + _sym_cost(yj, labels[reg])
                if v < best:
                    best = v
                    bp = p
            new[ns] = best
            back[j, ns] = bp
        metric[:] = new
    s = int(np.argmin(metric))
    total = metric[s]
    u = np.empty(n, dtype=np.int8)
    for j in range(n - 1, -1, -1):
        p = back[j, s]
        prev = (s >> 1) | (int(p) << (nu - 1))
        u[j] = labels[(prev << 1) | (s & 1)]
        s = prev
    return total, u


def viterbi_quantize(y: np.ndarray, trellis: Trellis) -> TcqResult:
    """Minimum-MSE path; symbol cost is the squared distance to u + 4Z."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("y must be a non-empty vector")
    total, u = _viterbi(np.mod(y, M), trellis.labels(), trellis.nu)
    e = np.mod(y - u, M)
    e = np.where(e > M / 2, e - M, e)
    x = y - e
    return TcqResult(float(total) / y.size, u, x, 1.0 + trellis.nu / y.size)


def exhaustive_quantize(y: np.ndarray, trellis: Trellis) -> float:
    """Brute-force minimum MSE over all start states and inputs (small n only)."""
    y = np.asarray(y, dtype=float)
    n = y.size
    if n > 14:
        raise ValueError("exhaustive search limited to n <= 14")
    best = np.inf
    bits = (np.arange(1 << n)[:, None] >> np.arange(n)) & 1
    for s0 in range(trellis.n_states):
        for row in bits:
            u = trellis.encode(row, s0)
            e = np.mod(y - u, M)
            best = min(best, float(np.mean(np.minimum(e, M - e) ** 2)))
    return best


def random_trellis(nu: int, rng) -> Trellis:
    top = 1 << (nu + 1)
    while True:
        t = Trellis(nu, int(rng.integers(1, top)), int(rng.integers(1, top)))
        if t.admissible():
            return t


@dataclass
class SearchResult:
    trellis: Trellis
    mse: float
    loss_dB: float
    tried: int


def poly_search(nu: int, trials: int, n_eval: int, seed: int = 0, blocks: int = 1) -> SearchResult:
    """Best admissible generator pair on fixed source blocks.

    Every pair is tried when `trials` covers all (2^(nu+1) - 1)^2 of them;
    otherwise `trials` random admissible pairs are drawn.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = make_rng(seed)
    ys = [rng.random(n_eval) * M for _ in range(blocks)]
    top = 1 << (nu + 1)
    if trials >= (top - 1) ** 2:
        cands = (Trellis(nu, a, b) for a in range(1, top) for b in range(1, top))
        cands = [t for t in cands if t.admissible()]
    else:
        cands = (random_trellis(nu, rng) for _ in range(trials))
    best = None
    seen = set()
    for t in cands:
        if (t.g0, t.g1) in seen:
            continue
        seen.add((t.g0, t.g1))
        mse = float(np.mean([viterbi_quantize(y, t).mse for y in ys]))
        if best is None or mse < best.mse:
            best = SearchResult(t, mse, shaping_loss_db(mse, 1.0 + nu / n_eval, 2), 0)
    best.tried = len(seen)
    return best


def sc_bound(n: int) -> float:
    """Sphere-covering lower bound on the shaping loss at block length n, in dB."""
    if n < 1:
        raise ValueError("n must be at least 1")
    h = n / 2.0 + 1.0
    return 10.0 * (1.0 + (2.0 / n) * math.lgamma(h) - math.log(h)) / math.log(10.0)
