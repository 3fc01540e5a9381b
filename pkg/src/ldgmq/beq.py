"""Binary erasure quantization: BP with contradiction recovery, and a GF(2) oracle.

Erasure-domain messages are int8: 0 and 1 are sure values, ERASED is "*".
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .codes import LdgmCode, encode, make_rng
from .pacing import PaceSchedule, approx_pace, uniform_pace

ERASED = 2


@dataclass
class BeqInstance:
    y: np.ndarray  # int8 in {0, 1, ERASED}
    epsilon: float = float("nan")

    @property
    def n_ne(self) -> int:
        return int(np.count_nonzero(self.y != ERASED))

    @classmethod
    def random(cls, n: int, epsilon: float, rng) -> "BeqInstance":
        y = rng.integers(0, 2, n).astype(np.int8)
        y[rng.random(n) < epsilon] = ERASED
        return cls(y, epsilon)


@dataclass
class BeqConfig:
    L0: float = 100
    decimator: str = "typical"
    pace: PaceSchedule | str = "approx"
    seed: int = 0


@dataclass
class BeqResult:
    b: np.ndarray
    unsat: int
    n_g: int
    n_ne: int
    n_b: int
    L: int
    flipped: int
    prior: np.ndarray | None = None  # c-priors after all recovery flips

    @property
    def n_i(self) -> int:
        return self.n_ne - (self.n_b - self.n_g)


# --------------------------------------------------------------- kernels


@numba.njit(cache=True)
def _c_pass(m_bc, m_cb, c_ptr, c_perm, prior):
    for j in range(c_ptr.size - 1):
        s, e = c_ptr[j], c_ptr[j + 1]
        unknown = 0
        par = 0
        for k in range(s, e):
            v = m_bc[c_perm[k]]
            if v == ERASED:
                unknown += 1
            else:
                par ^= v
        p = prior[j]
        if p != ERASED and unknown == 0 and p != par:
            p = par
            prior[j] = p
        for k in range(s, e):
            ed = c_perm[k]
            v = m_bc[ed]
            if p == ERASED:
                m_cb[ed] = ERASED
            elif unknown == 0:
                m_cb[ed] = p ^ par ^ v
            elif unknown == 1 and v == ERASED:
                m_cb[ed] = p ^ par
            else:
                m_cb[ed] = ERASED


@numba.njit(cache=True)
def _b_pass(m_cb, m_bc, b_ptr, edge_c, c_ptr, c_perm, prior, decided, bval, ext, unk, pick):
    """b-node sweep with the flip rule; returns the number of erased b->c messages."""
    erased_total = 0
    for i in range(b_ptr.size - 1):
        s, e = b_ptr[i], b_ptr[i + 1]
        n0 = 0
        n1 = 0
        for k in range(s, e):
            v = m_cb[k]
            if v == 0:
                n0 += 1
            elif v == 1:
                n1 += 1
        if n0 > 0 and n1 > 0:
            r = int(pick[i] * (n0 + n1))
            bsel = 0 if r < n0 else 1
            for k in range(s, e):
                v = m_cb[k]
                if v != ERASED and v != bsel:
                    j = edge_c[k]
                    prior[j] ^= 1
                    for kk in range(c_ptr[j], c_ptr[j + 1]):
                        ed = c_perm[kk]
                        if m_cb[ed] != ERASED:
                            m_cb[ed] ^= 1
            if bsel == 0:
                n1 = 0
            else:
                n0 = 0
        known = n0 + n1
        ext[i] = 0 if n0 > 0 else (1 if n1 > 0 else ERASED)
        if decided[i]:
            for k in range(s, e):
                m_bc[k] = bval[i]
            unk[i] = 0
            continue
        cnt = 0
        for k in range(s, e):
            mine = 1 if m_cb[k] != ERASED else 0
            if known - mine > 0:
                m_bc[k] = ext[i]
            else:
                m_bc[k] = ERASED
                cnt += 1
        unk[i] = cnt
        erased_total += cnt
    return erased_total


# --------------------------------------------------------------- quantizer


def _pace(cfg: BeqConfig, d_b: int) -> PaceSchedule:
    if isinstance(cfg.pace, PaceSchedule):
        return cfg.pace
    return uniform_pace(cfg.L0) if cfg.pace == "uniform" else approx_pace(d_b, cfg.L0)


def beq_quantize(instance: BeqInstance, code: LdgmCode, config: BeqConfig | None = None) -> BeqResult:
    """Run BP with recovery and decimation; unsat counts non-erased y_j != c_j."""
    if code.K != 1:
        raise ValueError("BEQ uses binary codes")
    cfg = config or BeqConfig()
    if cfg.decimator not in ("typical", "greedy"):
        raise ValueError("decimator must be greedy or typical")
    y = np.asarray(instance.y, dtype=np.int8)
    if y.shape != (code.n,):
        raise ValueError("instance length does not match the code")
    rng = make_rng(cfg.seed)
    perm = rng.permutation(code.n_b)
    tau = rng.random(code.n_b)
    pace = _pace(cfg, code.d_b)
    E = max(code.n_edges, 1)
    prior = y.copy()
    m_bc = np.full(code.n_edges, ERASED, dtype=np.int8)
    m_cb = np.full(code.n_edges, ERASED, dtype=np.int8)
    decided = np.zeros(code.n_b, dtype=np.bool_)
    bval = np.zeros(code.n_b, dtype=np.int8)
    ext = np.full(code.n_b, ERASED, dtype=np.int8)
    unk = np.zeros(code.n_b, dtype=np.int64)
    edge_c = code.edge_c
    I_bc = 0.0
    n_g = 0
    it = 0
    cap = int(np.ceil(4 * cfg.L0))
    while not decided.all():
        it += 1
        _c_pass(m_bc, m_cb, code.c_ptr, code.c_perm, prior)
        erased = _b_pass(m_cb, m_bc, code.b_ptr, edge_c, code.c_ptr, code.c_perm, prior,
                         decided, bval, ext, unk, rng.random(code.n_b))
        I_next = 1.0 - erased / E
        if cfg.decimator == "typical":
            order = perm[~decided[perm]]
        else:
            cand = np.flatnonzero(~decided)
            order = cand[np.argsort(ext[cand] == ERASED, kind="stable")]
        if it >= cap or erased == 0:
            # with every b->c message known the remaining bits are determined
            count = order.size
        else:
            need = I_bc + pace.delta_plus(I_bc) - I_next
            if need <= 0:
                count = 0
            else:
                cum = np.cumsum(unk[order]) / E
                count = min(int(np.searchsorted(cum, need - 1e-15, side="left")) + 1, order.size)
        sel = order[:count]
        e_sel = ext[sel]
        guess = e_sel == ERASED
        vals = np.where(guess, (tau[sel] >= 0.5).astype(np.int8), e_sel)
        n_g += int(guess.sum())
        I_next += float(unk[sel].sum()) / E
        decided[sel] = True
        bval[sel] = vals
        for i, v in zip(sel, vals):
            m_bc[code.b_ptr[i]:code.b_ptr[i + 1]] = v
        I_bc = I_next
    # last c-node pass applies any remaining prior flips
    _c_pass(m_bc, m_cb, code.c_ptr, code.c_perm, prior)
    c, _ = encode(code, bval)
    ne = y != ERASED
    unsat = int(np.count_nonzero(c[ne] != y[ne]))
    flipped = int(np.count_nonzero(prior[ne] != y[ne]))
    return BeqResult(bval.copy(), unsat, n_g, int(ne.sum()), code.n_b, it, flipped, prior)


# --------------------------------------------------------------- GF(2) oracle


def pack_rows(A: np.ndarray) -> np.ndarray:
    """Pack a 0/1 matrix into uint64 words per row (bit j of word j // 64)."""
    A = np.asarray(A, dtype=np.uint8)
    r, c = A.shape
    w = (c + 63) // 64
    padded = np.zeros((r, w * 64), dtype=np.uint8)
    padded[:, :c] = A
    bits = padded.reshape(r, w, 64).astype(np.uint64)
    shifts = np.arange(64, dtype=np.uint64)
    return np.bitwise_or.reduce(bits << shifts, axis=2)


@numba.njit(cache=True)
def _eliminate(rows, ncols):
    """Reduced row echelon form in place; returns pivot columns (length = rank)."""
    nr = rows.shape[0]
    piv = np.empty(min(nr, ncols), dtype=np.int64)
    rank = 0
    for col in range(ncols):
        if rank == nr:
            break
        wd = col // 64
        bit = np.uint64(1) << np.uint64(col % 64)
        p = -1
        for r in range(rank, nr):
            if rows[r, wd] & bit:
                p = r
                break
        if p < 0:
            continue
        if p != rank:
            for k in range(rows.shape[1]):
                tmp = rows[p, k]
                rows[p, k] = rows[rank, k]
                rows[rank, k] = tmp
        for r in range(nr):
            if r != rank and rows[r, wd] & bit:
                for k in range(rows.shape[1]):
                    rows[r, k] ^= rows[rank, k]
        piv[rank] = col
        rank += 1
    return piv[:rank]


@dataclass
class Gf2Solution:
    rank: int
    solvable: bool
    b: np.ndarray | None


def gf2_solve_matrix(A: np.ndarray, rhs: np.ndarray) -> Gf2Solution:
    """Solve x A^T = rhs, i.e. rows of A are equations over the columns' variables."""
    A = np.asarray(A, dtype=np.uint8)
    neq, nvar = A.shape
    aug = np.zeros((neq, nvar + 1), dtype=np.uint8)
    aug[:, :nvar] = A
    aug[:, nvar] = np.asarray(rhs, dtype=np.uint8)
    rows = pack_rows(aug)
    piv = _eliminate(rows, nvar)
    rank = int(piv.size)
    wd, bit = nvar // 64, np.uint64(1) << np.uint64(nvar % 64)
    rhs_bits = (rows[:, wd] & bit) != 0
    if np.any(rhs_bits[rank:]):
        return Gf2Solution(rank, False, None)
    x = np.zeros(nvar, dtype=np.int8)
    x[piv] = rhs_bits[:rank]
    return Gf2Solution(rank, True, x)


def gf2_solve(instance: BeqInstance, code: LdgmCode) -> Gf2Solution:
    """b G_ne = y_ne over GF(2); free variables are set to 0."""
    if code.n > 4096:
        raise ValueError("oracle limited to n <= 4096")
    ne = np.flatnonzero(np.asarray(instance.y) != ERASED)
    G = code.dense_matrix()
    return gf2_solve_matrix(G[:, ne].T, np.asarray(instance.y)[ne])
