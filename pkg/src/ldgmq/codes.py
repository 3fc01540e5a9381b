"""Degree distributions, LDGM ensemble sampling, encoding and Gray mapping."""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

log = logging.getLogger(__name__)


def make_rng(seed) -> np.random.Generator:
    """Seeded counter-based generator used throughout the package."""
    return np.random.Generator(np.random.Philox(seed))


def degree_set(beta: float = 1.1, bound: int = 1000) -> list[int]:
    """2, ceil(beta*2), ... up to bound, in exact rational arithmetic."""
    if beta <= 1:
        raise ValueError("beta must exceed 1")
    b = Fraction(str(beta))
    out = [2]
    while True:
        nxt = math.ceil(b * out[-1])
        if nxt > bound:
            return out
        out.append(nxt)


# ---------------------------------------------------------------- Gray map

def gray_encode(v):
    """Integer symbol -> packed bit pattern (bit k-1 holds c_k)."""
    v = np.asarray(v)
    return v ^ (v >> 1)


def gray_decode(g):
    """Packed bit pattern -> integer symbol (phi)."""
    g = np.array(g, dtype=np.int64, copy=True)
    shift = g >> 1
    while np.any(shift):
        g ^= shift
        shift >>= 1
    return g


@dataclass(frozen=True)
class GrayMap:
    K: int

    @property
    def m(self):
        return 1 << self.K

    def phi(self, bits) -> int:
        """Bits (c_1..c_K) to symbol."""
        packed = sum(int(b) << k for k, b in enumerate(bits))
        return int(gray_decode(packed))

    def phi_inv(self, u) -> tuple[int, ...]:
        g = int(gray_encode(int(u)))
        return tuple((g >> k) & 1 for k in range(self.K))

    def table(self) -> np.ndarray:
        """bits[u, k] = c_{k+1} of symbol u."""
        g = gray_encode(np.arange(self.m))
        return ((g[:, None] >> np.arange(self.K)) & 1).astype(np.int8)


# ------------------------------------------------------- degree distribution

@dataclass
class DegreeDistribution:
    K: int
    R: float
    d_b: int
    v: dict  # degree -> edge fraction on the c side
    threshold: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.v = {int(d): float(x) for d, x in sorted(self.v.items()) if x > 0}

    def check(self, tol=1e-9):
        s = sum(self.v.values())
        r = sum(x / d for d, x in self.v.items())
        if abs(s - 1) > tol:
            raise ValueError(f"edge fractions sum to {s}")
        if abs(r - self.K / (self.R * self.d_b)) > tol:
            raise ValueError("rate constraint violated")
        return self

    @property
    def degrees(self) -> np.ndarray:
        return np.array(sorted(self.v), dtype=np.int64)

    @property
    def fractions(self) -> np.ndarray:
        return np.array([self.v[d] for d in sorted(self.v)])

    @property
    def max_degree(self) -> int:
        return max(self.v)

    def node_fractions(self) -> dict:
        """w_d: fraction of u-nodes (c-nodes for K=1) with degree d."""
        scale = self.R * self.d_b / self.K
        return {d: x * scale / d for d, x in self.v.items()}

    @classmethod
    def regular(cls, d_b: int, d_c: int, K: int = 1):
        """The (d_b, d_c)-regular ensemble."""
        return cls(K=K, R=K * d_c / d_b, d_b=d_b, v={d_c: 1.0})

    def to_json(self) -> dict:
        out = {"K": self.K, "R": self.R, "d_b": self.d_b,
               "v": [[d, x] for d, x in sorted(self.v.items())],
               "threshold": self.threshold}
        if self.meta:
            out["meta"] = self.meta
        return out

    @classmethod
    def from_json(cls, obj: dict):
        return cls(K=int(obj["K"]), R=float(obj["R"]), d_b=int(obj["d_b"]),
                   v={int(d): float(x) for d, x in obj["v"]},
                   threshold=obj.get("threshold"), meta=obj.get("meta", {}))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def largest_remainder(weights, total: int) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    raw = w / w.sum() * total
    out = np.floor(raw).astype(np.int64)
    short = total - out.sum()
    order = np.argsort(-(raw - out), kind="stable")
    out[order[:short]] += 1
    return out


# ------------------------------------------------------------------ the code

@dataclass
class LdgmCode:
    n: int
    n_b: int
    K: int
    d_b: int
    seed: int
    edge_b: np.ndarray  # sorted by b, then c
    edge_c: np.ndarray
    dist: DegreeDistribution | None = None

    def __post_init__(self):
        self.edge_b = np.ascontiguousarray(self.edge_b, dtype=np.int64)
        self.edge_c = np.ascontiguousarray(self.edge_c, dtype=np.int64)
        order = np.lexsort((self.edge_c, self.edge_b))
        self.edge_b = self.edge_b[order]
        self.edge_c = self.edge_c[order]
        self.b_ptr = np.zeros(self.n_b + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.edge_b, minlength=self.n_b), out=self.b_ptr[1:])
        self.c_perm = np.argsort(self.edge_c, kind="stable").astype(np.int64)
        self.c_ptr = np.zeros(self.n_c + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.edge_c, minlength=self.n_c), out=self.c_ptr[1:])

    @property
    def n_c(self) -> int:
        return self.K * self.n

    @property
    def n_edges(self) -> int:
        return int(self.edge_b.size)

    @property
    def R(self) -> float:
        return self.n_b / self.n

    def b_degrees(self):
        return np.diff(self.b_ptr)

    def c_degrees(self):
        return np.diff(self.c_ptr)

    def u_degrees(self):
        """Designed degree of each u-node (max over its K c-nodes)."""
        return self.c_degrees().reshape(self.n, self.K).max(axis=1)

    def dense_matrix(self) -> np.ndarray:
        G = np.zeros((self.n_b, self.n_c), dtype=np.uint8)
        G[self.edge_b, self.edge_c] ^= 1
        return G

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.array([self.n, self.n_b, self.K, self.d_b, self.seed]).tobytes())
        h.update(self.edge_b.tobytes())
        h.update(self.edge_c.tobytes())
        return h.hexdigest()[:16]

    # text format: header, distribution, one line of c indices per b-node
    def save(self, path):
        with open(path, "w") as fh:
            fh.write(f"{self.n} {self.n_b} {self.K} {self.d_b} {self.seed}\n")
            if self.dist is not None:
                fh.write(" ".join(f"{d}:{x:.17g}" for d, x in sorted(self.dist.v.items())))
            fh.write("\n")
            for i in range(self.n_b):
                row = self.edge_c[self.b_ptr[i]:self.b_ptr[i + 1]]
                fh.write(" ".join(map(str, row.tolist())) + "\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            n, n_b, K, d_b, seed = (int(x) for x in fh.readline().split())
            dline = fh.readline().split()
            rows = [fh.readline().split() for _ in range(n_b)]
        dist = None
        if dline:
            v = {int(a): float(b) for a, b in (p.split(":") for p in dline)}
            dist = DegreeDistribution(K=K, R=n_b / n, d_b=d_b, v=v)
        eb = np.repeat(np.arange(n_b), [len(r) for r in rows])
        ec = np.array([int(x) for r in rows for x in r], dtype=np.int64)
        return cls(n, n_b, K, d_b, seed, eb, ec, dist)


def _u_degree_list(dist: DegreeDistribution, n: int) -> np.ndarray:
    w = dist.node_fractions()
    degs = np.array(sorted(w))
    counts = largest_remainder([w[d] for d in degs], n)
    return np.repeat(degs, counts)


def sample_code(dist: DegreeDistribution, n: int, seed: int,
                max_resample: int = 20) -> LdgmCode:
    """Draw a code from the ensemble by a seeded permutation of edge stubs.

    Parallel edges between one (b, c) pair are removed two at a time in a
    single pass, since they cancel over GF(2).
    """
    K, d_b = dist.K, dist.d_b
    n_b = int(round(n * dist.R))
    if n_b < 1:
        raise ValueError("code has no b-nodes")
    u_deg = _u_degree_list(dist, n)
    c_deg = np.repeat(u_deg, K)  # c-nodes j*K..j*K+K-1 belong to u-node j
    need = n_b * d_b
    have = int(c_deg.sum())
    if need != have:
        # adjust stubs on the highest-degree class, one per c-node
        top = np.flatnonzero(u_deg == u_deg.max())
        top_c = (top[:, None] * K + np.arange(K)).ravel()
        diff = need - have
        step = 1 if diff > 0 else -1
        reps = abs(diff)
        if reps > 0 and step < 0 and c_deg[top_c].min() <= 1:
            raise ValueError("degree demands infeasible for this n")
        adj = np.zeros_like(c_deg)
        idx = top_c[np.arange(reps) % top_c.size]
        np.add.at(adj, idx, step)
        c_deg = c_deg + adj
        log.info("adjusted %d c-side stubs on degree-%d class", reps, u_deg.max())
    if np.any(c_deg < 0):
        raise ValueError("degree demands infeasible for this n")
    rng = make_rng(seed)
    stubs_c = np.repeat(np.arange(K * n), c_deg)
    stubs_b = np.repeat(np.arange(n_b), d_b)
    for attempt in range(max_resample):
        perm = rng.permutation(stubs_c.size)
        eb, ec = _remove_parallel_pairs(stubs_b, stubs_c[perm], K * n)
        bdeg = np.bincount(eb, minlength=n_b)
        if bdeg.min() >= 2 or d_b < 2:
            removed = stubs_b.size - eb.size
            if removed:
                log.info("removed %d parallel edges in pairs", removed)
            return LdgmCode(n, n_b, K, d_b, seed, eb, ec, dist)
        log.info("b-node degree < 2 after pair removal, resampling")
    raise RuntimeError("could not sample a code with all b-degrees >= 2")


def _remove_parallel_pairs(eb, ec, n_c):
    key = eb.astype(np.int64) * n_c + ec
    uniq, counts = np.unique(key, return_counts=True)
    keep = uniq[counts % 2 == 1]
    return keep // n_c, keep % n_c


def encode(code: LdgmCode, b) -> tuple[np.ndarray, np.ndarray]:
    """c = bG over GF(2); u_j = phi(c_{j1}..c_{jK})."""
    b = np.asarray(b, dtype=np.int64)
    if b.shape != (code.n_b,):
        raise ValueError("b has wrong length")
    c = np.bincount(code.edge_c, weights=b[code.edge_b], minlength=code.n_c)
    c = (c.astype(np.int64) & 1).astype(np.int8)
    return c, bits_to_symbols(c, code.K)


def bits_to_symbols(c, K: int) -> np.ndarray:
    c = np.asarray(c, dtype=np.int64).reshape(-1, K)
    packed = (c << np.arange(K)).sum(axis=1)
    return gray_decode(packed)
