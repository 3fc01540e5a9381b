"""Random-coding analysis of the m-ary periodic quantizer.

The error density on I = [-m/2, m/2) is p_z(z) = exp(-t z^2) / Q(z mod 1),
where Q normalizes over the m lattice shifts of the fractional part.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

LN2 = np.log(2.0)
TWO_PI_E = 2.0 * np.pi * np.e
T_BRACKET = (1e-6, 256.0)


@dataclass(frozen=True)
class SourceModel:
    K: int
    t: float

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if not self.t >= 0:
            raise ValueError("t must be non-negative")

    @property
    def m(self) -> int:
        return 1 << self.K

    @property
    def interval(self) -> tuple[float, float]:
        return (-self.m / 2.0, self.m / 2.0)


def wrap(z, m):
    """Reduce z into [-m/2, m/2)."""
    z = np.asarray(z, dtype=float)
    return z - m * np.floor(z / m + 0.5)


def _shift_offsets(yt, m):
    # wrapped positions (yt + a)_I for a = 0..m-1, shape (..., m)
    a = np.arange(m)
    return wrap(np.asarray(yt, dtype=float)[..., None] + a, m)


def log_Q(yt, model: SourceModel):
    """ln Q_ỹ, with ỹ taken modulo 1."""
    zz = _shift_offsets(np.mod(yt, 1.0), model.m)
    e = -model.t * zz * zz
    mx = e.max(axis=-1)
    return mx + np.log(np.exp(e - mx[..., None]).sum(axis=-1))


def pdf(z, model: SourceModel):
    z = np.asarray(z, dtype=float)
    return np.exp(-model.t * z * z - log_Q(z, model))


def _shift_logp(yt, model):
    zz = _shift_offsets(yt, model.m)
    return zz, -model.t * zz * zz - log_Q(yt, model)[..., None]


def _entropy_integrand(yt, model):
    _, lp = _shift_logp(yt, model)
    return -(np.exp(lp) * lp).sum(axis=-1) / LN2


def _power_integrand(yt, model):
    zz, lp = _shift_logp(yt, model)
    return (np.exp(lp) * zz * zz).sum(axis=-1)


def _quad01(fun):
    val, _ = integrate.quad(lambda v: float(fun(v)), 0.0, 1.0,
                            epsabs=1e-12, epsrel=1e-12, limit=200)
    return val


@lru_cache(maxsize=4096)
def _entropy_cached(K, t):
    return _quad01(lambda v: _entropy_integrand(v, SourceModel(K, t)))


def entropy_Ht(model: SourceModel) -> float:
    """Differential entropy of p_z in bits."""
    if model.t == 0:
        return float(model.K)
    return _entropy_cached(model.K, float(model.t))


def power_Pt(model: SourceModel) -> float:
    """Second moment of p_z."""
    if model.t == 0:
        return model.m ** 2 / 12.0
    return _quad01(lambda v: _power_integrand(v, model))


def total_mass(model: SourceModel) -> float:
    return _quad01(lambda v: np.exp(_shift_logp(v, model)[1]).sum())


def solve_t0(R: float, K: int, tol: float = 1e-8, max_steps: int = 200) -> float:
    """Temperature t at which H_t = K - R (bisection; H_t decreases in t)."""
    if not 0.0 < R < K:
        raise ValueError(f"rate must lie in (0, {K})")
    target = K - R
    lo, hi = T_BRACKET
    if entropy_Ht(SourceModel(K, hi)) > target:
        raise ValueError("rate too close to K for the temperature bracket")
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        h = entropy_Ht(SourceModel(K, mid))
        if abs(h - target) <= tol:
            return mid
        if h > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def optimal_power(R: float, K: int) -> float:
    """P*_t, the second moment of an ideal sphere at density 2^R/m."""
    return ((1 << K) / 2.0 ** R) ** 2 / TWO_PI_E


def random_coding_loss(R: float, K: int) -> float:
    t = solve_t0(R, K)
    return 10.0 * np.log10(power_Pt(SourceModel(K, t)) / optimal_power(R, K))


def shaping_loss_db(sigma2: float, R: float, K: int) -> float:
    """10 log10(sigma2 (2^R/m)^2 2 pi e)."""
    return 10.0 * np.log10(sigma2 * (2.0 ** R / (1 << K)) ** 2 * TWO_PI_E)


@dataclass(frozen=True)
class ShapingReport:
    R: float
    sigma2: float
    K: int = 1

    @property
    def density_exponent(self) -> float:
        return 2.0 ** self.R / (1 << self.K)

    @property
    def loss_dB(self) -> float:
        return shaping_loss_db(self.sigma2, self.R, self.K)


def prior_for_symbol(y, model: SourceModel):
    """Priors over u in 0..m-1: p_z((y - u)_I). Vectorized over y."""
    y = np.asarray(y, dtype=float)
    zz = wrap(y[..., None] - np.arange(model.m), model.m)
    e = -model.t * zz * zz
    e -= e.max(axis=-1, keepdims=True)
    p = np.exp(e)
    return p / p.sum(axis=-1, keepdims=True)


def mean_log_Q(model: SourceModel) -> float:
    """∫_0^1 ln Q_ỹ dỹ by adaptive quadrature."""
    return _quad01(lambda v: log_Q(v, model))


def gauss_legendre_unit(npts: int = 64, panels: int = 1):
    """Nodes and weights of composite Gauss-Legendre on [0, 1)."""
    x, w = np.polynomial.legendre.leggauss(npts)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    k = np.arange(panels)[:, None]
    return ((k + x) / panels).ravel(), np.tile(w / panels, panels)


def report(R: float, K: int) -> dict:
    t = solve_t0(R, K)
    model = SourceModel(K, t)
    pt = power_Pt(model)
    ps = optimal_power(R, K)
    return {"K": K, "R": R, "t0": t, "Ht": entropy_Ht(model), "Pt": pt,
            "Pstar": ps, "loss_dB": 10.0 * np.log10(pt / ps)}
