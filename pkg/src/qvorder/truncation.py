"""Small-jump truncation of symmetric jump measures.

Jumps with |x| > eps are simulated as compound Poisson; the |x| <= eps part
is replaced by a Brownian component with the same variance. Every sampler
draws one uniform per jump, so the draw count per path is fixed by the jump
count and the counter-based streams stay aligned.

For the infinite-activity families the magnitudes come from a tabulated
measure: log-spaced cells whose masses are integrated accurately and whose
density is power-law inside each cell. That tabulated measure is the one the
engine simulates, and ``big_m2`` is its exact second moment.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import special

from .levy_models import (
    CGMYJumps,
    DoubleExponentialJumps,
    GaussianJumps,
    JumpSpec,
    NIGJumps,
    NoJumps,
    VarianceGammaJumps,
)

_TABLE_CELLS = 4096
_GL_NODES = 12
_TAIL_DECADES = 45.0  # table runs to exp(-45) of the density's exponential decay


class TruncatedJumps:
    """Sampler for the |x| > eps part of a symmetric jump measure."""

    rate: float = 0.0       # total intensity of jumps with |x| > eps
    big_m2: float = 0.0     # int_{|x|>eps} x^2 nu(dx) of the sampled measure
    small_var: float = 0.0  # int_{|x|<=eps} x^2 nu(dx), simulated as Brownian variance

    def magnitudes(self, w: np.ndarray) -> np.ndarray:
        return np.zeros_like(w)

    def sizes(self, u: np.ndarray) -> np.ndarray:
        """Signed jump sizes from one uniform each: the half picks the sign."""
        neg = u < 0.5
        w = np.where(neg, 2.0 * u, 2.0 * u - 1.0)
        mag = self.magnitudes(w)
        return np.where(neg, -mag, mag)

    @property
    def pqv_rate_jumps(self) -> float:
        return self.big_m2 + self.small_var


class _Gaussian(TruncatedJumps):
    def __init__(self, j: GaussianJumps, eps: float):
        self.delta = j.delta
        c = eps / j.delta
        self.tail = 0.5 * special.erfc(c / math.sqrt(2.0))  # P(Z > c)
        self.rate = 2.0 * j.lam * self.tail
        self.small_var = j.small_jump_variance(eps)
        phi = math.exp(-0.5 * c * c) / math.sqrt(2 * math.pi)
        self.big_m2 = j.lam * j.delta**2 * (2.0 * self.tail + 2.0 * c * phi)

    def magnitudes(self, w):
        return -self.delta * special.ndtri(w * self.tail)


class _DoubleExponential(TruncatedJumps):
    def __init__(self, j: DoubleExponentialJumps, eps: float):
        self.eps, self.eta = eps, j.eta
        self.rate = j.lam * math.exp(-j.eta * eps)
        self.small_var = j.small_jump_variance(eps)
        self.big_m2 = 2.0 * j.lam / j.eta**2 * special.gammaincc(3.0, j.eta * eps)

    def magnitudes(self, w):
        return self.eps - np.log(w) / self.eta


def _powint(y0, r, p):
    """int_{y0}^{y0 e^r} t^p dt, stable as p -> -1."""
    a = p + 1.0
    ar = a * r
    safe = np.where(np.abs(ar) < 1e-12, 1.0, a)
    ratio = np.where(np.abs(ar) < 1e-12, r * (1.0 + 0.5 * ar), np.expm1(ar) / safe)
    return y0**a * ratio


class _Tabulated(TruncatedJumps):
    def __init__(self, j: JumpSpec, eps: float, cells: int = _TABLE_CELLS):
        x_max = max(10.0 * eps, eps + _TAIL_DECADES / j.decay_rate())
        edges = np.geomspace(eps, x_max, cells + 1)
        lo = edges[:-1]
        r = np.log(edges[1:] / lo)
        gx, gw = np.polynomial.legendre.leggauss(_GL_NODES)
        s = np.log(lo)[:, None] + 0.5 * (gx[None, :] + 1.0) * r[:, None]
        y = np.exp(s)
        mass = 0.5 * r * (j.density(y) * y * gw).sum(axis=1)  # one side
        f_edge = np.maximum(j.density(edges), np.finfo(float).tiny)
        q = -np.log(f_edge[1:] / f_edge[:-1]) / r  # local power-law exponent
        amp = mass / _powint(lo, r, -q)
        m2 = amp * _powint(lo, r, 2.0 - q)

        self.lo, self.r, self.q, self.mass = lo, r, q, mass
        # tail cumulative: tail[i] = mass of cells i.. ; sampling from the top keeps large jumps precise
        self.tail = np.concatenate([np.cumsum(mass[::-1])[::-1], [0.0]])
        self.total = float(self.tail[0])
        self.rate = 2.0 * self.total
        self.big_m2 = 2.0 * float(m2.sum())
        self.small_var = j.small_jump_variance(eps)

    def magnitudes(self, w):
        target = w * self.total
        # cell i with tail[i+1] < target <= tail[i]
        i = np.searchsorted(-self.tail, -target, side="left") - 1
        i = np.clip(i, 0, len(self.mass) - 1)
        # fraction of the cell's mass lying above the sampled point
        above = np.clip((target - self.tail[i + 1]) / self.mass[i], 0.0, 1.0)
        a = 1.0 - self.q[i]
        ar = a * self.r[i]
        frac_below = 1.0 - above
        small = np.abs(ar) < 1e-12
        safe_a = np.where(small, 1.0, a)
        rho = np.where(small, frac_below * self.r[i], np.log1p(frac_below * np.expm1(ar)) / safe_a)
        return self.lo[i] * np.exp(rho)


@lru_cache(maxsize=64)
def truncate(jumps: JumpSpec, eps: float) -> TruncatedJumps:
    """Sampler of the jumps of ``jumps`` larger than ``eps`` in absolute value."""
    if eps <= 0:
        raise ValueError(f"truncation eps must be > 0, got {eps}")
    if isinstance(jumps, NoJumps):
        return TruncatedJumps()
    if isinstance(jumps, GaussianJumps):
        return _Gaussian(jumps, eps)
    if isinstance(jumps, DoubleExponentialJumps):
        return _DoubleExponential(jumps, eps)
    if isinstance(jumps, (VarianceGammaJumps, NIGJumps, CGMYJumps)):
        return _Tabulated(jumps, eps)
    raise TypeError(f"no sampler for jump family {jumps.family!r}")
