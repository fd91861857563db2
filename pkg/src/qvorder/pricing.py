"""Variance-option prices on realized variance, quadratic variation and predictable QV."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from . import rng
from .levy_models import ModelSpec, pqv_rate, validate_model
from .path_engine import (
    Partition,
    PairedSamples,
    SimConfig,
    _cir_clock_grid,
    _interp_grid,
    sato_drift,
    simulate_paired,
)

__all__ = [
    "PAYOFF_KINDS",
    "BASES",
    "PayoffSpec",
    "PriceResult",
    "payoff_eval",
    "ExpectedRV",
    "expected_rv",
    "swap_rate",
    "price_option",
    "price_on_samples",
]

PAYOFF_KINDS = ("swap", "call", "put", "straddle", "volswap")
BASES = ("rv", "qv", "pqv")


@dataclass(frozen=True)
class PayoffSpec:
    """Payoff f(x) on annualized variance x.

    ``strike_mode="fixed"`` uses ``strike`` as K; ``"relative"`` uses
    K = strike * s with s the swap rate on the same basis.
    """

    kind: str
    strike: float = 0.0
    strike_mode: str = "fixed"
    annualize: bool = True

    def __post_init__(self):
        if self.kind not in PAYOFF_KINDS:
            raise ValueError(f"unknown payoff kind {self.kind!r}")
        if self.strike_mode not in ("fixed", "relative"):
            raise ValueError(f"unknown strike mode {self.strike_mode!r}")
        if not self.strike >= 0:
            raise ValueError(f"strike must be >= 0, got {self.strike}")

    @property
    def convex(self) -> bool:
        return self.kind != "volswap"

    @property
    def label(self) -> str:
        return f"{self.kind}:{self.strike_mode}:{self.strike:g}"


def payoff_eval(spec: PayoffSpec, x, K: float):
    """f(x) for variance value(s) ``x`` >= 0 and resolved strike ``K``."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0):
        raise ValueError("negative variance passed to a payoff")
    k = spec.kind
    if k == "swap":
        out = xa - K
    elif k == "call":
        out = np.maximum(xa - K, 0.0)
    elif k == "put":
        out = np.maximum(K - xa, 0.0)
    elif k == "straddle":
        out = np.abs(xa - K)
    else:
        out = np.sqrt(xa) - K
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PriceResult:
    estimate: float
    se: float
    ci_low: float
    ci_high: float
    paths: int
    basis: str
    strike: float
    swap_rate: float | None = None
    alpha: float = 0.05


@dataclass(frozen=True)
class ExpectedRV:
    value: float
    route: str      # "analytic" or "mc"
    se: float = 0.0


def _drift_sum(b: float, P: Partition) -> float:
    return float(np.sum((b * P.dt) ** 2))


def expected_rv(model: ModelSpec, P: Partition, cfg: SimConfig | None = None,
                n_paths: int = 100_000) -> ExpectedRV:
    """E[RV(X, P)] = E[[X,X]_T] + E[RV(B, P)].

    Lévy and Sato models have a deterministic drift path and are handled in
    closed form. Clocked models integrate the conditional formula over
    simulated clocks.
    """
    validate_model(model)
    tr = model.resolved_triplet()
    rate = pqv_rate(tr)
    if model.kind == "levy" or (model.kind == "time_changed" and model.clock.kind == "identity"):
        return ExpectedRV(P.T * rate + _drift_sum(tr.b, P), "analytic")
    if model.kind == "sato":
        B = sato_drift(model, P, cfg or SimConfig())
        return ExpectedRV(P.T ** (2 * model.gamma) * rate + float(np.sum(np.diff(B) ** 2)), "analytic")
    cfg = cfg or SimConfig()
    tau = _clock_samples(model, P, cfg, n_paths)
    y = tau[:, -1] * rate + np.sum((tr.b * np.diff(tau, axis=1)) ** 2, axis=1)
    return ExpectedRV(float(y.mean()), "mc", float(y.std(ddof=1) / math.sqrt(y.size)))


def _clock_samples(model: ModelSpec, P: Partition, cfg: SimConfig, n_paths: int) -> np.ndarray:
    out = np.empty((n_paths, P.n + 1))
    label = (cfg.label or model.model_id) + ":clock-only"
    for start in range(0, n_paths, cfg.batch_size):
        idx = np.arange(start, min(start + cfg.batch_size, n_paths))
        keys = rng.derive_seed(cfg.seed, label, idx)
        grid = _cir_clock_grid(model.clock, P.T, cfg.clock_steps, keys)
        out[start:start + idx.size] = _interp_grid(grid, P.T, P.points)
    return out


def swap_rate(model: ModelSpec, T: float, basis: str, P: Partition | None = None,
              cfg: SimConfig | None = None) -> float:
    """Annualized fair strike s = E[basis] / T.

    E[QV] = E[PQV]; both equal E[RV] minus the drift sum.
    """
    basis = basis.lower()
    if basis not in BASES:
        raise ValueError(f"unknown basis {basis!r}")
    if basis == "rv":
        if P is None:
            raise ValueError("the RV basis needs a partition")
        return expected_rv(model, P, cfg).value / T
    validate_model(model)
    rate = pqv_rate(model.resolved_triplet())
    if model.kind == "sato":
        return T ** (2 * model.gamma) * rate / T
    if model.kind == "time_changed" and model.clock.kind != "identity":
        Pc = P if P is not None else Partition(np.array([0.0, T]))
        tau = _clock_samples(model, Pc, cfg or SimConfig(), 100_000)
        return float(tau[:, -1].mean()) * rate / T
    return rate


def price_on_samples(samples: PairedSamples, spec: PayoffSpec, basis: str, *, r: float = 0.0,
                     alpha: float = 0.05, swap_rate_value: float | None = None,
                     order_context: bool = False) -> PriceResult:
    """Discounted MC price of ``spec`` on one basis of a paired sample.

    Relative strikes use ``swap_rate_value`` when given, else the sample mean
    of the same annualized basis, which makes the paired swap price exactly 0.
    """
    if order_context and not spec.convex:
        raise ValueError("volswap payoffs are not convex and cannot enter an order assertion")
    y = samples.basis(basis)
    T = samples.T
    x = y / T if spec.annualize else y
    s = None
    if spec.strike_mode == "relative":
        s = float(np.mean(x)) if swap_rate_value is None else float(swap_rate_value)
    K = spec.strike * s if spec.strike_mode == "relative" else spec.strike
    disc = math.exp(-r * T)
    pay = disc * payoff_eval(spec, x, K)
    n = pay.size
    if spec.kind == "swap":
        # linear payoff: price the mean directly so a swap struck at the sample mean is exactly 0
        est = disc * (float(np.mean(x)) - K)
    else:
        est = float(np.mean(pay))
    se = float(np.std(pay, ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    z = float(norm.ppf(1 - alpha / 2))
    return PriceResult(est, se, est - z * se, est + z * se, n, basis.lower(), float(K), s, alpha)


def price_option(model: ModelSpec, spec: PayoffSpec, basis: str, P: Partition, cfg: SimConfig,
                 n_paths: int, *, r: float = 0.0, alpha: float = 0.05, threads: int = 1,
                 samples: PairedSamples | None = None, order_context: bool = False) -> PriceResult:
    """Price ``spec`` on ``basis`` by Monte Carlo.

    Pass ``samples`` to price several payoffs and bases on one common path set.
    """
    if samples is None:
        samples = simulate_paired(model, P, cfg, n_paths, threads=threads)
    return price_on_samples(samples, spec, basis, r=r, alpha=alpha, order_context=order_context)
