"""Symmetric-jump Lévy models, stochastic clocks and Sato specifications.

Only symmetric sub-families can be constructed (Merton with zero mean jump,
balanced Kou, VG/NIG with theta = 0, CGMY with G = M), so every representable
jump measure satisfies nu(dx) = nu(-dx) by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import ClassVar

import numpy as np
from scipy import integrate, special

__all__ = [
    "ModelError",
    "JumpSpec",
    "NoJumps",
    "GaussianJumps",
    "DoubleExponentialJumps",
    "VarianceGammaJumps",
    "NIGJumps",
    "CGMYJumps",
    "JUMP_FAMILIES",
    "make_jumps",
    "LevyTriplet",
    "ClockModel",
    "SatoSpec",
    "ModelSpec",
    "validate_model",
    "jump_second_moment",
    "exp_cumulant_quad",
    "martingale_drift",
    "pqv_rate",
]


class ModelError(ValueError):
    """A model parameter lies outside its domain."""


def _require(cond: bool, name: str, msg: str) -> None:
    if not cond:
        raise ModelError(f"{name}: {msg}")


_LOG_TINY = math.log(1e-100)  # below this the integrands contribute < 1e-50


def _quad_even(g) -> float:
    """2 * int_0^inf g(x) dx.

    The piece on (0, 1] is integrated in s = log x, which turns the power-law
    behaviour of Lévy densities at the origin into smooth exponential decay.
    """
    opts = dict(epsabs=1e-15, epsrel=1e-12, limit=400)
    lo, _ = integrate.quad(lambda s: g(math.exp(s)) * math.exp(s), _LOG_TINY, 0.0, **opts)
    hi, _ = integrate.quad(g, 1.0, np.inf, **opts)
    return 2.0 * (lo + hi)


@dataclass(frozen=True)
class JumpSpec:
    """Base class: the zero jump measure."""

    family: ClassVar[str] = "none"
    finite_activity: ClassVar[bool] = True

    def validate(self) -> None:
        pass

    def density(self, x):
        """Lévy density at x (per unit time); symmetric in x."""
        return np.zeros_like(np.asarray(x, dtype=float))

    def second_moment_closed(self) -> float | None:
        return 0.0

    def exp_cumulant(self, a: float = 1.0) -> float:
        """int (cosh(a x) - 1) nu(dx), i.e. int (e^{ax} - 1 - ax) nu(dx) for symmetric nu."""
        return 0.0

    def exp_moment_bound(self) -> float:
        """Supremum of a for which int e^{a|x|} nu(dx) is finite on |x| > 1."""
        return math.inf

    def decay_rate(self) -> float:
        """Exponential decay rate of the density tail (used to size tables)."""
        return math.inf

    def small_jump_variance(self, eps: float) -> float:
        """int_{|x| <= eps} x^2 nu(dx)."""
        return 0.0


@dataclass(frozen=True)
class NoJumps(JumpSpec):
    pass


@dataclass(frozen=True)
class GaussianJumps(JumpSpec):
    """Merton jumps with zero mean: intensity ``lam``, jump std ``delta``."""

    lam: float
    delta: float
    family: ClassVar[str] = "gaussian"

    def validate(self) -> None:
        _require(self.lam >= 0, "model.jumps.lambda", f"must be >= 0, got {self.lam}")
        _require(self.delta > 0, "model.jumps.delta", f"must be > 0, got {self.delta}")

    def density(self, x):
        x = np.abs(np.asarray(x, dtype=float))
        return self.lam * np.exp(-0.5 * (x / self.delta) ** 2) / (self.delta * math.sqrt(2 * math.pi))

    def second_moment_closed(self) -> float:
        return self.lam * self.delta**2

    def exp_cumulant(self, a: float = 1.0) -> float:
        return self.lam * math.expm1(0.5 * (a * self.delta) ** 2)

    def decay_rate(self) -> float:
        return math.inf

    def small_jump_variance(self, eps: float) -> float:
        c = eps / self.delta
        return self.lam * self.delta**2 * (
            special.erf(c / math.sqrt(2)) - 2 * c * math.exp(-0.5 * c * c) / math.sqrt(2 * math.pi)
        )


@dataclass(frozen=True)
class DoubleExponentialJumps(JumpSpec):
    """Kou jumps with equal tail rates and p = 1/2: Laplace(eta) sizes at intensity ``lam``."""

    lam: float
    eta: float
    family: ClassVar[str] = "double_exponential"

    def validate(self) -> None:
        _require(self.lam >= 0, "model.jumps.lambda", f"must be >= 0, got {self.lam}")
        _require(self.eta > 0, "model.jumps.eta", f"must be > 0, got {self.eta}")

    def density(self, x):
        x = np.abs(np.asarray(x, dtype=float))
        return 0.5 * self.lam * self.eta * np.exp(-self.eta * x)

    def second_moment_closed(self) -> float:
        return 2.0 * self.lam / self.eta**2

    def exp_cumulant(self, a: float = 1.0) -> float:
        if abs(a) >= self.eta:
            return math.inf
        return self.lam * a * a / (self.eta**2 - a * a)

    def exp_moment_bound(self) -> float:
        return self.eta

    def decay_rate(self) -> float:
        return self.eta

    def small_jump_variance(self, eps: float) -> float:
        return 2.0 * self.lam / self.eta**2 * special.gammainc(3.0, self.eta * eps)


@dataclass(frozen=True)
class VarianceGammaJumps(JumpSpec):
    """Symmetric VG: sigma * W(G_t), G a gamma subordinator with mean t and variance kappa * t."""

    sigma: float
    kappa: float
    family: ClassVar[str] = "variance_gamma_sym"
    finite_activity: ClassVar[bool] = False

    def validate(self) -> None:
        _require(self.sigma > 0, "model.jumps.sigma", f"must be > 0, got {self.sigma}")
        _require(self.kappa > 0, "model.jumps.kappa", f"must be > 0, got {self.kappa}")

    @property
    def rate(self) -> float:
        return math.sqrt(2.0 / self.kappa) / self.sigma

    def density(self, x):
        x = np.abs(np.asarray(x, dtype=float))
        with np.errstate(divide="ignore"):
            return np.exp(-self.rate * x) / (self.kappa * x)

    def second_moment_closed(self) -> None:
        return None

    def exp_cumulant(self, a: float = 1.0) -> float:
        arg = 1.0 - 0.5 * self.sigma**2 * self.kappa * a * a
        if arg <= 0:
            return math.inf
        return -math.log(arg) / self.kappa

    def exp_moment_bound(self) -> float:
        return self.rate

    def decay_rate(self) -> float:
        return self.rate

    def small_jump_variance(self, eps: float) -> float:
        c = self.rate
        ce = c * eps
        # 2/kappa * int_0^eps x e^{-cx} dx
        return 2.0 / (self.kappa * c * c) * (-math.expm1(-ce) - ce * math.exp(-ce))


@dataclass(frozen=True)
class NIGJumps(JumpSpec):
    """Symmetric NIG: sigma * W(S_t), S an inverse Gaussian subordinator with mean t and variance kappa * t."""

    sigma: float
    kappa: float
    family: ClassVar[str] = "nig_sym"
    finite_activity: ClassVar[bool] = False

    def validate(self) -> None:
        _require(self.sigma > 0, "model.jumps.sigma", f"must be > 0, got {self.sigma}")
        _require(self.kappa > 0, "model.jumps.kappa", f"must be > 0, got {self.kappa}")

    @property
    def alpha(self) -> float:
        return 1.0 / (self.sigma * math.sqrt(self.kappa))

    def density(self, x):
        x = np.abs(np.asarray(x, dtype=float))
        z = self.alpha * x
        with np.errstate(divide="ignore", invalid="ignore"):
            return special.k1e(z) * np.exp(-z) / (math.pi * self.kappa * x)

    def second_moment_closed(self) -> None:
        return None

    def exp_cumulant(self, a: float = 1.0) -> float:
        arg = 1.0 - self.sigma**2 * self.kappa * a * a
        if arg <= 0:
            return math.inf
        return (1.0 - math.sqrt(arg)) / self.kappa

    def exp_moment_bound(self) -> float:
        return self.alpha

    def decay_rate(self) -> float:
        return self.alpha

    def small_jump_variance(self, eps: float) -> float:
        val, _ = integrate.quad(lambda x: x * x * float(self.density(x)), 0.0, eps,
                                epsabs=1e-16, epsrel=1e-12, limit=200)
        return 2.0 * val


@dataclass(frozen=True)
class CGMYJumps(JumpSpec):
    """CGMY with G = M: density C e^{-M|x|} / |x|^{1+Y}."""

    C: float
    M: float
    Y: float
    family: ClassVar[str] = "cgmy_sym"
    finite_activity: ClassVar[bool] = False

    def validate(self) -> None:
        _require(self.C > 0, "model.jumps.C", f"must be > 0, got {self.C}")
        _require(self.M > 0, "model.jumps.M", f"must be > 0, got {self.M}")
        _require(0 < self.Y < 2, "model.jumps.Y", f"must lie in (0, 2), got {self.Y}")

    def density(self, x):
        x = np.abs(np.asarray(x, dtype=float))
        with np.errstate(divide="ignore"):
            return self.C * np.exp(-self.M * x) / x ** (1.0 + self.Y)

    def second_moment_closed(self) -> float:
        return 2.0 * self.C * special.gamma(2.0 - self.Y) * self.M ** (self.Y - 2.0)

    def exp_cumulant(self, a: float = 1.0) -> float:
        M, Y = self.M, self.Y
        if abs(a) >= M:
            return math.inf
        if abs(Y - 1.0) < 1e-9:
            g = lambda s: s * math.log(s)
            return self.C * (g(M - a) + g(M + a) - 2 * g(M))
        return self.C * special.gamma(-Y) * ((M - a) ** Y + (M + a) ** Y - 2 * M**Y)

    def exp_moment_bound(self) -> float:
        return self.M

    def decay_rate(self) -> float:
        return self.M

    def small_jump_variance(self, eps: float) -> float:
        s = 2.0 - self.Y
        return 2.0 * self.C * special.gammainc(s, self.M * eps) * special.gamma(s) / self.M**s


JUMP_FAMILIES: dict[str, type[JumpSpec]] = {
    cls.family: cls
    for cls in (NoJumps, GaussianJumps, DoubleExponentialJumps, VarianceGammaJumps, NIGJumps, CGMYJumps)
}


def make_jumps(family: str, **params) -> JumpSpec:
    """Build a jump specification by family name; only symmetric families exist."""
    try:
        cls = JUMP_FAMILIES[family]
    except KeyError:
        raise ModelError(f"model.jumps.family: unknown family {family!r} "
                         f"(known: {', '.join(JUMP_FAMILIES)})") from None
    try:
        spec = cls(**params)
    except TypeError as exc:
        raise ModelError(f"model.jumps: bad parameters for {family}: {exc}") from None
    spec.validate()
    return spec


@lru_cache(maxsize=256)
def _second_moment_quad(jumps: JumpSpec) -> float:
    if isinstance(jumps, NoJumps):
        return 0.0
    return _quad_even(lambda x: x * x * float(jumps.density(x)))


def jump_second_moment(jumps: JumpSpec, method: str = "auto") -> float:
    """Per-unit-time second moment int x^2 nu(dx).

    ``method="auto"`` uses the closed form when the family has one and
    adaptive quadrature otherwise; ``"quad"`` forces quadrature.
    """
    if method not in ("auto", "quad"):
        raise ValueError(f"unknown method {method!r}")
    closed = jumps.second_moment_closed() if method == "auto" else None
    return float(closed) if closed is not None else _second_moment_quad(jumps)


def exp_cumulant_quad(jumps: JumpSpec, a: float = 1.0) -> float:
    """Quadrature version of ``JumpSpec.exp_cumulant``, used to cross-check closed forms."""
    if isinstance(jumps, NoJumps):
        return 0.0

    def g(x):
        f = float(jumps.density(x))
        if f <= 0.0 or x == 0.0:
            return 0.0
        # cosh(ax) - 1 = 2 sinh(ax/2)^2, combined with f in log space: no cancellation, no overflow
        y = 0.5 * abs(a) * x
        log_sinh = y + math.log1p(-math.exp(-2.0 * y)) - math.log(2.0) if y > 1.0 else math.log(math.sinh(y))
        return math.exp(math.log(2.0) + 2.0 * log_sinh + math.log(f))

    return _quad_even(g)


@dataclass(frozen=True)
class LevyTriplet:
    """Drift b, Gaussian variance sigma2 and jump measure, all per unit time."""

    b: float = 0.0
    sigma2: float = 0.0
    jumps: JumpSpec = field(default_factory=NoJumps)


@dataclass(frozen=True)
class ClockModel:
    """Stochastic clock: ``identity`` (tau_t = t) or ``integrated_cir`` (tau_t = int_0^t v_s ds)."""

    kind: str = "identity"
    kappa: float = 1.0
    theta: float = 0.04
    xi: float = 0.0
    v0: float = 0.04

    def validate(self) -> None:
        if self.kind == "identity":
            return
        _require(self.kind == "integrated_cir", "model.clock.kind",
                 f"unknown clock {self.kind!r} (known: identity, integrated_cir)")
        _require(self.kappa > 0, "model.clock.kappa", f"must be > 0, got {self.kappa}")
        _require(self.theta > 0, "model.clock.theta", f"must be > 0, got {self.theta}")
        _require(self.xi >= 0, "model.clock.xi", f"must be >= 0, got {self.xi}")
        _require(self.v0 > 0, "model.clock.v0", f"must be > 0, got {self.v0}")


@dataclass(frozen=True)
class SatoSpec:
    """Self-similar additive process with exponent gamma built on a symmetric Lévy triplet."""

    gamma: float
    base: LevyTriplet


MODEL_KINDS = ("levy", "time_changed", "sato")
DRIFT_MODES = ("explicit", "exp_martingale")


@dataclass(frozen=True)
class ModelSpec:
    """A simulable log-price model.

    ``kind`` selects the construction: a Lévy process, a Lévy process run on
    ``clock``, or a Sato process with exponent ``gamma``. Under
    ``drift_mode="exp_martingale"`` the drift is replaced so that e^X has
    unit mean.
    """

    kind: str
    triplet: LevyTriplet
    clock: ClockModel = field(default_factory=ClockModel)
    gamma: float = 0.5
    drift_mode: str = "explicit"
    model_id: str = "model"
    allow_zero: bool = False

    @property
    def sato(self) -> SatoSpec:
        return SatoSpec(self.gamma, self.triplet)

    @property
    def unconditional(self) -> bool:
        """True when increments are unconditionally independent (no random clock)."""
        return self.kind != "time_changed" or self.clock.kind == "identity"

    def resolved_triplet(self) -> LevyTriplet:
        """Triplet with the martingale drift substituted when requested (Lévy and clocked models)."""
        if self.drift_mode == "exp_martingale" and self.kind != "sato":
            return replace(self.triplet, b=martingale_drift(self.triplet))
        return self.triplet


def martingale_drift(triplet: LevyTriplet) -> float:
    """Drift b* = -sigma2/2 - int (e^x - 1 - x) nu(dx), making E[e^{X_t}] = 1."""
    k = triplet.jumps.exp_cumulant(1.0)
    if not math.isfinite(k):
        raise ModelError(f"model.jumps: exponential moment infinite for {triplet.jumps.family}")
    return -0.5 * triplet.sigma2 - k


def pqv_rate(triplet: LevyTriplet) -> float:
    """Per-unit-time rate of the predictable quadratic variation: sigma2 + int x^2 nu(dx)."""
    return triplet.sigma2 + jump_second_moment(triplet.jumps)


def validate_model(spec: ModelSpec) -> ModelSpec:
    """Return ``spec`` unchanged if every parameter is in its domain, else raise ``ModelError``."""
    _require(spec.kind in MODEL_KINDS, "model.kind", f"unknown kind {spec.kind!r} (known: {', '.join(MODEL_KINDS)})")
    _require(spec.drift_mode in DRIFT_MODES, "model.drift_mode",
             f"unknown mode {spec.drift_mode!r} (known: {', '.join(DRIFT_MODES)})")
    tr = spec.triplet
    _require(isinstance(tr.jumps, JumpSpec), "model.jumps", "not a jump specification")
    _require(math.isfinite(tr.b), "model.b", f"must be finite, got {tr.b}")
    _require(math.isfinite(tr.sigma2) and tr.sigma2 >= 0, "model.sigma2", f"must be >= 0, got {tr.sigma2}")
    tr.jumps.validate()
    m2 = jump_second_moment(tr.jumps)
    _require(math.isfinite(m2), "model.jumps", "second moment of the jump measure is infinite")
    if isinstance(tr.jumps, NoJumps) and tr.sigma2 == 0 and tr.b == 0 and spec.drift_mode == "explicit":
        _require(spec.allow_zero, "model", "zero process (sigma2 = 0, no jumps, b = 0) needs allow_zero")
    if spec.kind == "time_changed":
        spec.clock.validate()
    if spec.kind == "sato":
        _require(spec.gamma > 0, "model.sato.gamma", f"must be > 0, got {spec.gamma}")
    if spec.drift_mode == "exp_martingale":
        _require(math.isfinite(tr.jumps.exp_cumulant(1.0)), "model.jumps",
                 f"exponential moment infinite for {tr.jumps.family} "
                 f"(needs decay rate > 1, got {tr.jumps.exp_moment_bound():g})")
    return spec
