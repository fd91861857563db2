"""Flat ``section.key = value`` experiment configuration."""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from fractions import Fraction

from .levy_models import (
    JUMP_FAMILIES,
    ClockModel,
    LevyTriplet,
    ModelError,
    ModelSpec,
    make_jumps,
    validate_model,
)
from .path_engine import SimConfig
from .pricing import BASES, PayoffSpec

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "load_config", "EXPERIMENT_KINDS"]

EXPERIMENT_KINDS = ("price", "order-test", "reverse-mg", "nested", "counterexample", "oracle")
RELATIONS = ("rv>=qv", "qv>=pqv", "rv>=pqv")


class ConfigError(ValueError):
    def __init__(self, msg: str, key: str | None = None, line: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        super().__init__(f"{', '.join(where)}: {msg}" if where else msg)
        self.key, self.line = key, line


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _list(conv):
    def parse(s: str):
        items = [x.strip() for x in s.replace(";", ",").split(",") if x.strip()]
        if not items:
            raise ValueError("empty list")
        return [conv(x) for x in items]
    return parse


def _int(s: str) -> int:
    f = float(s)
    if f != int(f):
        raise ValueError(f"expected an integer, got {s!r}")
    return int(f)


_KEYS = {
    "experiment.kind": str,
    "experiment.seed": _int,
    "experiment.paths": _int,
    "experiment.batch_size": _int,
    "experiment.alpha": float,
    "experiment.r": float,
    "experiment.out": str,
    "experiment.threads": _int,
    "partition.T": float,
    "partition.n": _list(_int),
    "partition.scheme": str,
    "partition.points": _list(float),
    "partition.depth": _int,
    "pricing.payoffs": str,
    "pricing.bases": _list(str),
    "pricing.annualize": _bool,
    "sim.eps": float,
    "sim.clock_steps": _int,
    "strikes.count": _int,
    "strikes.lo": float,
    "strikes.hi": float,
    "strikes.values": _list(float),
    "order.relations": _list(str),
    "order.bonferroni": _bool,
    "order.equal_means_check": _bool,
    "order.mean_z": float,
    "counterexample.name": str,
    "counterexample.dt": float,
    "counterexample.max_time": float,
    "counterexample.wrong_direction": _bool,
    "oracle.n": _list(_int),
    "oracle.support": _list(float),
    "oracle.probs": _list(Fraction),
    "oracle.allow_asymmetric": _bool,
}

_MODEL_FIELDS = {
    "kind": str, "id": str, "b": float, "sigma2": float, "drift_mode": str, "allow_zero": _bool,
    "jumps.family": str, "jumps.lambda": float, "jumps.delta": float, "jumps.eta": float,
    "jumps.sigma": float, "jumps.kappa": float, "jumps.C": float, "jumps.M": float, "jumps.Y": float,
    "clock.kind": str, "clock.kappa": float, "clock.theta": float, "clock.xi": float, "clock.v0": float,
    "sato.gamma": float,
}
_JUMP_PARAMS = {"lambda": "lam", "delta": "delta", "eta": "eta", "sigma": "sigma", "kappa": "kappa",
                "C": "C", "M": "M", "Y": "Y"}


@dataclass
class ExperimentConfig:
    kind: str
    seed: int = 0
    paths: int = 100_000
    batch_size: int = 8192
    alpha: float = 0.05
    r: float = 0.0
    out: str = "qvorder_out"
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    models: list[ModelSpec] = field(default_factory=list)
    T: float = 1.0
    n: list[int] = field(default_factory=lambda: [4])
    scheme: str = "uniform"
    points: list[float] | None = None
    depth: int = 1
    payoffs: list[PayoffSpec] = field(default_factory=list)
    bases: list[str] = field(default_factory=lambda: list(BASES))
    eps: float = 1e-3
    clock_steps: int = 2048
    strikes_count: int = 21
    strikes_lo: float = 0.01
    strikes_hi: float = 0.999
    strikes_values: list[float] | None = None
    relations: list[str] = field(default_factory=lambda: ["rv>=qv", "qv>=pqv"])
    bonferroni: bool = False
    equal_means_check: bool = True
    mean_z: float = 3.0
    counterexample: str = "both"
    ce_dt: float = 1e-3
    ce_max_time: float = 60.0
    wrong_direction: bool = False
    oracle_n: list[int] = field(default_factory=lambda: [2])
    oracle_support: list[float] = field(default_factory=lambda: [-1.0, 1.0])
    oracle_probs: list[Fraction] = field(default_factory=lambda: [Fraction(1, 2), Fraction(1, 2)])
    oracle_allow_asymmetric: bool = False

    def sim_config(self, label: str | None = None) -> SimConfig:
        return SimConfig(eps=self.eps, clock_steps=self.clock_steps, batch_size=self.batch_size,
                         seed=self.seed, label=label)


def _parse_payoffs(text: str, annualize: bool) -> list[PayoffSpec]:
    """``kind:mode:strike`` items separated by ';', e.g. ``call:fixed:0.04; straddle:relative:1``."""
    out = []
    for item in (x.strip() for x in text.split(";")):
        if not item:
            continue
        parts = [p.strip() for p in item.split(":")]
        if len(parts) == 1:
            parts += ["relative", "1"] if parts[0] == "swap" else ["fixed", "0"]
        if len(parts) != 3:
            raise ValueError(f"payoff {item!r} is not kind:mode:strike")
        out.append(PayoffSpec(parts[0], float(parts[2]), parts[1], annualize))
    if not out:
        raise ValueError("no payoffs given")
    return out


def _build_model(mid: str, fields: dict, lines: dict) -> ModelSpec:
    def key(f):
        return "model." + f if mid == "_default" else f"model.{mid}.{f}"

    def line(f):
        return lines.get(f)

    if "kind" not in fields:
        raise ConfigError("missing model kind", key("kind"), min(lines.values(), default=None))
    family = fields.get("jumps.family", "none")
    if family not in JUMP_FAMILIES:
        raise ConfigError(f"unknown family {family!r} (known: {', '.join(JUMP_FAMILIES)})",
                          key("jumps.family"), line("jumps.family"))
    params = {}
    for f, v in fields.items():
        if f.startswith("jumps.") and f != "jumps.family":
            name = _JUMP_PARAMS[f[6:]]
            params[name] = v
    try:
        jumps = make_jumps(family, **params)
    except ModelError as exc:
        bad = next((f for f in fields if f.startswith("jumps.") and f != "jumps.family"), "jumps.family")
        raise ConfigError(str(exc), key(bad), line(bad)) from None
    clock_fields = {f[6:]: v for f, v in fields.items() if f.startswith("clock.")}
    clock = ClockModel(**clock_fields) if clock_fields else ClockModel()
    if fields["kind"] == "time_changed" and "kind" not in clock_fields:
        clock = ClockModel("integrated_cir", **{k: v for k, v in clock_fields.items() if k != "kind"})
    model_id = fields.get("id", "model" if mid == "_default" else mid)
    spec = ModelSpec(kind=fields["kind"], triplet=LevyTriplet(fields.get("b", 0.0), fields.get("sigma2", 0.0), jumps),
                     clock=clock, gamma=fields.get("sato.gamma", 0.5),
                     drift_mode=fields.get("drift_mode", "explicit"), model_id=model_id,
                     allow_zero=fields.get("allow_zero", False))
    try:
        return validate_model(spec)
    except ModelError as exc:
        msg = str(exc)
        field_name = msg.split(":", 1)[0].removeprefix("model.").removeprefix("model")
        f = field_name if field_name in fields else "kind"
        raise ConfigError(msg, key(f), line(f)) from None


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate an experiment configuration.

    Errors name the offending line and key.
    """
    values: dict[str, object] = {}
    lines: dict[str, int] = {}
    models: dict[str, dict] = {}
    model_lines: dict[str, dict] = {}
    for no, raw in enumerate(text.splitlines(), start=1):
        s = raw.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ConfigError(f"expected 'key = value', got {s!r}", line=no)
        k, v = (x.strip() for x in s.split("=", 1))
        if not v:
            raise ConfigError("empty value", k, no)
        if k.startswith("model."):
            rest = k[6:]
            if rest in _MODEL_FIELDS:
                mid, f = "_default", rest
            else:
                mid, _, f = rest.partition(".")
                if f not in _MODEL_FIELDS:
                    raise ConfigError("unknown key", k, no)
            try:
                val = _MODEL_FIELDS[f](v)
            except (ValueError, ArithmeticError) as exc:
                raise ConfigError(f"bad value {v!r}: {exc}", k, no) from None
            if f in models.setdefault(mid, {}):
                raise ConfigError("duplicate key", k, no)
            models[mid][f] = val
            model_lines.setdefault(mid, {})[f] = no
            continue
        if k not in _KEYS:
            raise ConfigError("unknown key", k, no)
        if k in values:
            raise ConfigError("duplicate key", k, no)
        try:
            values[k] = _KEYS[k](v)
        except (ValueError, ArithmeticError) as exc:
            raise ConfigError(f"bad value {v!r}: {exc}", k, no) from None
        lines[k] = no

    if "experiment.kind" not in values:
        raise ConfigError("missing required key", "experiment.kind")
    kind = values["experiment.kind"]
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r} (known: {', '.join(EXPERIMENT_KINDS)})",
                          "experiment.kind", lines["experiment.kind"])

    def get(k, default):
        return values.get(k, default)

    def check(cond, k, msg):
        if not cond:
            raise ConfigError(msg, k, lines.get(k))

    cfg = ExperimentConfig(kind=kind)
    cfg.seed = get("experiment.seed", cfg.seed)
    cfg.paths = get("experiment.paths", cfg.paths)
    check(cfg.paths >= 1, "experiment.paths", "must be >= 1")
    cfg.batch_size = get("experiment.batch_size", cfg.batch_size)
    check(cfg.batch_size >= 1, "experiment.batch_size", "must be >= 1")
    cfg.alpha = get("experiment.alpha", cfg.alpha)
    check(0 < cfg.alpha < 1, "experiment.alpha", "must lie in (0, 1)")
    cfg.r = get("experiment.r", cfg.r)
    cfg.out = get("experiment.out", cfg.out)
    cfg.threads = get("experiment.threads", cfg.threads)
    check(cfg.threads >= 1, "experiment.threads", "must be >= 1")

    cfg.T = get("partition.T", cfg.T)
    check(cfg.T > 0, "partition.T", "must be > 0")
    cfg.n = get("partition.n", cfg.n)
    check(all(n >= 1 for n in cfg.n), "partition.n", "must be >= 1")
    cfg.scheme = get("partition.scheme", cfg.scheme)
    check(cfg.scheme in ("uniform", "explicit", "dyadic_refine"), "partition.scheme",
          "must be uniform, explicit or dyadic_refine")
    cfg.points = get("partition.points", None)
    check(cfg.scheme != "explicit" or cfg.points is not None, "partition.points", "needed by the explicit scheme")
    if cfg.points is not None:
        check(all(b > a for a, b in zip(cfg.points, cfg.points[1:])) and cfg.points[0] == 0,
              "partition.points", "must start at 0 and increase strictly")
    cfg.depth = get("partition.depth", cfg.depth)
    check(cfg.depth >= 1, "partition.depth", "must be >= 1")

    cfg.eps = get("sim.eps", cfg.eps)
    check(cfg.eps > 0, "sim.eps", "must be > 0")
    cfg.clock_steps = get("sim.clock_steps", cfg.clock_steps)
    check(cfg.clock_steps >= 1, "sim.clock_steps", "must be >= 1")

    annualize = get("pricing.annualize", True)
    if "pricing.payoffs" in values:
        try:
            cfg.payoffs = _parse_payoffs(values["pricing.payoffs"], annualize)
        except ValueError as exc:
            raise ConfigError(str(exc), "pricing.payoffs", lines["pricing.payoffs"]) from None
    cfg.bases = [b.lower() for b in get("pricing.bases", cfg.bases)]
    check(all(b in BASES for b in cfg.bases), "pricing.bases", f"bases must be among {BASES}")

    cfg.strikes_count = get("strikes.count", cfg.strikes_count)
    check(cfg.strikes_count >= 1, "strikes.count", "must be >= 1")
    cfg.strikes_lo = get("strikes.lo", cfg.strikes_lo)
    cfg.strikes_hi = get("strikes.hi", cfg.strikes_hi)
    check(0 <= cfg.strikes_lo < cfg.strikes_hi <= 1, "strikes.hi", "need 0 <= lo < hi <= 1")
    cfg.strikes_values = get("strikes.values", None)

    cfg.relations = [r.replace(" ", "").lower() for r in get("order.relations", cfg.relations)]
    check(all(r in RELATIONS for r in cfg.relations), "order.relations", f"relations must be among {RELATIONS}")
    cfg.bonferroni = get("order.bonferroni", cfg.bonferroni)
    cfg.equal_means_check = get("order.equal_means_check", cfg.equal_means_check)
    cfg.mean_z = get("order.mean_z", cfg.mean_z)

    cfg.counterexample = get("counterexample.name", cfg.counterexample)
    check(cfg.counterexample in ("stopped_bm", "hazard", "both"), "counterexample.name",
          "must be stopped_bm, hazard or both")
    cfg.ce_dt = get("counterexample.dt", cfg.ce_dt)
    check(cfg.ce_dt > 0, "counterexample.dt", "must be > 0")
    cfg.ce_max_time = get("counterexample.max_time", cfg.ce_max_time)
    cfg.wrong_direction = get("counterexample.wrong_direction", cfg.wrong_direction)

    cfg.oracle_n = get("oracle.n", cfg.oracle_n)
    cfg.oracle_support = get("oracle.support", cfg.oracle_support)
    cfg.oracle_probs = get("oracle.probs", cfg.oracle_probs)
    check(len(cfg.oracle_probs) == len(cfg.oracle_support), "oracle.probs", "one probability per support point")
    cfg.oracle_allow_asymmetric = get("oracle.allow_asymmetric", cfg.oracle_allow_asymmetric)

    for mid in models:
        cfg.models.append(_build_model(mid, models[mid], model_lines[mid]))
    ids = [m.model_id for m in cfg.models]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate model ids {ids}", "model.id")
    if kind in ("price", "order-test", "reverse-mg", "nested") and not cfg.models:
        raise ConfigError(f"experiment kind {kind!r} needs a model", "model.kind")
    if kind == "price" and not cfg.payoffs:
        raise ConfigError("price experiments need payoffs", "pricing.payoffs")
    return cfg


def load_config(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
