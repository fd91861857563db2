"""Experiment orchestration and report files.

Every run writes CSV tables plus ``summary.txt`` into the output directory.
Reports contain no timestamps or host details, so a rerun with the same
configuration is byte-identical whatever the worker count.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .levy_models import ModelSpec
from .order_lab import (
    Check,
    OrderVerdict,
    WalkOracle,
    counterexample_hazard,
    counterexample_stopped_bm,
    icx_test,
    nested_monotonicity_test,
    reverse_mg_test,
    strike_grid,
    walk_chain,
    walk_orthogonality,
)
from .path_engine import NestedSequence, Partition, PairedSamples, make_partition, simulate_paired
from .pricing import PayoffSpec, payoff_eval, price_on_samples

__all__ = ["RunResult", "run_experiment", "partitions_for", "VERSION"]

VERSION = f"qvorder-{__version__}"

PRICING_FIELDS = ["seed", "version", "model_id", "partition_id", "basis", "payoff", "strike_mode", "K_eff",
                  "price", "SE", "CI_low", "CI_high", "paths", "swap_rate", "note"]
VERDICT_FIELDS = ["seed", "version", "model_id", "partition_id", "relation", "K", "D", "SE", "z", "verdict"]
CHECK_FIELDS = ["seed", "version", "model_id", "partition_id", "check", "statistic", "threshold", "pass"]
ORACLE_FIELDS = ["seed", "version", "model_id", "partition_id", "quantity", "exact", "value"]


@dataclass
class RunResult:
    exit_code: int
    failures: list[str]
    files: list[str]
    summary: list[tuple[str, str]] = field(default_factory=list)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


class _Report:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.tables: dict[str, tuple[list[str], list[dict]]] = {}
        self.summary: list[tuple[str, str]] = []
        self.failures: list[str] = []

    def row(self, table: str, fields: list[str], **values):
        values.setdefault("seed", self.cfg.seed)
        values.setdefault("version", VERSION)
        self.tables.setdefault(table, (fields, []))[1].append(values)

    def note(self, key: str, value):
        self.summary.append((key, _fmt(value)))

    def check(self, model_id: str, partition_id: str, c: Check, table: str = "checks.csv"):
        self.row(table, CHECK_FIELDS, model_id=model_id, partition_id=partition_id, check=c.name,
                 statistic=c.statistic, threshold=c.threshold, **{"pass": c.passed})
        self.note(f"check.{model_id}.{partition_id}.{c.name}", "pass" if c.passed else "FAIL")
        if not c.passed:
            self.failures.append(f"{model_id}/{partition_id}/{c.name}")

    def verdict(self, v: OrderVerdict):
        for r in v.rows():
            self.row("verdicts.csv", VERDICT_FIELDS, **r)
        key = f"verdict.{v.model_id}.{v.partition_id}.{v.relation.replace(' ', '')}"
        self.note(key, v.verdict)
        self.note(key + ".bonferroni", v.verdict_bonferroni)
        if not v.passed:
            self.failures.append(f"{v.model_id}/{v.partition_id}/{v.relation}: violated at K={v.violated_strikes}")

    def write(self, out: str) -> list[str]:
        os.makedirs(out, exist_ok=True)
        files = []
        for name, (fields, rows) in sorted(self.tables.items()):
            path = os.path.join(out, name)
            with open(path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(fields)
                for r in rows:
                    w.writerow([_fmt(r.get(f, "")) for f in fields])
            files.append(path)
        path = os.path.join(out, "summary.txt")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"experiment.kind = {self.cfg.kind}\n")
            fh.write(f"experiment.seed = {self.cfg.seed}\n")
            fh.write(f"experiment.paths = {self.cfg.paths}\n")
            fh.write(f"version = {VERSION}\n")
            for k, v in self.summary:
                fh.write(f"{k} = {v}\n")
            fh.write(f"status = {'pass' if not self.failures else 'fail'}\n")
            fh.write(f"failures.count = {len(self.failures)}\n")
            for i, f in enumerate(self.failures, start=1):
                fh.write(f"failures.{i} = {f}\n")
        files.append(path)
        return files


def partitions_for(cfg: ExperimentConfig) -> list[Partition]:
    if cfg.scheme == "explicit":
        return [make_partition(scheme="explicit", points=cfg.points)]
    parts = [make_partition(cfg.T, n) for n in cfg.n]
    if cfg.scheme == "dyadic_refine":
        parts = [make_partition(scheme="dyadic_refine", base=p) for p in parts]
    return parts


def _strikes(cfg: ExperimentConfig, *samples):
    if cfg.strikes_values is not None:
        return np.asarray(sorted(cfg.strikes_values), dtype=float)
    return strike_grid(*samples, count=cfg.strikes_count, lo=cfg.strikes_lo, hi=cfg.strikes_hi)


def _simulate(cfg: ExperimentConfig, model: ModelSpec, P: Partition, threads: int) -> PairedSamples:
    return simulate_paired(model, P, cfg.sim_config(), cfg.paths, threads=threads)


def _mean_gap(model: ModelSpec, P: Partition, ps: PairedSamples) -> tuple[float, str]:
    """E[RV] - E[QV] = E[RV(B, P)]: analytic when B is deterministic, else estimated from the clocks."""
    if model.unconditional:
        return float(ps.rv_drift[0]), "analytic"
    return float(ps.rv_drift.mean()), "mc"


_RELATION_BASES = {"rv>=qv": ("rv", "qv"), "qv>=pqv": ("qv", "pqv"), "rv>=pqv": ("rv", "pqv")}


def _order_test(cfg, rep: _Report, threads: int):
    for model in cfg.models:
        for P in partitions_for(cfg):
            ps = _simulate(cfg, model, P, threads)
            gap, route = _mean_gap(model, P, ps)
            rep.note(f"mean_gap.{model.model_id}.{P.partition_id}", gap)
            rep.note(f"mean_gap.{model.model_id}.{P.partition_id}.route", route)
            for rel in cfg.relations:
                lhs, rhs = _RELATION_BASES[rel]
                a, b = ps.basis(lhs), ps.basis(rhs)
                expected = gap if lhs == "rv" else 0.0
                v = icx_test(a, b, _strikes(cfg, a, b), alpha=cfg.alpha, bonferroni=cfg.bonferroni,
                             equal_means_check=cfg.equal_means_check, mean_gap=expected, mean_z=cfg.mean_z,
                             relation=f"{lhs.upper()} >=icx {rhs.upper()}", model_id=model.model_id,
                             partition_id=P.partition_id)
                rep.verdict(v)
                rep.note(f"mean_diff.{model.model_id}.{P.partition_id}.{lhs}-{rhs}", v.mean_diff)
                rep.note(f"mean_se.{model.model_id}.{P.partition_id}.{lhs}-{rhs}", v.mean_se)
                if cfg.equal_means_check:
                    dev = abs(v.mean_diff - expected) / v.mean_se if v.mean_se > 0 else 0.0
                    ok = abs(v.mean_diff - expected) <= cfg.mean_z * v.mean_se
                    rep.check(model.model_id, P.partition_id,
                              Check(f"mean_identity_{lhs}_{rhs}", dev, cfg.mean_z, bool(ok)))
                    if v.cx:
                        rep.note(f"order.{model.model_id}.{P.partition_id}.{lhs}-{rhs}", "cx-compatible")


def _price(cfg, rep: _Report, threads: int):
    disc = math.exp(-cfg.r * cfg.T)
    for model in cfg.models:
        for P in partitions_for(cfg):
            ps = _simulate(cfg, model, P, threads)
            for spec in cfg.payoffs:
                # price orders covered by the theorems: fixed-strike calls for every model; for
                # unconditional-increment models also relative calls with k <= 1 and ATM puts/straddles
                asserted = spec.convex and (
                    (spec.kind == "call" and spec.strike_mode == "fixed")
                    or (model.unconditional and spec.strike_mode == "relative"
                        and ((spec.kind == "call" and spec.strike <= 1.0)
                             or (spec.kind in ("put", "straddle") and spec.strike == 1.0))))
                note = "" if asserted or spec.kind == "swap" else "no order guarantee"
                results = {}
                for basis in cfg.bases:
                    pr = price_on_samples(ps, spec, basis, r=cfg.r, alpha=cfg.alpha)
                    results[basis] = pr
                    rep.row("pricing.csv", PRICING_FIELDS, model_id=model.model_id, partition_id=P.partition_id,
                            basis=basis, payoff=spec.kind, strike_mode=spec.strike_mode, K_eff=pr.strike,
                            price=pr.estimate, SE=pr.se, CI_low=pr.ci_low, CI_high=pr.ci_high, paths=pr.paths,
                            swap_rate="" if pr.swap_rate is None else pr.swap_rate, note=note)
                if asserted and "rv" in results and "qv" in results:
                    x_rv, x_qv = ps.rv, ps.qv
                    if spec.annualize:
                        x_rv, x_qv = x_rv / P.T, x_qv / P.T
                    d = disc * (payoff_eval(spec, x_rv, results["rv"].strike)
                                - payoff_eval(spec, x_qv, results["qv"].strike))
                    m = float(d.mean())
                    se = float(d.std(ddof=1) / math.sqrt(d.size))
                    rep.check(model.model_id, P.partition_id,
                              Check(f"price_order_rv_ge_qv[{spec.label}]", m / se if se > 0 else 0.0, -3.0,
                                    bool(m >= -3.0 * se)))


def _reverse_mg(cfg, rep: _Report, threads: int):
    for model in cfg.models:
        for base in partitions_for(cfg):
            fine = base
            for _ in range(cfg.depth):
                fine = fine.dyadic_refine()
            nested = NestedSequence.one_at_a_time(base, fine)
            report = reverse_mg_test(model, nested, cfg.sim_config(), cfg.paths, alpha=cfg.alpha,
                                     bonferroni=cfg.bonferroni)
            for r in report.rows:
                rep.row("orthogonality.csv", ["seed", "version", "model_id", "partition_id", "step", "t_star", "g",
                                              "mean", "SE", "z", "pass"],
                        model_id=model.model_id, partition_id=base.partition_id, step=r.step, t_star=r.t_star,
                        g=r.g, mean=r.mean, SE=r.se, z=r.z, **{"pass": r.passed})
                if not r.passed:
                    rep.failures.append(f"{model.model_id}/{base.partition_id}/orthogonality step {r.step} g={r.g}")
            rep.note(f"reverse_mg.{model.model_id}.{base.partition_id}", "pass" if report.passed else "FAIL")


def _nested(cfg, rep: _Report, threads: int):
    for model in cfg.models:
        for base in partitions_for(cfg):
            parts = [base]
            for _ in range(cfg.depth):
                parts.append(parts[-1].dyadic_refine())
            nested = NestedSequence(tuple(parts))
            for v in nested_monotonicity_test(model, nested, cfg.sim_config(), cfg.paths, alpha=cfg.alpha,
                                              bonferroni=cfg.bonferroni, threads=threads,
                                              strikes=None if cfg.strikes_values is None
                                              else sorted(cfg.strikes_values)):
                rep.verdict(v)


def _counterexample(cfg, rep: _Report, threads: int):
    reports = []
    if cfg.counterexample in ("stopped_bm", "both"):
        reports.append(counterexample_stopped_bm(cfg.paths, dt=cfg.ce_dt, seed=cfg.seed, max_time=cfg.ce_max_time))
    if cfg.counterexample in ("hazard", "both"):
        reports.append(counterexample_hazard(cfg.paths, seed=cfg.seed, wrong_direction=cfg.wrong_direction))
    for r in reports:
        for c in r.checks:
            rep.check(r.name, "two-point", c, table="counterexamples.csv")
        if r.resampled:
            rep.note(f"{r.name}.resampled", r.resampled)
        if r.name == "stopped_bm":
            rep.note("stopped_bm.mean_tau", r.samples["mean_tau"])
            rep.note("stopped_bm.se_tau", r.samples["se_tau"])
        else:
            rep.note("hazard.ks_statistic", r.samples["ks_stat"])
            rep.note("hazard.ks_pvalue", r.samples["ks_pvalue"])


def _oracle(cfg, rep: _Report, threads: int):
    def sq(x):
        return x * x

    def call2(x):
        return np.maximum(x - 2.0, 0.0)

    for n in cfg.oracle_n:
        o = WalkOracle(n, tuple(cfg.oracle_support), tuple(cfg.oracle_probs),
                       allow_asymmetric=cfg.oracle_allow_asymmetric)
        mid, pid = f"walk{n}", f"walk-n{n}"
        if not o.symmetric:
            rep.note(f"oracle.{mid}.scope", "outside theorem scope (asymmetric steps)")
        for fname, f in (("x^2", sq), ("(x-2)^+", call2)):
            chain = walk_chain(o, f)
            for lvl, val in enumerate(chain):
                rep.row("oracle.csv", ORACLE_FIELDS, model_id=mid, partition_id=pid,
                        quantity=f"E[f(RV level {lvl})] f={fname}", exact=str(val), value=float(val))
            rep.note(f"oracle.{mid}.chain[{fname}]", " >= ".join(str(v) for v in chain))
            if o.symmetric:
                ok = all(a >= b for a, b in zip(chain, chain[1:]))
                rep.check(mid, pid, Check(f"chain_monotone[{fname}]", float(chain[0] - chain[-1]), 0.0, ok))
        for step, t, g, val in walk_orthogonality(o):
            rep.row("oracle.csv", ORACLE_FIELDS, model_id=mid, partition_id=pid,
                    quantity=f"E[U g(RV fine)] step {step} t*={t} g={g}", exact=str(val), value=float(val))
            if o.symmetric:
                rep.check(mid, pid, Check(f"orthogonality[step{step},{g}]", float(val), 0.0, val == 0))


_RUNNERS = {
    "order-test": _order_test,
    "price": _price,
    "reverse-mg": _reverse_mg,
    "nested": _nested,
    "counterexample": _counterexample,
    "oracle": _oracle,
}


def run_experiment(cfg: ExperimentConfig, threads: int | None = None) -> RunResult:
    """Run the experiment and write its reports to ``cfg.out``.

    Exit code 0 when every asserted check and verdict passes, 1 otherwise.
    """
    rep = _Report(cfg)
    _RUNNERS[cfg.kind](cfg, rep, threads or cfg.threads)
    files = rep.write(cfg.out)
    return RunResult(0 if not rep.failures else 1, rep.failures, files, rep.summary)
