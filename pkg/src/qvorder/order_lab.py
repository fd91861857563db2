"""Order tests on paired samples, exact walk enumeration and the two counterexamples."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import rng
from .levy_models import ModelSpec, validate_model
from .path_engine import NestedSequence, PairedSamples, SimConfig, simulate_batch, simulate_paired

__all__ = [
    "StopLossCurve",
    "stop_loss",
    "strike_grid",
    "OrderVerdict",
    "icx_test",
    "icx_test_paired",
    "G_BATTERY",
    "OrthogonalityRow",
    "ReverseMGReport",
    "orthogonality_stats",
    "reverse_mg_test",
    "WalkOracle",
    "walk_oracle_eval",
    "walk_rv",
    "walk_orthogonality",
    "walk_chain",
    "Check",
    "CounterexampleReport",
    "counterexample_stopped_bm",
    "counterexample_hazard",
    "nested_monotonicity_test",
]


def _z(alpha: float, m: int = 1) -> float:
    return float(stats.norm.ppf(1.0 - alpha / (2.0 * m)))


# ---------------------------------------------------------------------------
# stop-loss transforms

@dataclass(frozen=True)
class StopLossCurve:
    strikes: np.ndarray
    values: np.ndarray
    se: np.ndarray


def stop_loss(samples, strikes) -> StopLossCurve:
    """Empirical K -> mean((y - K)^+) with standard errors."""
    y = np.asarray(samples, dtype=float).ravel()
    if y.size == 0:
        raise ValueError("stop_loss needs a nonempty sample")
    K = np.atleast_1d(np.asarray(strikes, dtype=float))
    if np.any(np.diff(K) < 0):
        raise ValueError("strike grid must be sorted")
    vals = np.empty(K.size)
    se = np.empty(K.size)
    for j, k in enumerate(K):
        p = np.maximum(y - k, 0.0)
        vals[j] = p.mean()
        se[j] = p.std(ddof=1) / math.sqrt(y.size) if y.size > 1 else 0.0
    return StopLossCurve(K, vals, se)


def strike_grid(*samples, count: int = 21, lo: float = 0.01, hi: float = 0.999) -> np.ndarray:
    """Strikes at evenly spaced quantile levels of the pooled sample."""
    pooled = np.concatenate([np.asarray(s, dtype=float).ravel() for s in samples])
    return np.unique(np.quantile(pooled, np.linspace(lo, hi, count)))


# ---------------------------------------------------------------------------
# paired dominance

@dataclass
class OrderVerdict:
    """Paired stop-loss comparison of lhs against rhs.

    ``verdict`` is ``"consistent"``, ``"violated"`` or ``"inconclusive"``
    (fewer than two paths). With ``bonferroni`` the critical value is
    z_{1 - alpha / (2m)} for m strikes; both variants are always recorded.
    """

    relation: str
    strikes: np.ndarray
    D: np.ndarray
    se: np.ndarray
    z: np.ndarray
    verdict: str
    violated_strikes: list
    alpha: float
    n: int
    bonferroni: bool = False
    verdict_plain: str = ""
    verdict_bonferroni: str = ""
    mean_diff: float = float("nan")
    mean_se: float = float("nan")
    mean_gap: float = 0.0
    cx: bool | None = None
    model_id: str = ""
    partition_id: str = ""

    @property
    def passed(self) -> bool:
        return self.verdict == "consistent"

    def rows(self) -> list[dict]:
        return [dict(relation=self.relation, model_id=self.model_id, partition_id=self.partition_id,
                     K=float(k), D=float(d), SE=float(s), z=float(z), verdict=self.verdict)
                for k, d, s, z in zip(self.strikes, self.D, self.se, self.z)]


def icx_test(lhs, rhs, strikes=None, *, alpha: float = 0.05, equal_means_check: bool = False,
             mean_gap: float = 0.0, mean_z: float | None = None, bonferroni: bool = False,
             relation: str = "lhs >=icx rhs", model_id: str = "", partition_id: str = "",
             exact: bool = False) -> OrderVerdict:
    """Test lhs >=icx rhs on paired draws (row i of lhs and rhs share a path).

    Per strike, D = mean((lhs - K)^+ - (rhs - K)^+) with its paired SE; a
    strike is a violation when D < -z SE. With ``equal_means_check`` the mean
    difference is compared with ``mean_gap`` (within ``mean_z`` SEs, default
    the same z) and ``cx`` is set when they agree. ``exact`` treats the pairs
    as the whole population of equally likely outcomes, so every SE is 0.
    """
    a = np.asarray(lhs, dtype=float).ravel()
    b = np.asarray(rhs, dtype=float).ravel()
    if a.size != b.size:
        raise ValueError(f"mismatched path sets: {a.size} vs {b.size}")
    K = strike_grid(a, b) if strikes is None else np.atleast_1d(np.asarray(strikes, dtype=float))
    n = a.size
    D = np.empty(K.size)
    se = np.zeros(K.size)
    for j, k in enumerate(K):
        d = np.maximum(a - k, 0.0) - np.maximum(b - k, 0.0)
        D[j] = d.mean()
        if n > 1 and not exact:
            se[j] = d.std(ddof=1) / math.sqrt(n)
    with np.errstate(divide="ignore", invalid="ignore"):
        zs = np.where(se > 0, D / np.where(se > 0, se, 1.0), np.where(D < 0, -np.inf, 0.0))

    def decide(zc):
        bad = [float(k) for k, d, s in zip(K, D, se) if d < -zc * s]
        return ("violated" if bad else "consistent"), bad

    if n < 2 and not exact:
        v_plain = v_bonf = "inconclusive"
        bad = []
    else:
        v_plain, bad_plain = decide(_z(alpha))
        v_bonf, bad_bonf = decide(_z(alpha, K.size))
        bad = bad_bonf if bonferroni else bad_plain
    out = OrderVerdict(relation, K, D, se, zs, v_bonf if bonferroni else v_plain, bad, alpha, n,
                       bonferroni, v_plain, v_bonf, model_id=model_id, partition_id=partition_id,
                       mean_gap=mean_gap)
    if n > 1 or exact:
        d = a - b
        out.mean_diff = float(d.mean())
        out.mean_se = 0.0 if exact else float(d.std(ddof=1) / math.sqrt(n))
        if equal_means_check:
            zc = _z(alpha) if mean_z is None else mean_z
            out.cx = bool(abs(out.mean_diff - mean_gap) <= zc * out.mean_se) and out.passed
    return out


def icx_test_paired(paired: PairedSamples, lhs: str, rhs: str, strikes=None, **kw) -> OrderVerdict:
    """``icx_test`` on two bases (``"rv"``, ``"qv"``, ``"pqv"``, ``"rv<level>"``) of one sample."""
    kw.setdefault("relation", f"{lhs.upper()} >=icx {rhs.upper()}")
    kw.setdefault("model_id", paired.model_id)
    kw.setdefault("partition_id", paired.partition_id)
    return icx_test(paired.basis(lhs), paired.basis(rhs), strikes, **kw)


# ---------------------------------------------------------------------------
# reverse-martingale orthogonality

G_BATTERY = ("one", "clipped", "above_median")


def orthogonality_stats(x_a, x_t, x_b, rv_fine, *, clip: float, median: float):
    """Per-path U g(RV_fine) for each g in the battery, U = (X_b - X_t*)(X_t* - X_a)."""
    U = (np.asarray(x_b) - x_t) * (np.asarray(x_t) - x_a)
    rv_fine = np.asarray(rv_fine)
    return {
        "one": U,
        "clipped": U * np.minimum(rv_fine, clip),
        "above_median": U * (rv_fine > median),
    }


@dataclass(frozen=True)
class OrthogonalityRow:
    step: int
    t_star: float
    g: str
    mean: float
    se: float
    z: float
    passed: bool


@dataclass
class ReverseMGReport:
    rows: list[OrthogonalityRow]
    alpha: float
    z_crit: float
    n: int
    model_id: str = ""

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)


def _summarize(step, t_star, vals: dict, zc: float) -> list[OrthogonalityRow]:
    out = []
    for g in G_BATTERY:
        v = vals[g]
        m = float(v.mean())
        s = float(v.std(ddof=1) / math.sqrt(v.size))
        z = m / s if s > 0 else (0.0 if m == 0 else math.copysign(math.inf, m))
        out.append(OrthogonalityRow(step, float(t_star), g, m, s, z, abs(z) <= zc))
    return out


def reverse_mg_test(model: ModelSpec, nested: NestedSequence, cfg: SimConfig, n_paths: int, *,
                    alpha: float = 0.05, bonferroni: bool = False, pilot: int = 10_000) -> ReverseMGReport:
    """Orthogonality E[U g(RV_fine)] = 0 for every one-point refinement step.

    Works with the martingale part X - B of each path. The thresholds of the
    g battery (99% quantile and median of RV_fine) come from a separate pilot
    sample, so each g is a fixed function.
    """
    validate_model(model)
    if not nested.single_point_steps():
        raise ValueError("reverse_mg_test needs one inserted point per refinement step")
    P = nested.finest
    idx_levels = nested.level_indices()
    steps = len(nested) - 1
    zc = _z(alpha, 3 * steps if bonferroni else 1)

    def martingale_values(indices):
        out = []
        for s in range(0, len(indices), cfg.batch_size):
            b = simulate_batch(model, P, cfg, indices[s:s + cfg.batch_size])
            out.append(b.values - np.asarray(b.drift_path))
        return np.concatenate(out)

    pilot_vals = martingale_values(np.arange(n_paths, n_paths + pilot))
    M = martingale_values(np.arange(n_paths))
    rows = []
    for s in range(steps):
        coarse, fine = idx_levels[s], idx_levels[s + 1]
        t_idx = int(np.setdiff1d(fine, coarse)[0])
        j = int(np.searchsorted(coarse, t_idx))
        ia, ib = int(coarse[j - 1]), int(coarse[j])
        rv_p = np.sum(np.diff(pilot_vals[:, fine], axis=1) ** 2, axis=1)
        clip, med = float(np.quantile(rv_p, 0.99)), float(np.median(rv_p))
        rv_f = np.sum(np.diff(M[:, fine], axis=1) ** 2, axis=1)
        vals = orthogonality_stats(M[:, ia], M[:, t_idx], M[:, ib], rv_f, clip=clip, median=med)
        rows += _summarize(s, P.points[t_idx], vals, zc)
    return ReverseMGReport(rows, alpha, zc, n_paths, model.model_id)


# ---------------------------------------------------------------------------
# exact enumeration on finite walks

_ENUM_BUDGET = 2**20
_EXACT_BUDGET = 4096


@dataclass(frozen=True)
class WalkOracle:
    """Random walk with i.i.d. steps on a finite support, enumerated exhaustively.

    ``coarse`` and ``fine`` are index subsets of {0..n} (default {0, n} and
    all indices). Asymmetric step laws are refused unless
    ``allow_asymmetric`` is set; such walks are outside the theorems' scope.
    """

    n: int
    support: tuple = (-1, 1)
    probs: tuple = (Fraction(1, 2), Fraction(1, 2))
    coarse: tuple | None = None
    fine: tuple | None = None
    allow_asymmetric: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("walk needs n >= 1")
        if len(self.support) != len(self.probs):
            raise ValueError("support and probs differ in length")
        probs = tuple(Fraction(p) for p in self.probs)
        if sum(probs) != 1 or any(p < 0 for p in probs):
            raise ValueError("step probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "probs", probs)
        if len(self.support) ** self.n > _ENUM_BUDGET:
            raise ValueError(f"{len(self.support)}^{self.n} outcomes exceed the enumeration budget")
        law = {}
        for x, p in zip(self.support, probs):
            law[x] = law.get(x, 0) + p
        symmetric = all(law.get(-x, 0) == p for x, p in law.items())
        if not symmetric and not self.allow_asymmetric:
            raise ValueError("step law is not symmetric about 0")
        for name in ("coarse", "fine"):
            sub = getattr(self, name)
            if sub is not None:
                sub = tuple(sorted(int(i) for i in sub))
                if sub[0] != 0 or sub[-1] != self.n:
                    raise ValueError(f"{name} must contain 0 and n")
                object.__setattr__(self, name, sub)

    @property
    def symmetric(self) -> bool:
        law = {}
        for x, p in zip(self.support, self.probs):
            law[x] = law.get(x, 0) + p
        return all(law.get(-x, 0) == p for x, p in law.items())

    @property
    def coarse_idx(self) -> tuple:
        return self.coarse or (0, self.n)

    @property
    def fine_idx(self) -> tuple:
        return self.fine or tuple(range(self.n + 1))

    def outcomes(self):
        """(values, probabilities) over all paths: values (M, n+1), probabilities as Fractions."""
        k = len(self.support)
        combos = np.array(list(itertools.product(range(k), repeat=self.n)), dtype=np.int64).reshape(-1, self.n)
        steps = np.asarray(self.support, dtype=float)[combos]
        values = np.concatenate([np.zeros((steps.shape[0], 1)), np.cumsum(steps, axis=1)], axis=1)
        probs = [math.prod((self.probs[i] for i in row), start=Fraction(1)) for row in combos]
        return values, probs


def walk_rv(values: np.ndarray, idx) -> np.ndarray:
    """RV of each enumerated path over the index subset ``idx``."""
    d = np.diff(values[:, list(idx)], axis=1)
    return np.sum(d * d, axis=1)


def walk_oracle_eval(oracle: WalkOracle, functional: Callable[[np.ndarray], np.ndarray],
                     exact: bool | None = None):
    """E[functional(path values)] by full enumeration.

    ``functional`` maps the (M, n+1) value matrix to M numbers. Small walks are
    summed in exact rational arithmetic (returns a Fraction); larger ones as
    floats.
    """
    values, probs = oracle.outcomes()
    f = np.asarray(functional(values), dtype=float)
    if f.shape != (values.shape[0],):
        raise ValueError("functional must return one value per path")
    if exact is None:
        exact = values.shape[0] <= _EXACT_BUDGET
    if exact:
        return sum((p * Fraction(float(v)) for p, v in zip(probs, f)), start=Fraction(0))
    return float(np.dot(np.array([float(p) for p in probs]), f))


def _walk_quantile(values: np.ndarray, probs, q: float) -> float:
    order = np.argsort(values, kind="stable")
    cum = np.cumsum([float(probs[i]) for i in order])
    return float(values[order][np.searchsorted(cum, q - 1e-12)])


def _chain(oracle: WalkOracle) -> list[tuple]:
    coarse, fine = oracle.coarse_idx, oracle.fine_idx
    if not set(coarse) <= set(fine):
        raise ValueError("fine index set must contain the coarse one")
    levels = [tuple(coarse)]
    for t in sorted(set(fine) - set(coarse)):
        levels.append(tuple(sorted(levels[-1] + (t,))))
    return levels


def walk_orthogonality(oracle: WalkOracle) -> list[tuple[int, int, str, Fraction | float]]:
    """Exact E[U g(RV_fine)] for each one-point step from coarse to fine and each g in the battery.

    Returns rows (step, inserted index, g, value). Thresholds of the battery
    are quantiles of RV_fine under the exact law.
    """
    values, probs = oracle.outcomes()
    levels = _chain(oracle)
    rows = []
    for s in range(len(levels) - 1):
        c, f = levels[s], levels[s + 1]
        t = (set(f) - set(c)).pop()
        j = int(np.searchsorted(c, t))
        ia, ib = c[j - 1], c[j]
        rv_f = walk_rv(values, f)
        clip = _walk_quantile(rv_f, probs, 0.99)
        med = _walk_quantile(rv_f, probs, 0.5)
        for g in G_BATTERY:
            def fn(v, g=g, ia=ia, ib=ib, t=t, f=f):
                rv = walk_rv(v, f)
                return orthogonality_stats(v[:, ia], v[:, t], v[:, ib], rv, clip=clip, median=med)[g]
            rows.append((s, t, g, walk_oracle_eval(oracle, fn)))
    return rows


def walk_chain(oracle: WalkOracle, f: Callable[[np.ndarray], np.ndarray]) -> list:
    """Exact E[f(RV)] along the one-point chain from the coarse to the fine index set."""
    return [walk_oracle_eval(oracle, lambda v, lv=lv: f(walk_rv(v, lv))) for lv in _chain(oracle)]


# ---------------------------------------------------------------------------
# counterexamples

@dataclass(frozen=True)
class Check:
    name: str
    statistic: float
    threshold: float
    passed: bool


@dataclass
class CounterexampleReport:
    name: str
    checks: list[Check]
    samples: dict = field(default_factory=dict)
    resampled: int = 0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _exit_times(keys: np.ndarray, dt: float, max_steps: int, block: int = 256):
    """Exit times of [-1, 1] for Brownian paths; NaN when the step budget runs out."""
    m = keys.size
    kz = rng.substream(keys, "bm")
    ku = rng.substream(keys, "bridge")
    sq = math.sqrt(dt)
    x = np.zeros(m)
    tau = np.full(m, np.nan)
    side = np.zeros(m)
    active = np.arange(m)
    for start in range(0, max_steps, block):
        if active.size == 0:
            break
        cnt = min(block, max_steps - start)
        z = rng.normals(kz[active], cnt, offset=start)
        u = rng.uniforms(ku[active], cnt, offset=start)
        xa = x[active]
        done = np.zeros(active.size, dtype=bool)
        for j in range(cnt):
            live = ~done
            x0 = xa
            x1 = x0 + sq * z[:, j]
            up_prob = np.exp(-2.0 * np.maximum(1.0 - x0, 0) * np.maximum(1.0 - x1, 0) / dt)
            dn_prob = np.exp(-2.0 * np.maximum(1.0 + x0, 0) * np.maximum(1.0 + x1, 0) / dt)
            hit_up = (x1 >= 1.0) | (u[:, j] < up_prob)
            hit_dn = (x1 <= -1.0) | ((~hit_up) & (u[:, j] < up_prob + dn_prob))
            hit = live & (hit_up | hit_dn)
            if hit.any():
                sel = active[hit]
                tau[sel] = (start + j + 0.5) * dt
                side[sel] = np.where(hit_up[hit], 1.0, -1.0)
                done |= hit
            xa = np.where(done, xa, x1)
        x[active] = xa
        active = active[~done]
    return tau, side


def counterexample_stopped_bm(n_paths: int = 100_000, *, dt: float = 1e-3, seed: int = 0,
                              max_time: float = 60.0, batch_size: int = 20_000) -> CounterexampleReport:
    """Brownian motion run until it leaves [-1, 1], observed at times 0 and 1 of the new clock.

    X is W time-changed by the exit time tau, so X_1 = +-1, RV over {0, 1} is
    1 on every path and [X,X]_1 = tau. Each Euler step is corrected with the
    Brownian-bridge probability of crossing a barrier inside the step.
    """
    max_steps = int(round(max_time / dt))
    taus = np.empty(n_paths)
    sides = np.empty(n_paths)
    resampled = 0
    for s in range(0, n_paths, batch_size):
        idx = np.arange(s, min(s + batch_size, n_paths))
        keys = rng.derive_seed(seed, "stopped_bm", idx)
        t, sd = _exit_times(keys, dt, max_steps)
        attempt = 1
        while np.isnan(t).any():
            # budget exhausted: redraw those paths from a fresh substream
            bad = np.isnan(t)
            resampled += int(bad.sum())
            t2, s2 = _exit_times(rng.derive_seed(seed, f"stopped_bm/retry{attempt}", idx[bad]), dt, max_steps)
            t[bad], sd[bad] = t2, s2
            attempt += 1
        taus[idx] = t
        sides[idx] = sd
    rv = sides**2
    n = n_paths
    m = float(taus.mean())
    se = float(taus.std(ddof=1) / math.sqrt(n))
    tail = np.maximum(taus - 1.0, 0.0)
    tm, tse = float(tail.mean()), float(tail.std(ddof=1) / math.sqrt(n))
    checks = [
        Check("rv_constant_one", float(np.max(np.abs(rv - 1.0))), 0.0, bool(np.all(rv == 1.0))),
        Check("mean_tau_within_3se_of_1", abs(m - 1.0) / se, 3.0, abs(m - 1.0) <= 3.0 * se),
        Check("stop_loss_tau_minus_1_above_3se", tm / tse if tse > 0 else 0.0, 3.0, tm > 3.0 * tse),
    ]
    return CounterexampleReport("stopped_bm", checks, dict(tau=taus, rv=rv, mean_tau=m, se_tau=se,
                                                           stop_loss=tm, stop_loss_se=tse), resampled)


def counterexample_hazard(n_paths: int = 100_000, *, seed: int = 0, alpha_ks: float = 0.01,
                          strikes: Sequence[float] = (0.0, 0.25, 0.5, 1.0, 2.0),
                          wrong_direction: bool = False) -> CounterexampleReport:
    """Single jump of size +-1 at a uniform time tau on [0, 1].

    [Z,Z]_1 = 1 while <Z,Z>_1 = -log(1 - tau) ~ Exp(1), so the predictable
    variation dominates: e^{-K} >= (1 - K)^+. ``wrong_direction`` asserts the
    reverse relation instead, which must fail.
    """
    keys = rng.derive_seed(seed, "hazard", np.arange(n_paths))
    u = rng.uniforms(keys, 2)
    tau = u[:, 0]
    theta = np.where(u[:, 1] < 0.5, -1.0, 1.0)
    qv = theta**2
    pqv = -np.log1p(-tau)
    ks = stats.kstest(pqv, "expon")
    K = np.asarray(strikes, dtype=float)
    sl_pqv = np.exp(-K)
    sl_qv = np.maximum(1.0 - K, 0.0)
    if wrong_direction:
        hi, lo = sl_qv, sl_pqv
        emp = icx_test(qv, pqv, K, relation="QV >=icx PQV")
    else:
        hi, lo = sl_pqv, sl_qv
        emp = icx_test(pqv, qv, K, relation="PQV >=icx QV")
    pos = K > 0
    checks = [
        Check("ks_pqv_vs_exp1", float(ks.pvalue), alpha_ks, bool(ks.pvalue > alpha_ks)),
        Check("stop_loss_equal_at_K0", float(abs(np.exp(0.0) - 1.0)), 0.0, math.exp(-0.0) == max(1.0 - 0.0, 0.0)),
        Check("stop_loss_dominance_all_K", float(np.min(hi - lo)), 0.0, bool(np.all(hi >= lo))),
        Check("stop_loss_strict_K_positive", float(np.min((hi - lo)[pos])) if pos.any() else 0.0, 0.0,
              bool(np.all((hi - lo)[pos] > 0))),
        Check("empirical_stop_loss_order", float(np.min(emp.z)), -_z(0.05), emp.passed),
    ]
    return CounterexampleReport("hazard", checks, dict(qv=qv, pqv=pqv, ks_stat=float(ks.statistic),
                                                       ks_pvalue=float(ks.pvalue)))


# ---------------------------------------------------------------------------
# nested partitions

def nested_monotonicity_test(model: ModelSpec, nested: NestedSequence, cfg: SimConfig, n_paths: int, *,
                             alpha: float = 0.05, strikes=None, bonferroni: bool = False,
                             threads: int = 1) -> list[OrderVerdict]:
    """RV(P^m) >=icx RV(P^{m+1}) for consecutive levels, then the finest level against QV."""
    P = nested.finest
    ps = simulate_paired(model, P, cfg, n_paths, threads=threads, levels=nested.level_indices())
    out = []
    for m in range(len(nested) - 1):
        out.append(icx_test(ps.levels[m], ps.levels[m + 1], strikes, alpha=alpha, bonferroni=bonferroni,
                            relation=f"RV(P{m}) >=icx RV(P{m + 1})", model_id=model.model_id,
                            partition_id=nested[m + 1].partition_id))
    out.append(icx_test(ps.levels[-1], ps.qv, strikes, alpha=alpha, bonferroni=bonferroni,
                        relation=f"RV(P{len(nested) - 1}) >=icx QV", model_id=model.model_id,
                        partition_id=P.partition_id))
    return out
