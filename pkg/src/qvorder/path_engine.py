"""Path simulation on partitions with an exact jump ledger.

Every simulated path carries enough bookkeeping (Brownian variance actually
used, the list of simulated jumps, the clock value) to evaluate realized
variance, quadratic variation and predictable quadratic variation exactly for
the process that was simulated. The simulated process is itself a model with
symmetric jumps and (conditionally) independent increments, so the order
relations apply to it without approximation.

Paths are generated in batches, but each path depends only on
``(cfg.seed, label, path_index)``: batch size, batch order and thread count do
not change a single bit.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import poisson

from . import rng
from .levy_models import ClockModel, LevyTriplet, ModelError, ModelSpec, validate_model
from .truncation import truncate

__all__ = [
    "Partition",
    "NestedSequence",
    "make_partition",
    "SimConfig",
    "PathSample",
    "PathBatch",
    "PairedSamples",
    "simulate_batch",
    "simulate_levy_path",
    "simulate_time_changed_path",
    "simulate_sato_path",
    "simulate_clock",
    "simulate_paired",
    "qv",
    "pqv",
    "write_paths_csv",
    "write_ledger_csv",
]


# ---------------------------------------------------------------------------
# partitions

@dataclass(frozen=True, eq=False)
class Partition:
    """Division points 0 = t_0 < t_1 < ... < t_n = T."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("a partition needs at least two points")
        if pts[0] != 0.0:
            raise ValueError(f"a partition must start at 0, got {pts[0]}")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("partition points must be strictly increasing")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def T(self) -> float:
        return float(self.points[-1])

    @property
    def n(self) -> int:
        return self.points.size - 1

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.points)

    @property
    def mesh(self) -> float:
        return float(self.dt.max())

    @property
    def partition_id(self) -> str:
        dt = self.dt
        if np.allclose(dt, dt[0], rtol=1e-12, atol=0):
            return f"uniform-n{self.n}-T{self.T:g}"
        return f"explicit-n{self.n}-T{self.T:g}"

    def index_of(self, pts) -> np.ndarray:
        """Indices of ``pts`` among the division points; raises if one is missing."""
        pts = np.atleast_1d(np.asarray(pts, dtype=float))
        idx = np.searchsorted(self.points, pts)
        idx = np.clip(idx, 0, self.n)
        ok = np.isclose(self.points[idx], pts, rtol=0, atol=1e-12 * max(self.T, 1.0))
        if not ok.all():
            raise ValueError(f"points {pts[~ok]} are not division points")
        return idx

    def refines(self, coarse: "Partition") -> bool:
        """True if every division point of ``coarse`` is a division point of self."""
        if not math.isclose(coarse.T, self.T):
            return False
        try:
            self.index_of(coarse.points)
        except ValueError:
            return False
        return True

    def insert(self, t: float) -> "Partition":
        if np.any(np.isclose(self.points, t, rtol=0, atol=1e-15)):
            raise ValueError(f"{t} is already a division point")
        if not 0 < t < self.T:
            raise ValueError(f"{t} lies outside (0, {self.T})")
        return Partition(np.sort(np.append(self.points, t)))

    def dyadic_refine(self) -> "Partition":
        mids = 0.5 * (self.points[:-1] + self.points[1:])
        pts = np.empty(2 * self.n + 1)
        pts[0::2] = self.points
        pts[1::2] = mids
        return Partition(pts)

    def __eq__(self, other):
        return isinstance(other, Partition) and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())

    def __repr__(self):
        return f"Partition({self.partition_id})"


def make_partition(T: float = 1.0, n: int = 1, scheme: str = "uniform", *,
                   base: Partition | None = None, points: Sequence[float] | None = None) -> Partition:
    """Build a partition of [0, T].

    ``scheme`` is ``"uniform"`` (n equal steps), ``"dyadic_refine"`` (midpoints
    inserted into ``base``) or ``"explicit"`` (the given ``points``).
    """
    if scheme == "uniform":
        if T <= 0:
            raise ValueError(f"T must be > 0, got {T}")
        if int(n) != n or n < 1:
            raise ValueError(f"n must be a positive integer, got {n}")
        pts = np.linspace(0.0, T, int(n) + 1)
        pts[-1] = T
        return Partition(pts)
    if scheme == "dyadic_refine":
        if base is None:
            raise ValueError("dyadic_refine needs a base partition")
        return base.dyadic_refine()
    if scheme == "explicit":
        if points is None:
            raise ValueError("explicit scheme needs points")
        return Partition(np.asarray(points, dtype=float))
    raise ValueError(f"unknown partition scheme {scheme!r}")


@dataclass(frozen=True)
class NestedSequence:
    """Partitions in which each one refines the previous."""

    partitions: tuple[Partition, ...]

    def __post_init__(self):
        parts = tuple(self.partitions)
        if not parts:
            raise ValueError("empty nested sequence")
        for a, b in zip(parts, parts[1:]):
            if not b.refines(a):
                raise ValueError(f"{b} does not refine {a}")
        object.__setattr__(self, "partitions", parts)

    def __len__(self):
        return len(self.partitions)

    def __getitem__(self, i):
        return self.partitions[i]

    @property
    def finest(self) -> Partition:
        return self.partitions[-1]

    def level_indices(self) -> list[np.ndarray]:
        """Index of each level's points inside the finest partition."""
        return [self.finest.index_of(p.points) for p in self.partitions]

    def single_point_steps(self) -> bool:
        return all(b.n == a.n + 1 for a, b in zip(self.partitions, self.partitions[1:]))

    @classmethod
    def dyadic(cls, T: float, levels: int, n0: int = 1) -> "NestedSequence":
        parts = [make_partition(T, n0)]
        for _ in range(levels - 1):
            parts.append(parts[-1].dyadic_refine())
        return cls(tuple(parts))

    @classmethod
    def one_at_a_time(cls, coarse: Partition, fine: Partition) -> "NestedSequence":
        """Chain from ``coarse`` to ``fine`` inserting fine's extra points left to right."""
        if not fine.refines(coarse):
            raise ValueError("fine partition does not refine coarse")
        extra = np.setdiff1d(fine.points, coarse.points)
        parts = [coarse]
        for t in extra:
            parts.append(parts[-1].insert(float(t)))
        return cls(tuple(parts))


# ---------------------------------------------------------------------------
# configuration and path records

@dataclass(frozen=True)
class SimConfig:
    """Simulation controls.

    ``eps`` is the small-jump truncation level, ``clock_steps`` the number of
    internal steps on [0, T] for clocks and Sato slices (h_clock = T /
    clock_steps), ``batch_size`` the number of paths per vectorized batch.
    """

    eps: float = 1e-3
    clock_steps: int = 2048
    batch_size: int = 8192
    seed: int = 0
    label: str | None = None

    def validate(self, P: Partition | None = None) -> "SimConfig":
        if not self.eps > 0:
            raise ValueError(f"sim.eps must be > 0, got {self.eps}")
        if self.clock_steps < 1:
            raise ValueError(f"sim.clock_steps must be >= 1, got {self.clock_steps}")
        if self.batch_size < 1:
            raise ValueError(f"sim.batch_size must be >= 1, got {self.batch_size}")
        if P is not None and P.T / self.clock_steps > P.mesh * (1 + 1e-12):
            raise ValueError(f"h_clock = {P.T / self.clock_steps:g} exceeds the partition mesh {P.mesh:g}")
        return self


@dataclass
class PathSample:
    """One simulated path restricted to a partition, with its jump ledger."""

    points: np.ndarray
    increments: np.ndarray
    drift_path: np.ndarray
    jump_times: np.ndarray
    jump_sizes: np.ndarray
    clock_T: float
    qv_continuous: float
    seed_tag: tuple[int, int]
    model_id: str
    model_kind: str
    eps: float

    @property
    def values(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.increments)])

    @property
    def T(self) -> float:
        return float(self.points[-1])


@dataclass
class PathBatch:
    """Many paths on one partition; arrays are indexed by row = position in ``path_index``."""

    path_index: np.ndarray
    points: np.ndarray
    increments: np.ndarray          # (m, n)
    drift_path: np.ndarray          # (m, n+1), may be a broadcast view
    clock_T: np.ndarray             # (m,)
    qv_continuous: np.ndarray       # (m,)
    jump_sq: np.ndarray             # (m,) sum of squared ledger jumps
    pqv: np.ndarray                 # (m,)
    jump_row: np.ndarray            # (J,) row owning each ledger entry
    jump_time: np.ndarray           # (J,)
    jump_size: np.ndarray           # (J,)
    seed: int
    model_id: str
    model_kind: str
    eps: float

    def __len__(self):
        return self.path_index.size

    @property
    def values(self) -> np.ndarray:
        out = np.zeros((len(self), self.increments.shape[1] + 1))
        np.cumsum(self.increments, axis=1, out=out[:, 1:])
        return out

    @property
    def rv(self) -> np.ndarray:
        return np.sum(self.increments * self.increments, axis=1)

    @property
    def qv(self) -> np.ndarray:
        return self.qv_continuous + self.jump_sq

    def sample(self, row: int) -> PathSample:
        sel = self.jump_row == row
        return PathSample(
            points=self.points,
            increments=self.increments[row].copy(),
            drift_path=np.array(self.drift_path[row]),
            jump_times=self.jump_time[sel].copy(),
            jump_sizes=self.jump_size[sel].copy(),
            clock_T=float(self.clock_T[row]),
            qv_continuous=float(self.qv_continuous[row]),
            seed_tag=(self.seed, int(self.path_index[row])),
            model_id=self.model_id,
            model_kind=self.model_kind,
            eps=self.eps,
        )


# ---------------------------------------------------------------------------
# building blocks

def _poisson_counts(keys: np.ndarray, mean: np.ndarray) -> np.ndarray:
    u = rng.uniforms(keys, 1)[:, 0]
    mean = np.broadcast_to(np.asarray(mean, dtype=float), u.shape)
    out = np.zeros(u.shape, dtype=np.int64)
    pos = mean > 0
    if pos.any():
        out[pos] = poisson.ppf(u[pos], mean[pos]).astype(np.int64)
    return out


def _row_search(grid: np.ndarray, rows: np.ndarray, vals: np.ndarray) -> np.ndarray:
    """Smallest k in [0, L-2] with vals <= grid[row, k+1], for rows of a nondecreasing 2-D grid."""
    L = grid.shape[1]
    lo = np.zeros(vals.shape, dtype=np.int64)
    hi = np.full(vals.shape, L - 2, dtype=np.int64)
    for _ in range(max(1, int(math.ceil(math.log2(max(L - 1, 2)))) + 1)):
        mid = (lo + hi) // 2
        right = grid[rows, mid + 1] < vals
        lo = np.where(right & (lo < hi), mid + 1, lo)
        hi = np.where(~right & (lo < hi), mid, hi)
    return lo


def _ledger(keys, counts, horizon_rows, trunc):
    """Jump rows, clock-unit times in [0, horizon] and sizes for a batch."""
    m = counts.size
    rows = np.repeat(np.arange(m), counts)
    t = rng.ragged_uniforms(rng.substream(keys, "jump_time"), counts) * horizon_rows[rows]
    sizes = trunc.sizes(rng.ragged_uniforms(rng.substream(keys, "jump_size"), counts))
    return rows, t, sizes


def _add_jumps(inc: np.ndarray, rows: np.ndarray, interval: np.ndarray, sizes: np.ndarray) -> None:
    m, n = inc.shape
    if sizes.size:
        inc += np.bincount(rows * n + interval, weights=sizes, minlength=m * n).reshape(m, n)


def _jump_sq(rows, sizes, m):
    if sizes.size == 0:
        return np.zeros(m)
    return np.bincount(rows, weights=sizes * sizes, minlength=m)


def _keys(cfg: SimConfig, label: str, indices) -> np.ndarray:
    return rng.derive_seed(cfg.seed, label, indices)


# ---------------------------------------------------------------------------
# clocks

def _cir_clock_grid(clock: ClockModel, T: float, steps: int, keys: np.ndarray) -> np.ndarray:
    """Integrated CIR clock on the uniform internal grid, shape (m, steps+1).

    Full-truncation Euler for the variance, trapezoidal rule for its integral.
    """
    m = keys.size
    h = T / steps
    sq_h = math.sqrt(h)
    ck = rng.substream(keys, "clock")
    tau = np.zeros((m, steps + 1))
    v = np.full(m, float(clock.v0))
    block = 256
    for start in range(0, steps, block):
        cnt = min(block, steps - start)
        z = rng.normals(ck, cnt, offset=start) if clock.xi > 0 else None
        for j in range(cnt):
            i = start + j
            vp = np.maximum(v, 0.0)
            v_next = v + clock.kappa * (clock.theta - vp) * h
            if z is not None:
                v_next = v_next + clock.xi * np.sqrt(vp) * sq_h * z[:, j]
            tau[:, i + 1] = tau[:, i] + 0.5 * h * (vp + np.maximum(v_next, 0.0))
            v = v_next
    return tau


def _interp_grid(tau_grid: np.ndarray, T: float, pts: np.ndarray) -> np.ndarray:
    """Piecewise-linear clock values at calendar points, shape (m, len(pts))."""
    steps = tau_grid.shape[1] - 1
    pos = pts / T * steps
    i = np.clip(np.floor(pos).astype(np.int64), 0, steps - 1)
    w = pos - i
    exact = np.isclose(w, 0.0, atol=1e-9) | np.isclose(w, 1.0, atol=1e-9)
    i = np.where(np.isclose(w, 1.0, atol=1e-9), i + 1, i)
    w = np.where(exact, 0.0, w)
    i_hi = np.minimum(i + 1, steps)
    return tau_grid[:, i] + w * (tau_grid[:, i_hi] - tau_grid[:, i])


def simulate_clock(clock: ClockModel, T: float, cfg: SimConfig, path_index: int,
                   label: str = "clock"):
    """Clock path of one path index on the internal grid.

    Returns ``(grid_times, tau_path, tau_T)``; the identity clock returns tau_t = t.
    """
    clock.validate()
    grid = np.linspace(0.0, T, cfg.clock_steps + 1)
    if clock.kind == "identity":
        return grid, grid.copy(), float(T)
    keys = _keys(cfg, cfg.label or label, [path_index])
    tau = _cir_clock_grid(clock, T, cfg.clock_steps, keys)[0]
    return grid, tau, float(tau[-1])


# ---------------------------------------------------------------------------
# batch simulators

def _levy_like_batch(tr: LevyTriplet, P: Partition, cfg: SimConfig, keys: np.ndarray,
                     clock: ClockModel) -> dict:
    trunc = truncate(tr.jumps, cfg.eps)
    sig2 = tr.sigma2 + trunc.small_var
    m, n, T = keys.size, P.n, P.T
    pts = P.points

    if clock.kind == "identity":
        tau_P = np.broadcast_to(pts, (m, n + 1))
        tau_T = np.full(m, T)
        tau_grid = None
    else:
        tau_grid = _cir_clock_grid(clock, T, cfg.clock_steps, keys)
        tau_P = _interp_grid(tau_grid, T, pts)
        tau_P[:, 0] = 0.0
        tau_T = tau_P[:, -1].copy()

    dtau = np.diff(tau_P, axis=1)
    z = rng.normals(rng.substream(keys, "gauss"), n)
    inc = tr.b * dtau + np.sqrt(sig2 * dtau) * z

    counts = _poisson_counts(rng.substream(keys, "jump_count"), trunc.rate * tau_T)
    rows, tj, sizes = _ledger(keys, counts, tau_T, trunc)
    if tau_grid is None:
        interval = np.searchsorted(pts[1:-1], tj, side="left")
        times = tj
    else:
        interval = _row_search(tau_P, rows, tj)
        k = _row_search(tau_grid, rows, tj)
        lo, hi = tau_grid[rows, k], tau_grid[rows, k + 1]
        span = hi - lo
        frac = np.where(span > 0, (tj - lo) / np.where(span > 0, span, 1.0), 1.0)
        times = (k + np.clip(frac, 0.0, 1.0)) * (T / cfg.clock_steps)
    _add_jumps(inc, rows, interval, sizes)

    return dict(
        increments=inc,
        drift_path=tr.b * tau_P,
        clock_T=tau_T,
        qv_continuous=sig2 * tau_T,
        jump_sq=_jump_sq(rows, sizes, m),
        pqv=tau_T * (tr.sigma2 + trunc.pqv_rate_jumps),
        jump_row=rows, jump_time=times, jump_size=sizes,
    )


def _sato_slices(P: Partition, steps: int) -> np.ndarray:
    grid = np.union1d(P.points, np.linspace(0.0, P.T, steps + 1))
    keep = np.concatenate([[True], np.diff(grid) > 1e-12 * P.T])
    grid = grid[keep]
    grid[-1] = P.T
    return grid


def sato_drift(model: ModelSpec, P: Partition, cfg: SimConfig) -> np.ndarray:
    """Drift path B at the partition points of a Sato model."""
    tr, g = model.triplet, model.gamma
    pts = P.points
    if model.drift_mode == "explicit":
        return tr.b * pts**g
    # exp-martingale: minus the log-Laplace transform at 1 of the simulated martingale part
    grid = _sato_slices(P, cfg.clock_steps)
    a, c = grid[:-1], grid[1:]
    s = 0.5 * (a + c)
    w = (c ** (2 * g) - a ** (2 * g)) / s ** (2 * g)
    scales = s**g
    if scales.max() >= tr.jumps.exp_moment_bound():
        raise ModelError("model.jumps: exponential moment infinite at the Sato scale t^gamma")
    kap = np.array([tr.jumps.exp_cumulant(float(x)) for x in scales])
    cum = np.concatenate([[0.0], np.cumsum(w * kap)])
    idx = np.searchsorted(grid, pts)
    return -(0.5 * tr.sigma2 * pts ** (2 * g) + cum[idx])


def _sato_batch(model: ModelSpec, P: Partition, cfg: SimConfig, keys: np.ndarray) -> dict:
    tr, g = model.triplet, model.gamma
    trunc = truncate(tr.jumps, cfg.eps)
    sig2 = tr.sigma2 + trunc.small_var
    m, n, T = keys.size, P.n, P.T
    pts = P.points

    grid = _sato_slices(P, cfg.clock_steps)
    a, c = grid[:-1], grid[1:]
    s = 0.5 * (a + c)
    w = (c ** (2 * g) - a ** (2 * g)) / s ** (2 * g)
    cw = np.cumsum(w)
    W = float(cw[-1])

    var_k = sig2 * np.diff(pts ** (2 * g))
    z = rng.normals(rng.substream(keys, "gauss"), n)
    B = sato_drift(model, P, cfg)
    inc = np.diff(B) + np.sqrt(var_k) * z

    counts = _poisson_counts(rng.substream(keys, "jump_count"), np.full(m, trunc.rate * W))
    rows = np.repeat(np.arange(m), counts)
    us = rng.ragged_uniforms(rng.substream(keys, "jump_slice"), counts)
    j = np.minimum(np.searchsorted(cw, us * W, side="left"), w.size - 1)
    ut = rng.ragged_uniforms(rng.substream(keys, "jump_time"), counts)
    times = a[j] + ut * (c[j] - a[j])
    sizes = s[j] ** g * trunc.sizes(rng.ragged_uniforms(rng.substream(keys, "jump_size"), counts))
    interval = np.searchsorted(pts[1:-1], times, side="left")
    _add_jumps(inc, rows, interval, sizes)

    Tg = T ** (2 * g)
    return dict(
        increments=inc,
        drift_path=np.broadcast_to(B, (m, n + 1)),
        clock_T=np.full(m, T),
        qv_continuous=np.full(m, sig2 * Tg),
        jump_sq=_jump_sq(rows, sizes, m),
        pqv=np.full(m, Tg * (tr.sigma2 + trunc.pqv_rate_jumps)),
        jump_row=rows, jump_time=times, jump_size=sizes,
    )


def simulate_batch(model: ModelSpec, P: Partition, cfg: SimConfig, indices) -> PathBatch:
    """Simulate the paths ``indices`` of ``model`` on ``P``."""
    validate_model(model)
    cfg.validate(P)
    indices = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    label = cfg.label or model.model_id
    keys = _keys(cfg, label, indices)
    if model.kind == "sato":
        parts = _sato_batch(model, P, cfg, keys)
    else:
        clock = model.clock if model.kind == "time_changed" else ClockModel()
        parts = _levy_like_batch(model.resolved_triplet(), P, cfg, keys, clock)
    return PathBatch(path_index=indices, points=P.points, seed=cfg.seed, model_id=model.model_id,
                     model_kind=model.kind, eps=cfg.eps, **parts)


def simulate_levy_path(triplet: LevyTriplet, P: Partition, cfg: SimConfig, path_index: int) -> PathSample:
    model = ModelSpec("levy", triplet, model_id=cfg.label or "levy", allow_zero=True)
    return simulate_batch(model, P, cfg, [path_index]).sample(0)


def simulate_time_changed_path(triplet: LevyTriplet, clock: ClockModel, P: Partition, cfg: SimConfig,
                               path_index: int) -> PathSample:
    model = ModelSpec("time_changed", triplet, clock=clock, model_id=cfg.label or "time_changed",
                      allow_zero=True)
    return simulate_batch(model, P, cfg, [path_index]).sample(0)


def simulate_sato_path(gamma: float, base: LevyTriplet, P: Partition, cfg: SimConfig,
                       path_index: int) -> PathSample:
    model = ModelSpec("sato", base, gamma=gamma, model_id=cfg.label or "sato", allow_zero=True)
    return simulate_batch(model, P, cfg, [path_index]).sample(0)


# ---------------------------------------------------------------------------
# quadratic variations of a single path

def qv(path: PathSample) -> float:
    """[X,X]_T of the simulated path: Brownian part plus the sum of squared ledger jumps."""
    return float(path.qv_continuous + np.sum(path.jump_sizes**2))


def pqv(path: PathSample, model: ModelSpec) -> float:
    """<X,X>_T of the simulated path under ``model``."""
    if path.model_id != model.model_id or path.model_kind != model.kind:
        raise ValueError(f"path of {path.model_kind}:{path.model_id} does not belong to "
                         f"{model.kind}:{model.model_id}")
    tr = model.triplet
    rate = tr.sigma2 + truncate(tr.jumps, path.eps).pqv_rate_jumps
    if model.kind == "sato":
        return float(path.T ** (2 * model.gamma) * rate)
    return float(path.clock_T * rate)


# ---------------------------------------------------------------------------
# paired samples

@dataclass
class PairedSamples:
    """Per-path (RV, [X,X]_T, <X,X>_T) triples, all from the same simulated path."""

    rv: np.ndarray
    qv: np.ndarray
    pqv: np.ndarray
    path_index: np.ndarray
    x_T: np.ndarray
    rv_drift: np.ndarray
    model_id: str
    partition_id: str
    seed: int
    T: float
    levels: np.ndarray | None = None   # (L, N): RV over each nested level
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return self.rv.size

    def basis(self, name: str) -> np.ndarray:
        name = name.lower()
        if name == "rv":
            return self.rv
        if name == "qv":
            return self.qv
        if name == "pqv":
            return self.pqv
        if name.startswith("rv") and name[2:].isdigit() and self.levels is not None:
            return self.levels[int(name[2:])]
        raise KeyError(f"unknown basis {name!r}")


def simulate_paired(model: ModelSpec, P: Partition, cfg: SimConfig, n_paths: int, *,
                    threads: int = 1, levels: Sequence[np.ndarray] | None = None,
                    first_index: int = 0) -> PairedSamples:
    """Simulate ``n_paths`` paths and keep the paired variance functionals.

    ``levels`` are index arrays into ``P.points`` selecting coarser nested
    partitions whose realized variance is recorded as well.
    """
    validate_model(model)
    cfg.validate(P)
    if n_paths < 1:
        raise ValueError(f"paths must be >= 1, got {n_paths}")
    N = int(n_paths)
    out = {k: np.empty(N) for k in ("rv", "qv", "pqv", "x_T", "rv_drift")}
    lv = np.empty((len(levels), N)) if levels else None
    starts = list(range(0, N, cfg.batch_size))

    def work(start: int) -> None:
        stop = min(start + cfg.batch_size, N)
        b = simulate_batch(model, P, cfg, np.arange(first_index + start, first_index + stop))
        sl = slice(start, stop)
        out["rv"][sl] = b.rv
        out["qv"][sl] = b.qv
        out["pqv"][sl] = b.pqv
        vals = b.values
        out["x_T"][sl] = vals[:, -1]
        db = np.diff(np.asarray(b.drift_path), axis=1)
        out["rv_drift"][sl] = np.sum(db * db, axis=1)
        if lv is not None:
            for li, idx in enumerate(levels):
                d = np.diff(vals[:, idx], axis=1)
                lv[li, sl] = np.sum(d * d, axis=1)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, starts))
    else:
        for s in starts:
            work(s)

    return PairedSamples(rv=out["rv"], qv=out["qv"], pqv=out["pqv"],
                         path_index=np.arange(first_index, first_index + N), x_T=out["x_T"],
                         rv_drift=out["rv_drift"], model_id=model.model_id,
                         partition_id=P.partition_id, seed=cfg.seed, T=P.T, levels=lv)


# ---------------------------------------------------------------------------
# optional path dumps

def write_paths_csv(batch: PathBatch, fh) -> None:
    """Rows (path_index, t_k, X_{t_k})."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["path_index", "t", "x"])
    vals = batch.values
    for r, pi in enumerate(batch.path_index):
        for t, x in zip(batch.points, vals[r]):
            w.writerow([int(pi), repr(float(t)), repr(float(x))])


def write_ledger_csv(batch: PathBatch, fh) -> None:
    """Rows (path_index, time, size), jumps of each path in time order."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["path_index", "time", "size"])
    order = np.lexsort((batch.jump_time, batch.jump_row))
    for k in order:
        w.writerow([int(batch.path_index[batch.jump_row[k]]), repr(float(batch.jump_time[k])),
                    repr(float(batch.jump_size[k]))])
