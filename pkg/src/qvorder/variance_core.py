"""Realized variance, h-centerings, reflection and the one-point refinement identity."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "realized_variance",
    "rv_from_increments",
    "rv_of_drift",
    "HCentering",
    "h_centered",
    "refinement_delta",
    "RefinementDelta",
    "reflect_path",
    "reflect_increments",
]


def realized_variance(values) -> np.ndarray | float:
    """Sum of squared increments along the last axis.

    Accepts one path (1-D) or a stack of paths (2-D, one path per row).
    """
    x = np.asarray(values, dtype=float)
    if x.shape[-1] < 2:
        raise ValueError("realized variance needs at least 2 points")
    d = np.diff(x, axis=-1)
    out = np.sum(d * d, axis=-1)
    return float(out) if out.ndim == 0 else out


def rv_from_increments(increments) -> np.ndarray | float:
    d = np.asarray(increments, dtype=float)
    out = np.sum(d * d, axis=-1)
    return float(out) if out.ndim == 0 else out


def rv_of_drift(drift_path) -> np.ndarray | float:
    """RV(B, P) for the drift path evaluated at the partition points."""
    return realized_variance(drift_path)


@dataclass(frozen=True)
class HCentering:
    """Centering function h with Lipschitz constant at most 1.

    ``kind`` is ``"none"`` (h = 0), ``"mean"`` (h(x) = x) or
    ``"custom_lipschitz"``, a piecewise-linear interpolant of ``table``.
    """

    kind: str = "none"
    table: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.kind not in ("none", "mean", "custom_lipschitz"):
            raise ValueError(f"unknown centering kind {self.kind!r}")
        if self.kind == "custom_lipschitz":
            tab = tuple(sorted((float(a), float(b)) for a, b in self.table))
            if len(tab) < 2:
                raise ValueError("custom centering needs at least two table points")
            x = np.array([a for a, _ in tab])
            y = np.array([b for _, b in tab])
            if np.any(np.diff(x) <= 0):
                raise ValueError("custom centering table has repeated x values")
            # piecewise-linear: the largest slope is attained between neighbours
            slope = np.abs(np.diff(y) / np.diff(x))
            if np.any(slope > 1.0 + 1e-12):
                raise ValueError(f"custom centering is not 1-Lipschitz (max slope {slope.max():g})")
            object.__setattr__(self, "table", tab)

    @classmethod
    def linear(cls, k: float, lo: float, hi: float) -> "HCentering":
        """h(x) = k x on [lo, hi]; the relative-strike centering."""
        return cls("custom_lipschitz", ((lo, k * lo), (hi, k * hi)))

    def __call__(self, x: float) -> float:
        if self.kind == "none":
            return 0.0
        if self.kind == "mean":
            return float(x)
        xs = [a for a, _ in self.table]
        if not xs[0] <= x <= xs[-1]:
            raise ValueError(f"centering table covers [{xs[0]}, {xs[-1]}], not {x}")
        return float(np.interp(x, xs, [b for _, b in self.table]))


def h_centered(value, h: HCentering, reference_mean: float):
    """``value - h(reference_mean)``, where ``reference_mean`` is E of the same functional."""
    if h.kind == "none":
        return value
    return value - h(reference_mean)


@dataclass(frozen=True)
class RefinementDelta:
    delta: float   # RV(coarse) - RV(fine) = 2 (X_b - X_t*)(X_t* - X_a)
    raw: float     # (X_b - X_t*)(X_t* - X_a)


def refinement_delta(values, coarse_points, t_star: float, fine_points=None) -> RefinementDelta:
    """Drop in RV when ``t_star`` is inserted into the coarse partition.

    ``values`` are the path values at ``fine_points`` (default: the coarse
    points plus ``t_star``).
    """
    cp = np.asarray(coarse_points, dtype=float)
    if np.any(np.isclose(cp, t_star, rtol=0, atol=1e-15)):
        raise ValueError(f"t* = {t_star} is already a division point")
    if not cp[0] < t_star < cp[-1]:
        raise ValueError(f"t* = {t_star} is outside the partition")
    fp = np.sort(np.append(cp, t_star)) if fine_points is None else np.asarray(fine_points, dtype=float)
    x = np.asarray(values, dtype=float)
    if x.shape[-1] != fp.size:
        raise ValueError("values do not match the fine partition")
    j = int(np.searchsorted(cp, t_star))
    a, b = cp[j - 1], cp[j]
    ia, it, ib = (int(np.searchsorted(fp, v)) for v in (a, t_star, b))
    raw = (x[ib] - x[it]) * (x[it] - x[ia])
    return RefinementDelta(delta=2.0 * raw, raw=raw)


def reflect_path(values, points, t_star: float, jump_times=None, jump_sizes=None):
    """Reflect the path about its value at ``t_star``.

    Values at times <= t* are kept; later values become 2 X_{t*} - X_s. Ledger
    jumps after t* change sign. Returns the new values, plus the new jump sizes
    when a ledger is given.
    """
    pts = np.asarray(points, dtype=float)
    x = np.array(values, dtype=float)
    hit = np.flatnonzero(np.isclose(pts, t_star, rtol=0, atol=1e-12))
    if hit.size != 1:
        raise ValueError(f"t* = {t_star} is not a partition point")
    k = int(hit[0])
    x[..., k + 1:] = 2.0 * x[..., k:k + 1] - x[..., k + 1:]
    if jump_sizes is None:
        return x
    sizes = np.array(jump_sizes, dtype=float)
    sizes[np.asarray(jump_times) > t_star] *= -1.0
    return x, sizes


def reflect_increments(increments, k: int) -> np.ndarray:
    """Reflection at the k-th division point in increment form.

    Increments after t_k change sign. Squares are unchanged bit for bit, so
    RV computed from increments is exactly invariant.
    """
    d = np.array(increments, dtype=float)
    n = d.shape[-1]
    if not 0 <= k <= n:
        raise ValueError(f"reflection index {k} outside 0..{n}")
    d[..., k:] *= -1.0
    return d
