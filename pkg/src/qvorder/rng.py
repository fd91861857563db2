"""Counter-based random streams.

Every draw is a pure function of ``(base seed, label, path index, substream,
draw counter)``. A path's stream is the SplitMix64 sequence started from a
64-bit key, so draw ``j`` can be computed directly without touching draws
``0..j-1``. That is what makes batches order- and layout-independent.
"""
from __future__ import annotations

import hashlib

import numpy as np
from scipy.special import ndtri

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO_M53 = 2.0**-53


def mix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer, a bijection on uint64."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _MUL1
        z = (z ^ (z >> _S27)) * _MUL2
    return z ^ (z >> _S31)


def label_hash(label: str) -> np.uint64:
    """Stable 64-bit hash of a text label (independent of PYTHONHASHSEED)."""
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return np.uint64(int.from_bytes(digest, "little"))


def derive_seed(base_seed: int, label: str, path_index) -> np.ndarray:
    """Per-path stream key.

    For fixed ``(base_seed, label)`` the map ``path_index -> key`` is a
    composition of bijections on uint64, so distinct indices never collide.
    """
    idx = np.atleast_1d(np.asarray(path_index, dtype=np.uint64))
    root = mix64(np.array([np.uint64(base_seed & 0xFFFFFFFFFFFFFFFF) ^ label_hash(label)]))
    with np.errstate(over="ignore"):
        return mix64(root + idx * GOLDEN)


def substream(keys: np.ndarray, name: str) -> np.ndarray:
    """Key of a named substream (e.g. ``"gauss"``, ``"jump_size"``) of each path."""
    return mix64(np.asarray(keys, dtype=np.uint64) ^ label_hash(name))


def _to_unit(bits: np.ndarray) -> np.ndarray:
    # 53 random bits mapped to the open interval (0, 1)
    return ((bits >> _S11).astype(np.float64) + 0.5) * _TWO_M53


def raw_draws(keys: np.ndarray, count: int, offset: int = 0) -> np.ndarray:
    """Raw uint64 draws ``offset .. offset+count-1`` of each keyed stream, shape (m, count)."""
    keys = np.asarray(keys, dtype=np.uint64).reshape(-1, 1)
    ctr = np.arange(offset + 1, offset + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(keys + GOLDEN * ctr)


def uniforms(keys: np.ndarray, count: int, offset: int = 0) -> np.ndarray:
    """Uniform(0,1) draws, shape (m, count)."""
    return _to_unit(raw_draws(keys, count, offset))


def normals(keys: np.ndarray, count: int, offset: int = 0) -> np.ndarray:
    """Standard normal draws by inversion, shape (m, count)."""
    return ndtri(uniforms(keys, count, offset))


def ragged_uniforms(keys: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Concatenated draws ``0..counts[i]-1`` of stream ``i``, flattened in path order."""
    keys = np.asarray(keys, dtype=np.uint64)
    counts = np.asarray(counts, dtype=np.int64)
    total = int(counts.sum())
    if total == 0:
        return np.empty(0)
    starts = np.cumsum(counts) - counts
    ctr = np.arange(total, dtype=np.int64) - np.repeat(starts, counts) + 1
    with np.errstate(over="ignore"):
        bits = mix64(np.repeat(keys, counts) + GOLDEN * ctr.astype(np.uint64))
    return _to_unit(bits)


class SplitMix64:
    """Plain sequential SplitMix64, kept as the reference for the vectorized streams."""

    def __init__(self, state: int):
        self.state = int(state) & 0xFFFFFFFFFFFFFFFF

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
        return z ^ (z >> 31)
