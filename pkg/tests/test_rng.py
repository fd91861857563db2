from __future__ import annotations

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from qvorder import rng


@given(st.integers(0, 2**64 - 1), st.integers(0, 1000))
@settings(max_examples=50, deadline=None)
def test_raw_draws_match_sequential_splitmix(key, count):
    seq = rng.SplitMix64(key)
    expected = [seq.next() for _ in range(count)]
    got = rng.raw_draws(np.array([key], dtype=np.uint64), count)[0]
    assert [int(x) for x in got] == expected


def test_offset_draws_are_a_window_of_the_stream():
    keys = rng.derive_seed(3, "x", np.arange(5))
    full = rng.raw_draws(keys, 40)
    np.testing.assert_array_equal(rng.raw_draws(keys, 15, offset=25), full[:, 25:])


def test_derive_seed_is_deterministic():
    a = rng.derive_seed(11, "model", [0, 1, 2])
    b = rng.derive_seed(11, "model", [0, 1, 2])
    np.testing.assert_array_equal(a, b)


def test_derive_seed_injective_over_run_budget():
    keys = rng.derive_seed(2024, "bs", np.arange(2_000_000))
    assert np.unique(keys).size == keys.size


def test_labels_and_seeds_separate_streams():
    a = rng.derive_seed(1, "a", np.arange(1000))
    b = rng.derive_seed(1, "b", np.arange(1000))
    c = rng.derive_seed(2, "a", np.arange(1000))
    assert np.intersect1d(a, b).size == 0
    assert np.intersect1d(a, c).size == 0


def test_label_hash_is_stable():
    # frozen value: changing it would silently change every stored experiment
    assert int(rng.label_hash("gauss")) == int.from_bytes(
        __import__("hashlib").blake2b(b"gauss", digest_size=8).digest(), "little")


def test_ragged_uniforms_match_fixed_width_draws():
    keys = rng.derive_seed(5, "r", np.arange(6))
    counts = np.array([0, 3, 1, 0, 5, 2])
    flat = rng.ragged_uniforms(keys, counts)
    full = rng.uniforms(keys, 5)
    expected = np.concatenate([full[i, :c] for i, c in enumerate(counts)])
    np.testing.assert_array_equal(flat, expected)


def test_uniforms_in_open_unit_interval_and_uniform():
    u = rng.uniforms(rng.derive_seed(0, "u", np.arange(1000)), 200).ravel()
    assert u.min() > 0 and u.max() < 1
    assert stats.kstest(u, "uniform").pvalue > 0.01


def test_normals_standard():
    z = rng.normals(rng.derive_seed(0, "z", np.arange(1000)), 200).ravel()
    assert stats.kstest(z, "norm").pvalue > 0.01
