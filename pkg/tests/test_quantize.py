"""Codebook training, unit encoding, run collapsing, and unit corruption."""

from itertools import groupby

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vpkl.frontend import MelSpectrogram
from vpkl.quantize import (
    Codebook,
    UnitSequence,
    collapse_runs,
    encode_units,
    train_codebook,
)
from vpkl.synth import corrupt_units


def blob_frames(seed=0, n=300, dim=8, centers=6):
    rng = np.random.default_rng(seed)
    mu = rng.normal(0.0, 10.0, size=(centers, dim))
    return mu[rng.integers(centers, size=n)] + rng.normal(0.0, 0.3, size=(n, dim))


def test_codebook_deterministic_and_distinct():
    frames = blob_frames()
    a = train_codebook(frames, k=6, seed=11)
    b = train_codebook(frames, k=6, seed=11)
    assert a.centroids.tobytes() == b.centroids.tobytes()
    assert np.unique(a.centroids, axis=0).shape[0] == 6
    c = train_codebook(frames, k=6, seed=12)
    assert c.centroids.shape == (6, 8)


def test_codebook_recovers_separated_blobs():
    frames = blob_frames(centers=4)
    cb = train_codebook(frames, k=4, seed=0)
    # every point should sit close to its centroid relative to blob spread
    d2 = ((frames[:, None, :] - cb.centroids[None, :, :]) ** 2).sum(-1)
    assert float(d2.min(axis=1).mean()) < 5.0


def test_codebook_validation():
    frames = blob_frames(n=20)
    with pytest.raises(ValueError):
        train_codebook(frames, k=1, seed=0)
    with pytest.raises(ValueError):
        train_codebook(frames, k=21, seed=0)
    same = np.zeros((30, 4))
    with pytest.raises(ValueError, match="distinct"):
        train_codebook(same, k=3, seed=0)
    with pytest.raises(ValueError):
        train_codebook(frames.reshape(-1), k=2, seed=0)


def test_encode_picks_nearest_centroid():
    frames = blob_frames(seed=3)
    cb = train_codebook(frames, k=5, seed=3)
    mel = MelSpectrogram(frames=frames[:50], valid_frames=50)
    seq = encode_units(mel, cb)
    assert not seq.collapsed
    d2 = ((frames[:50, None, :] - cb.centroids[None, :, :]) ** 2).sum(-1)
    assert np.array_equal(seq.units, d2.argmin(axis=1).astype(np.int32))


def test_encode_breaks_ties_toward_lowest_index():
    cb = Codebook(centroids=np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), seed=0)
    mel = MelSpectrogram(frames=np.array([[1.0, 0.0]]), valid_frames=1)
    assert encode_units(mel, cb).units.tolist() == [0]


def test_encode_ignores_padded_frames():
    frames = blob_frames(seed=4)
    cb = train_codebook(frames, k=4, seed=4)
    full = MelSpectrogram(frames=frames[:30], valid_frames=30)
    half = MelSpectrogram(frames=frames[:30], valid_frames=15)
    assert np.array_equal(encode_units(half, cb).units,
                          encode_units(full, cb).units[:15])


def test_encode_dim_mismatch():
    cb = Codebook(centroids=np.zeros((3, 4)) + np.arange(3)[:, None], seed=0)
    mel = MelSpectrogram(frames=np.zeros((5, 7)), valid_frames=5)
    with pytest.raises(ValueError, match="dim"):
        encode_units(mel, cb)


def test_collapse_examples():
    raw = UnitSequence(units=np.array([4, 4, 4, 7, 7, 4, 1, 1], dtype=np.int32))
    out = collapse_runs(raw)
    assert out.collapsed
    assert out.units.tolist() == [4, 7, 4, 1]


def test_collapse_empty_and_double_collapse():
    out = collapse_runs(UnitSequence(units=np.empty(0, dtype=np.int32)))
    assert out.collapsed and len(out) == 0
    with pytest.raises(ValueError, match="already collapsed"):
        collapse_runs(out)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 5), max_size=40))
def test_collapse_matches_groupby(values):
    raw = UnitSequence(units=np.array(values, dtype=np.int32))
    expect = [k for k, _ in groupby(values)]
    got = collapse_runs(raw).units.tolist()
    assert got == expect
    assert all(a != b for a, b in zip(got, got[1:]))


def test_corrupt_rate_zero_is_identity():
    seq = UnitSequence(units=np.arange(50, dtype=np.int32))
    out = corrupt_units(seq, 0.0, 100, np.random.default_rng(0))
    assert np.array_equal(out.units, seq.units)


def test_corrupt_rate_one_changes_every_unit():
    seq = UnitSequence(units=np.arange(200, dtype=np.int32) % 17)
    out = corrupt_units(seq, 1.0, 17, np.random.default_rng(1))
    assert np.all(out.units != seq.units)
    assert np.all((out.units >= 0) & (out.units < 17))


def test_corrupt_is_seed_deterministic():
    seq = UnitSequence(units=np.arange(100, dtype=np.int32) % 13)
    a = corrupt_units(seq, 0.3, 13, np.random.default_rng(9))
    b = corrupt_units(seq, 0.3, 13, np.random.default_rng(9))
    assert np.array_equal(a.units, b.units)


def test_corrupt_rate_validation():
    seq = UnitSequence(units=np.arange(4, dtype=np.int32))
    with pytest.raises(ValueError):
        corrupt_units(seq, 1.5, 10, np.random.default_rng(0))
    with pytest.raises(ValueError):
        corrupt_units(seq, -0.1, 10, np.random.default_rng(0))


@settings(max_examples=100, deadline=None)
@given(
    seed=st.integers(0, 1000),
    rate=st.sampled_from([0.1, 0.5, 0.9]),
)
def test_corrupt_substitutions_stay_in_alphabet_and_differ(seed, rate):
    seq = UnitSequence(units=(np.arange(80, dtype=np.int32) * 7) % 23)
    out = corrupt_units(seq, rate, 23, np.random.default_rng(seed))
    changed = out.units != seq.units
    assert np.all((out.units >= 0) & (out.units < 23))
    # a substitution never writes back the original symbol
    assert np.all(out.units[changed] != seq.units[changed])
