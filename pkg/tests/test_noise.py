import numpy as np

from bibranch.noise import NoiseStream


def test_same_tag_reproduces_bitwise():
    a = NoiseStream(42).substream("path", 7).standard_normal(100)
    b = NoiseStream(42).substream("path", 7).standard_normal(100)
    assert np.array_equal(a, b)


def test_distinct_tags_and_indices_decorrelate():
    base = NoiseStream(42)
    a = base.substream("path", 7).standard_normal(20_000)
    b = base.substream("path", 8).standard_normal(20_000)
    c = base.substream("ensemble", 7).standard_normal(20_000)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.03
    assert abs(np.corrcoef(a, c)[0, 1]) < 0.03


def test_distinct_seeds_differ():
    a = NoiseStream(1).substream("x").standard_normal(10)
    b = NoiseStream(2).substream("x").standard_normal(10)
    assert not np.array_equal(a, b)
