import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subspacelab.errors import ClassOutOfRange, InvalidDimensions, LengthMismatch
from subspacelab.partition import build_partition, forbidden_mask, project


def test_even_split_no_remainder():
    p = build_partition(6, 3)
    assert p.block_size == 2
    assert p.active_sets == (frozenset({0, 1}), frozenset({2, 3}), frozenset({4, 5}))
    assert p.remainder_set == frozenset()


def test_remainder_forbidden_for_every_class():
    p = build_partition(7, 3)
    assert p.block_size == 2
    assert p.remainder_set == frozenset({6})
    for y in range(3):
        assert forbidden_mask(p, y).bits[6] == 1.0


def test_large_partition_arithmetic():
    p = build_partition(512, 100)
    assert p.block_size == 5
    assert len(p.remainder_set) == 12


@pytest.mark.parametrize("d,c", [(1, 2), (3, 4), (10, 1), (5, 0)])
def test_invalid_dimensions(d, c):
    with pytest.raises(InvalidDimensions):
        build_partition(d, c)


def test_exhaustive_cover_small_dims():
    # every (D, C) with D <= 64: blocks + remainder tile {0..D-1} exactly
    for d in range(2, 65):
        for c in range(2, d + 1):
            p = build_partition(d, c)
            sizes = sum(len(s) for s in p.active_sets)
            assert sizes + len(p.remainder_set) == d
            union = set().union(*p.active_sets) | p.remainder_set
            assert union == set(range(d))


@given(st.integers(2, 40).flatmap(lambda c: st.tuples(st.just(c), st.integers(c, 128))))
@settings(max_examples=60, deadline=None)
def test_blocks_pairwise_disjoint(cd):
    c, d = cd
    p = build_partition(d, c)
    for i in range(c):
        assert len(p.active_sets[i]) == p.block_size
        for j in range(i + 1, c):
            assert not (p.active_sets[i] & p.active_sets[j])


def test_mask_examples():
    p = build_partition(4, 2)
    np.testing.assert_array_equal(forbidden_mask(p, 0).bits, [0, 0, 1, 1])
    np.testing.assert_array_equal(forbidden_mask(p, 1).bits, [1, 1, 0, 0])
    p5 = build_partition(5, 2)
    np.testing.assert_array_equal(forbidden_mask(p5, 1).bits, [1, 1, 0, 0, 1])


def test_mask_popcount_and_idempotence():
    p = build_partition(11, 3)
    for y in range(3):
        m = forbidden_mask(p, y)
        assert int(m.bits.sum()) == p.feature_dim - p.block_size
        again = forbidden_mask(p, y)
        np.testing.assert_array_equal(m.bits, again.bits)


def test_class_out_of_range():
    p = build_partition(6, 3)
    for y in (-1, 3):
        with pytest.raises(ClassOutOfRange):
            forbidden_mask(p, y)


def test_project_examples():
    p = build_partition(4, 2)
    m = forbidden_mask(p, 0)
    np.testing.assert_array_equal(project([1, 2, 3, 4], m), [0, 0, 3, 4])
    np.testing.assert_array_equal(project(np.zeros(4), m), np.zeros(4))


def test_project_identity_mask_returns_input():
    p = build_partition(8, 4)
    h = np.arange(8.0)
    from subspacelab.partition import ClassMask
    all_ones = ClassMask(class_id=0, bits=np.ones(8))
    np.testing.assert_array_equal(project(h, all_ones), h)


def test_project_length_mismatch():
    p = build_partition(4, 2)
    with pytest.raises(LengthMismatch):
        project(np.ones(5), forbidden_mask(p, 0))


@given(st.integers(2, 10).flatmap(lambda c: st.tuples(st.just(c), st.integers(c, 48))),
       st.integers(0, 10 ** 6))
@settings(max_examples=60, deadline=None)
def test_energy_split_exact(cd, seed):
    c, d = cd
    p = build_partition(d, c)
    rng = np.random.default_rng(seed)
    h = rng.normal(size=d)
    for y in range(c):
        off = project(h, forbidden_mask(p, y))
        active_idx = sorted(p.active_sets[y])
        split = float(off @ off) + float(h[active_idx] @ h[active_idx])
        assert split == pytest.approx(float(h @ h), abs=1e-12, rel=1e-12)


def test_forbidden_rows_matches_single_masks():
    p = build_partition(9, 4)
    labels = np.array([0, 3, 1, 1, 2])
    rows = p.forbidden_rows(labels)
    for i, y in enumerate(labels):
        np.testing.assert_array_equal(rows[i], forbidden_mask(p, int(y)).bits)
