import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose

from groupopt.blocks import (
    ParamBlock,
    group_l2_norms,
    make_rng,
    weighted_average_accumulate,
)


def naive_group_norms(values, group_size):
    """Loop-based reference for the vectorized group norms."""
    out = []
    for lo in range(0, len(values), group_size):
        chunk = values[lo:lo + group_size]
        out.append(np.sqrt(sum(float(v) ** 2 for v in chunk)))
    return np.array(out)


class TestMakeRng:
    def test_deterministic(self):
        a = make_rng(42).normal(size=16)
        b = make_rng(42).normal(size=16)
        assert_allclose(a, b)

    def test_seeds_differ(self):
        assert not np.allclose(make_rng(1).normal(size=8), make_rng(2).normal(size=8))


class TestParamBlock:
    def test_ravels_and_casts(self):
        block = ParamBlock("w", np.arange(6, dtype=np.int32).reshape(2, 3))
        assert block.values.dtype == np.float64
        assert block.values.shape == (6,)

    def test_grouped_properties(self):
        block = ParamBlock("e", np.zeros(12), group_size=4)
        assert block.grouped
        assert block.num_groups == 3

    def test_group_size_must_divide(self):
        with pytest.raises(ValueError):
            ParamBlock("e", np.zeros(10), group_size=4)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            ParamBlock("w", np.array([1.0, np.nan]))

    def test_copy_is_independent(self):
        block = ParamBlock("w", np.ones(4), group_size=2)
        dup = block.copy()
        dup.values[0] = 7.0
        assert block.values[0] == 1.0
        assert dup.group_size == 2


class TestGroupNorms:
    def test_against_naive_loop(self):
        rng = make_rng(0)
        for group_size in (1, 2, 5):
            values = rng.normal(size=30)
            block = ParamBlock("e", values, group_size=group_size)
            assert_allclose(group_l2_norms(block), naive_group_norms(values, group_size),
                            rtol=1e-13)

    def test_ungrouped_raises(self):
        block = ParamBlock("w", np.array([3.0, -4.0, 0.0]))
        with pytest.raises(ValueError):
            group_l2_norms(block)

    @given(st.integers(min_value=0, max_value=2**31 - 1))
    def test_within_group_permutation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        values = rng.normal(size=12)
        block = ParamBlock("e", values, group_size=4)
        shuffled = values.reshape(3, 4).copy()
        for row in shuffled:
            rng.shuffle(row)
        other = ParamBlock("e", shuffled, group_size=4)
        assert_allclose(group_l2_norms(block), group_l2_norms(other), rtol=1e-12)


class TestWeightedAverageAccumulate:
    def test_plain_sum_when_decay_one(self):
        acc = np.array([1.0, 2.0])
        out = weighted_average_accumulate(acc, np.array([3.0, 4.0]), 1.0)
        assert_allclose(out, [4.0, 6.0])

    def test_geometric_decay(self):
        acc = np.zeros(1)
        for _ in range(3):
            acc = weighted_average_accumulate(acc, np.ones(1), 0.5)
        assert_allclose(acc, [1.75])

    def test_rejects_bad_decay(self):
        with pytest.raises(ValueError):
            weighted_average_accumulate(np.zeros(2), np.zeros(2), 1.5)
