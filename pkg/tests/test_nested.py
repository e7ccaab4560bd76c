import numpy as np
import pytest

from app.attribution.core.nested import (
    AttributionPair,
    NestedShape,
    build_aggregation_matrix,
    consistency_residual,
)
from app.attribution.exceptions import ShapeError


class TestNestedShape:
    def test_derived_sizes(self):
        shape = NestedShape((2, 3, 1))
        assert shape.n_groups == 3
        assert shape.d_total == 6
        assert shape.group_of_feature.tolist() == [0, 0, 1, 1, 1, 2]

    @pytest.mark.parametrize("sizes", [(), (2, 0), (-1,)])
    def test_invalid_sizes_raise(self, sizes):
        with pytest.raises(ShapeError):
            NestedShape(sizes)

    def test_expand_high_mask(self):
        shape = NestedShape((2, 1, 3))
        assert shape.expand_high_mask(np.array([1, 0, 1])).tolist() == [1, 1, 0, 1, 1, 1]

    def test_expand_rejects_wrong_width(self):
        with pytest.raises(ShapeError):
            NestedShape((2, 2)).expand_high_mask(np.array([1, 0, 1]))

    def test_json_form(self):
        shape = NestedShape((2, 3))
        assert shape.to_dict() == {"group_sizes": [2, 3]}
        assert NestedShape.from_dict({"group_sizes": [2, 3]}) == shape


class TestAggregationMatrix:
    def test_single_feature(self):
        m = build_aggregation_matrix(NestedShape((1,)))
        np.testing.assert_array_equal(m.entries, [[1.0]])

    def test_block_structure(self):
        m = build_aggregation_matrix(NestedShape((2, 1)))
        np.testing.assert_array_equal(m.entries, [[1, 1, 0], [0, 0, 1]])

    def test_row_sums_are_group_sizes(self):
        m = build_aggregation_matrix(NestedShape((2, 3, 1)))
        np.testing.assert_array_equal(m.entries @ np.ones(6), [2, 3, 1])

    def test_each_column_has_one_entry(self):
        m = build_aggregation_matrix(NestedShape((3, 1, 4, 2)))
        np.testing.assert_array_equal(m.entries.sum(axis=0), np.ones(10))

    def test_entries_are_read_only(self):
        m = build_aggregation_matrix(NestedShape((2, 2)))
        with pytest.raises(ValueError):
            m.entries[0, 0] = 5.0


class TestConsistencyResidual:
    def test_exact_sums(self):
        m = build_aggregation_matrix(NestedShape((2, 1)))
        pair = AttributionPair(hifa=[0.5, 0.3], lofa=[0.2, 0.3, 0.3])
        assert consistency_residual(pair, m) == pytest.approx(0.0, abs=1e-15)

    def test_single_group_gap(self):
        m = build_aggregation_matrix(NestedShape((2,)))
        pair = AttributionPair(hifa=[1.0], lofa=[0.4, 0.4])
        assert consistency_residual(pair, m) == pytest.approx(0.04)

    def test_aggregated_pair_is_consistent(self):
        rng = np.random.default_rng(3)
        m = build_aggregation_matrix(NestedShape((3, 2, 4)))
        lofa = rng.normal(size=9)
        pair = AttributionPair(hifa=m.aggregate(lofa), lofa=lofa)
        assert consistency_residual(pair, m) <= 1e-12
        assert pair.is_consistent(m)

    def test_dimension_mismatch(self):
        m = build_aggregation_matrix(NestedShape((2, 1)))
        with pytest.raises(ShapeError):
            consistency_residual(AttributionPair(hifa=[0.5], lofa=[0.2, 0.3, 0.3]), m)
        with pytest.raises(ShapeError):
            consistency_residual(AttributionPair(hifa=[0.5, 0.3], lofa=[0.2, 0.3]), m)


def test_pair_rejects_non_finite():
    with pytest.raises(ShapeError):
        AttributionPair(hifa=[np.nan], lofa=[0.1])


def test_pair_json_form():
    pair = AttributionPair(hifa=[0.5, 0.3], lofa=[0.2, 0.3, 0.3])
    restored = AttributionPair.from_dict(pair.to_dict())
    np.testing.assert_array_equal(restored.hifa, pair.hifa)
    np.testing.assert_array_equal(restored.lofa, pair.lofa)
