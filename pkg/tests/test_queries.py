
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparse_forge.errors import MissingGroupBy, MissingTraverseBy, MissingWeights, UnboundSumVal
from sparse_forge.ir import NNZ_VALUE_MAP, QueryFunc, QuerySpec, parse_index_map, parse_query
from sparse_forge.queries import (
    GroupTable, partition_loads, query_enumerate, query_reorder, query_schedule, query_sum,
)
from sparse_forge.tensor import from_coo, from_dense

from oracles import DIAG_NNZ, REORDER_ROWS, ROW_NNZ, ROW_SLOTS, ROW_SLOTS_DESC, SCHEDULE_2

ROWS = parse_index_map("(d0,d1)->(d0)")
COLS = parse_index_map("(d0,d1)->(d1)")


def nnz_sum(group_by):
    return QuerySpec(QueryFunc.SUM, group_by=group_by, value_map=NNZ_VALUE_MAP)


def table(weights):
    entries = {(k,): v for k, v in weights.items()}
    return GroupTable(1, entries, sorted(entries), ROWS)


def test_row_counts(mat_a):
    assert query_sum(mat_a, nnz_sum(ROWS)).entries == ROW_NNZ


def test_diagonal_counts(mat_a):
    assert query_sum(mat_a, nnz_sum(parse_index_map("(d0,d1)->(d1-d0)"))).entries == DIAG_NNZ


def test_sum_empty():
    t = from_coo((5, 4), [], [])
    assert query_sum(t, nnz_sum(ROWS)).entries == {(i,): 0 for i in range(5)}


def test_sum_of_values(mat_a):
    q = QuerySpec(QueryFunc.SUM, group_by=ROWS)
    assert query_sum(mat_a, q).entries == {(0,): 1.0, (1,): 2.0, (2,): 12.0, (3,): 0.0, (4,): 6.0}


def test_sum_needs_group_by(mat_a):
    with pytest.raises(MissingGroupBy):
        query_sum(mat_a, QuerySpec(QueryFunc.SUM))


def test_enumerate_rows(mat_a):
    q = QuerySpec(QueryFunc.ENUM, group_by=ROWS, traverse_by=COLS)
    assert query_enumerate(mat_a, q).tolist() == ROW_SLOTS


def test_enumerate_descending(mat_a):
    q = QuerySpec(QueryFunc.ENUM, group_by=ROWS, traverse_by=COLS, descending=True)
    assert query_enumerate(mat_a, q).tolist() == ROW_SLOTS_DESC


def test_enumerate_single():
    t = from_coo((3, 3), [(1, 2)], [4.0])
    q = QuerySpec(QueryFunc.ENUM, group_by=ROWS, traverse_by=COLS)
    assert query_enumerate(t, q).tolist() == [0]


def test_enumerate_errors(mat_a):
    with pytest.raises(MissingTraverseBy):
        query_enumerate(mat_a, QuerySpec(QueryFunc.ENUM, group_by=ROWS))
    q = parse_query("enum(value) groupBy (d0,d1)->(d0) traverseBy (d0,d1)->(d1) "
                    "with value eq 0 -> sumVal | otherwise -> 0", rank=2)
    with pytest.raises(UnboundSumVal):
        query_enumerate(mat_a, q)


def test_enumerate_sumval_offsets_zeros():
    t = from_coo((2, 3), [(0, 0), (0, 1), (0, 2), (1, 1)], [5.0, 0.0, 7.0, 1.0])
    prior = query_sum(t, nnz_sum(ROWS))
    q = parse_query("enum(value) groupBy (d0,d1)->(d0) traverseBy (d0,d1)->(d1) "
                    "with value eq 0 -> sumVal | otherwise -> 0", rank=2)
    # row 0 holds two non-zeros, so its explicit zero is numbered after them
    assert query_enumerate(t, q, prior).tolist() == [0, 2, 1, 0]


def test_reorder():
    q = QuerySpec(QueryFunc.REORDER, subject=0)
    t = from_coo((5, 4), [], [])
    assert query_reorder(t, q, table({0: 1, 1: 1, 2: 3, 3: 0, 4: 1})) == REORDER_ROWS
    assert query_reorder(t, q, table({0: 2, 1: 2, 2: 2})) == [(0,), (1,), (2,)]
    assert query_reorder(t, q, table({0: 5, 1: 7})) == [(1,), (0,)]


def test_reorder_needs_weights(mat_a):
    with pytest.raises(MissingWeights):
        query_reorder(mat_a, QuerySpec(QueryFunc.REORDER, subject=0), None)


def test_schedule():
    t = from_coo((5, 4), [], [])
    q = QuerySpec(QueryFunc.SCHEDULE, subject=0, partitions=2)
    w = table({0: 1, 1: 1, 2: 3, 3: 0, 4: 1})
    got = query_schedule(t, q, w, REORDER_ROWS)
    assert got == SCHEDULE_2
    assert partition_loads(got, w, 2) == [3, 3]


def test_schedule_trivial():
    t = from_coo((5, 4), [], [])
    one = QuerySpec(QueryFunc.SCHEDULE, subject=0, partitions=1)
    assert set(query_schedule(t, one, table({0: 1, 1: 4, 2: 2})).values()) == {0}
    two = QuerySpec(QueryFunc.SCHEDULE, subject=0, partitions=2)
    assert query_schedule(t, two, table({0: 2, 1: 2})) == {(0,): 0, (1,): 1}


# -- properties ----------------------------------------------------------------------

sparse_arrays = st.integers(0, 2 ** 32 - 1).map(lambda seed: _random(seed))


def _random(seed):
    rng = np.random.default_rng(seed)
    r, c = rng.integers(1, 9, 2)
    a = rng.integers(-3, 4, (r, c)).astype(float)
    a[rng.random((r, c)) < 0.5] = 0
    return a


@settings(max_examples=100, deadline=None)
@given(sparse_arrays)
def test_sum_total_is_nnz(a):
    t = from_dense(a)
    for g in ("(d0,d1)->(d0)", "(d0,d1)->(d1-d0)", "(d0,d1)->(d0/2,d1/3)"):
        assert sum(query_sum(t, nnz_sum(parse_index_map(g))).entries.values()) == np.count_nonzero(a)


@settings(max_examples=100, deadline=None)
@given(sparse_arrays, st.booleans())
def test_enumerate_ordinals(a, desc):
    t = from_dense(a)
    q = QuerySpec(QueryFunc.ENUM, group_by=ROWS, traverse_by=COLS, descending=desc)
    slots = query_enumerate(t, q).per_element
    for row in np.unique(t.coords[:, 0]):
        got = slots[t.coords[:, 0] == row]
        assert sorted(got.tolist()) == list(range(len(got)))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 20), min_size=1, max_size=12), st.integers(1, 5))
def test_schedule_balance_bound(weights, k):
    t = from_coo((len(weights), 1), [], [])
    w = table(dict(enumerate(weights)))
    order = query_reorder(t, QuerySpec(QueryFunc.REORDER, subject=0), w)
    assert sorted(order) == sorted(w.entries)
    got = query_schedule(t, QuerySpec(QueryFunc.SCHEDULE, subject=0, partitions=k), w, order)
    loads = partition_loads(got, w, k)
    assert max(loads) - min(loads) <= max(weights)
    # brute-force check of the greedy rule itself on small inputs
    if len(weights) <= 6 and k <= 3:
        expect = [0] * k
        for key in order:
            p = min(range(k), key=lambda i: (expect[i], i))
            assert got[key] == p
            expect[p] += w.entries[key]
