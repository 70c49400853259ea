import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparse_forge.decompose import (
    DecomposeRule, bdia_csr, bdia_rule, bell_rule, decompose, decompose_hybrid, min_sum_rule,
)
from sparse_forge.errors import QueryError
from sparse_forge.ir import QueryFunc, QuerySpec
from sparse_forge.ir.encoding import ValueArm
from sparse_forge.queries import query_sum
from sparse_forge.tensor import from_dense, to_dense

from helpers import fmt, random_dense, to_format
from oracles import A_DENSE, BDIA_GROUPS


def test_group_counts(mat_a):
    entries = query_sum(mat_a, bdia_rule(3, 2).query).entries
    assert {k: v for k, v in entries.items() if v} == BDIA_GROUPS


def test_bdia_example(mat_a):
    sel, rest = decompose(mat_a, bdia_rule(3, 2))
    assert sel.coords.tolist() == [[0, 0], [1, 1], [2, 2]]
    assert rest.coords.tolist() == [[2, 1], [2, 3], [4, 3]]
    assert sel.values.tolist() == [1.0, 2.0, 4.0]


def test_thresholds(mat_a):
    sel, rest = decompose(mat_a, bdia_rule(3, 0))
    assert sel.nnz == 6 and rest.nnz == 0
    sel, rest = decompose(mat_a, bdia_rule(3, 10 ** 9))
    assert sel.nnz == 0 and rest.nnz == 6


def test_rule_validation():
    with pytest.raises(QueryError):
        DecomposeRule(QuerySpec(QueryFunc.SUM), ValueArm("be", 1, 1))
    with pytest.raises(QueryError):
        min_sum_rule("(d0)->(d0)", 1)


def test_works_from_any_source(mat_a):
    for name in ("CSR", "DIA", "BCSR", "ELL"):
        sel, rest = decompose(to_format(mat_a, name), bdia_rule(3, 2))
        assert sel.coords.tolist() == [[0, 0], [1, 1], [2, 2]]
        assert rest.nnz == 3


def test_hybrid_members(mat_a):
    a, b = decompose_hybrid(mat_a, bdia_rule(3, 2), bdia_csr(3))
    assert a.matches(fmt("BDIA")) and b.matches(fmt("CSR"))
    assert np.array_equal(to_dense(a).array + to_dense(b).array, A_DENSE)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(0, 5), st.sampled_from(["bdia", "bell"]))
def test_partition(seed, threshold, kind):
    rng = np.random.default_rng(seed)
    a = random_dense(rng, max_dim=20)
    rule = bdia_rule(3, threshold) if kind == "bdia" else bell_rule(2, threshold)
    t = from_dense(a)
    sel, rest = decompose(t, rule)
    assert sel.nnz + rest.nnz == t.nnz
    assert np.array_equal(to_dense(sel).array + to_dense(rest).array, a)
    both = set(map(tuple, sel.coords.tolist())) & set(map(tuple, rest.coords.tolist()))
    assert not both
    again = decompose(t, rule)
    assert np.array_equal(again[0].coords, sel.coords) and np.array_equal(again[1].coords, rest.coords)
