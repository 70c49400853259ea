import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from sparse_forge.errors import CollisionError, DuplicateCoordinate, OutOfRange, ShapeMismatch
from sparse_forge.ir import named_format, parse_index_map
from sparse_forge.storage import LevelAttr, LevelKind, decode_paths, materialize, rebuild
from sparse_forge.tensor import (
    DenseTensor, TensorShape, WorkingTensor, equal_dense, from_coo, from_dense, tensor_for, to_dense,
)

from helpers import fmt, to_format
from oracles import A_DENSE, COO_D0, COO_D1, COO_VAL, DIA_OFFSETS, DIA_VALUES


def test_from_coo_arrays(mat_a):
    assert mat_a.column(0).tolist() == COO_D0
    assert mat_a.column(1).tolist() == COO_D1
    assert mat_a.values.tolist() == COO_VAL
    assert mat_a.trimmed == (True, True)


def test_from_coo_sorts():
    t = from_coo((3, 3), [(2, 0), (0, 1), (1, 2)], [1, 2, 3])
    assert t.coords.tolist() == [[0, 1], [1, 2], [2, 0]]
    assert t.values.tolist() == [2, 3, 1]


def test_empty():
    t = from_coo((5, 4), [], [])
    assert t.nnz == 0 and t.coords.shape == (0, 2)
    assert not to_dense(t).array.any()


def test_duplicate():
    with pytest.raises(DuplicateCoordinate):
        from_coo((2, 2), [(0, 0), (0, 0)], [1, 2])


def test_duplicate_summed():
    t = from_coo((2, 2), [(0, 0), (1, 1), (0, 0)], [1, 2, 5], sum_duplicates=True)
    assert t.coords.tolist() == [[0, 0], [1, 1]]
    assert t.values.tolist() == [6, 2]


def test_out_of_range():
    with pytest.raises(OutOfRange):
        from_coo((2, 2), [(0, 2)], [1])


def test_bad_shape():
    with pytest.raises(ValueError):
        TensorShape((0, 3))


def test_to_dense_identity(mat_a):
    assert np.array_equal(to_dense(mat_a).array, A_DENSE)


def test_to_dense_dia(mat_a):
    dia = to_format(mat_a, "DIA")
    d = to_dense(dia, parse_index_map("(e0,e1)->(e1,e0+e1)"))
    assert np.array_equal(d.array, A_DENSE)
    assert equal_dense(d, to_dense(mat_a))


def test_collision():
    t = tensor_for(named_format("COO"), TensorShape((2, 2)), np.array([[0, 0], [1, 1]]), np.array([1.0, 2.0]))
    # both diagonal entries restore to (0,0)
    with pytest.raises(CollisionError):
        to_dense(t, parse_index_map("(e0,e1)->(e1-e0,e1-e0)"))


def test_equal_dense_tolerance():
    a = DenseTensor(TensorShape((5, 4)), A_DENSE.copy())
    b = DenseTensor(TensorShape((5, 4)), A_DENSE.copy())
    assert equal_dense(a, b)
    b.array[0, 0] += 1
    assert not equal_dense(a, b, 1e-10)
    c = DenseTensor(TensorShape((5, 4)), A_DENSE + 1e-12)
    assert equal_dense(a, c, 1e-10)
    with pytest.raises(ShapeMismatch):
        equal_dense(a, DenseTensor(TensorShape((4, 5)), A_DENSE.T.copy()))


def test_dense_data_is_row_major():
    d = DenseTensor(TensorShape((2, 3)), np.arange(6.0).reshape(2, 3))
    assert d.data.tolist() == [0, 1, 2, 3, 4, 5]


def test_storage_csr(mat_a):
    st = materialize(to_format(mat_a, "CSR"))
    assert st.levels[0].idx is None and (st.levels[0].lower, st.levels[0].upper) == (0, 5)
    assert st.levels[1].ptr.tolist() == [0, 1, 2, 5, 5, 6]


def test_storage_dia_signed_bounds(mat_a):
    st = materialize(to_format(mat_a, "DIA"))
    assert st.levels[0].idx.tolist() == DIA_OFFSETS
    assert st.values.reshape(3, 5).tolist() == DIA_VALUES
    assert st.levels[1].attr.kind is LevelKind.DENSE_VECTOR_LEAF


def test_level_attr_byte_round_trip():
    for b in range(256):
        attr = LevelAttr.from_byte(b)
        assert attr.to_byte() == b


@pytest.mark.parametrize("name", ["COO", "CSR", "DCSR", "DIA", "BCSR", "CSB", "ELL", "BDIA", "C2SR", "BELL"])
def test_materialize_rebuild(mat_a, name):
    t = to_format(mat_a, name)
    st = materialize(t)
    back = rebuild(st, fmt(name))
    assert back.matches(fmt(name))
    assert np.array_equal(to_dense(back).array, A_DENSE)
    assert materialize(back) == st
    assert len(decode_paths(st)) == len(st.values)


@settings(max_examples=100, deadline=None)
@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=1, max_dims=3, max_side=6),
                  elements=st.sampled_from([0.0, 0.0, 1.5, -2.0, 3.25])))
def test_dense_round_trip_exact(arr):
    t = from_dense(arr)
    assert np.array_equal(to_dense(t).array, arr)
    assert t.coords.shape == (t.nnz, arr.ndim)


def test_working_tensor_level_lengths(mat_a):
    t = to_format(mat_a, "BDIA")
    assert isinstance(t, WorkingTensor)
    assert t.coords.shape == (t.nnz, t.physical_rank)
    assert len(t.bounds) == len(t.trimmed) == len(t.merged) == t.physical_rank
