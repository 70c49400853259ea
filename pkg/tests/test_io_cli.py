import io
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparse_forge.cli import run_cli
from sparse_forge.errors import BadMagic, IoError, MatrixMarketError, UnsupportedHeader, VersionMismatch
from sparse_forge.inference import infer_storage
from sparse_forge.io import (
    read_container, read_matrix_market, read_storage, read_tns, storage_bytes, storage_from_bytes,
    write_container, write_matrix_market,
)
from sparse_forge.storage import materialize
from sparse_forge.tensor import from_coo, to_dense

from helpers import fmt, to_format
from oracles import A_COORDS, A_DENSE, A_SHAPE, A_VALUES, CSR_IDX, CSR_PTR, INFERENCE_GOLDEN, PLAN_COO_CSR


def mm(text):
    return read_matrix_market(io.StringIO(text))


def test_index_shift():
    shape, coords, vals = mm("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 5.0\n2 2 7.0\n")
    assert shape.dims == (2, 2)
    assert coords.tolist() == [[0, 0], [1, 1]] and vals.tolist() == [5.0, 7.0]


def test_symmetric_mirror():
    _, coords, vals = mm("%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n2 1 3.0\n1 1 4\n")
    assert sorted(zip(map(tuple, coords.tolist()), vals.tolist())) == [((0, 0), 4.0), ((0, 1), 3.0),
                                                                      ((1, 0), 3.0)]


def test_pattern_and_integer():
    _, _, vals = mm("%%MatrixMarket matrix coordinate pattern general\n% comment\n3 3 2\n1 2\n3 3\n")
    assert vals.tolist() == [1.0, 1.0]
    _, _, vals = mm("%%MatrixMarket matrix coordinate integer general\n3 3 1\n1 2 -4\n")
    assert vals.tolist() == [-4.0]


def test_array_header():
    with pytest.raises(UnsupportedHeader):
        mm("%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n")


def test_parse_error_line():
    with pytest.raises(MatrixMarketError) as exc:
        mm("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 5.0\n2 x 7.0\n")
    assert exc.value.line == 4
    with pytest.raises(MatrixMarketError):
        mm("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 5.0\n")


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.data())
def test_write_read_multiset(r, c, data):
    cells = data.draw(st.lists(st.tuples(st.integers(0, r - 1), st.integers(0, c - 1)), unique=True, max_size=r * c))
    vals = data.draw(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64),
                              min_size=len(cells), max_size=len(cells)))
    buf = io.StringIO()
    write_matrix_market(buf, (r, c), cells, vals)
    buf.seek(0)
    shape, coords, got = read_matrix_market(buf)
    assert shape.dims == (r, c)
    assert sorted(zip(map(tuple, coords.tolist()), got.tolist())) == sorted(zip(cells, vals))


def test_tns():
    shape, coords, vals = read_tns(io.StringIO("# x\n1 1 1 2.5\n2 3 4 1\n"))
    assert shape.dims == (2, 3, 4) and coords.tolist() == [[0, 0, 0], [1, 2, 3]] and vals.tolist() == [2.5, 1.0]


# -- container ---------------------------------------------------------------------

def test_csr_container_byte_exact(tmp_path, mat_a):
    csr = to_format(mat_a, "CSR")
    path = tmp_path / "a.usp"
    data = write_container(path, csr, infer_storage(fmt("CSR")))
    assert path.read_bytes() == data
    st_ = read_storage(path)
    assert st_.levels[1].ptr.tolist() == CSR_PTR and st_.levels[1].idx.tolist() == CSR_IDX
    assert storage_bytes(st_) == data
    back = read_container(path, fmt("CSR"))
    assert back.matches(fmt("CSR")) and np.array_equal(to_dense(back).array, A_DENSE)


@pytest.mark.parametrize("name", ["COO", "DIA", "BCSR", "ELL", "C2SR", "DOK"])
def test_container_round_trip(tmp_path, mat_a, name):
    st_ = materialize(to_format(mat_a, name))
    assert storage_from_bytes(storage_bytes(st_)) == st_


def test_empty_container(tmp_path):
    t = to_format(from_coo((3, 4), [], []), "CSR")
    path = tmp_path / "e.usp"
    data = write_container(path, t)
    assert storage_bytes(read_storage(path)) == data
    assert not to_dense(read_container(path, fmt("CSR"))).array.any()


def test_container_errors(mat_a):
    data = storage_bytes(materialize(to_format(mat_a, "CSR")))
    with pytest.raises((BadMagic, IoError)):
        storage_from_bytes(data[:2])
    with pytest.raises(IoError):
        storage_from_bytes(data[:-3])
    with pytest.raises(BadMagic):
        storage_from_bytes(b"XXXX" + data[4:])
    with pytest.raises(VersionMismatch):
        storage_from_bytes(data[:4] + b"\x09\x00" + data[6:])


# -- CLI ---------------------------------------------------------------------------

def cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run_cli(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def a_mtx(tmp_path):
    path = tmp_path / "a.mtx"
    write_matrix_market(path, A_SHAPE, A_COORDS, A_VALUES)
    return str(path)


def test_emit_plan():
    code, out, _ = cli("convert", "--from", "COO", "--to", "CSR", "--emit-plan")
    assert code == 0 and out == "\n".join(PLAN_COO_CSR) + "\n"


def test_emit_plan_is_deterministic():
    runs = {cli("convert", "--to", "BDIA(3)", "--emit-plan")[1] for _ in range(3)}
    assert len(runs) == 1


def test_inspect_csr():
    code, out, _ = cli("inspect", "--format", "map (d0,d1)->(d0,d1) ; merge(0) trim(1,1)")
    assert code == 0 and out == INFERENCE_GOLDEN["CSR"] + "\n"


def test_inspect_query(a_mtx):
    code, out, _ = cli("inspect", "--input", a_mtx, "--query",
                       "sum(value) groupBy (d0,d1)->(d0) with value ne 0 -> 1 | otherwise -> 0")
    assert code == 0 and out == "0\t1\n1\t1\n2\t3\n3\t0\n4\t1\n"


def test_convert_writes_container(tmp_path, a_mtx):
    dst = tmp_path / "a.usp"
    code, _, _ = cli("convert", a_mtx, "--to", "CSR", "--out", str(dst))
    assert code == 0
    assert read_storage(dst).levels[1].ptr.tolist() == CSR_PTR


def test_unknown_flag():
    assert cli("convert", "--bogus")[0] == 1
    assert cli("kernel", "spmv", "--matrix", "a", "--rhs", "b", "--vector", "c")[0] == 1


def test_data_error(tmp_path):
    bad = tmp_path / "bad.mtx"
    bad.write_text("%%MatrixMarket matrix array real general\n1 1\n1\n")
    code, _, err = cli("convert", str(bad), "--to", "CSR")
    assert code == 2
    assert json.loads(err)["error"] == "UnsupportedHeader"
    code, _, err = cli("convert", str(tmp_path / "missing.mtx"), "--to", "CSR")
    assert code == 2 and json.loads(err)["error"] == "IoError"


def test_kernel_spmv(a_mtx, tmp_path):
    vec = tmp_path / "x.txt"
    vec.write_text("1 1 1 1\n")
    code, out, _ = cli("kernel", "spmv", "--matrix", a_mtx, "--format", "DIA", "--vector", str(vec))
    assert code == 0 and out == "1\n2\n12\n0\n6\n"


def test_kernel_spmm_explain(a_mtx, tmp_path):
    bt = tmp_path / "bt.mtx"
    write_matrix_market(bt, A_SHAPE[::-1], [(c, r) for r, c in A_COORDS], A_VALUES)
    code, out, _ = cli("kernel", "spgemm", "--matrix", a_mtx, "--format", "DIA", "--rhs", str(bt),
                       "--rhs-format", "DCSR", "--explain", "--out", str(tmp_path / "c.txt"))
    assert code == 0 and "co-iterate B.L0" in out
    got = np.loadtxt(tmp_path / "c.txt")
    assert np.array_equal(got, A_DENSE @ A_DENSE.T)
    # 5x4 times 5x4 does not conform
    assert cli("kernel", "spmm", "--matrix", a_mtx, "--rhs", a_mtx)[0] == 2


def test_thread_env(a_mtx, monkeypatch):
    monkeypatch.setenv("SPARSE_FORGE_THREADS", "3")
    code, out, _ = cli("kernel", "spmv", "--matrix", a_mtx, "--format", "C2SR(2)", "--parallel", "1")
    assert code == 0 and out == "1\n2\n12\n0\n6\n"
    monkeypatch.setenv("SPARSE_FORGE_THREADS", "zero")
    assert cli("kernel", "spmv", "--matrix", a_mtx)[0] == 1


def test_decompose_cli(a_mtx, tmp_path):
    pa, pb = tmp_path / "a.mtx", tmp_path / "b.mtx"
    code, out, _ = cli("decompose", a_mtx, "--group-by", "(d0,d1)->(d0/3,d1-d0)", "--min-sum", "2",
                       "--out-a", str(pa), "--out-b", str(pb))
    assert code == 0 and out == "selected\t3\nremainder\t3\n"
    assert read_matrix_market(pa)[1].tolist() == [[0, 0], [1, 1], [2, 2]]


def test_bench(a_mtx):
    code, out, _ = cli("bench", "--matrix", a_mtx, "--format", "CSR", "--kernel", "spmv", "--repeat", "1")
    lines = out.splitlines()
    assert code == 0 and lines[0] == "stage\tseconds"
    assert [ln.split("\t")[0] for ln in lines[1:]] == ["read", "convert", "kernel"]
