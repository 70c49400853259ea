import itertools

import pytest

from sparse_forge.inference import LevelStorage, StorageScheme, explain_storage, infer_storage
from sparse_forge.ir import CATALOGUE, parse_encoding

from helpers import fmt
from oracles import INFERENCE_GOLDEN


def test_csr():
    s = infer_storage(fmt("CSR"))
    assert s.per_level[0] == LevelStorage(True, False, False, False)
    assert s.per_level[1] == LevelStorage(False, True, True, False)


def test_dcsr():
    s = infer_storage(fmt("DCSR"))
    assert [(lv.has_idx, lv.has_ptr) for lv in s.per_level] == [(True, False), (True, True)]


def test_dia():
    s = infer_storage(fmt("DIA"))
    assert s.per_level[0].has_idx and not s.per_level[0].has_ptr
    assert s.per_level[1] == LevelStorage(True, False, False, True)


@pytest.mark.parametrize("name", CATALOGUE)
def test_catalogue_golden(name):
    assert explain_storage(infer_storage(fmt(name))) == INFERENCE_GOLDEN[name]


def test_explain_examples():
    assert explain_storage(infer_storage(fmt("CSR"))) == "L0: size | L1: ptr, idx | val"
    assert explain_storage(infer_storage(fmt("COO"))) == "L0: idx | L1: idx | val"
    assert explain_storage(infer_storage(parse_encoding("map (d0)->(d0)"))) == "L0: size | val"


def test_layout_copied():
    s = infer_storage(fmt("C2SR"))
    assert isinstance(s, StorageScheme) and s.partition_level == 0 and s.pack_range is None
    assert infer_storage(fmt("DOK")).pack_range == (0, 1)


def test_every_level_has_size_or_idx():
    for name in CATALOGUE:
        for lv in infer_storage(fmt(name)).per_level:
            assert lv.has_size or lv.has_idx


def _arrays(text):
    return [set(lv.arrays()) - {"size", "dense_vector"} for lv in infer_storage(parse_encoding(text)).per_level]


def _enc(m, trim, merge):
    dims = ",".join(f"d{i}" for i in range(m))
    attrs = []
    if merge:
        attrs.append(f"merge({','.join(map(str, merge))})")
    if trim:
        attrs.append(f"trim({trim[0]},{trim[1]})")
    text = f"map ({dims})->({dims})"
    return text + (" ; " + " ".join(attrs) if attrs else "")


def _variants(m):
    trims = [None] + [(s, e) for s in range(m) for e in range(s, m)]
    merges = [c for r in range(m + 1) for c in itertools.combinations(range(m), r)]
    return itertools.product(trims, merges)


@pytest.mark.parametrize("m", [2, 3])
def test_trim_never_removes_arrays(m):
    for trim, merge in _variants(m):
        if trim is None or trim[0] == 0:
            continue
        wider = (trim[0] - 1, trim[1])
        before = _arrays(_enc(m, trim, merge))[wider[0]]
        after = _arrays(_enc(m, wider, merge))[wider[0]]
        assert before <= after, (_enc(m, trim, merge), _enc(m, wider, merge))


@pytest.mark.parametrize("m", [2, 3])
def test_merge_never_removes_arrays_below(m):
    for trim, merge in _variants(m):
        before = _arrays(_enc(m, trim, merge))
        for lv in range(m - 1):
            if lv in merge:
                continue
            after = _arrays(_enc(m, trim, tuple(sorted(merge + (lv,)))))
            for k in range(lv + 1, m):
                assert before[k] <= after[k], (_enc(m, trim, merge), lv, k)
