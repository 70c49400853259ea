"""Matrix Market and FROSTT readers, and the binary storage container."""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass
from typing import BinaryIO

import numpy as np

from .errors import BadMagic, ContainerError, IoError, MatrixMarketError, UnsupportedHeader, VersionMismatch
from .inference import StorageScheme
from .ir.encoding import FormatEncoding
from .storage import LevelAttr, LevelData, Storage, materialize, rebuild
from .tensor import TensorShape, WorkingTensor

MAGIC = b"USPT"
VERSION = 1


# -- Matrix Market -----------------------------------------------------------------

@dataclass(frozen=True)
class MatrixMarketHeader:
    object: str = "matrix"
    format: str = "coordinate"
    field: str = "real"
    symmetry: str = "general"


_FIELDS = ("real", "integer", "pattern", "double")
_SYMMETRIES = ("general", "symmetric")


def _parse_header(line: str) -> MatrixMarketHeader:
    parts = line.strip().split()
    if len(parts) != 5 or parts[0].lower() != "%%matrixmarket":
        raise MatrixMarketError("missing %%MatrixMarket header", 1)
    obj, fmt, fld, sym = (p.lower() for p in parts[1:])
    if obj != "matrix":
        raise UnsupportedHeader(f"object {obj!r} is not supported", 1)
    if fmt != "coordinate":
        raise UnsupportedHeader(f"format {fmt!r} is not supported; sparse input must be coordinate", 1)
    if fld not in _FIELDS:
        raise UnsupportedHeader(f"field {fld!r} is not supported", 1)
    if sym not in _SYMMETRIES:
        raise UnsupportedHeader(f"symmetry {sym!r} is not supported", 1)
    return MatrixMarketHeader(obj, fmt, "real" if fld == "double" else fld, sym)


def _open_text(src) -> tuple[list[str], str]:
    if isinstance(src, (str, os.PathLike)):
        try:
            with open(src, encoding="utf-8") as fh:
                return fh.read().splitlines(), str(src)
        except OSError as exc:
            raise IoError(f"cannot read {src}: {exc.strerror}") from exc
    return src.read().splitlines(), getattr(src, "name", "<stream>")


def read_matrix_market(src) -> tuple[TensorShape, np.ndarray, np.ndarray]:
    """``(shape, coords, values)`` with 0-based coordinates.

    Symmetric files are mirrored (diagonal entries once) and pattern entries
    get value 1.0.
    """
    lines, _ = _open_text(src)
    if not lines:
        raise MatrixMarketError("empty file", 1)
    header = _parse_header(lines[0])
    i = 1
    while i < len(lines) and (not lines[i].strip() or lines[i].lstrip().startswith("%")):
        i += 1
    if i == len(lines):
        raise MatrixMarketError("missing size line", i)
    size = lines[i].split()
    try:
        rows, cols, nnz = (int(x) for x in size)
    except ValueError as exc:
        raise MatrixMarketError(f"bad size line {lines[i].strip()!r}", i + 1) from exc
    if rows < 1 or cols < 1 or nnz < 0:
        raise MatrixMarketError("matrix dimensions must be positive", i + 1)
    want = 2 if header.field == "pattern" else 3
    coords = np.empty((nnz, 2), dtype=np.int64)
    values = np.empty(nnz, dtype=np.float64)
    n = 0
    for lineno in range(i + 2, len(lines) + 1):
        text = lines[lineno - 1].strip()
        if not text or text.startswith("%"):
            continue
        parts = text.split()
        if len(parts) != want:
            raise MatrixMarketError(f"expected {want} fields, got {len(parts)}", lineno)
        if n == nnz:
            raise MatrixMarketError(f"more than the declared {nnz} entries", lineno)
        try:
            r, c = int(parts[0]), int(parts[1])
            v = 1.0 if want == 2 else float(parts[2])
        except ValueError as exc:
            raise MatrixMarketError(f"bad entry {text!r}", lineno) from exc
        if not (1 <= r <= rows and 1 <= c <= cols):
            raise MatrixMarketError(f"entry ({r},{c}) outside {rows}x{cols}", lineno)
        coords[n] = (r - 1, c - 1)
        values[n] = v
        n += 1
    if n != nnz:
        raise MatrixMarketError(f"declared {nnz} entries, found {n}", len(lines))
    if header.symmetry == "symmetric":
        off = coords[:, 0] != coords[:, 1]
        coords = np.concatenate([coords, coords[off][:, ::-1]])
        values = np.concatenate([values, values[off]])
    return TensorShape((rows, cols)), coords, values


def write_matrix_market(dst, shape, coords, values, field: str = "real") -> None:
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 2)
    values = np.asarray(values, dtype=np.float64)
    dims = tuple(shape)
    buf = io.StringIO()
    buf.write(f"%%MatrixMarket matrix coordinate {field} general\n")
    buf.write(f"{dims[0]} {dims[1]} {len(values)}\n")
    for (r, c), v in zip(coords.tolist(), values.tolist()):
        if field == "pattern":
            buf.write(f"{r + 1} {c + 1}\n")
        elif field == "integer":
            buf.write(f"{r + 1} {c + 1} {int(v)}\n")
        else:
            buf.write(f"{r + 1} {c + 1} {v:.17g}\n")
    _write_text(dst, buf.getvalue())


def _write_text(dst, text: str) -> None:
    if isinstance(dst, (str, os.PathLike)):
        try:
            with open(dst, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as exc:
            raise IoError(f"cannot write {dst}: {exc.strerror}") from exc
    else:
        dst.write(text)


def read_tns(src, shape: tuple[int, ...] | None = None) -> tuple[TensorShape, np.ndarray, np.ndarray]:
    """FROSTT ``.tns``: one ``i j k ... value`` line per entry, 1-based; ``#`` starts a comment."""
    lines, _ = _open_text(src)
    rows, vals = [], []
    rank = None
    for lineno, line in enumerate(lines, 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        parts = text.split()
        if rank is None:
            rank = len(parts) - 1
            if rank < 1:
                raise MatrixMarketError("an entry needs at least one index and a value", lineno)
        if len(parts) != rank + 1:
            raise MatrixMarketError(f"expected {rank + 1} fields, got {len(parts)}", lineno)
        try:
            idx = [int(p) - 1 for p in parts[:-1]]
            v = float(parts[-1])
        except ValueError as exc:
            raise MatrixMarketError(f"bad entry {text!r}", lineno) from exc
        if min(idx) < 0:
            raise MatrixMarketError("indices are 1-based", lineno)
        rows.append(idx)
        vals.append(v)
    if rank is None:
        if shape is None:
            raise MatrixMarketError("empty tensor file needs an explicit shape", 1)
        rank = len(shape)
    coords = np.asarray(rows, dtype=np.int64).reshape(-1, rank)
    if shape is None:
        shape = tuple(int(x) + 1 for x in coords.max(axis=0))
    elif len(coords) and np.any(coords >= np.asarray(shape)):
        raise MatrixMarketError(f"entries exceed shape {tuple(shape)}", len(lines))
    return TensorShape(tuple(shape)), coords, np.asarray(vals, dtype=np.float64)


# -- binary container --------------------------------------------------------------

def _pack_array(out: BinaryIO, arr: np.ndarray | None) -> None:
    a = np.zeros(0, dtype="<i8") if arr is None else np.asarray(arr, dtype="<i8")
    out.write(struct.pack("<Q", len(a)))
    out.write(a.tobytes())


def storage_bytes(st: Storage) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<HB", VERSION, st.shape.rank))
    out.write(struct.pack(f"<{st.shape.rank}q", *st.shape.dims))
    out.write(struct.pack("<B", len(st.levels)))
    for lv in st.levels:
        out.write(struct.pack("<Bqq", lv.attr.to_byte(), lv.lower, lv.upper))
        _pack_array(out, lv.idx)
        _pack_array(out, lv.ptr)
    out.write(struct.pack("<Q", len(st.values)))
    out.write(np.asarray(st.values, dtype="<f8").tobytes())
    if st.pack is None:
        out.write(struct.pack("<B", 0))
    else:
        out.write(struct.pack("<BBB", 1, *st.pack))
    parts = st.partitions or []
    out.write(struct.pack("<I", len(parts)))
    for a, b in parts:
        out.write(struct.pack("<QQ", a, b))
    return out.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.at = 0

    def take(self, n: int) -> bytes:
        if self.at + n > len(self.data):
            raise IoError(f"container truncated at byte {self.at} (need {n} more)")
        chunk = self.data[self.at:self.at + n]
        self.at += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, dtype: str) -> np.ndarray:
        (n,) = self.unpack("<Q")
        return np.frombuffer(self.take(8 * n), dtype=dtype).astype(dtype[1:] if dtype[0] == "<" else dtype)


def storage_from_bytes(data: bytes) -> Storage:
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagic("not a storage container (bad magic)")
    r = _Reader(data)
    r.take(4)
    version, rank = r.unpack("<HB")
    if version != VERSION:
        raise VersionMismatch(f"container version {version}, expected {VERSION}")
    dims = r.unpack(f"<{rank}q")
    (m,) = r.unpack("<B")
    levels = []
    for _ in range(m):
        kind, lower, upper = r.unpack("<Bqq")
        attr = LevelAttr.from_byte(kind)
        idx = r.array("<i8")
        ptr = r.array("<i8")
        levels.append(LevelData(attr, lower, upper, idx if attr.has_idx else None, ptr if attr.has_ptr else None))
    (nv,) = r.unpack("<Q")
    values = np.frombuffer(r.take(8 * nv), dtype="<f8").astype(np.float64)
    (tag,) = r.unpack("<B")
    pack = None
    if tag == 1:
        pack = tuple(r.unpack("<BB"))
    elif tag != 0:
        raise ContainerError(f"unknown layout tag {tag}")
    (np_,) = r.unpack("<I")
    parts = [tuple(r.unpack("<QQ")) for _ in range(np_)] or None
    if r.at != len(data):
        raise ContainerError(f"{len(data) - r.at} trailing bytes after the partition table")
    try:
        shape = TensorShape(dims)
    except ValueError as exc:
        raise ContainerError(str(exc)) from exc
    return Storage(shape, levels, values, pack, parts)


def _check_scheme(st: Storage, scheme: StorageScheme) -> None:
    if len(scheme.per_level) != len(st.levels):
        raise ContainerError(f"scheme has {len(scheme.per_level)} levels, tensor has {len(st.levels)}")
    for k, (want, lv) in enumerate(zip(scheme.per_level, st.levels)):
        if want.has_idx != lv.attr.has_idx or want.has_ptr != lv.attr.has_ptr:
            raise ContainerError(f"level {k} arrays do not match the storage scheme")
    if scheme.pack_range != st.pack:
        raise ContainerError("pack range does not match the storage scheme")


def write_container(path, t: WorkingTensor | Storage, scheme: StorageScheme | None = None) -> bytes:
    st = t if isinstance(t, Storage) else materialize(t)
    if scheme is not None:
        _check_scheme(st, scheme)
    data = storage_bytes(st)
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror}") from exc
    return data


def read_storage(path) -> Storage:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror}") from exc
    return storage_from_bytes(data)


def read_container(path, enc: FormatEncoding | None = None) -> WorkingTensor:
    """Decode a container; pass the encoding to recover index expressions."""
    return rebuild(read_storage(path), enc)
