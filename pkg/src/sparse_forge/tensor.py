"""Working tensors: the explicit-entry representation used during conversion.

A :class:`WorkingTensor` is a table of stored entries, one row of physical
coordinates per entry, plus per-level attributes.  Levels that are not trimmed
implicitly contain every index in their ``[lower, upper)`` bounds under each
parent; those padding nodes only become explicit when the tensor is
materialized into storage (see :mod:`sparse_forge.storage`).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import CollisionError, DuplicateCoordinate, OutOfRange, ShapeMismatch
from .ir.encoding import FormatEncoding, bound_levels
from .ir.exprs import DimExpr, Indirect, LogicalDim, bounds as expr_bounds, evaluate_columns
from .ir.maps import IndexMap, invert_exprs


@dataclass(frozen=True)
class TensorShape:
    dims: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if not self.dims:
            raise ValueError("rank must be at least 1")
        if any(d < 1 for d in self.dims):
            raise ValueError(f"extents must be positive: {self.dims}")

    @property
    def rank(self) -> int:
        return len(self.dims)

    def __iter__(self):
        return iter(self.dims)

    def __len__(self):
        return len(self.dims)

    def __getitem__(self, i):
        return self.dims[i]


def as_shape(shape: TensorShape | Sequence[int]) -> TensorShape:
    return shape if isinstance(shape, TensorShape) else TensorShape(tuple(shape))


@dataclass(frozen=True)
class DenseTensor:
    shape: TensorShape
    array: np.ndarray

    @property
    def data(self) -> np.ndarray:
        """Row-major flat view."""
        return self.array.reshape(-1)

    @classmethod
    def zeros(cls, shape) -> "DenseTensor":
        shape = as_shape(shape)
        return cls(shape, np.zeros(shape.dims, dtype=np.float64))


@dataclass
class WorkingTensor:
    shape: TensorShape
    coords: np.ndarray
    values: np.ndarray
    exprs: tuple[DimExpr | None, ...]
    bounds: tuple[tuple[int, int], ...]
    trimmed: tuple[bool, ...]
    merged: tuple[bool, ...]
    indirect: tuple[bool, ...]
    bound: tuple[bool, ...]
    vector_start: int | None = None
    pack: tuple[int, int] | None = None
    partition_level: int | None = None
    # query results carried between the ops of one conversion plan
    scratch: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.int64).reshape(len(self.values), len(self.exprs))
        self.values = np.asarray(self.values, dtype=np.float64)
        m = len(self.exprs)
        for name in ("bounds", "trimmed", "merged", "indirect", "bound"):
            val = tuple(getattr(self, name))
            if len(val) != m:
                raise ValueError(f"{name} has {len(val)} levels, expected {m}")
            setattr(self, name, val)

    # -- basic facts ----------------------------------------------------------
    @property
    def nnz(self) -> int:
        return len(self.values)

    @property
    def logical_rank(self) -> int:
        return self.shape.rank

    @property
    def physical_rank(self) -> int:
        return len(self.exprs)

    @property
    def physical_extents(self) -> tuple[tuple[int, int], ...]:
        return self.bounds

    @property
    def value_layout(self) -> str:
        return "SoA" if self.pack is None else f"AoS({self.pack[0]},{self.pack[1]})"

    @property
    def index_map(self) -> IndexMap | None:
        if any(e is None for e in self.exprs):
            return None
        return IndexMap(self.shape.rank, tuple(self.exprs))

    def column(self, level: int) -> np.ndarray:
        return self.coords[:, level]

    def with_(self, **changes) -> "WorkingTensor":
        out = replace(self, **changes)
        out.scratch = dict(self.scratch)
        return out

    def copy(self) -> "WorkingTensor":
        return self.with_(coords=self.coords.copy(), values=self.values.copy())

    # -- restoration ------------------------------------------------------------
    def restoration_map(self) -> IndexMap:
        if any(e is None for e in self.exprs):
            raise ValueError("tensor has no index expressions; pass the encoding when reading it")
        return invert_exprs(self.exprs, self.shape.rank)

    def logical_coords(self) -> np.ndarray:
        """``(nnz, rank)`` logical coordinates of every stored entry."""
        inv = self.restoration_map()
        cols = [self.coords[:, k] for k in range(self.physical_rank)]
        out = np.empty((self.nnz, self.shape.rank), dtype=np.int64)
        for d, e in enumerate(inv.dst_exprs):
            out[:, d] = inverse_eval(e, cols, self.nnz)
        return out

    def matches(self, enc: FormatEncoding) -> bool:
        """Structure check against an encoding (flags and index expressions)."""
        return (self.physical_rank == enc.physical_rank
                and tuple(self.exprs) == tuple(enc.exprs)
                and self.trimmed == enc.trimmed
                and self.merged == enc.merged
                and self.vector_start == enc.vector_start
                and self.pack == enc.layout.pack
                and self.partition_level == enc.layout.partition)


def inverse_eval(e: DimExpr, cols: Sequence[np.ndarray], n: int) -> np.ndarray:
    if not cols:
        return np.zeros(n, dtype=np.int64)
    return evaluate_columns(e, cols)


def level_bounds(e: DimExpr, shape: TensorShape, column: np.ndarray | None = None) -> tuple[int, int]:
    b = expr_bounds(e, shape.dims) if not isinstance(e, Indirect) else None
    if b is not None:
        return b
    if column is None or len(column) == 0:
        return (0, 0)
    return int(column.min()), int(column.max()) + 1


def from_coo(shape: TensorShape | Sequence[int], coords: Iterable[Sequence[int]] | np.ndarray,
             values: Iterable[float] | np.ndarray, sum_duplicates: bool = False) -> WorkingTensor:
    """COO working tensor with identity map, all levels trimmed, sorted entries."""
    shape = as_shape(shape)
    r = shape.rank
    c = np.asarray(coords if isinstance(coords, np.ndarray) else list(coords), dtype=np.int64)
    v = np.asarray(values if isinstance(values, np.ndarray) else list(values), dtype=np.float64)
    c = c.reshape(-1, r) if c.size else np.zeros((0, r), dtype=np.int64)
    if len(c) != len(v):
        raise ShapeMismatch(f"{len(c)} coordinates but {len(v)} values")
    ext = np.asarray(shape.dims, dtype=np.int64)
    bad = np.nonzero(np.any((c < 0) | (c >= ext), axis=1))[0]
    if len(bad):
        raise OutOfRange(f"coordinate {tuple(int(x) for x in c[bad[0]])} outside shape {shape.dims}")
    order = np.lexsort(c.T[::-1]) if len(c) else np.zeros(0, dtype=np.int64)
    c, v = c[order], v[order]
    if len(c) > 1:
        dup = np.all(c[1:] == c[:-1], axis=1)
        if dup.any():
            if not sum_duplicates:
                i = int(np.nonzero(dup)[0][0])
                raise DuplicateCoordinate(f"coordinate {tuple(int(x) for x in c[i])} given twice")
            starts = np.concatenate(([True], ~dup))
            group = np.cumsum(starts) - 1
            v = np.bincount(group, weights=v)
            c = c[starts]
    return WorkingTensor(
        shape=shape,
        coords=c,
        values=v,
        exprs=tuple(LogicalDim(i) for i in range(r)),
        bounds=tuple((0, d) for d in shape.dims),
        trimmed=(True,) * r,
        merged=(False,) * r,
        indirect=(False,) * r,
        bound=(False,) * r,
    )


def from_dense(array: np.ndarray) -> WorkingTensor:
    a = np.asarray(array, dtype=np.float64)
    nz = np.argwhere(a != 0)
    return from_coo(a.shape, nz, a[tuple(nz.T)] if len(nz) else np.zeros(0))


def to_dense(t: WorkingTensor, inverse: IndexMap | None = None) -> DenseTensor:
    """Place every stored entry at its restored logical coordinate.

    Padded zeros and entries restoring outside the shape are dropped.
    """
    inv = inverse if inverse is not None else t.restoration_map()
    if inv.dst_arity != t.shape.rank or inv.src_arity != t.physical_rank:
        raise ShapeMismatch(f"restoration map {inv} does not fit a {t.physical_rank}-level tensor "
                            f"of rank {t.shape.rank}")
    keep = t.values != 0
    cols = [t.coords[keep, k] for k in range(t.physical_rank)]
    n = int(keep.sum())
    logical = np.stack([inverse_eval(e, cols, n) for e in inv.dst_exprs], axis=1) if n else \
        np.zeros((0, t.shape.rank), dtype=np.int64)
    vals = t.values[keep]
    ext = np.asarray(t.shape.dims, dtype=np.int64)
    inside = np.all((logical >= 0) & (logical < ext), axis=1)
    logical, vals = logical[inside], vals[inside]
    out = np.zeros(t.shape.dims, dtype=np.float64)
    if len(vals):
        flat = np.ravel_multi_index(tuple(logical.T), t.shape.dims)
        if len(np.unique(flat)) != len(flat):
            u, counts = np.unique(flat, return_counts=True)
            cell = np.unravel_index(int(u[counts > 1][0]), t.shape.dims)
            raise CollisionError(f"two stored non-zeros restore to cell {tuple(int(x) for x in cell)}")
        out.reshape(-1)[flat] = vals
    return DenseTensor(t.shape, out)


def equal_dense(a: DenseTensor, b: DenseTensor, tol: float = 0.0) -> bool:
    if a.shape.dims != b.shape.dims:
        raise ShapeMismatch(f"shapes differ: {a.shape.dims} vs {b.shape.dims}")
    if a.array.size == 0:
        return True
    return bool(np.max(np.abs(a.array - b.array)) <= tol)


def tensor_for(enc: FormatEncoding, shape: TensorShape, coords: np.ndarray, values: np.ndarray,
               **flags) -> WorkingTensor:
    """Build a tensor carrying ``enc``'s structure around raw physical entries."""
    exprs = tuple(enc.exprs)
    cols = np.asarray(coords, dtype=np.int64).reshape(len(values), len(exprs))
    return WorkingTensor(
        shape=shape, coords=cols, values=values, exprs=exprs,
        bounds=tuple(level_bounds(e, shape, cols[:, k]) for k, e in enumerate(exprs)),
        trimmed=flags.get("trimmed", enc.trimmed), merged=flags.get("merged", enc.merged),
        indirect=enc.indirect_flags, bound=bound_levels(exprs),
        vector_start=flags.get("vector_start", enc.vector_start), pack=enc.layout.pack,
        partition_level=enc.layout.partition)
