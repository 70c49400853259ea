"""Conversion operators over working tensors.

Each operator is a small frozen dataclass; ``apply_op`` returns a new tensor
and never mutates its input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..errors import ConversionError, LevelOutOfRange, NonIntegralScale, VectorizeOnTrimmed
from ..ir.encoding import QuerySpec, bound_levels
from ..ir.exprs import FloorDiv, Indirect, Mod, simplify
from ..queries import query_enumerate, query_reorder, query_schedule, query_sum, subject_keys
from ..tensor import WorkingTensor, level_bounds


def _frac(f) -> str:
    f = Fraction(f)
    return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"


class ConversionOp:
    def apply(self, t: WorkingTensor) -> WorkingTensor:
        raise NotImplementedError

    def __str__(self) -> str:
        return repr(self)


def apply_op(t: WorkingTensor, op: ConversionOp) -> WorkingTensor:
    return op.apply(t)


# -- helpers -------------------------------------------------------------------

def _check_level(t: WorkingTensor, *levels: int) -> None:
    for lv in levels:
        if not 0 <= lv < t.physical_rank:
            raise LevelOutOfRange(f"level {lv} out of range for {t.physical_rank} levels")


def _no_vector(t: WorkingTensor, what: str) -> None:
    if t.vector_start is not None:
        raise ConversionError(f"{what} needs devectorized levels (vector_start={t.vector_start})")


def _direct(t: WorkingTensor, what: str, *levels: int) -> None:
    for lv in levels:
        if t.indirect[lv]:
            raise ConversionError(f"{what} cannot rewrite indirect level {lv}")


def _rebound(t: WorkingTensor) -> tuple[bool, ...]:
    if any(e is None for e in t.exprs):
        return t.bound
    return bound_levels(t.exprs)


def _bounds_from(t: WorkingTensor, k: int, fallback: tuple[int, int]) -> tuple[int, int]:
    e = t.exprs[k]
    if e is None or isinstance(e, Indirect):
        return fallback
    return level_bounds(e, t.shape)


def _scaled(col: np.ndarray, f: Fraction, what: str) -> np.ndarray:
    num = col * f.numerator
    if f.denominator != 1:
        if np.any(num % f.denominator):
            raise NonIntegralScale(f"{what}: scaling by {_frac(f)} gives non-integral coordinates")
        num = num // f.denominator
    return num


def _iv_scale(b: tuple[int, int], f: Fraction) -> tuple[int, int]:
    lo, hi = b
    if hi <= lo:
        return b
    a, c = f * lo, f * (hi - 1)
    return math.floor(min(a, c)), math.floor(max(a, c)) + 1


def _replace_at(tup: tuple, k: int, value) -> tuple:
    return tup[:k] + (value,) + tup[k + 1:]


# -- index operators -------------------------------------------------------------

@dataclass(frozen=True)
class Swap(ConversionOp):
    i: int
    j: int

    def apply(self, t):
        _check_level(t, self.i, self.j)
        perm = list(range(t.physical_rank))
        perm[self.i], perm[self.j] = perm[self.j], perm[self.i]

        def p(tup):
            return tuple(tup[k] for k in perm)

        vs = t.vector_start
        if vs is not None and (self.i >= vs) != (self.j >= vs):
            raise ConversionError("Swap would move a level across the dense-vector boundary")
        out = t.with_(coords=t.coords[:, perm], exprs=p(t.exprs), bounds=p(t.bounds), trimmed=p(t.trimmed),
                      merged=p(t.merged), indirect=p(t.indirect), bound=p(t.bound))
        out.bound = _rebound(out)
        return out

    def __repr__(self):
        return f"Swap({self.i},{self.j})"


@dataclass(frozen=True)
class Scale(ConversionOp):
    i: int
    f: Fraction

    def __post_init__(self):
        object.__setattr__(self, "f", Fraction(self.f))
        if self.f == 0:
            raise ConversionError("Scale by zero is not invertible")

    def apply(self, t):
        _check_level(t, self.i)
        _no_vector(t, "Scale")
        _direct(t, "Scale", self.i)
        coords = t.coords.copy()
        coords[:, self.i] = _scaled(coords[:, self.i], self.f, str(self))
        e = t.exprs[self.i]
        out = t.with_(coords=coords, exprs=_replace_at(t.exprs, self.i, None if e is None else simplify(self.f * e)))
        out.bounds = _replace_at(t.bounds, self.i, _bounds_from(out, self.i, _iv_scale(t.bounds[self.i], self.f)))
        out.bound = _rebound(out)
        return out

    def __repr__(self):
        return f"Scale({self.i},{_frac(self.f)})"


@dataclass(frozen=True)
class Skew(ConversionOp):
    """Column ``j`` becomes ``f * column_i + column_j``."""

    i: int
    j: int
    f: Fraction

    def __post_init__(self):
        object.__setattr__(self, "f", Fraction(self.f))
        if self.i == self.j:
            raise ConversionError("Skew needs two distinct levels")

    def apply(self, t):
        _check_level(t, self.i, self.j)
        _no_vector(t, "Skew")
        _direct(t, "Skew", self.i, self.j)
        coords = t.coords.copy()
        coords[:, self.j] = _scaled(coords[:, self.i], self.f, str(self)) + coords[:, self.j]
        ei, ej = t.exprs[self.i], t.exprs[self.j]
        new_e = None if ei is None or ej is None else simplify(self.f * ei + ej)
        out = t.with_(coords=coords, exprs=_replace_at(t.exprs, self.j, new_e))
        si = _iv_scale(t.bounds[self.i], self.f)
        bj = t.bounds[self.j]
        fallback = (si[0] + bj[0], si[1] + bj[1] - 1)
        out.bounds = _replace_at(t.bounds, self.j, _bounds_from(out, self.j, fallback))
        out.bound = _rebound(out)
        return out

    def __repr__(self):
        return f"Skew({self.i},{self.j},{_frac(self.f)})"


@dataclass(frozen=True)
class TileSplit(ConversionOp):
    """Level ``i`` becomes the adjacent pair ``(i / f, i % f)``."""

    i: int
    f: int

    def __post_init__(self):
        if int(self.f) != self.f or self.f < 1:
            raise ConversionError(f"tile factor must be a positive integer, got {self.f}")

    def apply(self, t):
        _check_level(t, self.i)
        _no_vector(t, "TileSplit")
        _direct(t, "TileSplit", self.i)
        i, f = self.i, int(self.f)
        col = t.coords[:, i]
        div = np.floor_divide(col, f)
        mod = col - div * f
        coords = np.concatenate([t.coords[:, :i], div[:, None], mod[:, None], t.coords[:, i + 1:]], axis=1)

        def dup(tup, a, b):
            return tup[:i] + (a, b) + tup[i + 1:]

        e = t.exprs[i]
        lo, hi = t.bounds[i]
        dbound = (math.floor(lo / f), math.floor((hi - 1) / f) + 1) if hi > lo else (0, 0)
        mbound = (0, f) if dbound[1] - dbound[0] != 1 else (lo - dbound[0] * f, hi - dbound[0] * f)
        out = t.with_(
            coords=coords,
            exprs=dup(t.exprs, *((None, None) if e is None else (simplify(FloorDiv(e, f)), simplify(Mod(e, f))))),
            bounds=dup(t.bounds, dbound, mbound),
            trimmed=dup(t.trimmed, t.trimmed[i], t.trimmed[i]),
            merged=dup(t.merged, t.merged[i], t.merged[i]),
            indirect=dup(t.indirect, False, False),
            bound=dup(t.bound, t.bound[i], t.bound[i]),
        )
        if t.partition_level is not None and t.partition_level > i:
            out.partition_level = t.partition_level + 1
        out.bounds = tuple(_bounds_from(out, k, b) for k, b in enumerate(out.bounds))
        out.bound = _rebound(out)
        return out

    def __repr__(self):
        return f"TileSplit({self.i},{self.f})"


@dataclass(frozen=True)
class TileUnion(ConversionOp):
    """Levels ``i, i+1`` collapse into ``f * level_i + level_{i+1}``."""

    i: int
    f: int

    def __post_init__(self):
        if int(self.f) != self.f or self.f < 1:
            raise ConversionError(f"tile factor must be a positive integer, got {self.f}")

    def apply(self, t):
        _check_level(t, self.i, self.i + 1)
        _no_vector(t, "TileUnion")
        _direct(t, "TileUnion", self.i, self.i + 1)
        i, f = self.i, int(self.f)
        inner = t.coords[:, i + 1]
        if np.any((inner < 0) | (inner >= f)):
            raise ConversionError(f"level {i + 1} holds indices outside [0,{f}); not a tile of {f}")
        merged_col = t.coords[:, i] * f + inner
        coords = np.concatenate([t.coords[:, :i], merged_col[:, None], t.coords[:, i + 2:]], axis=1)

        def one(tup, v):
            return tup[:i] + (v,) + tup[i + 2:]

        ea, eb = t.exprs[i], t.exprs[i + 1]
        e = None if ea is None or eb is None else simplify(f * ea + eb)
        (alo, ahi), (blo, bhi) = t.bounds[i], t.bounds[i + 1]
        fallback = (alo * f + blo, (ahi - 1) * f + bhi) if ahi > alo else (0, 0)
        out = t.with_(
            coords=coords, exprs=one(t.exprs, e), bounds=one(t.bounds, fallback),
            trimmed=one(t.trimmed, t.trimmed[i] or t.trimmed[i + 1]),
            merged=one(t.merged, t.merged[i + 1]),
            indirect=one(t.indirect, False), bound=one(t.bound, t.bound[i]),
        )
        if t.partition_level is not None and t.partition_level > i:
            out.partition_level = t.partition_level - 1
        out.bounds = _replace_at(out.bounds, i, _bounds_from(out, i, fallback))
        out.bound = _rebound(out)
        return out

    def __repr__(self):
        return f"TileUnion({self.i},{self.f})"


@dataclass(frozen=True)
class Sort(ConversionOp):
    """Stable lexicographic sort of entries by physical coordinates."""

    def apply(self, t):
        if t.nnz == 0:
            return t.copy()
        order = np.lexsort(t.coords.T[::-1])
        return t.with_(coords=t.coords[order], values=t.values[order])

    def __repr__(self):
        return "Sort()"


# -- mutation operators ------------------------------------------------------------

def _prefix_groups(t: WorkingTensor, level: int) -> tuple[np.ndarray, int]:
    """Group id per entry by its path through ``level``, numbered by first appearance."""
    if t.nnz == 0:
        return np.zeros(0, dtype=np.int64), 0
    prefix = t.coords[:, : level + 1]
    _, first, inv = np.unique(prefix, axis=0, return_index=True, return_inverse=True)
    inv = inv.reshape(-1)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(first))
    return rank[inv], len(first)


@dataclass(frozen=True)
class Trim(ConversionOp):
    """Drop level-``L`` subtrees whose stored values are all zero; level ``L`` becomes trimmed."""

    level: int

    def apply(self, t):
        _check_level(t, self.level)
        vs = t.vector_start
        if vs is not None and self.level >= vs:
            raise VectorizeOnTrimmed(f"cannot trim level {self.level} inside dense vectors starting at {vs}")
        group, n_groups = _prefix_groups(t, self.level)
        live = np.zeros(n_groups, dtype=bool)
        if t.nnz:
            np.logical_or.at(live, group, t.values != 0)
        keep = live[group] if t.nnz else np.zeros(0, dtype=bool)
        return t.with_(coords=t.coords[keep], values=t.values[keep],
                       trimmed=_replace_at(t.trimmed, self.level, True))

    def __repr__(self):
        return f"Trim({self.level})"


@dataclass(frozen=True)
class Fill(ConversionOp):
    """Level ``L`` holds every index of its bounds under each parent (padding is implicit)."""

    level: int

    def apply(self, t):
        _check_level(t, self.level)
        return t.with_(trimmed=_replace_at(t.trimmed, self.level, False))

    def __repr__(self):
        return f"Fill({self.level})"


@dataclass(frozen=True)
class Merge(ConversionOp):
    """Fuse equal paths through level ``L``: entries are grouped by that prefix."""

    level: int

    def apply(self, t):
        _check_level(t, self.level)
        group, _ = _prefix_groups(t, self.level)
        order = np.argsort(group, kind="stable")
        return t.with_(coords=t.coords[order], values=t.values[order],
                       merged=_replace_at(t.merged, self.level, True))

    def __repr__(self):
        return f"Merge({self.level})"


@dataclass(frozen=True)
class Split(ConversionOp):
    level: int

    def apply(self, t):
        _check_level(t, self.level)
        return t.with_(merged=_replace_at(t.merged, self.level, False))

    def __repr__(self):
        return f"Split({self.level})"


@dataclass(frozen=True)
class Vectorize(ConversionOp):
    """Levels ``L..end`` become fixed-stride dense value blocks."""

    level: int

    def apply(self, t):
        _check_level(t, self.level)
        if t.vector_start is not None:
            raise ConversionError(f"already vectorized from level {t.vector_start}")
        bad = [k for k in range(self.level, t.physical_rank) if t.trimmed[k] or t.indirect[k]]
        if bad:
            raise VectorizeOnTrimmed(f"level {bad[0]} is trimmed or indirect; dense vectors need dense levels")
        return t.with_(vector_start=self.level)

    def __repr__(self):
        return f"Vectorize({self.level})"


@dataclass(frozen=True)
class Devectorize(ConversionOp):
    level: int

    def apply(self, t):
        _check_level(t, self.level)
        if t.vector_start != self.level:
            raise ConversionError(f"no dense vectors start at level {self.level}")
        return t.with_(vector_start=None)

    def __repr__(self):
        return f"Devectorize({self.level})"


# -- query operators ---------------------------------------------------------------

def _insert_level(t: WorkingTensor, level: int, column: np.ndarray, expr: Indirect,
                  bounds: tuple[int, int]) -> WorkingTensor:
    if not 0 <= level <= t.physical_rank:
        raise LevelOutOfRange(f"cannot insert level {level} into {t.physical_rank} levels")
    _no_vector(t, "inserting an indirect level")
    coords = np.concatenate([t.coords[:, :level], column.reshape(-1, 1).astype(np.int64), t.coords[:, level:]],
                            axis=1)

    def ins(tup, v):
        return tup[:level] + (v,) + tup[level:]

    out = t.with_(coords=coords, exprs=ins(t.exprs, expr), bounds=ins(t.bounds, bounds),
                  trimmed=ins(t.trimmed, True), merged=ins(t.merged, False), indirect=ins(t.indirect, True),
                  bound=ins(t.bound, False))
    if t.partition_level is not None and t.partition_level >= level:
        out.partition_level = t.partition_level + 1
    out.bound = _rebound(out)
    return out


def _data_bounds(col: np.ndarray) -> tuple[int, int]:
    if len(col) == 0:
        return (0, 0)
    return (min(0, int(col.min())), int(col.max()) + 1)


@dataclass(frozen=True)
class SumQ(ConversionOp):
    spec: QuerySpec

    def apply(self, t):
        out = t.with_()
        out.scratch["sum"] = query_sum(t, self.spec)
        return out

    def __repr__(self):
        return "Sum()"


@dataclass(frozen=True)
class EnumQ(ConversionOp):
    spec: QuerySpec
    level: int | None = None
    expr: Indirect | None = None

    def apply(self, t):
        idx = query_enumerate(t, self.spec, t.scratch.get("sum")).per_element
        if self.level is None:
            out = t.with_()
            out.scratch["enum"] = idx
            return out
        return _insert_level(t, self.level, idx, self.expr, _data_bounds(idx))

    def __repr__(self):
        return f"Enumerate({'' if self.level is None else self.level})"


@dataclass(frozen=True)
class ReorderQ(ConversionOp):
    spec: QuerySpec
    level: int | None = None
    expr: Indirect | None = None

    def apply(self, t):
        weights = t.scratch.get("sum")
        order = query_reorder(t, self.spec, weights)
        if self.level is None:
            out = t.with_()
            out.scratch["order"] = order
            return out
        pos = {k: i for i, k in enumerate(order)}
        keys = subject_keys(t, self.spec, weights)
        col = np.array([pos[tuple(r)] for r in keys.tolist()], dtype=np.int64)
        return _insert_level(t, self.level, col, self.expr, (0, max(len(order), 1)))

    def __repr__(self):
        return f"Reorder({'' if self.level is None else self.level})"


@dataclass(frozen=True)
class ScheduleQ(ConversionOp):
    spec: QuerySpec
    level: int | None = None
    expr: Indirect | None = None

    def apply(self, t):
        weights = t.scratch.get("sum")
        assign = query_schedule(t, self.spec, weights, t.scratch.get("order"))
        if self.level is None:
            out = t.with_()
            out.scratch["schedule"] = assign
            return out
        keys = subject_keys(t, self.spec, weights)
        col = np.array([assign[tuple(r)] for r in keys.tolist()], dtype=np.int64)
        return _insert_level(t, self.level, col, self.expr, (0, self.spec.partitions))

    def __repr__(self):
        return f"Schedule({'' if self.level is None else self.level})"


# -- layout operators --------------------------------------------------------------

@dataclass(frozen=True)
class Pack(ConversionOp):
    start: int
    end: int

    def apply(self, t):
        _check_level(t, self.start, self.end)
        return t.with_(pack=(self.start, self.end))

    def __repr__(self):
        return f"Pack({self.start},{self.end})"


@dataclass(frozen=True)
class Partition(ConversionOp):
    level: int

    def apply(self, t):
        _check_level(t, self.level)
        return t.with_(partition_level=self.level)

    def __repr__(self):
        return f"Partition({self.level})"


INVERSE_PAIRS = (
    ("Swap", "Swap"), ("Scale", "Scale"), ("Skew", "Skew"), ("TileSplit", "TileUnion"),
    ("Trim", "Fill"), ("Merge", "Split"), ("Vectorize", "Devectorize"),
)
