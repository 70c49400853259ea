"""Materialized storage: per-level size/idx/ptr arrays plus the value array.

``materialize`` turns a :class:`WorkingTensor` into the arrays its level flags
call for; ``rebuild`` decodes them back into an explicit-entry tensor whose
padding nodes are now stored entries with value 0.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConversionError, ContainerError
from .ir.encoding import FormatEncoding
from .ir.exprs import DimExpr
from .tensor import TensorShape, WorkingTensor


class LevelKind(enum.IntEnum):
    DENSE_SIZE = 0
    TRIMMED_IDX = 1
    MERGED_PARENT_OF_TRIMMED = 2
    DENSE_VECTOR_LEAF = 3


@dataclass(frozen=True)
class LevelAttr:
    kind: LevelKind
    merged: bool
    trimmed: bool
    bound: bool = False
    indirect: bool = False
    has_idx: bool = False
    has_ptr: bool = False

    def to_byte(self) -> int:
        return (int(self.kind) | self.trimmed << 2 | self.merged << 3 | self.bound << 4
                | self.indirect << 5 | self.has_idx << 6 | self.has_ptr << 7)

    @classmethod
    def from_byte(cls, b: int) -> "LevelAttr":
        return cls(LevelKind(b & 3), bool(b >> 3 & 1), bool(b >> 2 & 1), bool(b >> 4 & 1),
                   bool(b >> 5 & 1), bool(b >> 6 & 1), bool(b >> 7 & 1))


@dataclass
class LevelData:
    attr: LevelAttr
    lower: int
    upper: int
    idx: np.ndarray | None = None
    ptr: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.upper - self.lower

    def __eq__(self, other):
        if not isinstance(other, LevelData):
            return NotImplemented
        return (self.attr == other.attr and self.lower == other.lower and self.upper == other.upper
                and _arr_eq(self.idx, other.idx) and _arr_eq(self.ptr, other.ptr))


def _arr_eq(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return a.shape == b.shape and bool(np.array_equal(a, b))


@dataclass
class Storage:
    shape: TensorShape
    levels: list[LevelData]
    values: np.ndarray
    pack: tuple[int, int] | None = None
    partitions: list[tuple[int, int]] | None = None
    partition_level: int | None = field(default=None, compare=False)

    def __eq__(self, other):
        if not isinstance(other, Storage):
            return NotImplemented
        return (self.shape == other.shape and self.levels == other.levels
                and _arr_eq(self.values, other.values) and self.pack == other.pack
                and self.partitions == other.partitions)

    @property
    def vector_start(self) -> int | None:
        for k, lv in enumerate(self.levels):
            if lv.attr.kind is LevelKind.DENSE_VECTOR_LEAF:
                return k
        return None

    def describe(self) -> str:
        rows = []
        for k, lv in enumerate(self.levels):
            parts = []
            if lv.ptr is not None:
                parts.append(f"ptr={lv.ptr.tolist()}")
            if lv.idx is not None:
                parts.append(f"idx={lv.idx.tolist()}")
            if not parts:
                parts.append(f"size=[{lv.lower},{lv.upper})")
            rows.append(f"L{k}: " + " ".join(parts))
        rows.append(f"val={self.values.tolist()}")
        return "\n".join(rows)


# -- level roles --------------------------------------------------------------

@dataclass(frozen=True)
class LevelRoles:
    has_idx: tuple[bool, ...]
    has_ptr: tuple[bool, ...]
    expanded: tuple[bool, ...]
    dense_vector: tuple[bool, ...]


def level_roles(trimmed, merged, indirect, bound, vector_start) -> LevelRoles:
    """Which arrays each level stores.

    A level keeps explicit indices when it is trimmed, indirect, bound to an
    indirect key, or "expanded" (unmerged with a variable child, so it is
    replicated once per child).  It gets a ptr array when its node count
    varies per parent and the parent is stored once per node.
    """
    m = len(trimmed)
    var = [bool(trimmed[k] or indirect[k]) for k in range(m)]
    expanded = [k < m - 1 and not merged[k] and var[k + 1] for k in range(m)]
    has_idx = [var[k] or bool(bound[k]) or expanded[k] for k in range(m)]
    has_ptr = [k > 0 and (var[k] or expanded[k]) and not expanded[k - 1] for k in range(m)]
    dense_vector = [vector_start is not None and k >= vector_start and not has_idx[k] for k in range(m)]
    return LevelRoles(tuple(has_idx), tuple(has_ptr), tuple(expanded), tuple(dense_vector))


def level_attrs(trimmed, merged, indirect, bound, vector_start) -> list[LevelAttr]:
    roles = level_roles(trimmed, merged, indirect, bound, vector_start)
    m = len(trimmed)
    out = []
    for k in range(m):
        if roles.dense_vector[k]:
            kind = LevelKind.DENSE_VECTOR_LEAF
        elif merged[k] and k + 1 < m and roles.has_ptr[k + 1]:
            kind = LevelKind.MERGED_PARENT_OF_TRIMMED
        elif roles.has_idx[k]:
            kind = LevelKind.TRIMMED_IDX
        else:
            kind = LevelKind.DENSE_SIZE
        out.append(LevelAttr(kind, bool(merged[k]), bool(trimmed[k]), bool(bound[k]), bool(indirect[k]),
                             roles.has_idx[k], roles.has_ptr[k]))
    return out


# -- metadata tree --------------------------------------------------------------

@dataclass
class _Tree:
    """Distinct nodes per level as (parent node, coordinate) pairs."""

    parent: list[np.ndarray]
    coord: list[np.ndarray]
    leaf_of_entry: np.ndarray


def _distinct_tree(t: WorkingTensor) -> _Tree:
    n, m = t.coords.shape
    node_of = np.zeros(n, dtype=np.int64)
    n_parents = 1
    parents, coords = [], []
    empty: list = []
    for k in range(m):
        col = t.coords[:, k]
        kids: list[list[int]] = [[] for _ in range(n_parents)]
        seen = set()
        for p, c in zip(node_of.tolist(), col.tolist()):
            if (p, c) not in seen:
                seen.add((p, c))
                kids[p].append(c)
        lo, hi = t.bounds[k]
        par_out: list[int] = []
        crd_out: list[int] = []
        index: dict[tuple[int, int], int] = {}
        for p in range(n_parents):
            ks = kids[p]
            if t.trimmed[k]:
                cs = ks
            elif t.bound[k]:
                if len(ks) > 1:
                    raise ConversionError(f"level {k} is bound to an indirect key but has "
                                          f"{len(ks)} children under one parent")
                cs = ks or [lo - 1]
            else:
                out = [c for c in ks if not lo <= c < hi]
                if out:
                    raise ConversionError(f"index {out[0]} outside level {k} bounds [{lo},{hi})")
                cs = range(lo, hi) if hi > lo else empty
            for c in cs:
                index[(p, c)] = len(par_out)
                par_out.append(p)
                crd_out.append(c)
        node_of = np.array([index[(p, c)] for p, c in zip(node_of.tolist(), col.tolist())], dtype=np.int64)
        parents.append(np.array(par_out, dtype=np.int64))
        coords.append(np.array(crd_out, dtype=np.int64))
        n_parents = len(par_out)
    return _Tree(parents, coords, node_of)


def metadata_tree(t: WorkingTensor) -> list[tuple[list[int], list[int]]]:
    """Per level ``(parent positions, coordinates)`` of the metadata tree.

    Unmerged levels carry one node per path below them, so a row with three
    stored columns appears three times; a row with no children still appears
    once as a dangling node.
    """
    tree = _distinct_tree(t)
    m = t.physical_rank
    # copies[k][node] -> list of subtrees, each (coord, [child subtrees])
    children: list[list[list[int]]] = []
    for k in range(m):
        n_nodes = len(tree.coord[k])
        ch: list[list[int]] = [[] for _ in range(n_nodes)]
        if k + 1 < m:
            for i, p in enumerate(tree.parent[k + 1].tolist()):
                ch[p].append(i)
        children.append(ch)
    copies: list[list] = [None] * m  # type: ignore[list-item]
    for k in range(m - 1, -1, -1):
        lvl = []
        for node, c in enumerate(tree.coord[k].tolist()):
            below = [sub for ch in children[k][node] for sub in copies[k + 1][ch]] if k + 1 < m else []
            if t.merged[k] or k == m - 1 or not below:
                lvl.append([(c, below)])
            else:
                lvl.append([(c, [sub]) for sub in below])
        copies[k] = lvl
    roots = [sub for node_copies in copies[0] for sub in node_copies]
    out = []
    frontier = [(-1, r) for r in roots]
    while frontier and len(out) < m:
        par = [p for p, _ in frontier]
        crd = [s[0] for _, s in frontier]
        out.append((par, crd))
        frontier = [(i, child) for i, (_, s) in enumerate(frontier) for child in s[1]]
    while len(out) < m:
        out.append(([], []))
    return out


# -- materialize / rebuild -----------------------------------------------------

def materialize(t: WorkingTensor) -> Storage:
    m = t.physical_rank
    tree = _distinct_tree(t)
    attrs = level_attrs(t.trimmed, t.merged, t.indirect, t.bound, t.vector_start)
    roles = level_roles(t.trimmed, t.merged, t.indirect, t.bound, t.vector_start)

    # rep[k]: node ids at level k in storage order (replicated under expanded levels)
    rep: list[np.ndarray] = [None] * m  # type: ignore[list-item]
    rep[m - 1] = np.arange(len(tree.coord[m - 1]), dtype=np.int64)
    for k in range(m - 2, -1, -1):
        if roles.expanded[k]:
            rep[k] = tree.parent[k + 1][rep[k + 1]]
        else:
            rep[k] = np.arange(len(tree.coord[k]), dtype=np.int64)

    levels = []
    for k in range(m):
        lo, hi = t.bounds[k]
        idx = tree.coord[k][rep[k]] if roles.has_idx[k] else None
        ptr = None
        if roles.has_ptr[k]:
            n_parent = len(tree.coord[k - 1])
            counts = np.bincount(tree.parent[k][rep[k]], minlength=n_parent)
            ptr = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
        levels.append(LevelData(attrs[k], int(lo), int(hi), idx, ptr))

    n_leaves = len(tree.coord[m - 1])
    values = np.zeros(n_leaves, dtype=np.float64)
    if t.nnz:
        leaf = tree.leaf_of_entry
        if len(np.unique(leaf)) != len(leaf):
            raise ConversionError("two stored entries share one physical path")
        values[leaf] = t.values

    partitions = None
    if t.partition_level is not None:
        partitions = _partition_ranges(tree, t.partition_level, m)
    return Storage(t.shape, levels, values, t.pack, partitions, t.partition_level)


def _partition_ranges(tree: _Tree, level: int, m: int) -> list[tuple[int, int]]:
    # ancestor at `level` of every leaf; leaves are in tree order so ranges are contiguous
    anc = np.arange(len(tree.coord[m - 1]), dtype=np.int64)
    for k in range(m - 1, level, -1):
        anc = tree.parent[k][anc]
    out = []
    for node in range(len(tree.coord[level])):
        hits = np.nonzero(anc == node)[0]
        if len(hits):
            out.append((int(hits[0]), int(hits[-1]) + 1))
        else:
            start = out[-1][1] if out else 0
            out.append((start, start))
    return out


def decode_paths(st: Storage) -> np.ndarray:
    """``(n_leaves, levels)`` physical coordinates of every stored value."""
    rows = np.zeros((1, 0), dtype=np.int64)
    for k, lv in enumerate(st.levels):
        a = lv.attr
        if a.has_ptr:
            ptr, idx = lv.ptr, lv.idx
            if ptr is None or idx is None or len(ptr) != len(rows) + 1 or ptr[-1] != len(idx):
                raise ContainerError(f"level {k}: ptr array does not match its parent level")
            counts = np.diff(ptr)
            if np.any(counts < 0):
                raise ContainerError(f"level {k}: ptr array is not monotone")
            rows = np.hstack([np.repeat(rows, counts, axis=0), idx.reshape(-1, 1)])
        elif a.has_idx:
            idx = lv.idx
            if idx is None or (k > 0 and len(idx) != len(rows)):
                raise ContainerError(f"level {k}: idx array does not align with its parent level")
            if k == 0:
                rows = idx.reshape(-1, 1).copy()
            else:
                rows = np.hstack([rows, idx.reshape(-1, 1)])
        else:
            size = lv.upper - lv.lower
            rng = np.arange(lv.lower, lv.upper, dtype=np.int64)
            rows = np.hstack([np.repeat(rows, size, axis=0), np.tile(rng, len(rows)).reshape(-1, 1)])
    if len(rows) != len(st.values):
        raise ContainerError(f"{len(rows)} decoded paths but {len(st.values)} values")
    return rows


def rebuild(st: Storage, enc: FormatEncoding | None = None,
            exprs: tuple[DimExpr | None, ...] | None = None) -> WorkingTensor:
    """Decode storage into a working tensor (padding becomes explicit zeros)."""
    m = len(st.levels)
    if enc is not None:
        exprs = tuple(enc.exprs)
        if len(exprs) != m:
            raise ContainerError(f"encoding has {len(exprs)} levels, storage has {m}")
    if exprs is None:
        exprs = (None,) * m
    rows = decode_paths(st)
    attrs = [lv.attr for lv in st.levels]
    bounds = [(lv.lower, lv.upper) for lv in st.levels]
    partition_level = st.partition_level
    if partition_level is None and st.partitions is not None:
        partition_level = _infer_partition_level(st, rows)
    t = WorkingTensor(
        shape=st.shape, coords=rows, values=st.values.copy(), exprs=exprs, bounds=tuple(bounds),
        trimmed=tuple(a.trimmed for a in attrs), merged=tuple(a.merged for a in attrs),
        indirect=tuple(a.indirect for a in attrs), bound=tuple(a.bound for a in attrs),
        vector_start=st.vector_start, pack=st.pack, partition_level=partition_level)
    if enc is not None:
        t.vector_start = enc.vector_start
        t.partition_level = enc.layout.partition
    return t


def _infer_partition_level(st: Storage, rows: np.ndarray) -> int | None:
    for level in range(len(st.levels)):
        keys = rows[:, : level + 1]
        ranges = []
        start = 0
        for i in range(1, len(keys) + 1):
            if i == len(keys) or not np.array_equal(keys[i], keys[start]):
                ranges.append((start, i))
                start = i
        if [r for r in st.partitions if r[0] != r[1]] == ranges:
            return level
    return None
