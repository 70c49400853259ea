"""Query primitives: sum, enumerate, reorder and schedule.

All queries see a tensor through the logical coordinates of its stored
entries, so they work on any tensor whose index map can be inverted.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingGroupBy, MissingTraverseBy, MissingWeights, QueryError, UnboundSumVal
from .ir.encoding import QueryFunc, QuerySpec
from .ir.exprs import LogicalDim
from .ir.maps import IndexMap
from .tensor import WorkingTensor

Key = tuple[int, ...]


@dataclass
class GroupTable:
    key_arity: int
    entries: dict[Key, int | float]
    order: list[Key]
    group_by: IndexMap | None = field(default=None, compare=False)

    def __getitem__(self, key: Key):
        return self.entries[key]

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, keys: np.ndarray, default: int = 0) -> np.ndarray:
        return np.array([self.entries.get(tuple(row), default) for row in keys.tolist()], dtype=np.int64)


@dataclass
class IndirectIndex:
    per_element: np.ndarray

    def __len__(self) -> int:
        return len(self.per_element)

    def tolist(self) -> list[int]:
        return self.per_element.tolist()


def _check(spec: QuerySpec, func: QueryFunc) -> None:
    if spec.func is not func:
        raise QueryError(f"expected a {func.value} query, got {spec.func.value}")


def _apply(imap: IndexMap, logical: np.ndarray) -> np.ndarray:
    if imap.src_arity != logical.shape[1]:
        raise QueryError(f"query map {imap} has arity {imap.src_arity}, tensor rank is {logical.shape[1]}")
    cols = [logical[:, d] for d in range(logical.shape[1])]
    out = imap.apply(cols)
    if not out:
        return np.zeros((len(logical), 0), dtype=np.int64)
    return np.stack(out, axis=1)


def _dense_domain(imap: IndexMap, t: WorkingTensor) -> list[Key] | None:
    if not all(isinstance(e, LogicalDim) for e in imap.dst_exprs):
        return None
    ranges = [range(t.shape[e.index]) for e in imap.dst_exprs]
    return [tuple(k) for k in itertools.product(*ranges)]


def query_sum(t: WorkingTensor, spec: QuerySpec) -> GroupTable:
    """Accumulate value-mapped entries per group.

    Groups keyed by bare logical dimensions are enumerated over the whole
    shape, so empty groups appear with 0.
    """
    _check(spec, QueryFunc.SUM)
    if spec.group_by is None:
        raise MissingGroupBy("sum needs a groupBy map")
    logical = t.logical_coords()
    keys = _apply(spec.group_by, logical)
    if spec.value_map is not None:
        contrib = spec.value_map.evaluate(t.values)
        zero: int | float = 0
    else:
        contrib = t.values
        zero = 0.0
    entries: dict[Key, int | float] = {}
    domain = _dense_domain(spec.group_by, t)
    if domain is not None:
        entries = {k: zero for k in domain}
    if len(keys):
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        sums = np.bincount(inv, weights=contrib.astype(np.float64), minlength=len(uniq))
        cast = int if spec.value_map is not None else float
        for row, s in zip(uniq.tolist(), sums.tolist()):
            entries[tuple(row)] = entries.get(tuple(row), zero) + cast(s)
    return GroupTable(spec.group_by.dst_arity, entries, sorted(entries), spec.group_by)


def query_enumerate(t: WorkingTensor, spec: QuerySpec, prior: GroupTable | None = None) -> IndirectIndex:
    """Dense rank of each entry's traverse key within its group.

    The value map gives each entry a start number; entries with different
    starts are numbered independently, so padded zeros can continue after the
    group's non-zeros via ``sumVal``.
    """
    _check(spec, QueryFunc.ENUM)
    if spec.group_by is None:
        raise MissingGroupBy("enum needs a groupBy map")
    if spec.traverse_by is None:
        raise MissingTraverseBy("enum needs a traverseBy map")
    vm = spec.value_map
    if vm is not None and vm.uses_sum_val and prior is None:
        raise UnboundSumVal("enum value map uses sumVal but no sum query precedes it")
    n = t.nnz
    if n == 0:
        return IndirectIndex(np.zeros(0, dtype=np.int64))
    logical = t.logical_coords()
    gkeys = _apply(spec.group_by, logical)
    tkeys = _apply(spec.traverse_by, logical)
    if vm is None:
        starts = np.zeros(n, dtype=np.int64)
    else:
        sum_val = None
        if vm.uses_sum_val:
            sum_val = prior.lookup(_apply(prior.group_by or spec.group_by, logical))
        starts = vm.evaluate(t.values, sum_val)
    cls_rows = np.column_stack([gkeys, starts])
    _, cls = np.unique(cls_rows, axis=0, return_inverse=True)
    cls = cls.reshape(-1)
    pairs = np.column_stack([cls, tkeys])
    uniq, inv = np.unique(pairs, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    first = np.searchsorted(uniq[:, 0], uniq[:, 0], side="left")
    asc = np.arange(len(uniq)) - first
    if spec.descending:
        last = np.searchsorted(uniq[:, 0], uniq[:, 0], side="right")
        rank = (last - first - 1) - asc
    else:
        rank = asc
    return IndirectIndex(starts + rank[inv])


def subject_keys(t: WorkingTensor, spec: QuerySpec, weights: GroupTable | None) -> np.ndarray:
    """Per-entry key used by reorder and schedule."""
    logical = t.logical_coords()
    if spec.subject is not None:
        return logical[:, [spec.subject]]
    imap = spec.group_by or (weights.group_by if weights is not None else None)
    if imap is None:
        raise MissingGroupBy(f"{spec.func.value} needs a subject dimension or a groupBy map")
    return _apply(imap, logical)


def query_reorder(t: WorkingTensor, spec: QuerySpec, weights: GroupTable | None) -> list[Key]:
    """Keys by descending weight, ties by ascending key."""
    _check(spec, QueryFunc.REORDER)
    if weights is None:
        raise MissingWeights("reorder needs the weights of a preceding sum query")
    if t.nnz:
        missing = {tuple(r) for r in subject_keys(t, spec, weights).tolist()} - set(weights.entries)
        if missing:
            raise MissingWeights(f"no weight for key {sorted(missing)[0]}")
    return sorted(weights.entries, key=lambda k: (-weights.entries[k], k))


def query_schedule(t: WorkingTensor, spec: QuerySpec, weights: GroupTable | None,
                   order: list[Key] | None = None) -> dict[Key, int]:
    """Greedy assignment of keys to the least-loaded partition (lowest id on ties)."""
    _check(spec, QueryFunc.SCHEDULE)
    if weights is None:
        raise MissingWeights("schedule needs the weights of a preceding sum query")
    visit = list(order) if order is not None else sorted(weights.entries)
    heap = [(0, p) for p in range(spec.partitions)]
    out: dict[Key, int] = {}
    for key in visit:
        load, p = heapq.heappop(heap)
        out[key] = p
        heapq.heappush(heap, (load + weights.entries.get(key, 0), p))
    return out


def partition_loads(assignment: dict[Key, int], weights: GroupTable, k: int) -> list[int | float]:
    loads: list[int | float] = [0] * k
    for key, p in assignment.items():
        loads[p] += weights.entries.get(key, 0)
    return loads
