"""Format encodings: an index map plus mutation, query and layout primitives."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..errors import SemanticError, UnboundSumVal
from .exprs import DimExpr, Indirect
from .maps import IndexMap

SUM_VAL = "sumVal"

_CMP = {
    "ne": np.not_equal,
    "eq": np.equal,
    "bt": np.greater,
    "be": np.greater_equal,
    "lt": np.less,
    "le": np.less_equal,
}


@dataclass(frozen=True)
class ValueArm:
    cond: str
    threshold: float
    result: int | str = 0

    def __post_init__(self):
        if self.cond not in _CMP:
            raise SemanticError(f"unknown condition {self.cond!r}")
        if isinstance(self.result, str) and self.result != SUM_VAL:
            raise SemanticError(f"unknown value-map result {self.result!r}")

    def test(self, values: np.ndarray) -> np.ndarray:
        return _CMP[self.cond](values, self.threshold)


@dataclass(frozen=True)
class ValueMapSpec:
    """Ordered ``cond -> result`` arms with a mandatory ``otherwise``."""

    arms: tuple[ValueArm, ...]
    otherwise: int | str = 0

    @property
    def uses_sum_val(self) -> bool:
        return self.otherwise == SUM_VAL or any(a.result == SUM_VAL for a in self.arms)

    def evaluate(self, values: np.ndarray, sum_val: np.ndarray | None = None) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if self.uses_sum_val and sum_val is None:
            raise UnboundSumVal("value map uses sumVal but no sum query precedes it")
        out = self._resolve(self.otherwise, values, sum_val)
        decided = np.zeros(values.shape, dtype=bool)
        for arm in self.arms:
            hit = arm.test(values) & ~decided
            out = np.where(hit, self._resolve(arm.result, values, sum_val), out)
            decided |= hit
        return out.astype(np.int64)

    @staticmethod
    def _resolve(result, values, sum_val):
        if result == SUM_VAL:
            return np.asarray(sum_val, dtype=np.int64)
        return np.full(values.shape, int(result), dtype=np.int64)


NNZ_VALUE_MAP = ValueMapSpec((ValueArm("ne", 0, 1),), 0)


class QueryFunc(enum.Enum):
    SUM = "sum"
    ENUM = "enum"
    REORDER = "reorder"
    SCHEDULE = "schedule"


@dataclass(frozen=True)
class QuerySpec:
    func: QueryFunc
    group_by: IndexMap | None = None
    traverse_by: IndexMap | None = None
    value_map: ValueMapSpec | None = None
    subject: int | None = None
    partitions: int = 2
    descending: bool = False

    def __post_init__(self):
        if self.partitions < 1:
            raise SemanticError("partitions must be at least 1")


@dataclass(frozen=True)
class MutationSpec:
    trim: tuple[int, int] | None = None
    merge: frozenset[int] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "merge", frozenset(self.merge))
        if self.trim is not None:
            s, e = self.trim
            if s > e:
                raise SemanticError(f"trim start {s} exceeds end {e}", token=f"trim({s},{e})")
            if s < 0:
                raise SemanticError("trim levels must be non-negative", token=f"trim({s},{e})")

    def is_trimmed(self, level: int) -> bool:
        return self.trim is not None and self.trim[0] <= level <= self.trim[1]


@dataclass(frozen=True)
class LayoutSpec:
    pack: tuple[int, int] | None = None
    partition: int | None = None

    def __post_init__(self):
        if self.pack is not None and self.pack[0] > self.pack[1]:
            raise SemanticError(f"pack start {self.pack[0]} exceeds end {self.pack[1]}")

    @property
    def empty(self) -> bool:
        return self.pack is None and self.partition is None


def bound_levels(exprs: Sequence[DimExpr | None]) -> tuple[bool, ...]:
    """Levels whose expression repeats an argument of an earlier indirect level.

    Such a level holds exactly the coordinate that keyed the query, one per
    parent, so it is stored as an explicit index even when untrimmed.
    """
    out = []
    for k, e in enumerate(exprs):
        hit = False
        for j in range(k):
            ind = exprs[j]
            if isinstance(ind, Indirect) and e in ind.args:
                hit = True
        out.append(hit)
    return tuple(out)


@dataclass(frozen=True)
class FormatEncoding:
    index_map: IndexMap
    mutation: MutationSpec = MutationSpec()
    indirect: tuple[QuerySpec, ...] = ()
    layout: LayoutSpec = LayoutSpec()
    name: str | None = field(default=None, compare=False)

    def __post_init__(self):
        m = self.index_map.dst_arity
        n = self.index_map.src_arity
        object.__setattr__(self, "indirect", tuple(self.indirect))
        mut, lay = self.mutation, self.layout
        if mut.trim is not None and mut.trim[1] >= m:
            raise SemanticError(f"trim level {mut.trim[1]} out of range for {m} levels",
                                token=f"trim({mut.trim[0]},{mut.trim[1]})")
        for lv in sorted(mut.merge):
            if not 0 <= lv < m:
                raise SemanticError(f"merge level {lv} out of range for {m} levels", token=f"merge({lv})")
        if lay.pack is not None and not (0 <= lay.pack[0] and lay.pack[1] < m):
            raise SemanticError(f"pack range {lay.pack} out of range for {m} levels")
        if lay.partition is not None and not 0 <= lay.partition < m:
            raise SemanticError(f"partition level {lay.partition} out of range for {m} levels")

        positions = [k for k, e in enumerate(self.index_map.dst_exprs) if isinstance(e, Indirect)]
        if len(positions) > 1:
            raise SemanticError("at most one indirect level is supported per index map")
        if positions and not self.indirect:
            raise SemanticError("indirect() level has no query chain", token="indirect")
        if self.indirect and not positions:
            raise SemanticError("query chain given but the index map has no indirect() level")
        for q in self.indirect:
            for imap in (q.group_by, q.traverse_by):
                if imap is not None and imap.src_arity != n:
                    raise SemanticError(
                        f"query map {imap} has arity {imap.src_arity}, tensor rank is {n}")
            if q.subject is not None and not 0 <= q.subject < n:
                raise SemanticError(f"query subject d{q.subject} out of range")
        if self.indirect:
            last = self.indirect[-1]
            if last.func is QueryFunc.SUM:
                raise SemanticError("an indirect chain must end with enum, reorder or schedule")
            chain = tuple(range(len(self.indirect)))
            exprs = list(self.index_map.dst_exprs)
            k = positions[0]
            exprs[k] = Indirect(exprs[k].args, chain)
            object.__setattr__(self, "index_map", IndexMap(n, tuple(exprs)))

    # -- derived facts --------------------------------------------------------
    @property
    def logical_rank(self) -> int:
        return self.index_map.src_arity

    @property
    def physical_rank(self) -> int:
        return self.index_map.dst_arity

    @property
    def exprs(self) -> tuple[DimExpr, ...]:
        return self.index_map.dst_exprs

    @property
    def is_invertible_source(self) -> bool:
        return not self.indirect and self.layout.empty

    @property
    def indirect_level(self) -> int | None:
        for k, e in enumerate(self.exprs):
            if isinstance(e, Indirect):
                return k
        return None

    @property
    def trimmed(self) -> tuple[bool, ...]:
        return tuple(self.mutation.is_trimmed(k) for k in range(self.physical_rank))

    @property
    def merged(self) -> tuple[bool, ...]:
        return tuple(k in self.mutation.merge for k in range(self.physical_rank))

    @property
    def indirect_flags(self) -> tuple[bool, ...]:
        return tuple(isinstance(e, Indirect) for e in self.exprs)

    @property
    def bound(self) -> tuple[bool, ...]:
        return bound_levels(self.exprs)

    @property
    def vector_start(self) -> int | None:
        """First level of fixed-stride dense value blocks, if any."""
        trim = self.mutation.trim
        if trim is None or trim[1] + 1 >= self.physical_rank:
            return None
        return trim[1] + 1

    def renamed(self, name: str | None) -> "FormatEncoding":
        return replace(self, name=name)

    def __str__(self) -> str:
        from .grammar import format_encoding
        return format_encoding(self)


@dataclass(frozen=True)
class HybridEncoding:
    members: tuple[FormatEncoding, ...]

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if not self.members:
            raise SemanticError("a hybrid encoding needs at least one member")
        ranks = {m.logical_rank for m in self.members}
        if len(ranks) != 1:
            raise SemanticError(f"hybrid members disagree on logical rank: {sorted(ranks)}")
