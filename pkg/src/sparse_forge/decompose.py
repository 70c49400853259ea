"""Split a tensor into two disjoint parts by a per-group sum predicate.

Hybrid formats store each part in its own encoding; a BDIA/CSR hybrid keeps
dense diagonal blocks in BDIA and the scattered rest in CSR.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import QueryError
from .ir.encoding import NNZ_VALUE_MAP, HybridEncoding, QueryFunc, QuerySpec, ValueArm
from .ir.formats import named_format
from .ir.grammar import parse_index_map
from .conversion import convert, plan_conversion
from .queries import query_sum
from .tensor import WorkingTensor, from_coo


@dataclass(frozen=True)
class DecomposeRule:
    query: QuerySpec
    predicate: ValueArm
    block_params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.query.func is not QueryFunc.SUM:
            raise QueryError("decompose needs a sum query")
        if self.query.group_by is None:
            raise QueryError("decompose needs a groupBy map")


def min_sum_rule(group_by: str, threshold: int, rank: int = 2, **params) -> DecomposeRule:
    """Select groups holding at least ``threshold`` non-zeros."""
    imap = parse_index_map(group_by)
    if imap.src_arity != rank:
        raise QueryError(f"groupBy map {imap} does not take {rank} dimensions")
    q = QuerySpec(QueryFunc.SUM, group_by=imap, value_map=NNZ_VALUE_MAP)
    return DecomposeRule(q, ValueArm("be", threshold, 1), {"threshold": threshold, **params})


def bdia_rule(block: int, threshold: int) -> DecomposeRule:
    """Diagonal segments of ``block`` rows with at least ``threshold`` non-zeros."""
    return min_sum_rule(f"(d0,d1)->(d0/{block},d1-d0)", threshold, block=block)


def bell_rule(block: int, threshold: int) -> DecomposeRule:
    """``block``x``block`` tiles with at least ``threshold`` non-zeros."""
    return min_sum_rule(f"(d0,d1)->(d0/{block},d1/{block})", threshold, block=block)


def _as_coo(t: WorkingTensor) -> tuple[np.ndarray, np.ndarray]:
    logical = t.logical_coords()
    ext = np.asarray(t.shape.dims, dtype=np.int64)
    inside = np.all((logical >= 0) & (logical < ext), axis=1) if len(logical) else np.zeros(0, dtype=bool)
    identity = all(getattr(e, "index", None) == k for k, e in enumerate(t.exprs)) and \
        t.physical_rank == t.logical_rank
    keep = inside if identity else inside & (t.values != 0)
    return logical[keep], t.values[keep]


def decompose(t: WorkingTensor, rule: DecomposeRule) -> tuple[WorkingTensor, WorkingTensor]:
    """``(selected, remainder)`` COO tensors; together they hold exactly ``t``'s entries."""
    coords, values = _as_coo(t)
    base = from_coo(t.shape, coords, values)
    table = query_sum(base, rule.query)
    keys = table.group_by.apply([base.coords[:, d] for d in range(base.logical_rank)])
    keys = np.stack(keys, axis=1) if keys else np.zeros((base.nnz, 0), dtype=np.int64)
    sums = np.array([table.entries[tuple(r)] for r in keys.tolist()], dtype=np.float64)
    pick = rule.predicate.test(sums) if base.nnz else np.zeros(0, dtype=bool)
    sel = from_coo(t.shape, base.coords[pick], base.values[pick])
    rest = from_coo(t.shape, base.coords[~pick], base.values[~pick])
    return sel, rest


def decompose_hybrid(t: WorkingTensor, rule: DecomposeRule,
                     hybrid: HybridEncoding) -> list[WorkingTensor]:
    """Decompose then convert each part into its hybrid member format."""
    if len(hybrid.members) != 2:
        raise QueryError("only two-way hybrids are supported")
    parts = decompose(t, rule)
    coo = named_format("COO")
    return [convert(p, plan_conversion(coo, enc)) for p, enc in zip(parts, hybrid.members)]


def bdia_csr(block: int) -> HybridEncoding:
    return HybridEncoding((named_format("BDIA", block), named_format("CSR")))


def bell_coo(block: int) -> HybridEncoding:
    return HybridEncoding((named_format("BELL", block), named_format("COO")))


__all__ = ["DecomposeRule", "bdia_csr", "bdia_rule", "bell_coo", "bell_rule", "decompose",
           "decompose_hybrid", "min_sum_rule"]
