"""Kernel specifications: einsum-style contractions with a multiply-accumulate body."""

from __future__ import annotations

import re
import string
from dataclasses import dataclass

import numpy as np

from ..errors import KernelError, RankMismatch, ShapeMismatch, UnsupportedBody
from ..ir.exprs import LogicalDim
from ..ir.maps import IndexMap
from ..ir.grammar import parse_index_map

PARALLEL = "parallel"
REDUCTION = "reduction"

_NAME = r"[A-Za-z_]\w*"
_BODY = re.compile(rf"^(?:({_NAME})=)?({_NAME})\+({_NAME}(?:\*{_NAME})*)$")


@dataclass(frozen=True)
class KernelSpec:
    """Operands are listed inputs first; the last one is the (dense) output.

    ``access[i]`` maps the shared iterators to operand ``i``'s logical
    dimensions and may only use bare iterators.
    """

    name: str
    operands: tuple[str, ...]
    access: tuple[IndexMap, ...]
    iterator_kinds: tuple[str, ...]
    body: str

    def __post_init__(self):
        n = len(self.iterator_kinds)
        if len(self.operands) != len(self.access) or len(self.operands) < 2:
            raise KernelError("need one access map per operand and at least one input")
        if len(set(self.operands)) != len(self.operands):
            raise KernelError("operand names must be distinct")
        if any(k not in (PARALLEL, REDUCTION) for k in self.iterator_kinds):
            raise KernelError(f"iterator kinds must be {PARALLEL!r} or {REDUCTION!r}")
        used = set()
        for name, m in zip(self.operands, self.access):
            if m.src_arity != n:
                raise RankMismatch(f"access map of {name} takes {m.src_arity} iterators, kernel has {n}")
            for e in m.dst_exprs:
                if not isinstance(e, LogicalDim):
                    raise UnsupportedBody(f"access map of {name} must use bare iterators, got {m}")
                used.add(e.index)
        if used != set(range(n)):
            raise KernelError(f"iterators {sorted(set(range(n)) - used)} appear in no operand")
        if any(self.iterator_kinds[e.index] != PARALLEL for e in self.access[-1].dst_exprs):
            raise KernelError("the output may only be indexed by parallel iterators")
        self.factors()

    @property
    def rank(self) -> int:
        return len(self.iterator_kinds)

    @property
    def inputs(self) -> tuple[str, ...]:
        return self.operands[:-1]

    @property
    def output(self) -> str:
        return self.operands[-1]

    def iterators_of(self, i: int) -> tuple[int, ...]:
        return tuple(e.index for e in self.access[i].dst_exprs)

    def factors(self) -> tuple[int, ...]:
        """Input positions multiplied by the body (``out + a*b*...``)."""
        m = _BODY.match(re.sub(r"\s+", "", self.body))
        if not m:
            raise UnsupportedBody(f"body {self.body!r} is not a multiply-accumulate form")
        lhs, acc, prod = m.groups()
        out = self.output
        if acc != out or (lhs is not None and lhs != out):
            raise UnsupportedBody(f"body must accumulate into {out}")
        names = prod.split("*")
        pos = {n: i for i, n in enumerate(self.inputs)}
        if any(n not in pos for n in names) or sorted(names) != sorted(self.inputs):
            raise UnsupportedBody(f"body must multiply every input exactly once: {self.body!r}")
        return tuple(pos[n] for n in names)


def make_kernel(name: str, operands: dict[str, str], iterator_kinds, body: str) -> KernelSpec:
    """Build a spec from textual access maps, e.g. ``{"A": "(d0,d1)->(d0,d1)", ...}``."""
    names = tuple(operands)
    return KernelSpec(name, names, tuple(parse_index_map(operands[n]) for n in names),
                      tuple(iterator_kinds), body)


def builtin_kernels() -> dict[str, KernelSpec]:
    return {
        "spmv": make_kernel("spmv", {"A": "(d0,d1)->(d0,d1)", "x": "(d0,d1)->(d1)", "y": "(d0,d1)->(d0)"},
                            (PARALLEL, REDUCTION), "y + A*x"),
        "spmm": make_kernel("spmm", {"A": "(d0,d1,d2)->(d0,d1)", "B": "(d0,d1,d2)->(d1,d2)",
                                     "C": "(d0,d1,d2)->(d0,d2)"},
                            (PARALLEL, REDUCTION, PARALLEL), "C + A*B"),
        "spgemm": make_kernel("spgemm", {"A": "(d0,d1,d2)->(d0,d1)", "B": "(d0,d1,d2)->(d1,d2)",
                                         "C": "(d0,d1,d2)->(d0,d2)"},
                              (PARALLEL, REDUCTION, PARALLEL), "C + A*B"),
    }


def iterator_extents(spec: KernelSpec, shapes: list[tuple[int, ...]]) -> list[int]:
    """Extents of the shared iterators from input shapes; inconsistent sizes raise."""
    ext: list[int | None] = [None] * spec.rank
    for i, shape in enumerate(shapes):
        its = spec.iterators_of(i)
        if len(shape) != len(its):
            raise RankMismatch(f"operand {spec.operands[i]} has rank {len(shape)}, access map expects {len(its)}")
        for a, d in zip(its, shape):
            if ext[a] is None:
                ext[a] = int(d)
            elif ext[a] != d:
                raise ShapeMismatch(f"iterator d{a} has extent {ext[a]} and {d}")
    if any(e is None for e in ext):
        raise ShapeMismatch("output-only iterators need an explicit output shape")
    return ext  # type: ignore[return-value]


def output_shape(spec: KernelSpec, ext: list[int]) -> tuple[int, ...]:
    return tuple(ext[a] for a in spec.iterators_of(len(spec.operands) - 1))


def dense_reference(spec: KernelSpec, operands) -> np.ndarray:
    """Plain contraction of dense inputs (the oracle for :func:`execute`)."""
    arrays = [np.asarray(getattr(a, "array", a), dtype=np.float64) for a in operands]
    if len(arrays) != len(spec.inputs):
        raise ShapeMismatch(f"{spec.name} takes {len(spec.inputs)} inputs, got {len(arrays)}")
    ext = iterator_extents(spec, [a.shape for a in arrays])
    letters = string.ascii_letters
    subs = ["".join(letters[a] for a in spec.iterators_of(i)) for i in range(len(arrays))]
    out = "".join(letters[a] for a in spec.iterators_of(len(spec.operands) - 1))
    order = spec.factors()
    res = np.einsum(",".join(subs[i] for i in order) + "->" + out, *(arrays[i] for i in order))
    return np.asarray(res, dtype=np.float64).reshape(output_shape(spec, ext))
