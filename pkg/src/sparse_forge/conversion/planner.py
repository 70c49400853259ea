"""Conversion planning: rewrite a source encoding into a target encoding.

The plan has three stages.  Index alignment brings the physical coordinates
to the target index map (de-tiling, an elementary decomposition of the affine
core, re-tiling, level permutation and indirect queries).  Structure mutation
then adjusts trim, merge and dense-vector flags.  Layout primitives come last.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

from ..errors import EncodingMismatch, NotInvertible, UnsupportedSource
from ..ir.encoding import FormatEncoding, QueryFunc
from ..ir.exprs import DimExpr, FloorDiv, Indirect, Mod, simplify
from ..ir.maps import (
    IndexMap, Matrix, identity_matrix, index_map_matrix, mat_inv, mat_mul, tile_pairs,
)
from ..tensor import WorkingTensor
from .ops import (
    ConversionOp, Devectorize, EnumQ, Fill, Merge, Pack, Partition, ReorderQ, Scale, ScheduleQ, Skew, Sort,
    Split, SumQ, Swap, TileSplit, TileUnion, Trim, Vectorize,
)


@dataclass(frozen=True)
class ConversionPlan:
    ops: tuple[ConversionOp, ...]
    src: FormatEncoding
    dst: FormatEncoding

    def __iter__(self):
        return iter(self.ops)

    def __len__(self):
        return len(self.ops)

    def lines(self) -> list[str]:
        return [str(op) for op in self.ops]

    def __str__(self) -> str:
        return "\n".join(self.lines())


# -- elementary decomposition -------------------------------------------------------

def elementary_matrix(op: ConversionOp, n: int) -> Matrix:
    """Matrix of an index operator acting on column vectors of physical indices."""
    m = [list(r) for r in identity_matrix(n)]
    if isinstance(op, Swap):
        m[op.i][op.i] = m[op.j][op.j] = Fraction(0)
        m[op.i][op.j] = m[op.j][op.i] = Fraction(1)
    elif isinstance(op, Scale):
        m[op.i][op.i] = Fraction(op.f)
    elif isinstance(op, Skew):
        m[op.j][op.i] = Fraction(op.f)
    else:
        raise TypeError(f"{op} is not an elementary index operator")
    return tuple(tuple(r) for r in m)


def ops_product(ops: Sequence[ConversionOp], n: int) -> Matrix:
    """``E_k ... E_1`` for ops applied in order ``E_1, ..., E_k``."""
    acc = identity_matrix(n)
    for op in ops:
        acc = mat_mul(elementary_matrix(op, n), acc)
    return acc


def decompose_matrix(mat: Sequence[Sequence]) -> list[ConversionOp]:
    """Swap/Scale/Skew ops whose product (in application order) equals ``mat``.

    Integer matrices are reduced by Euclidean row elimination to an upper
    triangular ``H``; ``H`` is emitted as diagonal scales followed by unit
    skews, then the inverted row operations.  Every intermediate coordinate
    stays integral for integer inputs.  Other rational matrices use plain
    Gauss-Jordan elimination.
    """
    a = [[Fraction(x) for x in row] for row in mat]
    n = len(a)
    if any(len(r) != n for r in a):
        raise NotInvertible("transformation matrix is not square")
    mat_inv(a)  # raises NotInvertible when singular
    if all(x.denominator == 1 for r in a for x in r):
        ops = _decompose_integer(a)
    else:
        ops = _decompose_rational(a)
    assert ops_product(ops, n) == tuple(tuple(r) for r in a), "decomposition does not multiply back"
    return ops


def _row_inverse(rec) -> ConversionOp:
    kind = rec[0]
    if kind == "swap":
        return Swap(rec[1], rec[2])
    if kind == "scale":
        return Scale(rec[1], 1 / Fraction(rec[2]))
    _, src, dst, f = rec  # row_dst += f * row_src
    return Skew(src, dst, -f)


def _decompose_integer(a: list[list[Fraction]]) -> list[ConversionOp]:
    n = len(a)
    m = [[int(x) for x in r] for r in a]
    rec: list[tuple] = []
    for c in range(n):
        while True:
            rows = [r for r in range(c, n) if m[r][c] != 0]
            if not rows:
                raise NotInvertible("transformation matrix is singular")
            piv = min(rows, key=lambda r: (abs(m[r][c]), m[r][c] < 0, r != c, r))
            if piv != c:
                m[c], m[piv] = m[piv], m[c]
                rec.append(("swap", c, piv))
            if m[c][c] < 0:
                m[c] = [-x for x in m[c]]
                rec.append(("scale", c, -1))
            done = True
            for r in range(c + 1, n):
                if m[r][c] != 0:
                    q = m[r][c] // m[c][c]
                    m[r] = [x - q * y for x, y in zip(m[r], m[c])]
                    rec.append(("add", c, r, Fraction(-q)))
                    if m[r][c] != 0:
                        done = False
            if done:
                break
    # m is upper triangular with a positive diagonal: H = U' D with unit upper U'
    ops: list[ConversionOp] = []
    for j in range(n):
        if m[j][j] != 1:
            ops.append(Scale(j, Fraction(m[j][j])))
    for i in range(n):
        for j in range(i + 1, n):
            if m[i][j] != 0:
                ops.append(Skew(j, i, Fraction(m[i][j], m[j][j])))
    ops.extend(_row_inverse(r) for r in reversed(rec))
    return ops


def _decompose_rational(a: list[list[Fraction]]) -> list[ConversionOp]:
    n = len(a)
    m = [row[:] for row in a]
    rec: list[tuple] = []
    for c in range(n):
        piv = next(r for r in range(c, n) if m[r][c] != 0)
        if piv != c:
            m[c], m[piv] = m[piv], m[c]
            rec.append(("swap", c, piv))
        p = m[c][c]
        if p != 1:
            m[c] = [x / p for x in m[c]]
            rec.append(("scale", c, 1 / p))
        for r in range(n):
            if r != c and m[r][c] != 0:
                f = m[r][c]
                m[r] = [x - f * y for x, y in zip(m[r], m[c])]
                rec.append(("add", c, r, -f))
    return [_row_inverse(r) for r in reversed(rec)]


# -- planning ----------------------------------------------------------------------

class _Sim:
    """Symbolic physical levels tracked while emitting index operators."""

    def __init__(self, exprs: Sequence[DimExpr]):
        self.exprs = list(exprs)
        self.ops: list[ConversionOp] = []

    def emit(self, op: ConversionOp) -> None:
        e = self.exprs
        if isinstance(op, Swap):
            e[op.i], e[op.j] = e[op.j], e[op.i]
        elif isinstance(op, Scale):
            e[op.i] = simplify(op.f * e[op.i])
        elif isinstance(op, Skew):
            e[op.j] = simplify(op.f * e[op.i] + e[op.j])
        elif isinstance(op, TileSplit):
            e[op.i:op.i + 1] = [simplify(FloorDiv(e[op.i], op.f)), simplify(Mod(e[op.i], op.f))]
        elif isinstance(op, TileUnion):
            e[op.i:op.i + 2] = [simplify(op.f * e[op.i] + e[op.i + 1])]
        self.ops.append(op)


def _target_vector(enc: FormatEncoding) -> int | None:
    return enc.vector_start


def _detile_target(exprs: Sequence[DimExpr]) -> list[DimExpr]:
    """Target core in level order: each tile pair collapses to its base at the div position."""
    pairs = tile_pairs(exprs)
    by_div = {p.div_pos: p for p in pairs}
    mods = {p.mod_pos for p in pairs}
    out = []
    for k, e in enumerate(exprs):
        if k in mods or isinstance(e, Indirect):
            continue
        out.append(by_div[k].base if k in by_div else e)
    return out


def _core_matrix(exprs: Sequence[DimExpr], rank: int) -> Matrix:
    return index_map_matrix(IndexMap(rank, tuple(exprs)))


def _align_index(src: FormatEncoding, dst: FormatEncoding) -> list[ConversionOp]:
    rank = src.logical_rank
    sim = _Sim(src.exprs)

    # de-tile the source: bring each mod next to its div, then union
    while True:
        pairs = tile_pairs(sim.exprs)
        if not pairs:
            break
        p = pairs[0]
        if p.mod_pos != p.div_pos + 1:
            sim.emit(Swap(p.div_pos + 1, p.mod_pos))
        sim.emit(TileUnion(p.div_pos, p.factor))

    dst_direct = [e for e in dst.exprs if not isinstance(e, Indirect)]
    tgt_core = _detile_target(dst_direct)
    if len(sim.exprs) != rank or len(tgt_core) != rank:
        raise NotInvertible(f"index maps must have a square affine core of rank {rank}")
    m_src = _core_matrix(sim.exprs, rank)
    m_dst = _core_matrix(tgt_core, rank)
    trans = mat_mul(m_dst, mat_inv(m_src))
    for op in decompose_matrix(trans):
        sim.emit(op)
    assert sim.exprs == [simplify(e) for e in tgt_core], (sim.exprs, tgt_core)

    # re-tile: split each target pair at its base's position
    for p in tile_pairs(dst_direct):
        pos = sim.exprs.index(p.base)
        sim.emit(TileSplit(pos, p.factor))

    # permute into target order
    for pos, want in enumerate(dst_direct):
        cur = sim.exprs.index(want, pos)
        if cur != pos:
            sim.emit(Swap(pos, cur))

    # indirect queries insert their level last
    k = dst.indirect_level
    if k is not None:
        expr = dst.exprs[k]
        for qi, q in enumerate(dst.indirect):
            last = qi == len(dst.indirect) - 1
            level = k if last else None
            if q.func is QueryFunc.SUM:
                sim.ops.append(SumQ(q))
            elif q.func is QueryFunc.ENUM:
                sim.ops.append(EnumQ(q, level, expr if last else None))
            elif q.func is QueryFunc.REORDER:
                sim.ops.append(ReorderQ(q, level, expr if last else None))
            else:
                sim.ops.append(ScheduleQ(q, level, expr if last else None))
    sim.ops.append(Sort())
    return sim.ops


def _mutation_ops(cur_trim: list[bool], cur_merge: set[int], cur_vec: int | None,
                  dst: FormatEncoding) -> list[ConversionOp]:
    ops: list[ConversionOp] = []
    m = dst.physical_rank
    tgt_trim = list(dst.trimmed)
    tgt_merge = set(dst.mutation.merge)
    tgt_vec = _target_vector(dst)

    if cur_vec is not None and (cur_vec != tgt_vec or cur_trim != tgt_trim):
        ops.append(Devectorize(cur_vec))
        cur_vec = None
    for lv in sorted(cur_merge - tgt_merge, reverse=True):
        ops.append(Split(lv))

    fill = [k for k in range(m) if cur_trim[k] and not tgt_trim[k]]
    trim = [k for k in range(m) if tgt_trim[k] and not cur_trim[k]]
    if dst.mutation.trim is not None:
        s_t, e_t = dst.mutation.trim
        below = sorted((k for k in fill if k > e_t), reverse=True)
        above = sorted(k for k in fill if k < s_t)
        fill_order = below + above
    else:
        fill_order = sorted(fill, reverse=True)
    ops.extend(Fill(k) for k in fill_order)

    cur = [k for k in range(m) if cur_trim[k]]
    s_c = min(cur) if cur else m
    trim_order = sorted((k for k in trim if k < s_c), reverse=True) + sorted(k for k in trim if k >= s_c)
    ops.extend(Trim(k) for k in trim_order)

    if tgt_vec is not None and cur_vec != tgt_vec:
        ops.append(Vectorize(tgt_vec))
    for lv in sorted(tgt_merge - cur_merge):
        ops.append(Merge(lv))
    return ops


@lru_cache(maxsize=256)
def plan_conversion(src: FormatEncoding, dst: FormatEncoding) -> ConversionPlan:
    if not src.is_invertible_source:
        raise UnsupportedSource("source formats with indirect functions or layout primitives cannot be converted")
    if src.logical_rank != dst.logical_rank:
        raise EncodingMismatch(f"rank {src.logical_rank} source cannot convert to rank {dst.logical_rank}")
    ops: list[ConversionOp] = []
    cur_trim = list(src.trimmed)
    cur_merge = set(src.mutation.merge)
    cur_vec = src.vector_start
    if src.index_map != dst.index_map:
        # normalize to fully trimmed, unmerged levels before touching indices
        if cur_vec is not None:
            ops.append(Devectorize(cur_vec))
        ops.extend(Split(lv) for lv in sorted(cur_merge, reverse=True))
        ops.extend(Trim(k) for k in range(src.physical_rank) if not cur_trim[k])
        ops.extend(_align_index(src, dst))
        cur_trim = [True] * dst.physical_rank
        cur_merge = set()
        cur_vec = None
    ops.extend(_mutation_ops(cur_trim, cur_merge, cur_vec, dst))
    if dst.layout.pack is not None:
        ops.append(Pack(*dst.layout.pack))
    if dst.layout.partition is not None:
        ops.append(Partition(dst.layout.partition))
    return ConversionPlan(tuple(ops), src, dst)


def convert(t: WorkingTensor, plan: ConversionPlan, check: bool = True) -> WorkingTensor:
    if check and not t.matches(plan.src):
        raise EncodingMismatch("tensor structure does not match the plan's source encoding")
    for op in plan.ops:
        t = op.apply(t)
    t.scratch.clear()
    return t


def convert_to(t: WorkingTensor, src: FormatEncoding, dst: FormatEncoding) -> WorkingTensor:
    return convert(t, plan_conversion(src, dst))
