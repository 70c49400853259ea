"""Index maps and their rational-matrix algebra."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from ..errors import AffineConstant, NonAffine, NotInvertible
from .exprs import (
    DimExpr, FloorDiv, Indirect, LogicalDim, Mod, ONE, affine_coeffs, dims_used, evaluate_columns,
    format_expr, from_linear, has_indirect, is_affine, linearize, simplify, substitute, walk,
)

Matrix = tuple[tuple[Fraction, ...], ...]


@dataclass(frozen=True)
class IndexMap:
    """``(d0..d{src_arity-1}) -> (dst_exprs)``; expressions are stored simplified."""

    src_arity: int
    dst_exprs: tuple[DimExpr, ...]

    def __post_init__(self):
        if self.src_arity < 1:
            raise ValueError("an index map needs at least one source dimension")
        exprs = tuple(simplify(e) for e in self.dst_exprs)
        for e in exprs:
            bad = [i for i in dims_used(e) if i >= self.src_arity]
            if bad:
                raise ValueError(f"dimension d{bad[0]} out of range for arity {self.src_arity}")
            for node in walk(e):
                if isinstance(node, Indirect) and node is not e:
                    raise ValueError("indirect() is only allowed as a whole destination expression")
                if isinstance(node, Indirect) and any(has_indirect(a) for a in node.args):
                    raise ValueError("indirect() arguments must be direct expressions")
        object.__setattr__(self, "dst_exprs", exprs)

    @classmethod
    def identity(cls, n: int) -> "IndexMap":
        return cls(n, tuple(LogicalDim(i) for i in range(n)))

    @property
    def dst_arity(self) -> int:
        return len(self.dst_exprs)

    @property
    def is_direct(self) -> bool:
        return not any(has_indirect(e) for e in self.dst_exprs)

    @property
    def is_affine(self) -> bool:
        return all(is_affine(e) for e in self.dst_exprs)

    def apply(self, cols: Sequence[np.ndarray]) -> list[np.ndarray]:
        return [evaluate_columns(e, cols) for e in self.dst_exprs]

    def format(self, src: str = "d") -> str:
        lhs = ",".join(f"{src}{i}" for i in range(self.src_arity))
        rhs = ",".join(format_expr(e, prefix=src) for e in self.dst_exprs)
        return f"({lhs})->({rhs})"

    def __str__(self) -> str:
        return self.format()


# -- rational matrices --------------------------------------------------------

def identity_matrix(n: int) -> Matrix:
    return tuple(tuple(Fraction(int(i == j)) for j in range(n)) for i in range(n))


def mat_mul(a: Sequence[Sequence[Fraction]], b: Sequence[Sequence[Fraction]]) -> Matrix:
    if a and len(a[0]) != len(b):
        raise ValueError("matrix shapes do not compose")
    cols = len(b[0]) if b else 0
    return tuple(
        tuple(sum((Fraction(row[k]) * b[k][j] for k in range(len(b))), Fraction(0)) for j in range(cols))
        for row in a
    )


def mat_inv(a: Sequence[Sequence[Fraction]]) -> Matrix:
    n = len(a)
    if any(len(r) != n for r in a):
        raise NotInvertible(f"matrix is not square ({n}x{len(a[0]) if a else 0})")
    m = [[Fraction(x) for x in r] + [Fraction(int(i == j)) for j in range(n)] for i, r in enumerate(a)]
    for c in range(n):
        piv = next((r for r in range(c, n) if m[r][c] != 0), None)
        if piv is None:
            raise NotInvertible("matrix is singular")
        m[c], m[piv] = m[piv], m[c]
        p = m[c][c]
        m[c] = [x / p for x in m[c]]
        for r in range(n):
            if r != c and m[r][c] != 0:
                f = m[r][c]
                m[r] = [x - f * y for x, y in zip(m[r], m[c])]
    return tuple(tuple(r[n:]) for r in m)


def index_map_matrix(imap: IndexMap) -> Matrix:
    """Row ``j`` holds the coefficients of destination expression ``j``."""
    rows = []
    for e in imap.dst_exprs:
        if not is_affine(e):
            raise NonAffine(f"{format_expr(e)} contains div, mod or indirect")
        row, const = affine_coeffs(e, imap.src_arity)
        if const != 0:
            raise AffineConstant(f"{format_expr(e)} has an additive constant")
        rows.append(tuple(row))
    return tuple(rows)


def compose(outer: IndexMap, inner: IndexMap) -> IndexMap:
    """``outer ∘ inner``: apply ``inner`` first."""
    if outer.src_arity != inner.dst_arity:
        raise ValueError(f"cannot compose arity {outer.src_arity} after {inner.dst_arity} outputs")
    return IndexMap(inner.src_arity, tuple(substitute(e, inner.dst_exprs.__getitem__)
                                           for e in outer.dst_exprs))


# -- inversion ----------------------------------------------------------------

@dataclass(frozen=True)
class TilePair:
    div_pos: int
    mod_pos: int
    base: DimExpr
    factor: int


def tile_pairs(exprs: Sequence[DimExpr]) -> list[TilePair]:
    """Matched ``(e/f, e%f)`` pairs; raises on an unmatched div or mod."""
    divs: dict[tuple[DimExpr, int], int] = {}
    mods: dict[tuple[DimExpr, int], int] = {}
    for pos, e in enumerate(exprs):
        if isinstance(e, FloorDiv):
            divs[(e.sub, e.divisor)] = pos
        elif isinstance(e, Mod):
            mods[(e.sub, e.divisor)] = pos
        elif isinstance(e, Indirect):
            continue
        elif not is_affine(e):
            raise NotInvertible(f"{format_expr(e)} mixes div/mod with other arithmetic")
    if set(divs) != set(mods):
        odd = sorted(set(divs) ^ set(mods), key=str)[0]
        raise NotInvertible(f"unmatched tile of {format_expr(odd[0])} by {odd[1]}")
    pairs = []
    for key, dpos in sorted(divs.items(), key=lambda kv: kv[1]):
        base, f = key
        if not is_affine(base):
            raise NotInvertible(f"nested tiling of {format_expr(base)} is not invertible")
        pairs.append(TilePair(dpos, mods[key], base, f))
    return pairs


def core_exprs(exprs: Sequence[DimExpr]) -> tuple[list[DimExpr], list[DimExpr]]:
    """Affine core of a map plus the matching physical-side expressions.

    Each tile pair collapses to its base expression ``e`` on the logical side and
    ``f*e_div + e_mod`` on the physical side; indirect levels are skipped.
    """
    pairs = tile_pairs(exprs)
    by_div = {p.div_pos: p for p in pairs}
    mod_pos = {p.mod_pos for p in pairs}
    logical, physical = [], []
    for pos, e in enumerate(exprs):
        if isinstance(e, Indirect) or pos in mod_pos:
            continue
        if pos in by_div:
            p = by_div[pos]
            logical.append(p.base)
            physical.append(simplify(p.factor * LogicalDim(p.div_pos) + LogicalDim(p.mod_pos)))
        else:
            logical.append(e)
            physical.append(LogicalDim(pos))
    return logical, physical


def invert_exprs(exprs: Sequence[DimExpr], src_arity: int) -> IndexMap:
    logical, physical = core_exprs(exprs)
    if len(logical) != src_arity:
        raise NotInvertible(
            f"affine core has {len(logical)} expressions for {src_arity} logical dimensions")
    core = IndexMap(src_arity, tuple(logical))
    try:
        inv = mat_inv(index_map_matrix(core))
    except NonAffine as exc:
        raise NotInvertible(str(exc)) from exc
    out = []
    for row in inv:
        form: dict[DimExpr, Fraction] = {}
        for coeff, phys in zip(row, physical):
            for atom, c in linearize(phys).items():
                form[atom] = form.get(atom, Fraction(0)) + coeff * c
        out.append(from_linear(form))
    return IndexMap(len(exprs), tuple(out))


def invert_map(imap: IndexMap) -> IndexMap:
    """Restoration map: physical coordinates ``(e0..em)`` to logical ``(d0..dn)``."""
    return invert_exprs(imap.dst_exprs, imap.src_arity)


def maps_equal(a: IndexMap, b: IndexMap) -> bool:
    return a.src_arity == b.src_arity and a.dst_exprs == b.dst_exprs


__all__ = [
    "IndexMap", "Matrix", "TilePair", "compose", "core_exprs", "identity_matrix", "index_map_matrix",
    "invert_exprs", "invert_map", "mat_inv", "mat_mul", "maps_equal", "tile_pairs", "ONE",
]
