"""Index expressions over logical dimension iterators.

Expressions are immutable trees.  :func:`simplify` maps every tree to a
canonical form (a sorted linear combination of atoms) so structural equality
of simplified trees is semantic equality for the affine fragment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, Sequence, Union

import numpy as np

from ..errors import NonIntegral

Number = Union[int, Fraction]


class DimExpr:
    """Base class for index expressions."""

    __slots__ = ()

    def __add__(self, other: "DimExpr | int") -> "DimExpr":
        return Add(self, _lift(other))

    def __radd__(self, other: int) -> "DimExpr":
        return Add(_lift(other), self)

    def __sub__(self, other: "DimExpr | int") -> "DimExpr":
        return Sub(self, _lift(other))

    def __rsub__(self, other: int) -> "DimExpr":
        return Sub(_lift(other), self)

    def __mul__(self, coeff: Number) -> "DimExpr":
        return Scale(Fraction(coeff), self)

    __rmul__ = __mul__

    def __neg__(self) -> "DimExpr":
        return Scale(Fraction(-1), self)

    def __floordiv__(self, divisor: int) -> "DimExpr":
        return FloorDiv(self, divisor)

    def __mod__(self, divisor: int) -> "DimExpr":
        return Mod(self, divisor)

    def __str__(self) -> str:
        return format_expr(self)


def _lift(value: "DimExpr | int") -> DimExpr:
    if isinstance(value, DimExpr):
        return value
    return Const(int(value))


@dataclass(frozen=True, eq=True)
class LogicalDim(DimExpr):
    index: int


@dataclass(frozen=True, eq=True)
class Const(DimExpr):
    value: int


@dataclass(frozen=True, eq=True)
class Scale(DimExpr):
    coeff: Fraction
    sub: DimExpr

    def __post_init__(self):
        object.__setattr__(self, "coeff", Fraction(self.coeff))


@dataclass(frozen=True, eq=True)
class Add(DimExpr):
    lhs: DimExpr
    rhs: DimExpr


@dataclass(frozen=True, eq=True)
class Sub(DimExpr):
    lhs: DimExpr
    rhs: DimExpr


@dataclass(frozen=True, eq=True)
class FloorDiv(DimExpr):
    sub: DimExpr
    divisor: int

    def __post_init__(self):
        if not isinstance(self.divisor, int) or self.divisor <= 0:
            raise ValueError(f"divisor must be a positive integer, got {self.divisor!r}")


@dataclass(frozen=True, eq=True)
class Mod(DimExpr):
    sub: DimExpr
    divisor: int

    def __post_init__(self):
        if not isinstance(self.divisor, int) or self.divisor <= 0:
            raise ValueError(f"divisor must be a positive integer, got {self.divisor!r}")


@dataclass(frozen=True, eq=True)
class Indirect(DimExpr):
    """A query-driven index; ``chain`` holds positions in the encoding's query list."""

    args: tuple[DimExpr, ...]
    chain: tuple[int, ...] = ()


def dim(i: int) -> LogicalDim:
    return LogicalDim(i)


# -- classification ---------------------------------------------------------

def children(e: DimExpr) -> tuple[DimExpr, ...]:
    if isinstance(e, (Add, Sub)):
        return (e.lhs, e.rhs)
    if isinstance(e, (Scale, FloorDiv, Mod)):
        return (e.sub,)
    if isinstance(e, Indirect):
        return e.args
    return ()


def walk(e: DimExpr):
    yield e
    for c in children(e):
        yield from walk(c)


def is_affine(e: DimExpr) -> bool:
    return not any(isinstance(n, (FloorDiv, Mod, Indirect)) for n in walk(e))


def has_indirect(e: DimExpr) -> bool:
    return any(isinstance(n, Indirect) for n in walk(e))


def dims_used(e: DimExpr) -> set[int]:
    return {n.index for n in walk(e) if isinstance(n, LogicalDim)}


def has_const(e: DimExpr) -> bool:
    return ONE in linearize(e)


def substitute(e: DimExpr, repl: Mapping[int, DimExpr] | Callable[[int], DimExpr]) -> DimExpr:
    get = repl.__getitem__ if isinstance(repl, Mapping) else repl
    if isinstance(e, LogicalDim):
        return get(e.index)
    if isinstance(e, Const):
        return e
    if isinstance(e, Scale):
        return Scale(e.coeff, substitute(e.sub, get))
    if isinstance(e, Add):
        return Add(substitute(e.lhs, get), substitute(e.rhs, get))
    if isinstance(e, Sub):
        return Sub(substitute(e.lhs, get), substitute(e.rhs, get))
    if isinstance(e, FloorDiv):
        return FloorDiv(substitute(e.sub, get), e.divisor)
    if isinstance(e, Mod):
        return Mod(substitute(e.sub, get), e.divisor)
    if isinstance(e, Indirect):
        return Indirect(tuple(substitute(a, get) for a in e.args), e.chain)
    raise TypeError(f"not an index expression: {e!r}")


# -- canonical form -----------------------------------------------------------

ONE = Const(1)  # key for the constant term of a linear form


def linearize(e: DimExpr) -> dict[DimExpr, Fraction]:
    """Linear form ``{atom: coeff}``; non-affine nodes become canonical atoms."""
    form = _linearize(e)
    _fold_tiles(form)
    return {k: v for k, v in form.items() if v != 0}


def _linearize(e: DimExpr) -> dict[DimExpr, Fraction]:
    if isinstance(e, LogicalDim):
        return {e: Fraction(1)}
    if isinstance(e, Const):
        return {ONE: Fraction(e.value)} if e.value else {}
    if isinstance(e, Scale):
        return {k: v * e.coeff for k, v in _linearize(e.sub).items()}
    if isinstance(e, (Add, Sub)):
        out = dict(_linearize(e.lhs))
        sign = 1 if isinstance(e, Add) else -1
        for k, v in _linearize(e.rhs).items():
            out[k] = out.get(k, Fraction(0)) + sign * v
        return out
    if isinstance(e, (FloorDiv, Mod)):
        if e.divisor == 1:
            return _linearize(e.sub) if isinstance(e, FloorDiv) else {}
        sub = simplify(e.sub)
        if isinstance(sub, Const):
            v = sub.value // e.divisor if isinstance(e, FloorDiv) else sub.value % e.divisor
            return {ONE: Fraction(v)} if v else {}
        if isinstance(e, FloorDiv) and isinstance(sub, FloorDiv):
            return {FloorDiv(sub.sub, sub.divisor * e.divisor): Fraction(1)}
        return {type(e)(sub, e.divisor): Fraction(1)}
    if isinstance(e, Indirect):
        return {Indirect(tuple(simplify(a) for a in e.args), e.chain): Fraction(1)}
    raise TypeError(f"not an index expression: {e!r}")


def _canonical_div(sub: DimExpr, divisor: int) -> DimExpr:
    (atom,) = _linearize(FloorDiv(sub, divisor)) or {Const(0): 0}
    return atom


def _fold_tiles(form: dict[DimExpr, Fraction]) -> None:
    changed = True
    while changed:
        changed = _fold_up(form) or _fold_down(form)


def _fold_up(form: dict[DimExpr, Fraction]) -> bool:
    # f*(e/f) + (e%f) == e
    for atom, c in list(form.items()):
        if not isinstance(atom, Mod) or c == 0:
            continue
        div = _canonical_div(atom.sub, atom.divisor)
        if form.get(div, 0) == c * atom.divisor:
            del form[atom]
            del form[div]
            for k, v in _linearize(atom.sub).items():
                form[k] = form.get(k, Fraction(0)) + c * v
            return True
    return False


def _fold_down(form: dict[DimExpr, Fraction]) -> bool:
    # e - f*(e/f) == e%f, where e may itself be a coarser tile x/(D/f)
    for atom, c in list(form.items()):
        if not isinstance(atom, FloorDiv) or c == 0:
            continue
        for f in range(2, atom.divisor + 1):
            if atom.divisor % f:
                continue
            inner = atom.divisor // f
            sub_expr = atom.sub if inner == 1 else FloorDiv(atom.sub, inner)
            sub = _linearize(sub_expr)
            k = -c / f
            if sub and atom not in sub and all(form.get(a, 0) == k * v for a, v in sub.items()):
                del form[atom]
                for a in sub:
                    del form[a]
                mod = Mod(simplify(sub_expr), f)
                form[mod] = form.get(mod, Fraction(0)) + k
                return True
    return False


def _atom_key(a: DimExpr):
    if isinstance(a, LogicalDim):
        return (0, a.index, "")
    if a == ONE:
        return (2, 0, "")
    return (1, 0, format_expr(a))


def from_linear(form: Mapping[DimExpr, Fraction]) -> DimExpr:
    terms = sorted(((a, Fraction(c)) for a, c in form.items() if c != 0), key=lambda t: _atom_key(t[0]))
    if not terms:
        return Const(0)

    def mag(atom: DimExpr, c: Fraction) -> DimExpr:
        if atom == ONE:
            return Const(int(c)) if c.denominator == 1 else Scale(c, ONE)
        return atom if c == 1 else Scale(c, atom)

    lead = next((i for i, (a, c) in enumerate(terms) if c > 0), 0)
    terms.insert(0, terms.pop(lead))
    atom, c = terms[0]
    acc = mag(atom, c) if (c > 0 or atom == ONE) else Scale(c, atom)
    for atom, c in terms[1:]:
        acc = Add(acc, mag(atom, c)) if c > 0 else Sub(acc, mag(atom, -c))
    return acc


def simplify(e: DimExpr) -> DimExpr:
    return from_linear(linearize(e))


def affine_coeffs(e: DimExpr, arity: int) -> tuple[list[Fraction], Fraction]:
    """Coefficient row over ``d0..d{arity-1}`` and the constant term."""
    row = [Fraction(0)] * arity
    const = Fraction(0)
    for atom, c in linearize(e).items():
        if isinstance(atom, LogicalDim):
            row[atom.index] = c
        elif atom == ONE:
            const = c
        else:
            raise ValueError(f"{format_expr(e)} is not affine")
    return row, const


# -- evaluation ---------------------------------------------------------------

def evaluate(e: DimExpr, point: Sequence[int]) -> int:
    """Evaluate at an integer point; non-integral intermediate scales raise."""
    v = _eval_scalar(e, point)
    if isinstance(v, Fraction):
        if v.denominator != 1:
            raise NonIntegral(f"{format_expr(e)} is not integral at {tuple(point)}")
        return int(v)
    return v


def _eval_scalar(e: DimExpr, p: Sequence[int]) -> Number:
    if isinstance(e, LogicalDim):
        return int(p[e.index])
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Scale):
        return _norm(e.coeff * _eval_scalar(e.sub, p))
    if isinstance(e, Add):
        return _norm(_eval_scalar(e.lhs, p) + _eval_scalar(e.rhs, p))
    if isinstance(e, Sub):
        return _norm(_eval_scalar(e.lhs, p) - _eval_scalar(e.rhs, p))
    if isinstance(e, FloorDiv):
        return math.floor(Fraction(_eval_scalar(e.sub, p)) / e.divisor)
    if isinstance(e, Mod):
        v = Fraction(_eval_scalar(e.sub, p))
        return _norm(v - e.divisor * math.floor(v / e.divisor))
    raise ValueError(f"cannot evaluate {format_expr(e)} without query results")


def _norm(v: Number) -> Number:
    if isinstance(v, Fraction) and v.denominator == 1:
        return int(v)
    return v


def evaluate_columns(e: DimExpr, cols: Sequence[np.ndarray]) -> np.ndarray:
    """Vectorized :func:`evaluate` over int64 coordinate columns."""
    num, den = _eval_cols(e, cols)
    if np.isscalar(num):
        n = len(cols[0]) if len(cols) else 0
        num = np.full(n, num, dtype=np.int64)
    if den != 1:
        if np.any(num % den):
            raise NonIntegral(f"{format_expr(e)} is not integral on these coordinates")
        num = num // den
    return np.asarray(num, dtype=np.int64)


def _eval_cols(e: DimExpr, cols: Sequence[np.ndarray]):
    # returns (numerator array, common positive denominator int)
    if isinstance(e, LogicalDim):
        return np.asarray(cols[e.index], dtype=np.int64), 1
    if isinstance(e, Const):
        return e.value, 1
    if isinstance(e, Scale):
        num, den = _eval_cols(e.sub, cols)
        return num * e.coeff.numerator, den * e.coeff.denominator
    if isinstance(e, (Add, Sub)):
        ln, ld = _eval_cols(e.lhs, cols)
        rn, rd = _eval_cols(e.rhs, cols)
        d = ld * rd // math.gcd(ld, rd)
        ln = ln * (d // ld)
        rn = rn * (d // rd)
        return (ln + rn if isinstance(e, Add) else ln - rn), d
    if isinstance(e, (FloorDiv, Mod)):
        num, den = _eval_cols(e.sub, cols)
        if isinstance(e, FloorDiv):
            return np.floor_divide(num, den * e.divisor), 1
        return np.mod(num, den * e.divisor), den
    raise ValueError(f"cannot evaluate {format_expr(e)} without query results")


# -- interval bounds ----------------------------------------------------------

def bounds(e: DimExpr, extents: Sequence[int]) -> tuple[int, int] | None:
    """Half-open integer range covering ``e`` over the box ``[0, extents)``.

    Returns ``None`` for expressions whose range is data dependent.
    """
    iv = _interval(simplify(e), extents)
    if iv is None:
        return None
    lo, hi = iv
    return math.floor(lo), math.floor(hi) + 1


def _interval(e: DimExpr, ext: Sequence[int]):
    if isinstance(e, LogicalDim):
        return Fraction(0), Fraction(ext[e.index] - 1)
    if isinstance(e, Const):
        return Fraction(e.value), Fraction(e.value)
    if isinstance(e, Scale):
        iv = _interval(e.sub, ext)
        if iv is None:
            return None
        a, b = e.coeff * iv[0], e.coeff * iv[1]
        return min(a, b), max(a, b)
    if isinstance(e, (Add, Sub)):
        l, r = _interval(e.lhs, ext), _interval(e.rhs, ext)
        if l is None or r is None:
            return None
        if isinstance(e, Add):
            return l[0] + r[0], l[1] + r[1]
        return l[0] - r[1], l[1] - r[0]
    if isinstance(e, FloorDiv):
        iv = _interval(e.sub, ext)
        if iv is None:
            return None
        return Fraction(math.floor(iv[0] / e.divisor)), Fraction(math.floor(iv[1] / e.divisor))
    if isinstance(e, Mod):
        iv = _interval(e.sub, ext)
        if iv is None:
            return None
        lo, hi = iv
        if lo.denominator == 1 and hi.denominator == 1 and \
                math.floor(lo / e.divisor) == math.floor(hi / e.divisor):
            return lo % e.divisor, hi % e.divisor
        return Fraction(0), Fraction(e.divisor - 1)
    return None


# -- printing -----------------------------------------------------------------

def _prec(e: DimExpr) -> int:
    if isinstance(e, (Add, Sub)):
        return 1
    if isinstance(e, (Scale, FloorDiv, Mod)):
        return 2
    if isinstance(e, Const) and e.value < 0:
        return 1
    return 3


def _coeff_text(c: Fraction) -> str:
    if c.denominator == 1:
        return str(c.numerator)
    return f"({c.numerator}/{c.denominator})"


def format_expr(e: DimExpr, names: Sequence[str] | None = None, prefix: str = "d") -> str:
    def name(i: int) -> str:
        return names[i] if names is not None else f"{prefix}{i}"

    def go(x: DimExpr) -> str:
        if isinstance(x, LogicalDim):
            return name(x.index)
        if isinstance(x, Const):
            return str(x.value)
        if isinstance(x, Scale):
            if x.coeff == -1:
                return "-" + wrap(x.sub, 3)
            return f"{_coeff_text(x.coeff)}*{wrap(x.sub, 3)}"
        if isinstance(x, Add):
            rhs = go(x.rhs)
            if rhs.startswith("-"):
                return f"{go(x.lhs)}+({rhs})"
            return f"{go(x.lhs)}+{rhs}"
        if isinstance(x, Sub):
            return f"{go(x.lhs)}-{wrap(x.rhs, 2)}"
        if isinstance(x, FloorDiv):
            return f"{wrap(x.sub, 3)}/{x.divisor}"
        if isinstance(x, Mod):
            return f"{wrap(x.sub, 3)}%{x.divisor}"
        if isinstance(x, Indirect):
            return "indirect(" + ",".join(go(a) for a in x.args) + ")"
        raise TypeError(f"not an index expression: {x!r}")

    def wrap(x: DimExpr, need: int) -> str:
        s = go(x)
        return f"({s})" if _prec(x) < need or s.startswith("-") else s

    return go(e)
