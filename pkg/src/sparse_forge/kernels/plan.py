"""Iteration plans for kernels over encoded operands, and their interpreter.

A plan is a list of steps.  Each step turns a batch of partial iteration
points (numpy columns holding operand positions, physical coordinates and
shared iterator values) into a larger or smaller batch; the body then
accumulates products into the dense output in batch order, which is the
order a nested loop would visit the same points.

With ``optimize=False`` every level of every sparse operand is walked on its
own and every dense operand dimension gets its own loop, tied together by
equality guards.  The optimized plan fuses levels stored one-to-one with
their parent into a single positional loop, locates dense levels directly,
co-iterates sorted index levels that share an iterator expression, and
reads dense operands at the restored logical indices instead of looping
over them.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import EncodingMismatch, RankMismatch, ShapeMismatch, UnsortedOperand
from ..ir.encoding import FormatEncoding
from ..ir.exprs import DimExpr, Indirect, LogicalDim, dims_used, evaluate_columns, format_expr, simplify, substitute
from ..ir.maps import invert_exprs
from ..storage import Storage, level_roles, materialize
from ..tensor import DenseTensor, WorkingTensor, to_dense
from .spec import KernelSpec, iterator_extents, output_shape

CHUNK = 8192

Frontier = dict[str, np.ndarray]


# -- plan structure -------------------------------------------------------------

@dataclass(frozen=True)
class Restore:
    """Recover logical dim ``dim`` of operand ``op`` and bind or check its iterator."""

    op: int
    dim: int
    expr: DimExpr
    iterator: int
    bind: bool


@dataclass(frozen=True)
class OperandInfo:
    index: int
    name: str
    encoding: FormatEncoding | None
    iterators: tuple[int, ...]
    level_exprs: tuple[DimExpr, ...] = ()
    inverse: tuple[DimExpr, ...] = ()
    has_idx: tuple[bool, ...] = ()
    has_ptr: tuple[bool, ...] = ()
    expanded: tuple[bool, ...] = ()

    @property
    def dense(self) -> bool:
        return self.encoding is None

    @property
    def levels(self) -> int:
        return len(self.level_exprs)

    def one_to_one(self, k: int) -> bool:
        return k > 0 and self.has_idx[k] and not self.has_ptr[k]

    def searchable(self, k: int) -> bool:
        return self.has_idx[k] and not self.one_to_one(k) and not self.expanded[k]

    def storage_name(self, k: int) -> str:
        if not self.has_idx[k]:
            return "size"
        return "ptr/idx" if self.has_ptr[k] else "idx"


def _it(a: int) -> str:
    return f"d{a}"


def _expr_text(e: DimExpr) -> str:
    return format_expr(e)


class Step:
    restores: tuple[Restore, ...] = ()

    def run(self, f: Frontier, rt: "_Runtime") -> Frontier:
        raise NotImplementedError

    def describe(self, ops: list[OperandInfo]) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class LevelLoop(Step):
    op: int
    levels: tuple[int, ...]
    restores: tuple[Restore, ...] = ()

    def run(self, f, rt):
        k0 = self.levels[0]
        rep, child, coord = rt.view(self.op, k0).children(f[_pos(self.op)])
        f = _take(f, rep)
        f[_pos(self.op)] = child
        f[_phys(self.op, k0)] = coord
        for k in self.levels[1:]:
            f[_phys(self.op, k)] = rt.view(self.op, k).idx[child]
        return _restore(f, rt, self.restores)

    def describe(self, ops):
        o = ops[self.op]
        lv = ",".join(f"L{k}" for k in self.levels)
        kind = "+".join(o.storage_name(k) for k in self.levels)
        head = "fused loop" if len(self.levels) > 1 else "loop"
        return f"{head} {o.name}.{lv} [{kind}] over {', '.join(_expr_text(o.level_exprs[k]) for k in self.levels)}"


@dataclass(frozen=True)
class CoIterate(Step):
    """Walk ``lead`` (unless it is already bound) and find the matching index in ``follow``.

    ``follow`` is a sorted index level; matches are found by a merge over the
    two ascending streams, so only coordinates present in both survive.
    """

    follow: tuple[int, int]
    expr: DimExpr
    lead: tuple[int, int] | None = None
    partner: tuple[int, int] | None = None
    restores: tuple[Restore, ...] = ()

    def run(self, f, rt):
        fo, fk = self.follow
        view_f = rt.view(fo, fk)
        view_f.check_sorted()
        if self.lead is not None:
            lo, lk = self.lead
            view_l = rt.view(lo, lk)
            view_l.check_sorted()
            rep, child, coord = view_l.children(f[_pos(lo)])
            f = _take(f, rep)
            f[_pos(lo)] = child
            f[_phys(lo, lk)] = coord
            rest = [r for r in self.restores if r.op == lo]
            f = _restore(f, rt, rest)
        else:
            coord = evaluate_columns(self.expr, rt.iterator_cols(f))
        found = view_f.find(f[_pos(fo)], coord)
        keep = found >= 0
        f = _filter(f, keep)
        f[_pos(fo)] = found[keep]
        f[_phys(fo, fk)] = coord[keep]
        rest = [r for r in self.restores if self.lead is None or r.op != self.lead[0]]
        return _restore(f, rt, rest)

    def describe(self, ops):
        fo, fk = self.follow
        other = self.lead or self.partner
        with_ = f" with {ops[other[0]].name}.L{other[1]}" if other else ""
        return f"co-iterate {ops[fo].name}.L{fk} [{ops[fo].storage_name(fk)}]{with_} on {_expr_text(self.expr)}"


@dataclass(frozen=True)
class Locate(Step):
    """Index a dense level directly from already bound iterators."""

    op: int
    level: int
    expr: DimExpr
    restores: tuple[Restore, ...] = ()

    def run(self, f, rt):
        coord = evaluate_columns(self.expr, rt.iterator_cols(f))
        found = rt.view(self.op, self.level).find(f[_pos(self.op)], coord)
        keep = found >= 0
        f = _filter(f, keep)
        f[_pos(self.op)] = found[keep]
        f[_phys(self.op, self.level)] = coord[keep]
        return _restore(f, rt, self.restores)

    def describe(self, ops):
        return f"locate {ops[self.op].name}.L{self.level} [size] at {_expr_text(self.expr)}"


@dataclass(frozen=True)
class DenseLoop(Step):
    """Loop over a full iterator range (a free iterator, or one dense operand dimension)."""

    iterator: int
    bind: bool
    op: int | None = None
    dim: int | None = None

    def run(self, f, rt):
        n = rt.extents[self.iterator]
        rows = _rows(f)
        rep = np.repeat(np.arange(rows), n)
        vals = np.tile(np.arange(n, dtype=np.int64), rows)
        f = _take(f, rep)
        if self.bind:
            f[_it(self.iterator)] = vals
            return f
        f = _filter(f, f[_it(self.iterator)] == vals)
        return f

    def describe(self, ops):
        what = f"{ops[self.op].name} dim {self.dim}" if self.op is not None else "free iterator"
        act = "binds" if self.bind else "guard =="
        return f"dense loop {what} over [0,{_it(self.iterator)}) {act} {_it(self.iterator)}"


@dataclass
class IterationPlan:
    spec: KernelSpec
    operands: list[OperandInfo]
    steps: list[Step]
    optimize: bool
    borrowed: list[int] = field(default_factory=list)

    def explain(self) -> str:
        lines = [f"kernel {self.spec.name} ({'optimized' if self.optimize else 'exhaustive'})"]
        for i, st in enumerate(self.steps):
            lines.append(f"{i}: {st.describe(self.operands)}")
            for r in st.restores:
                o = self.operands[r.op]
                act = "bind" if r.bind else "guard =="
                lines.append(f"     restore {o.name}.d{r.dim} = {format_expr(r.expr, prefix='e')} "
                             f"(bounds) {act} {_it(r.iterator)}")
        for i in self.borrowed:
            o = self.operands[i]
            lines.append(f"   borrow {o.name}[{','.join(_it(a) for a in o.iterators)}]")
        out = self.operands[-1]
        prod = "*".join(self.operands[i].name for i in self.spec.factors())
        lines.append(f"   body {out.name}[{','.join(_it(a) for a in out.iterators)}] += {prod}")
        return "\n".join(lines)

    def __str__(self) -> str:
        return self.explain()

    @property
    def loops(self) -> list[Step]:
        return list(self.steps)


# -- plan construction -------------------------------------------------------------

def _is_dense_encoding(enc: FormatEncoding | None) -> bool:
    if enc is None:
        return True
    return (enc.index_map.dst_exprs == tuple(LogicalDim(i) for i in range(enc.logical_rank))
            and not any(enc.trimmed) and not enc.indirect and enc.layout.pack is None
            and enc.layout.partition is None)


def _operand_info(spec: KernelSpec, i: int, enc: FormatEncoding | None) -> OperandInfo:
    its = spec.iterators_of(i)
    if enc is not None and enc.logical_rank != len(its):
        raise RankMismatch(f"{spec.operands[i]} encoding has rank {enc.logical_rank}, access map {len(its)}")
    if _is_dense_encoding(enc):
        return OperandInfo(i, spec.operands[i], None, its)
    repl = {d: LogicalDim(a) for d, a in enumerate(its)}
    lvl = tuple(e if isinstance(e, Indirect) else simplify(substitute(e, repl)) for e in enc.exprs)
    inv = invert_exprs(enc.exprs, enc.logical_rank).dst_exprs
    roles = level_roles(enc.trimmed, enc.merged, enc.indirect_flags, enc.bound, enc.vector_start)
    return OperandInfo(i, spec.operands[i], enc, its, lvl, inv, roles.has_idx, roles.has_ptr, roles.expanded)


class _Builder:
    def __init__(self, ops: list[OperandInfo]):
        self.ops = ops
        self.bound: set[int] = set()
        self.bound_by: dict[int, tuple[int, int]] = {}
        self.done: dict[int, int] = {o.index: 0 for o in ops if not o.dense and o.index < len(ops) - 1}
        self.restored: dict[int, set[int]] = {i: set() for i in self.done}
        self.steps: list[Step] = []

    def restores_for(self, op: int, at: tuple[int, int] | None = None) -> tuple[Restore, ...]:
        o = self.ops[op]
        have = set(range(self.done[op]))
        out = []
        for d, e in enumerate(o.inverse):
            if d in self.restored[op] or not dims_used(e) <= have:
                continue
            self.restored[op].add(d)
            a = o.iterators[d]
            bind = a not in self.bound
            if bind:
                self.bound.add(a)
                self.bound_by[a] = at or (op, self.done[op] - 1)
            out.append(Restore(op, d, e, a, bind))
        return tuple(out)

    def pending_iterators(self, op: int) -> set[int]:
        o = self.ops[op]
        out: set[int] = set()
        for k in range(self.done[op], o.levels):
            e = o.level_exprs[k]
            for sub in (e.args if isinstance(e, Indirect) else (e,)):
                out |= dims_used(sub)
        return out

    def active(self) -> list[int]:
        return [i for i, k in self.done.items() if k < self.ops[i].levels]

    def loop(self, op: int, fuse: bool) -> None:
        o = self.ops[op]
        k = self.done[op]
        levels = [k]
        if fuse:
            while levels[-1] + 1 < o.levels and o.one_to_one(levels[-1] + 1):
                levels.append(levels[-1] + 1)
        self.done[op] = levels[-1] + 1
        self.steps.append(LevelLoop(op, tuple(levels), self.restores_for(op)))

    def expr_bound(self, e: DimExpr) -> bool:
        return not isinstance(e, Indirect) and dims_used(e) <= self.bound

    def step_optimized(self) -> None:
        act = self.active()
        # dense levels reachable from bound iterators: locate
        for op in act:
            o, k = self.ops[op], self.done[op]
            e = o.level_exprs[k]
            if not o.has_idx[k] and self.expr_bound(e):
                self.done[op] = k + 1
                self.steps.append(Locate(op, k, e, self.restores_for(op)))
                return
        # sorted index levels whose coordinate is already known: merge against the binder
        for op in act:
            o, k = self.ops[op], self.done[op]
            e = o.level_exprs[k]
            if o.searchable(k) and self.expr_bound(e) and dims_used(e):
                partner = self.bound_by.get(min(dims_used(e)))
                self.done[op] = k + 1
                self.steps.append(CoIterate((op, k), e, None, partner, self.restores_for(op)))
                return
        # two unbound sorted index levels over the same expression
        for a in act:
            for b in act:
                if a >= b:
                    continue
                oa, ka, ob, kb = self.ops[a], self.done[a], self.ops[b], self.done[b]
                ea, eb = oa.level_exprs[ka], ob.level_exprs[kb]
                if (ea == eb and not isinstance(ea, Indirect) and oa.searchable(ka) and ob.searchable(kb)):
                    self.done[a] = ka + 1
                    ra = self.restores_for(a)
                    self.done[b] = kb + 1
                    rb = self.restores_for(b, at=(a, ka))
                    self.steps.append(CoIterate((b, kb), ea, (a, ka), None, ra + rb))
                    return
        # plain loop; defer levels whose iterators another operand still has to produce
        def deferred(op: int) -> bool:
            o, k = self.ops[op], self.done[op]
            e = o.level_exprs[k]
            mine = dims_used(e) - self.bound
            return any(mine & self.pending_iterators(other) for other in act if other != op)

        ready = [op for op in act if not deferred(op)]
        pool = ready or act
        # finish operands already being walked, then prefer stored indices over dense ranges
        pick = min(pool, key=lambda op: (self.done[op] == 0, not self.ops[op].has_idx[self.done[op]]))
        self.loop(pick, fuse=True)


def build_plan(spec: KernelSpec, encodings, optimize: bool = True) -> IterationPlan:
    """Plan ``spec`` for operands stored in ``encodings`` (``None`` marks a dense operand).

    ``encodings`` lists the inputs, optionally followed by the output's
    encoding, which must be dense.
    """
    encodings = list(encodings)
    n_in = len(spec.inputs)
    if len(encodings) == n_in:
        encodings.append(None)
    if len(encodings) != n_in + 1:
        raise RankMismatch(f"{spec.name} has {n_in} inputs, got {len(encodings)} encodings")
    ops = [_operand_info(spec, i, enc) for i, enc in enumerate(encodings)]
    if not ops[-1].dense:
        raise EncodingMismatch("kernel outputs are dense")
    b = _Builder(ops)
    if optimize:
        while b.active():
            b.step_optimized()
        for a in range(spec.rank):
            if a not in b.bound:
                b.bound.add(a)
                b.steps.append(DenseLoop(a, True))
        borrowed = [o.index for o in ops if o.dense and o.index < n_in]
    else:
        for op in list(b.done):
            while b.done[op] < ops[op].levels:
                b.loop(op, fuse=False)
        for o in ops:
            if not o.dense:
                continue
            for d, a in enumerate(o.iterators):
                bind = a not in b.bound
                b.bound.add(a)
                b.steps.append(DenseLoop(a, bind, o.index, d))
        borrowed = []
    return IterationPlan(spec, ops, b.steps, optimize, borrowed)


# -- runtime --------------------------------------------------------------------------

def _pos(op: int) -> str:
    return f"p{op}"


def _phys(op: int, k: int) -> str:
    return f"e{op}.{k}"


def _rows(f: Frontier) -> int:
    return len(next(iter(f.values())))


def _take(f: Frontier, rep: np.ndarray) -> Frontier:
    return {k: v[rep] for k, v in f.items()}


def _filter(f: Frontier, keep: np.ndarray) -> Frontier:
    if keep.all():
        return dict(f)
    return {k: v[keep] for k, v in f.items()}


def _restore(f: Frontier, rt: "_Runtime", restores) -> Frontier:
    for r in restores:
        if _rows(f) == 0:
            return f
        m = rt.plan.operands[r.op].levels
        cols = [f.get(_phys(r.op, k)) for k in range(m)]
        val = evaluate_columns(r.expr, cols)
        keep = np.ones(len(val), dtype=bool)
        if rt.guards:
            keep &= (val >= 0) & (val < rt.shapes[r.op][r.dim])
        if r.bind:
            f[_it(r.iterator)] = val
        else:
            keep &= f[_it(r.iterator)] == val
        f = _filter(f, keep)
    return f


class _LevelView:
    """Child enumeration and coordinate lookup for one stored level."""

    def __init__(self, st: Storage, k: int):
        lv = st.levels[k]
        self.k = k
        self.lower, self.upper = lv.lower, lv.upper
        self.size = max(lv.upper - lv.lower, 0)
        self.idx = lv.idx
        self.ptr = lv.ptr
        a = lv.attr
        if not a.has_idx:
            self.kind = "size"
        elif a.has_ptr:
            self.kind = "ptr"
        elif k == 0:
            self.kind = "root"
        else:
            self.kind = "one"
        self._keys = None

    def children(self, parent: np.ndarray):
        rows = len(parent)
        if self.kind == "size":
            n = self.size
            rep = np.repeat(np.arange(rows), n)
            off = np.tile(np.arange(n, dtype=np.int64), rows)
            return rep, parent[rep] * n + off, self.lower + off
        if self.kind == "root":
            n = len(self.idx)
            rep = np.repeat(np.arange(rows), n)
            child = np.tile(np.arange(n, dtype=np.int64), rows)
            return rep, child, self.idx[child]
        if self.kind == "one":
            return np.arange(rows), parent, self.idx[parent]
        start, end = self.ptr[parent], self.ptr[parent + 1]
        counts = end - start
        rep = np.repeat(np.arange(rows), counts)
        first = np.cumsum(counts) - counts
        child = start[rep] + (np.arange(len(rep), dtype=np.int64) - first[rep])
        return rep, child, self.idx[child]

    def _segment_keys(self):
        if self._keys is None:
            if self.kind == "ptr":
                seg = np.repeat(np.arange(len(self.ptr) - 1, dtype=np.int64), np.diff(self.ptr))
            else:
                seg = np.zeros(len(self.idx), dtype=np.int64)
            cmin = int(self.idx.min()) if len(self.idx) else 0
            cmax = int(self.idx.max()) if len(self.idx) else 0
            span = cmax - cmin + 1
            self._keys = (seg * span + (self.idx - cmin), cmin, cmax, span)
        return self._keys

    def check_sorted(self) -> None:
        if self.kind in ("root", "ptr"):
            keys = self._segment_keys()[0]
            if len(keys) > 1 and not np.all(np.diff(keys) > 0):
                raise UnsortedOperand(f"level {self.k} indices are not strictly ascending within each parent")

    def find(self, parent: np.ndarray, coord: np.ndarray) -> np.ndarray:
        if self.kind == "size":
            off = coord - self.lower
            ok = (off >= 0) & (off < self.size)
            return np.where(ok, parent * self.size + off, -1)
        if self.kind == "one":
            return np.where(self.idx[parent] == coord, parent, -1)
        self.check_sorted()
        keys, cmin, cmax, span = self._segment_keys()
        ok = (coord >= cmin) & (coord <= cmax)
        q = parent * span + (coord - cmin)
        j = np.searchsorted(keys, q)
        jc = np.minimum(j, max(len(keys) - 1, 0))
        hit = ok & (j < len(keys))
        if len(keys):
            hit &= keys[jc] == q
        return np.where(hit, jc, -1)


class _Runtime:
    def __init__(self, plan: IterationPlan, storages: dict[int, Storage], dense: dict[int, np.ndarray],
                 shapes: list[tuple[int, ...]], extents: list[int], guards: bool):
        self.plan = plan
        self.storages = storages
        self.dense = dense
        self.shapes = shapes
        self.extents = extents
        self.guards = guards
        self._views = {(op, k): _LevelView(st, k) for op, st in storages.items() for k in range(len(st.levels))}

    def view(self, op: int, k: int) -> _LevelView:
        return self._views[(op, k)]

    def iterator_cols(self, f: Frontier) -> list[np.ndarray | None]:
        return [f.get(_it(a)) for a in range(len(self.extents))]


def _operand_data(plan: IterationPlan, operands):
    storages: dict[int, Storage] = {}
    dense: dict[int, np.ndarray] = {}
    shapes: list[tuple[int, ...]] = []
    for o, x in zip(plan.operands[:-1], operands):
        if o.dense:
            arr = to_dense(x).array if isinstance(x, WorkingTensor) else np.asarray(getattr(x, "array", x),
                                                                                  dtype=np.float64)
            dense[o.index] = arr
            shapes.append(tuple(arr.shape))
            continue
        if isinstance(x, WorkingTensor):
            if not x.matches(o.encoding):
                raise EncodingMismatch(f"operand {o.name} does not match encoding {o.encoding}")
            st = materialize(x)
        elif isinstance(x, Storage):
            st = x
        else:
            raise EncodingMismatch(f"operand {o.name} must be a tensor in {o.encoding}")
        if len(st.levels) != o.levels:
            raise EncodingMismatch(f"operand {o.name} has {len(st.levels)} levels, encoding has {o.levels}")
        storages[o.index] = st
        shapes.append(tuple(st.shape.dims))
    return storages, dense, shapes


def execute(plan: IterationPlan, operands, parallel: int | None = None, guards: bool = True,
            out_shape: tuple[int, ...] | None = None) -> np.ndarray:
    """Run ``plan`` on the input operands and return the dense output.

    ``guards=False`` skips the bounds checks on restored indices (used to
    confirm the checks matter on padded formats); out-of-range reads then
    wrap around like unchecked pointer arithmetic would.
    """
    spec = plan.spec
    operands = list(operands)
    if len(operands) != len(spec.inputs):
        raise ShapeMismatch(f"{spec.name} takes {len(spec.inputs)} inputs, got {len(operands)}")
    storages, dense, shapes = _operand_data(plan, operands)
    ext = iterator_extents(spec, shapes)
    oshape = output_shape(spec, ext)
    if out_shape is not None and tuple(out_shape) != oshape:
        raise ShapeMismatch(f"output shape {tuple(out_shape)} does not match {oshape}")
    rt = _Runtime(plan, storages, dense, shapes, ext, guards)

    start: Frontier = {_pos(op): np.zeros(1, dtype=np.int64) for op in storages}
    if not start:
        start = {"_": np.zeros(1, dtype=np.int64)}
    workers = int(parallel or 1)
    if workers > 1 and plan.steps and _parallel_key(plan) is not None:
        return _run_parallel(plan, rt, start, workers, oshape)
    out = np.zeros(oshape, dtype=np.float64)
    _drive(plan, rt, 0, start, out.reshape(-1))
    return out


def _drive(plan: IterationPlan, rt: _Runtime, s: int, f: Frontier, out: np.ndarray) -> None:
    n = _rows(f)
    if n == 0:
        return
    if s == len(plan.steps):
        _body(plan, rt, f, out)
        return
    if n > CHUNK:
        for lo in range(0, n, CHUNK):
            _drive(plan, rt, s, {k: v[lo:lo + CHUNK] for k, v in f.items()}, out)
        return
    _drive(plan, rt, s + 1, plan.steps[s].run(f, rt), out)


def _body(plan: IterationPlan, rt: _Runtime, f: Frontier, out: np.ndarray) -> None:
    spec = plan.spec
    mode = "raise" if rt.guards else "wrap"
    prod = None
    for i in spec.factors():
        o = plan.operands[i]
        if o.dense:
            arr = rt.dense[i]
            if arr.ndim == 0:
                v = np.full(_rows(f), float(arr))
            else:
                flat = np.ravel_multi_index(tuple(f[_it(a)] for a in o.iterators), arr.shape, mode=mode)
                v = arr.reshape(-1)[flat]
        else:
            v = rt.storages[i].values[f[_pos(i)]]
        prod = v if prod is None else prod * v
    o = plan.operands[-1]
    oshape = output_shape(spec, rt.extents)
    if oshape:
        flat = np.ravel_multi_index(tuple(f[_it(a)] for a in o.iterators), oshape, mode=mode)
    else:
        flat = np.zeros(_rows(f), dtype=np.int64)
    np.add.at(out, flat, prod)


def _parallel_key(plan: IterationPlan) -> str | None:
    """Column splitting the first step's points into independent work, if any."""
    first = plan.steps[0]
    out_its = set(plan.operands[-1].iterators)
    for r in first.restores:
        if r.bind and r.iterator in out_its:
            return _it(r.iterator)
    if isinstance(first, LevelLoop):
        enc = plan.operands[first.op].encoding
        if enc is not None and enc.layout.partition is not None and enc.layout.partition in first.levels:
            return _pos(first.op)
    if isinstance(first, DenseLoop) and first.bind and first.iterator in out_its:
        return _it(first.iterator)
    return None


def _run_parallel(plan: IterationPlan, rt: _Runtime, start: Frontier, workers: int,
                  oshape: tuple[int, ...]) -> np.ndarray:
    key = _parallel_key(plan)
    f = plan.steps[0].run(start, rt)
    out = np.zeros(oshape, dtype=np.float64)
    if _rows(f) == 0:
        return out
    _, group = np.unique(f[key], return_inverse=True)
    group = group.reshape(-1)
    n_groups = int(group.max()) + 1
    owner = group * workers // n_groups
    parts = [_filter(f, owner == w) for w in range(workers)]

    def work(part: Frontier) -> np.ndarray:
        buf = np.zeros(oshape, dtype=np.float64)
        _drive(plan, rt, 1, part, buf.reshape(-1))
        return buf

    with ThreadPoolExecutor(max_workers=workers) as pool:
        bufs = list(pool.map(work, parts))
    # each output cell is written by exactly one worker, so this sum only adds zeros
    for b in bufs:
        out += b
    return out


def run_kernel(spec: KernelSpec, encodings, operands, optimize: bool = True, **kw) -> np.ndarray:
    return execute(build_plan(spec, encodings, optimize), operands, **kw)


__all__ = ["CoIterate", "DenseLoop", "DenseTensor", "IterationPlan", "LevelLoop", "Locate", "OperandInfo",
           "Restore", "build_plan", "execute", "run_kernel"]
