"""Command-line interface: ``sparse-forge {convert,inspect,decompose,kernel,bench}``.

Exit codes: 0 on success, 1 on usage errors, 2 on data errors (with a JSON
object ``{"error": kind, "message": ...}`` on stderr).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .conversion import convert, plan_conversion
from .decompose import min_sum_rule, decompose
from .errors import IoError, SparseForgeError
from .inference import explain_storage, infer_storage
from .io import read_matrix_market, read_tns, write_container, write_matrix_market
from .ir.encoding import QueryFunc
from .ir.formats import named_format, resolve_format
from .ir.grammar import parse_query
from .kernels import build_plan, builtin_kernels, execute
from .queries import query_enumerate, query_sum
from .storage import materialize
from .tensor import from_coo, to_dense

THREADS_ENV = "SPARSE_FORGE_THREADS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def _load(path: str, sum_duplicates: bool = False):
    if path.endswith(".tns"):
        shape, coords, values = read_tns(path)
    else:
        shape, coords, values = read_matrix_market(path)
    return from_coo(shape, coords, values, sum_duplicates=sum_duplicates)


def _write_dense(path: str | None, arr: np.ndarray, out) -> None:
    rows = arr.reshape(arr.shape[0], -1) if arr.ndim > 1 else arr.reshape(-1, 1)
    text = "".join(" ".join(_fmt(v) for v in row) + "\n" for row in rows.tolist())
    if path is None or path == "-":
        out.write(text)
        return
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror}") from exc


def _read_vector(path: str) -> np.ndarray:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        return np.array([float(x) for x in text.split()], dtype=np.float64)
    except ValueError as exc:
        raise IoError(f"{path}: {exc}") from exc


# -- subcommands ---------------------------------------------------------------------

def cmd_convert(args, out) -> int:
    src = resolve_format(args.src)
    dst = resolve_format(args.dst)
    plan = plan_conversion(src, dst)
    if args.emit_plan:
        for line in plan.lines():
            out.write(line + "\n")
    if args.input is None:
        if not args.emit_plan:
            raise UsageError("convert needs an input file unless --emit-plan is given")
        return 0
    t = _load(args.input, args.sum_duplicates)
    if src != named_format("COO"):
        t = convert(t, plan_conversion(named_format("COO"), src))
    res = convert(t, plan)
    if args.out:
        write_container(args.out, res, infer_storage(dst))
    elif not args.emit_plan:
        out.write(materialize(res).describe() + "\n")
    return 0


def cmd_inspect(args, out) -> int:
    enc = resolve_format(args.format) if args.format else named_format("COO")
    if args.query is None:
        out.write(explain_storage(infer_storage(enc)) + "\n")
        if args.input:
            t = _load(args.input, args.sum_duplicates)
            res = convert(t, plan_conversion(named_format("COO"), enc))
            out.write(materialize(res).describe() + "\n")
        return 0
    if args.input is None:
        raise UsageError("--query needs --input")
    t = _load(args.input, args.sum_duplicates)
    q = parse_query(args.query, rank=t.logical_rank)
    if q.func is QueryFunc.SUM:
        table = query_sum(t, q)
        for key in table.order:
            v = table.entries[key]
            out.write(",".join(str(k) for k in key) + "\t" + (str(v) if isinstance(v, int) else _fmt(v)) + "\n")
    elif q.func is QueryFunc.ENUM:
        idx = query_enumerate(t, q)
        for coord, v in zip(t.coords.tolist(), idx.tolist()):
            out.write(",".join(str(c) for c in coord) + f"\t{v}\n")
    else:
        raise UsageError("inspect --query supports sum and enum; reorder/schedule need a preceding sum")
    return 0


def cmd_decompose(args, out) -> int:
    t = _load(args.input, args.sum_duplicates)
    rule = min_sum_rule(args.group_by, args.min_sum, rank=t.logical_rank)
    sel, rest = decompose(t, rule)
    for path, part in ((args.out_a, sel), (args.out_b, rest)):
        write_matrix_market(path, part.shape.dims, part.coords, part.values)
    out.write(f"selected\t{sel.nnz}\nremainder\t{rest.nnz}\n")
    return 0


def _threads(args) -> int | None:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}")
        if n < 1:
            raise UsageError(f"{THREADS_ENV} must be positive")
        return n
    return args.parallel


def _kernel_inputs(args):
    spec = builtin_kernels()[args.kernel]
    enc = resolve_format(args.format)
    coo = named_format("COO")
    a = convert(_load(args.matrix, args.sum_duplicates), plan_conversion(coo, enc))
    if args.kernel == "spmv":
        if args.rhs:
            raise UsageError("spmv takes --vector, not --rhs")
        x = _read_vector(args.vector) if args.vector else np.ones(a.shape[1])
        return spec, [enc, None], [a, x]
    if args.vector:
        raise UsageError(f"{args.kernel} takes --rhs, not --vector")
    if not args.rhs:
        raise UsageError(f"{args.kernel} needs --rhs")
    b = _load(args.rhs, args.sum_duplicates)
    if args.kernel == "spmm":
        return spec, [enc, None], [a, to_dense(b).array]
    benc = resolve_format(args.rhs_format) if args.rhs_format else enc
    return spec, [enc, benc], [a, convert(b, plan_conversion(coo, benc))]


def cmd_kernel(args, out) -> int:
    spec, encs, ops = _kernel_inputs(args)
    plan = build_plan(spec, encs, optimize=not args.no_opt)
    if args.explain:
        out.write(plan.explain() + "\n")
    res = execute(plan, ops, parallel=_threads(args))
    if args.out or not args.explain:
        _write_dense(args.out, res, out)
    return 0


def cmd_bench(args, out) -> int:
    t0 = time.perf_counter()
    t = _load(args.matrix, args.sum_duplicates)
    t1 = time.perf_counter()
    enc = resolve_format(args.format)
    res = convert(t, plan_conversion(named_format("COO"), enc))
    t2 = time.perf_counter()
    out.write("stage\tseconds\n")
    out.write(f"read\t{_fmt(t1 - t0)}\nconvert\t{_fmt(t2 - t1)}\n")
    if args.kernel:
        spec = builtin_kernels()[args.kernel]
        n = res.shape[1]
        if args.kernel == "spmv":
            encs, ops = [enc, None], [res, np.ones(n)]
        elif args.kernel == "spmm":
            encs, ops = [enc, None], [res, np.ones((n, args.cols))]
        else:
            encs, ops = [enc, enc], [res, res]
        plan = build_plan(spec, encs)
        best = float("inf")
        for _ in range(args.repeat):
            s = time.perf_counter()
            execute(plan, ops, parallel=_threads(args))
            best = min(best, time.perf_counter() - s)
        out.write(f"kernel\t{_fmt(best)}\n")
    return 0


# -- argument parsing -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sparse-forge", description="Sparse tensor format conversion and kernels.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--sum-duplicates", action="store_true", help="add up repeated coordinates")

    c = sub.add_parser("convert", help="convert a tensor between encodings")
    c.add_argument("input", nargs="?", help=".mtx or .tns input")
    c.add_argument("--from", dest="src", default="COO", help="source encoding (name or map text)")
    c.add_argument("--to", dest="dst", required=True, help="target encoding")
    c.add_argument("--out", help="write the converted storage container here")
    c.add_argument("--emit-plan", action="store_true", help="print the conversion operators")
    common(c)
    c.set_defaults(func=cmd_convert)

    i = sub.add_parser("inspect", help="show inferred storage or query results")
    i.add_argument("--format", help="encoding to inspect")
    i.add_argument("--input", help=".mtx or .tns input")
    i.add_argument("--query", help="sum/enum query; prints key<TAB>value")
    common(i)
    i.set_defaults(func=cmd_inspect)

    d = sub.add_parser("decompose", help="split a matrix by per-group non-zero counts")
    d.add_argument("input")
    d.add_argument("--group-by", required=True, help="group map, e.g. '(d0,d1)->(d0/3,d1-d0)'")
    d.add_argument("--min-sum", type=int, required=True, help="groups with at least this many non-zeros")
    d.add_argument("--out-a", required=True, help="selected part (.mtx)")
    d.add_argument("--out-b", required=True, help="remainder (.mtx)")
    common(d)
    d.set_defaults(func=cmd_decompose)

    k = sub.add_parser("kernel", help="run spmv, spmm or spgemm")
    k.add_argument("kernel", choices=sorted(builtin_kernels()))
    k.add_argument("--matrix", required=True)
    k.add_argument("--format", default="CSR")
    rhs = k.add_mutually_exclusive_group()
    rhs.add_argument("--rhs", help="right-hand matrix (.mtx) for spmm/spgemm")
    rhs.add_argument("--vector", help="whitespace separated x for spmv (default all ones)")
    k.add_argument("--rhs-format", help="encoding of the right-hand matrix for spgemm")
    k.add_argument("--out", help="output file (default stdout)")
    k.add_argument("--parallel", type=int, default=None, help="worker threads")
    k.add_argument("--no-opt", action="store_true", help="exhaustive plan without co-iteration")
    k.add_argument("--explain", action="store_true", help="print the iteration plan")
    common(k)
    k.set_defaults(func=cmd_kernel)

    b = sub.add_parser("bench", help="time reading, conversion and a kernel (TSV)")
    b.add_argument("--matrix", required=True)
    b.add_argument("--format", default="CSR")
    b.add_argument("--kernel", choices=sorted(builtin_kernels()))
    b.add_argument("--cols", type=int, default=8, help="dense columns for spmm")
    b.add_argument("--repeat", type=int, default=3)
    b.add_argument("--parallel", type=int, default=None)
    common(b)
    b.set_defaults(func=cmd_bench)
    return p


def run_cli(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "parallel", None) is not None and args.parallel < 1:
            raise UsageError("--parallel must be positive")
        return args.func(args, out)
    except UsageError as exc:
        err.write(f"usage error: {exc}\n")
        return 1
    except SparseForgeError as exc:
        err.write(json.dumps({"error": exc.kind, "message": str(exc)}) + "\n")
        return 2


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
