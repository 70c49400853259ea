"""Textual encoding grammar.

::

    encoding  := "map" index_map { [";" | ","] item }
    item      := "trim" "(" INT "," INT ")"
               | "merge" "(" INT { "," INT } ")"
               | "pack" "(" INT "," INT ")"
               | "partition" "(" INT ")"
               | "indirect" "{" query { [";"] query } "}"
    query     := func "(" name { "," name } ")" { clause }
    func      := "sum" | "enum" | "enumerate" | "reorder" | "schedule"
    clause    := "groupBy" index_map
               | "traverseBy" index_map [ "desc" | "asc" ]
               | "with" value_map
               | "partitions" "=" INT
    value_map := { "value" cmp ["-"] number "->" result "|" } "otherwise" "->" result
    cmp       := "ne" | "eq" | "bt" | "be" | "lt" | "le"
    result    := ["-"] INT | "sumVal"
    index_map := "(" ID { "," ID } ")" "->" "(" expr { "," expr } ")"
    expr      := term { ("+" | "-") term }
    term      := unary { "*" unary | ("/" | "%") INT }
    unary     := "-" unary | atom
    atom      := INT | ID | "(" INT "/" INT ")" | "(" expr ")"
               | "indirect" "(" expr { "," expr } ")"

One side of ``*`` must be constant; ``(p/q)`` is a rational literal.  ``#``
starts a comment that runs to the end of the line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from ..errors import ParseError, SemanticError
from .encoding import (
    SUM_VAL, FormatEncoding, LayoutSpec, MutationSpec, QueryFunc, QuerySpec, ValueArm, ValueMapSpec,
)
from .exprs import (
    ONE, Const, DimExpr, FloorDiv, Indirect, LogicalDim, Mod, Scale, format_expr, linearize,
)
from .maps import IndexMap

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+) | (?P<nl>\n) | (?P<comment>\#[^\n]*)
  | (?P<num>\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)
  | (?P<id>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<arrow>->)
  | (?P<punct>[(),;{}|=+\-*/%])
""", re.VERBOSE)

_FUNCS = {"sum": QueryFunc.SUM, "enum": QueryFunc.ENUM, "enumerate": QueryFunc.ENUM,
          "reorder": QueryFunc.REORDER, "schedule": QueryFunc.SCHEDULE}
_CMPS = ("ne", "eq", "bt", "be", "lt", "le")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    out: list[Token] = []
    line, col, pos = 1, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col, text[pos])
        kind = m.lastgroup
        s = m.group()
        if kind == "nl":
            line, col = line + 1, 1
        else:
            if kind not in ("ws", "comment"):
                out.append(Token(kind if kind != "punct" else s, s, line, col))
            col += len(s)
        pos = m.end()
    out.append(Token("eof", "", line, col))
    return out


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        self.logical_names: list[str] = []

    # -- token helpers ------------------------------------------------------
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def fail(self, msg: str, tok: Token | None = None, cls=ParseError):
        t = tok or self.tok
        raise cls(msg, t.line, t.col, t.text or "<end of input>")

    def expect(self, kind: str, what: str | None = None) -> Token:
        if self.tok.kind != kind:
            self.fail(f"expected {what or kind!r}")
        return self.next()

    def keyword(self, word: str) -> Token:
        if self.tok.kind != "id" or self.tok.text != word:
            self.fail(f"expected {word!r}")
        return self.next()

    def at_word(self, *words: str) -> bool:
        return self.tok.kind == "id" and self.tok.text in words

    def integer(self, signed: bool = False) -> int:
        neg = False
        if signed and self.tok.kind == "-":
            self.next()
            neg = True
        t = self.expect("num", "integer")
        if not t.text.isdigit():
            self.fail("expected an integer", t)
        return -int(t.text) if neg else int(t.text)

    def number(self) -> float:
        neg = False
        if self.tok.kind == "-":
            self.next()
            neg = True
        t = self.expect("num", "number")
        v = float(t.text) if not t.text.isdigit() else int(t.text)
        return -v if neg else v

    # -- encodings ----------------------------------------------------------
    def encoding(self) -> FormatEncoding:
        self.keyword("map")
        imap = self.index_map(top=True)
        trim = None
        merge: set[int] = set()
        pack = None
        partition = None
        queries: list[QuerySpec] = []
        m = imap.dst_arity
        while True:
            while self.tok.kind in (";", ","):
                self.next()
            if self.tok.kind == "eof":
                break
            if self.tok.kind != "id":
                self.fail("expected trim, merge, pack, partition or indirect")
            word = self.tok
            if word.text == "trim":
                self.next()
                s, e = self.pair()
                if trim is not None:
                    self.fail("trim given twice", word, SemanticError)
                if s > e:
                    self.fail(f"trim start {s} exceeds end {e}", word, SemanticError)
                if e >= m:
                    self.fail(f"trim level {e} out of range for {m} levels", word, SemanticError)
                trim = (s, e)
            elif word.text == "merge":
                self.next()
                for lv in self.int_list():
                    if lv >= m:
                        self.fail(f"merge level {lv} out of range for {m} levels", word, SemanticError)
                    merge.add(lv)
            elif word.text == "pack":
                self.next()
                s, e = self.pair()
                if s > e or e >= m:
                    self.fail(f"invalid pack range ({s},{e}) for {m} levels", word, SemanticError)
                pack = (s, e)
            elif word.text == "partition":
                self.next()
                (lv,) = self.int_list()
                if lv >= m:
                    self.fail(f"partition level {lv} out of range for {m} levels", word, SemanticError)
                partition = lv
            elif word.text == "indirect":
                self.next()
                self.expect("{")
                while True:
                    while self.tok.kind == ";":
                        self.next()
                    if self.tok.kind == "}":
                        self.next()
                        break
                    queries.append(self.query())
                if not queries:
                    self.fail("empty indirect block", word, SemanticError)
            else:
                self.fail(f"unknown primitive {word.text!r}")
        try:
            return FormatEncoding(imap, MutationSpec(trim, frozenset(merge)), tuple(queries),
                                  LayoutSpec(pack, partition))
        except SemanticError:
            raise
        except ValueError as exc:
            raise SemanticError(str(exc)) from exc

    def pair(self) -> tuple[int, int]:
        vals = self.int_list()
        if len(vals) != 2:
            self.fail("expected two levels")
        return vals[0], vals[1]

    def int_list(self) -> list[int]:
        self.expect("(")
        vals = [self.integer()]
        while self.tok.kind == ",":
            self.next()
            vals.append(self.integer())
        self.expect(")")
        return vals

    # -- index maps ---------------------------------------------------------
    def index_map(self, top: bool = False) -> IndexMap:
        self.expect("(")
        names: list[str] = []
        while True:
            t = self.expect("id", "dimension name")
            if t.text in names:
                self.fail(f"duplicate dimension name {t.text!r}", t, SemanticError)
            names.append(t.text)
            if self.tok.kind != ",":
                break
            self.next()
        self.expect(")")
        self.expect("arrow", "->")
        if top:
            self.logical_names = names
        self.expect("(")
        exprs = [self.expr(names)]
        while self.tok.kind == ",":
            self.next()
            exprs.append(self.expr(names))
        self.expect(")")
        try:
            return IndexMap(len(names), tuple(exprs))
        except ValueError as exc:
            raise SemanticError(str(exc)) from exc

    def expr(self, names: list[str]) -> DimExpr:
        acc = self.term(names)
        while self.tok.kind in ("+", "-"):
            op = self.next().kind
            rhs = self.term(names)
            acc = acc + rhs if op == "+" else acc - rhs
        return acc

    def term(self, names: list[str]) -> DimExpr:
        acc = self.unary(names)
        while self.tok.kind in ("*", "/", "%"):
            op = self.next()
            if op.kind == "*":
                rhs = self.unary(names)
                ca, cb = _constant(acc), _constant(rhs)
                if ca is None and cb is None:
                    self.fail("'*' needs a constant operand", op, SemanticError)
                acc = Scale(ca, rhs) if ca is not None else Scale(cb, acc)
            else:
                t = self.tok
                f = self.integer()
                if f <= 0:
                    self.fail("divisor must be a positive integer", t, SemanticError)
                acc = FloorDiv(acc, f) if op.kind == "/" else Mod(acc, f)
        return acc

    def unary(self, names: list[str]) -> DimExpr:
        if self.tok.kind == "-":
            self.next()
            return Scale(Fraction(-1), self.unary(names))
        return self.atom(names)

    def atom(self, names: list[str]) -> DimExpr:
        t = self.tok
        if t.kind == "num":
            return Const(self.integer())
        if t.kind == "id":
            self.next()
            if t.text == "indirect" and self.tok.kind == "(":
                self.next()
                args = [self.expr(names)]
                while self.tok.kind == ",":
                    self.next()
                    args.append(self.expr(names))
                self.expect(")")
                return Indirect(tuple(args))
            if t.text not in names:
                self.fail(f"dimension {t.text!r} out of range for ({','.join(names)})", t, SemanticError)
            return LogicalDim(names.index(t.text))
        if t.kind == "(":
            if self.peek().kind == "num" and self.peek(2).kind == "/" and self.peek(3).kind == "num" \
                    and self.peek(4).kind == ")":
                self.next()
                p = self.integer()
                self.next()
                q = self.integer()
                self.next()
                if q == 0:
                    self.fail("zero denominator", t, SemanticError)
                return Scale(Fraction(p, q), ONE)
            self.next()
            e = self.expr(names)
            self.expect(")")
            return e
        self.fail("expected an index expression")

    # -- queries --------------------------------------------------------------
    def query(self) -> QuerySpec:
        t = self.expect("id", "query function")
        if t.text not in _FUNCS:
            self.fail(f"unknown query function {t.text!r}", t)
        func = _FUNCS[t.text]
        self.expect("(")
        args = [self.expect("id", "query argument")]
        while self.tok.kind == ",":
            self.next()
            args.append(self.expect("id", "query argument"))
        self.expect(")")
        subject = None
        for a in args:
            if a.text == "value":
                continue
            subject = self.dim_index(a)
        group_by = traverse_by = value_map = None
        partitions = 2
        descending = False
        while self.tok.kind == "id":
            word = self.tok.text
            if word == "groupBy":
                self.next()
                group_by = self.index_map()
            elif word == "traverseBy":
                self.next()
                traverse_by = self.index_map()
                if self.at_word("desc", "asc"):
                    descending = self.next().text == "desc"
            elif word == "with":
                self.next()
                value_map = self.value_map()
            elif word == "partitions":
                self.next()
                self.expect("=")
                pt = self.tok
                partitions = self.integer()
                if partitions < 1:
                    self.fail("partitions must be at least 1", pt, SemanticError)
            else:
                break
        return QuerySpec(func, group_by, traverse_by, value_map, subject, partitions, descending)

    def dim_index(self, t: Token) -> int:
        if t.text in self.logical_names:
            return self.logical_names.index(t.text)
        m = re.fullmatch(r"d(\d+)", t.text)
        if m is None:
            self.fail(f"unknown dimension {t.text!r}", t, SemanticError)
        return int(m.group(1))

    def value_map(self) -> ValueMapSpec:
        arms = []
        while True:
            if self.at_word("otherwise"):
                self.next()
                self.expect("arrow", "->")
                other = self.result()
                return ValueMapSpec(tuple(arms), other)
            self.keyword("value")
            c = self.tok
            if c.kind != "id" or c.text not in _CMPS:
                self.fail(f"expected one of {', '.join(_CMPS)}")
            self.next()
            thr = self.number()
            self.expect("arrow", "->")
            arms.append(ValueArm(c.text, thr, self.result()))
            self.expect("|")

    def result(self) -> int | str:
        if self.at_word(SUM_VAL):
            self.next()
            return SUM_VAL
        return self.integer(signed=True)


def _constant(e: DimExpr) -> Fraction | None:
    form = linearize(e)
    if set(form) <= {ONE}:
        return form.get(ONE, Fraction(0))
    return None


def parse_encoding(text: str) -> FormatEncoding:
    p = _Parser(text)
    enc = p.encoding()
    return enc


def parse_index_map(text: str) -> IndexMap:
    p = _Parser(text)
    imap = p.index_map(top=True)
    p.expect("eof", "end of input")
    return imap


def parse_query(text: str, rank: int | None = None) -> QuerySpec:
    p = _Parser(text)
    if rank is not None:
        p.logical_names = [f"d{i}" for i in range(rank)]
    q = p.query()
    p.expect("eof", "end of input")
    for imap in (q.group_by, q.traverse_by):
        if rank is not None and imap is not None and imap.src_arity != rank:
            raise SemanticError(f"query map {imap} has arity {imap.src_arity}, tensor rank is {rank}")
    return q


# -- printing -----------------------------------------------------------------

def _num(v: float | int) -> str:
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return repr(v) if isinstance(v, float) else str(v)


def format_value_map(vm: ValueMapSpec) -> str:
    parts = [f"value {a.cond} {_num(a.threshold)} -> {a.result} |" for a in vm.arms]
    parts.append(f"otherwise -> {vm.otherwise}")
    return " ".join(parts)


def format_query(q: QuerySpec) -> str:
    arg = f"d{q.subject}" if q.subject is not None else "value"
    out = [f"{q.func.value}({arg})"]
    if q.group_by is not None:
        out.append(f"groupBy {q.group_by}")
    if q.traverse_by is not None:
        out.append(f"traverseBy {q.traverse_by}" + (" desc" if q.descending else ""))
    if q.value_map is not None:
        out.append(f"with {format_value_map(q.value_map)}")
    if q.func is QueryFunc.SCHEDULE:
        out.append(f"partitions={q.partitions}")
    return " ".join(out)


def format_encoding(enc: FormatEncoding) -> str:
    out = [f"map {enc.index_map};"]
    mut, lay = enc.mutation, enc.layout
    if mut.merge:
        out.append("merge(" + ",".join(str(x) for x in sorted(mut.merge)) + ")")
    if mut.trim is not None:
        out.append(f"trim({mut.trim[0]},{mut.trim[1]})")
    if enc.indirect:
        out.append("indirect { " + " ; ".join(format_query(q) for q in enc.indirect) + " }")
    if lay.pack is not None:
        out.append(f"pack({lay.pack[0]},{lay.pack[1]})")
    if lay.partition is not None:
        out.append(f"partition({lay.partition})")
    return " ".join(out)


__all__ = ["format_encoding", "format_expr", "format_query", "format_value_map", "parse_encoding",
           "parse_index_map", "parse_query", "tokenize"]
