"""Named format encodings.

Parameterized formats take a block size or bank count: ``BCSR:2``, ``BDIA:3``,
``CISR:4``.  Anything starting with ``map`` is parsed as a literal encoding.
"""

from __future__ import annotations

import re
from functools import lru_cache

from ..errors import SemanticError
from .encoding import FormatEncoding
from .grammar import parse_encoding

_NNZ = "with value ne 0 -> 1 | otherwise -> 0"

_TEMPLATES: dict[str, tuple[str, int | None]] = {
    "COO": ("map (d0,d1)->(d0,d1); trim(0,1)", None),
    "DOK": ("map (d0,d1)->(d0,d1); trim(0,1) pack(0,1)", None),
    "CSR": ("map (d0,d1)->(d0,d1); merge(0) trim(1,1)", None),
    "CSC": ("map (d0,d1)->(d1,d0); merge(0) trim(1,1)", None),
    "LIL": ("map (d0,d1)->(d0,d1); merge(0) trim(1,1) pack(0,1)", None),
    "DCSR": ("map (d0,d1)->(d0,d1); merge(0) trim(0,1)", None),
    "DIA": ("map (d0,d1)->(d1-d0,d0); merge(0) trim(0,0)", None),
    "DIA-variant": ("map (d0,d1)->(d1-d0,d1); merge(0) trim(0,0)", None),
    "BCSR": ("map (d0,d1)->(d0/{b},d1/{b},d0%{b},d1%{b}); merge(0) trim(1,1)", 2),
    "CSB": ("map (d0,d1)->(d0/{b},d1/{b},d0%{b},d1%{b}); merge(0,1) trim(2,3)", 2),
    "ELL": ("map (d0,d1)->(indirect(d1),d0,d1); merge(0) trim(0,0) indirect {"
            " sum(value) groupBy (d0,d1)->(d0) " + _NNZ + " ;"
            " enum(value) groupBy (d0,d1)->(d0) traverseBy (d0,d1)->(d1)"
            " with value eq 0 -> sumVal | otherwise -> 0 }", None),
    "C2SR": ("map (d0,d1)->(d0%{b},d0/{b},d1); merge(0,1) trim(1,2) partition(0)", 2),
    "CISR": ("map (d0,d1)->(indirect(d0),d0,d1); merge(0,1) trim(1,2) indirect {"
             " sum(value) groupBy (d0,d1)->(d0) " + _NNZ + " ;"
             " schedule(d0) traverseBy (d0,d1)->(d0/{b}) partitions={b} } partition(0)", 2),
    "CISR-plus": ("map (d0,d1)->(indirect(d0),d0,d1); merge(0,1) trim(1,2) indirect {"
                  " sum(value) groupBy (d0,d1)->(d0) " + _NNZ + " ;"
                  " reorder(d0) traverseBy (d0,d1)->(d0) ;"
                  " schedule(d0) traverseBy (d0,d1)->(d0/{b}) partitions={b} } partition(0)", 2),
    "BDIA": ("map (d0,d1)->(d0/{b},d1-d0,d0%{b}); merge(0) trim(1,1)", 3),
    "BELL": ("map (d0,d1)->(indirect(d1/{b}),d0/{b},d1/{b},d0%{b},d1%{b}); merge(0) trim(0,0) indirect {"
             " enum(value) groupBy (d0,d1)->(d0/{b}) traverseBy (d0,d1)->(d1/{b}) }", 2),
}

FORMAT_NAMES: tuple[str, ...] = tuple(_TEMPLATES)

# The twelve encodings of the reference catalogue, with their default parameters.
CATALOGUE: tuple[str, ...] = ("COO", "DOK", "CSR", "LIL", "DCSR", "DIA", "DIA-variant", "BCSR", "CSB",
                              "ELL", "C2SR", "CISR")

_ALIASES = {"C²SR": "C2SR", "CISR+": "CISR-plus", "DIAV": "DIA-variant", "DIA_VARIANT": "DIA-variant"}


@lru_cache(maxsize=None)
def named_format(name: str, param: int | None = None) -> FormatEncoding:
    key = _canonical_name(name)
    template, default = _TEMPLATES[key]
    if default is None:
        if param is not None:
            raise SemanticError(f"format {key} takes no parameter")
        return parse_encoding(template).renamed(key)
    b = default if param is None else int(param)
    if b < 1:
        raise SemanticError(f"format parameter must be positive, got {b}")
    label = key if param is None else f"{key}:{b}"
    return parse_encoding(template.replace("{b}", str(b))).renamed(label)


def _canonical_name(name: str) -> str:
    name = _ALIASES.get(name, name)
    for key in _TEMPLATES:
        if key.lower() == name.lower():
            return key
    raise SemanticError(f"unknown format {name!r}; known: {', '.join(FORMAT_NAMES)}")


_NAMED = re.compile(r"^\s*([A-Za-z0-9²+_\-]+?)\s*(?:[:(]\s*(\d+)\s*\)?)?\s*$")


def resolve_format(text: str) -> FormatEncoding:
    """A format name (optionally ``NAME:param``) or a literal ``map ...`` encoding."""
    if text.lstrip().startswith("map"):
        return parse_encoding(text)
    m = _NAMED.match(text)
    if m is None:
        raise SemanticError(f"cannot resolve format {text!r}")
    param = int(m.group(2)) if m.group(2) else None
    return named_format(m.group(1), param)
