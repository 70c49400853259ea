"""Format description IR: index expressions, maps, encodings and their grammar."""

from .encoding import (
    NNZ_VALUE_MAP, SUM_VAL, FormatEncoding, HybridEncoding, LayoutSpec, MutationSpec, QueryFunc,
    QuerySpec, ValueArm, ValueMapSpec, bound_levels,
)
from .exprs import (
    Add, Const, DimExpr, FloorDiv, Indirect, LogicalDim, Mod, Scale, Sub, bounds, dim, evaluate,
    evaluate_columns, format_expr, is_affine, simplify,
)
from .formats import CATALOGUE, FORMAT_NAMES, named_format, resolve_format
from .grammar import format_encoding, format_query, parse_encoding, parse_index_map, parse_query
from .maps import IndexMap, compose, index_map_matrix, invert_exprs, invert_map, mat_inv, mat_mul

__all__ = [
    "Add", "CATALOGUE", "Const", "DimExpr", "FORMAT_NAMES", "FloorDiv", "FormatEncoding", "HybridEncoding",
    "IndexMap", "Indirect", "LayoutSpec", "LogicalDim", "Mod", "MutationSpec", "NNZ_VALUE_MAP", "QueryFunc",
    "QuerySpec", "SUM_VAL", "Scale", "Sub", "ValueArm", "ValueMapSpec", "bound_levels", "bounds", "compose",
    "dim", "evaluate", "evaluate_columns", "format_encoding", "format_expr", "format_query",
    "index_map_matrix", "invert_exprs", "invert_map", "is_affine", "mat_inv", "mat_mul", "named_format",
    "parse_encoding", "parse_index_map", "parse_query", "resolve_format", "simplify",
]
