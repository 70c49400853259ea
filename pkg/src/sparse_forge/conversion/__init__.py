"""Conversion operators and the planner that sequences them."""

from .ops import (
    INVERSE_PAIRS, ConversionOp, Devectorize, EnumQ, Fill, Merge, Pack, Partition, ReorderQ, Scale, ScheduleQ,
    Skew, Sort, Split, SumQ, Swap, TileSplit, TileUnion, Trim, Vectorize, apply_op,
)
from .planner import (
    ConversionPlan, convert, convert_to, decompose_matrix, elementary_matrix, ops_product, plan_conversion,
)

__all__ = [
    "INVERSE_PAIRS", "ConversionOp", "ConversionPlan", "Devectorize", "EnumQ", "Fill", "Merge", "Pack",
    "Partition", "ReorderQ", "Scale", "ScheduleQ", "Skew", "Sort", "Split", "SumQ", "Swap", "TileSplit",
    "TileUnion", "Trim", "Vectorize", "apply_op", "convert", "convert_to", "decompose_matrix",
    "elementary_matrix", "ops_product", "plan_conversion",
]
