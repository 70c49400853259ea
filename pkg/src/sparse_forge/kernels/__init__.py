"""Tensor-algebra kernels over encoded operands."""

from .plan import (
    CoIterate, DenseLoop, IterationPlan, LevelLoop, Locate, OperandInfo, Restore, build_plan, execute, run_kernel,
)
from .spec import PARALLEL, REDUCTION, KernelSpec, builtin_kernels, dense_reference, make_kernel

__all__ = [
    "PARALLEL", "REDUCTION", "CoIterate", "DenseLoop", "IterationPlan", "KernelSpec", "LevelLoop", "Locate",
    "OperandInfo", "Restore", "build_plan", "builtin_kernels", "dense_reference", "execute", "make_kernel",
    "run_kernel",
]
