"""Frozen expected values.

Worked out by hand from the six non-zeros of the 5x4 example matrix, or
taken from its reference storage arrays. None of it comes from the package
under test.
"""

import numpy as np

# the example matrix: coordinates and values of its six non-zeros
A_SHAPE = (5, 4)
A_COORDS = [(0, 0), (1, 1), (2, 1), (2, 2), (2, 3), (4, 3)]
A_VALUES = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
A_DENSE = np.array([
    [1, 0, 0, 0],
    [0, 2, 0, 0],
    [0, 3, 4, 5],
    [0, 0, 0, 0],
    [0, 0, 0, 6],
], dtype=np.float64)

# COO arrays of the example
COO_D0 = [0, 1, 2, 2, 2, 4]
COO_D1 = [0, 1, 1, 2, 3, 3]
COO_VAL = [1, 2, 3, 4, 5, 6]

# CSR: row pointer from row counts [1,1,3,0,1]
CSR_PTR = [0, 1, 2, 5, 5, 6]
CSR_IDX = [0, 1, 1, 2, 3, 3]

# DIA: offsets d1-d0 present are -1 (values 3,6), 0 (1,2,4), 1 (5); one slot per row
DIA_OFFSETS = [-1, 0, 1]
DIA_VALUES = [[0, 0, 3, 0, 6], [1, 2, 4, 0, 0], [0, 0, 5, 0, 0]]
# DIA-variant: same offsets, one slot per column
DIA_VARIANT_VALUES = [[0, 3, 0, 6], [1, 2, 4, 0], [0, 0, 0, 5]]

# Skew(0,1,-1) on COO: second column becomes d1-d0
SKEW_COL = [0, 0, -1, 0, 1, -1]
# TileSplit(0,3) after the skew: entry (4,3) -> (4/3, 4%3, 3-4)
TILED_43 = (1, 1, -1)

# queries
ROW_NNZ = {(0,): 1, (1,): 1, (2,): 3, (3,): 0, (4,): 1}
DIAG_NNZ = {(-1,): 2, (0,): 3, (1,): 1}
ROW_SLOTS = [0, 0, 0, 1, 2, 0]
ROW_SLOTS_DESC = [0, 0, 2, 1, 0, 0]
REORDER_ROWS = [(2,), (0,), (1,), (4,), (3,)]
SCHEDULE_2 = {(2,): 0, (0,): 1, (1,): 1, (4,): 1, (3,): 0}

# BDIA(3) groups (d0/3, d1-d0): (0,0) holds 3 entries, the other three hold 1 each
BDIA_GROUPS = {(0, 0): 3, (0, -1): 1, (0, 1): 1, (1, -1): 1}

# SpMV with x = ones
SPMV_ONES = [1, 2, 12, 0, 6]

# plans
PLAN_COO_CSR = ["Fill(0)", "Merge(0)"]
PLAN_CSR_COO = ["Split(0)", "Trim(0)"]
PLAN_COO_BDIA_ORDER = ["Skew(0,1,-1)", "TileSplit(0,3)", "Sort()", "Fill", "Merge"]

# storage per level of the twelve catalogue formats (parameterized ones at 2)
INFERENCE_GOLDEN = {
    "COO": "L0: idx | L1: idx | val",
    "DOK": "L0: idx | L1: idx | val ; pack(0,1)",
    "CSR": "L0: size | L1: ptr, idx | val",
    "LIL": "L0: size | L1: ptr, idx | val ; pack(0,1)",
    "DCSR": "L0: idx | L1: ptr, idx | val",
    "DIA": "L0: idx | L1: size, dense_vector | val",
    "DIA-variant": "L0: idx | L1: size, dense_vector | val",
    "BCSR": "L0: size | L1: ptr, idx | L2: size, dense_vector | L3: size, dense_vector | val",
    "CSB": "L0: size | L1: size | L2: ptr, idx | L3: idx | val",
    "ELL": "L0: idx | L1: size, dense_vector | L2: idx | val",
    "C2SR": "L0: size | L1: ptr, idx | L2: ptr, idx | val ; partition(0)",
    "CISR": "L0: idx | L1: ptr, idx | L2: ptr, idx | val ; partition(0)",
}

# metadata trees of the four trim/merge variants: (parents, coords) per level
LATTICE_TREES = {
    # trim(1,1): row 3 stays as a dangling node
    "A": [([-1] * 7, [0, 1, 2, 2, 2, 3, 4]), ([0, 1, 2, 3, 4, 6], [0, 1, 1, 2, 3, 3])],
    # trim(0,1)
    "B": [([-1] * 6, [0, 1, 2, 2, 2, 4]), ([0, 1, 2, 3, 4, 5], [0, 1, 1, 2, 3, 3])],
    # merge(0) trim(1,1)
    "C": [([-1] * 5, [0, 1, 2, 3, 4]), ([0, 1, 2, 2, 2, 4], [0, 1, 1, 2, 3, 3])],
    # merge(0) trim(0,1)
    "D": [([-1] * 4, [0, 1, 2, 4]), ([0, 1, 2, 2, 2, 3], [0, 1, 1, 2, 3, 3])],
}
LATTICE_ENCODINGS = {
    "A": "map (d0,d1)->(d0,d1); trim(1,1)",
    "B": "map (d0,d1)->(d0,d1); trim(0,1)",
    "C": "map (d0,d1)->(d0,d1); merge(0) trim(1,1)",
    "D": "map (d0,d1)->(d0,d1); merge(0) trim(0,1)",
}
LATTICE_ARROWS = [
    ("B", "Fill(0)", "A"), ("D", "Fill(0)", "C"), ("A", "Trim(0)", "B"), ("C", "Trim(0)", "D"),
    ("A", "Merge(0)", "C"), ("B", "Merge(0)", "D"), ("C", "Split(0)", "A"), ("D", "Split(0)", "B"),
]
