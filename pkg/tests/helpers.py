"""Shared helpers for the test modules."""

from sparse_forge.conversion import convert, plan_conversion
from sparse_forge.ir import FORMAT_NAMES, named_format

PARAMS = {"BCSR": 2, "CSB": 2, "C2SR": 2, "CISR": 2, "CISR-plus": 2, "BELL": 2, "BDIA": 3}
ALL_FORMATS = list(FORMAT_NAMES)
# formats a conversion may start from (no queries, no layout)
INVERTIBLE = [n for n in ALL_FORMATS if named_format(n, PARAMS.get(n)).is_invertible_source]


def fmt(name):
    return named_format(name, PARAMS.get(name))


def to_format(t, name):
    return convert(t, plan_conversion(named_format("COO"), fmt(name)))


def random_dense(rng, max_dim=64, dens=(0.01, 0.5), shape=None):
    r, c = shape if shape is not None else rng.integers(1, max_dim + 1, 2)
    d = rng.uniform(*dens)
    a = rng.standard_normal((r, c))
    a[rng.random((r, c)) > d] = 0.0
    return a
