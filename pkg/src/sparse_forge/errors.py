"""Exception hierarchy.

Every error raised on bad input derives from :class:`SparseForgeError`, so the
CLI can map it to a data-error exit code and a stable ``kind`` string.
"""

from __future__ import annotations


class SparseForgeError(Exception):
    """Base class. ``kind`` is the machine-readable error name."""

    @property
    def kind(self) -> str:
        return type(self).__name__


class EncodingError(SparseForgeError):
    """Invalid format encoding, optionally located in the source text."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None,
                 token: str | None = None):
        self.line = line
        self.column = column
        self.token = token
        where = f" at line {line}, column {column}" if line is not None else ""
        near = f" near {token!r}" if token else ""
        super().__init__(f"{message}{where}{near}")


class ParseError(EncodingError):
    pass


class SemanticError(EncodingError):
    pass


class NonAffine(SparseForgeError):
    pass


class AffineConstant(SparseForgeError):
    pass


class NotInvertible(SparseForgeError):
    pass


class NonIntegral(SparseForgeError):
    pass


class ShapeMismatch(SparseForgeError):
    pass


class DuplicateCoordinate(SparseForgeError):
    pass


class OutOfRange(SparseForgeError):
    pass


class CollisionError(SparseForgeError):
    pass


class ConversionError(SparseForgeError):
    pass


class NonIntegralScale(ConversionError):
    pass


class LevelOutOfRange(ConversionError):
    pass


class VectorizeOnTrimmed(ConversionError):
    pass


class UnsupportedSource(ConversionError):
    pass


class EncodingMismatch(SparseForgeError):
    pass


class QueryError(SparseForgeError):
    pass


class MissingGroupBy(QueryError):
    pass


class MissingTraverseBy(QueryError):
    pass


class UnboundSumVal(QueryError):
    pass


class MissingWeights(QueryError):
    pass


class KernelError(SparseForgeError):
    pass


class UnsupportedBody(KernelError):
    pass


class RankMismatch(KernelError):
    pass


class UnsortedOperand(KernelError):
    pass


class ContainerError(SparseForgeError):
    pass


class BadMagic(ContainerError):
    pass


class VersionMismatch(ContainerError):
    pass


class IoError(ContainerError):
    pass


class MatrixMarketError(SparseForgeError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class UnsupportedHeader(MatrixMarketError):
    pass
