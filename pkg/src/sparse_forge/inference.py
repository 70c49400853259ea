"""Storage inference: which arrays each physical level needs."""

from __future__ import annotations

from dataclasses import dataclass

from .ir.encoding import FormatEncoding
from .storage import level_roles


@dataclass(frozen=True)
class LevelStorage:
    has_size: bool
    has_idx: bool
    has_ptr: bool
    dense_vector: bool = False

    def arrays(self) -> list[str]:
        out = []
        if self.has_size:
            out.append("size")
        if self.has_ptr:
            out.append("ptr")
        if self.has_idx:
            out.append("idx")
        if self.dense_vector:
            out.append("dense_vector")
        return out


@dataclass(frozen=True)
class StorageScheme:
    per_level: tuple[LevelStorage, ...]
    pack_range: tuple[int, int] | None = None
    partition_level: int | None = None

    def __len__(self) -> int:
        return len(self.per_level)

    def __getitem__(self, k: int) -> LevelStorage:
        return self.per_level[k]


def infer_storage(enc: FormatEncoding) -> StorageScheme:
    roles = level_roles(enc.trimmed, enc.merged, enc.indirect_flags, enc.bound, enc.vector_start)
    levels = tuple(
        LevelStorage(has_size=not roles.has_idx[k], has_idx=roles.has_idx[k], has_ptr=roles.has_ptr[k],
                     dense_vector=roles.dense_vector[k])
        for k in range(enc.physical_rank))
    return StorageScheme(levels, enc.layout.pack, enc.layout.partition)


def explain_storage(scheme: StorageScheme) -> str:
    rows = [f"L{k}: " + ", ".join(lv.arrays()) for k, lv in enumerate(scheme.per_level)]
    text = " | ".join(rows + ["val"])
    extra = []
    if scheme.pack_range is not None:
        extra.append(f"pack({scheme.pack_range[0]},{scheme.pack_range[1]})")
    if scheme.partition_level is not None:
        extra.append(f"partition({scheme.partition_level})")
    return text + ("" if not extra else " ; " + " ".join(extra))
