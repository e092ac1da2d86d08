from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, List

from ..errors import UsageError
from ..utils import fnv1a64


def id_hash(tile_id: str) -> int:
    return fnv1a64(tile_id.encode("utf-8"))


@dataclass
class SplitAssignment:
    train_ids: List[str] = field(default_factory=list)
    val_ids: List[str] = field(default_factory=list)
    ratio: float = 0.7

    def to_json(self) -> dict:
        return {"train_ids": self.train_ids, "val_ids": self.val_ids, "ratio": self.ratio}

    @classmethod
    def from_json(cls, d: dict) -> "SplitAssignment":
        return cls(list(d["train_ids"]), list(d["val_ids"]), float(d["ratio"]))


def split_files(ids: Iterable[str], train_pct: int = 70) -> SplitAssignment:
    """Assign each id to train iff fnv1a64(id) mod 100 < train_pct.

    Membership depends on the id alone, so growing the id set never moves an
    existing id. Both lists come back sorted.
    """
    ids = list(ids)
    if len(set(ids)) != len(ids):
        seen, dups = set(), set()
        for i in ids:
            (dups if i in seen else seen).add(i)
        raise UsageError(f"split_files: duplicate ids {sorted(dups)[:5]}")
    if not 0 <= train_pct <= 100:
        raise UsageError(f"train_pct must be within [0, 100], got {train_pct}")
    train = sorted(i for i in ids if id_hash(i) % 100 < train_pct)
    train_set = set(train)
    val = sorted(i for i in ids if i not in train_set)
    return SplitAssignment(train, val, train_pct / 100.0)


def fixed_validation_ids(val_ids: Iterable[str], n: int = 100) -> List[str]:
    """The run's held-out set: the first ``n`` validation ids in hash order."""
    return sorted(val_ids, key=lambda i: (id_hash(i), i))[:n]
