from __future__ import annotations

from typing import Any, Dict, List, Sequence

from ..errors import UsageError
from ..tensor.rng import RngState


class SampleBuffer:
    """Resident set of tile ids that training batches are drawn from.

    The backing ids are visited in a shuffled epoch order; each ``refresh``
    swaps one random slot for the next id in that order, reshuffling when an
    epoch is exhausted.
    """

    def __init__(self, ids: Sequence[str], capacity: int, rng: RngState):
        if capacity < 1:
            raise UsageError(f"buffer capacity must be >= 1, got {capacity}")
        self.ids: List[str] = list(ids)
        self.capacity = int(capacity)
        self.rng = rng
        self.epoch = 0
        self.order: List[int] = self._shuffled()
        n = min(self.capacity, len(self.ids))
        self.slots: List[str] = [self.ids[i] for i in self.order[:n]]
        self.cursor = n

    def _shuffled(self) -> List[int]:
        return [int(i) for i in self.rng.generator.permutation(len(self.ids))]

    def refresh(self) -> None:
        # every id is already resident when the backing list fits
        if len(self.ids) <= self.capacity or not self.slots:
            return
        if self.cursor >= len(self.order):
            self.epoch += 1
            self.order = self._shuffled()
            self.cursor = 0
        slot = int(self.rng.generator.integers(len(self.slots)))
        self.slots[slot] = self.ids[self.order[self.cursor]]
        self.cursor += 1

    def __len__(self) -> int:
        return len(self.slots)

    def state_dict(self) -> Dict[str, Any]:
        return {
            "ids": list(self.ids),
            "capacity": self.capacity,
            "epoch": self.epoch,
            "order": list(self.order),
            "slots": list(self.slots),
            "cursor": self.cursor,
            "rng": self.rng.state_dict(),
        }

    @classmethod
    def from_state_dict(cls, d: Dict[str, Any]) -> "SampleBuffer":
        buf = cls.__new__(cls)
        buf.ids = list(d["ids"])
        buf.capacity = int(d["capacity"])
        buf.epoch = int(d["epoch"])
        buf.order = [int(i) for i in d["order"]]
        buf.slots = list(d["slots"])
        buf.cursor = int(d["cursor"])
        buf.rng = RngState.from_state_dict(d["rng"])
        return buf


def sample_batch(buffer: SampleBuffer, batch: int, rng: RngState) -> List[str]:
    """Draw ``batch`` resident ids uniformly with replacement."""
    if not buffer.slots:
        raise UsageError("sample_batch: buffer is empty")
    picks = rng.generator.integers(0, len(buffer.slots), size=batch)
    return [buffer.slots[int(i)] for i in picks]
