from __future__ import annotations

from typing import Any, Dict, Tuple

import numpy as np

from ..utils import fnv1a64


def _name_key(name: str) -> int:
    return fnv1a64(name.encode("utf-8")) & 0xFFFFFFFF


class RngState:
    """Named, splittable stream on numpy's counter-based Philox generator.

    A stream is identified by ``(seed, path)``; ``split("data")`` derives an
    independent child stream whose identity does not depend on how much the
    parent has been consumed. ``state_dict`` captures the counter position so
    a resumed run continues the exact sequence.
    """

    def __init__(self, seed: int, path: Tuple[str, ...] = ()):
        self.seed = int(seed)
        self.path = tuple(path)
        seq = np.random.SeedSequence(self.seed, spawn_key=tuple(_name_key(p) for p in self.path))
        self._bitgen = np.random.Philox(seq)
        self.generator = np.random.Generator(self._bitgen)

    def split(self, *names: str) -> "RngState":
        return RngState(self.seed, self.path + tuple(names))

    def normal(self, shape, dtype=np.float32) -> np.ndarray:
        return self.generator.standard_normal(shape, dtype=np.float64).astype(dtype)

    def uniform(self, shape, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        return self.generator.uniform(low, high, size=shape)

    def state_dict(self) -> Dict[str, Any]:
        st = self._bitgen.state
        inner = st["state"]
        return {
            "seed": self.seed,
            "path": list(self.path),
            "counter": [int(v) for v in inner["counter"]],
            "key": [int(v) for v in inner["key"]],
            "buffer": [int(v) for v in st["buffer"]],
            "buffer_pos": int(st["buffer_pos"]),
            "has_uint32": int(st["has_uint32"]),
            "uinteger": int(st["uinteger"]),
        }

    @classmethod
    def from_state_dict(cls, d: Dict[str, Any]) -> "RngState":
        rng = cls(d["seed"], tuple(d["path"]))
        rng._bitgen.state = {
            "bit_generator": "Philox",
            "state": {
                "counter": np.array(d["counter"], dtype=np.uint64),
                "key": np.array(d["key"], dtype=np.uint64),
            },
            "buffer": np.array(d["buffer"], dtype=np.uint64),
            "buffer_pos": d["buffer_pos"],
            "has_uint32": d["has_uint32"],
            "uinteger": d["uinteger"],
        }
        return rng

    def __repr__(self) -> str:
        return f"RngState(seed={self.seed}, path={'/'.join(self.path) or '-'})"
