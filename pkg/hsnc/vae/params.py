"""Parameter layout, initialization and counting for the VAE."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Dict, Iterator, List, Literal, Tuple

import numpy as np

from ..models import VaeConfig
from ..tensor.core import Tensor
from ..tensor.rng import RngState

Init = Literal["fan_in", "zero", "one", "log_s2"]


@dataclass(frozen=True)
class ParamSpec:
    name: str
    shape: Tuple[int, ...]
    init: Init
    fan_in: int = 1


class VaeParams:
    """Ordered name → Tensor map of every learnable weight."""

    def __init__(self, tensors: Dict[str, Tensor]):
        self.tensors = dict(tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def names(self) -> List[str]:
        return list(self.tensors)

    def items(self):
        return self.tensors.items()

    def arrays(self) -> Dict[str, np.ndarray]:
        return {k: t.data for k, t in self.tensors.items()}

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def grads(self) -> Dict[str, np.ndarray]:
        return {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in self.tensors.items()}

    def num_elements(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))

    def copy(self) -> "VaeParams":
        return VaeParams({k: Tensor(t.data.copy(), requires_grad=t.requires_grad) for k, t in self.tensors.items()})

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray], requires_grad: bool = True) -> "VaeParams":
        return cls({k: Tensor(np.asarray(a, dtype=np.float32), requires_grad=requires_grad) for k, a in arrays.items()})


def _conv(specs: List[ParamSpec], name: str, cin: int, cout: int, k: int, zero: bool = False) -> None:
    init: Init = "zero" if zero else "fan_in"
    specs.append(ParamSpec(f"{name}.w", (cout, cin, k, k), init, cin * k * k))
    specs.append(ParamSpec(f"{name}.b", (cout,), init, cin * k * k))


def _conv_t(specs: List[ParamSpec], name: str, cin: int, cout: int, k: int = 2) -> None:
    # with kernel == stride every output pixel sees one tap per input channel
    specs.append(ParamSpec(f"{name}.w", (cin, cout, k, k), "fan_in", cin))
    specs.append(ParamSpec(f"{name}.b", (cout,), "fan_in", cin))


def _norm(specs: List[ParamSpec], name: str, c: int) -> None:
    specs.append(ParamSpec(f"{name}.g", (c,), "one"))
    specs.append(ParamSpec(f"{name}.b", (c,), "zero"))


def _resblock(specs: List[ParamSpec], name: str, cin: int, cout: int) -> None:
    _norm(specs, f"{name}.norm1", cin)
    _conv(specs, f"{name}.conv1", cin, cout, 3)
    _norm(specs, f"{name}.norm2", cout)
    _conv(specs, f"{name}.conv2", cout, cout, 3, zero=True)
    if cin != cout:
        _conv(specs, f"{name}.skip", cin, cout, 1)


def _middle(specs: List[ParamSpec], name: str, c: int) -> None:
    _resblock(specs, f"{name}.res1", c, c)
    for w in ("wq", "wk", "wv", "wo"):
        specs.append(ParamSpec(f"{name}.attn.{w}", (c, c), "fan_in", c))
    _resblock(specs, f"{name}.res2", c, c)


def param_shapes(cfg: VaeConfig) -> List[ParamSpec]:
    cfg.ensure_valid()
    chs = list(cfg.enc_channels)
    specs: List[ParamSpec] = []

    _conv(specs, "enc.conv_in", cfg.in_channels, chs[0], 3)
    prev = chs[0]
    for i, ch in enumerate(chs):
        _resblock(specs, f"enc.level{i}.res", prev, ch)
        prev = ch
        if i < cfg.n_down:
            _conv(specs, f"enc.level{i}.down", ch, ch, 2)
    _middle(specs, "enc.mid", chs[-1])
    _conv(specs, "enc.out", chs[-1], 2 * cfg.latent_channels, 3, zero=True)

    rev = chs[::-1]
    _conv(specs, "dec.conv_in", cfg.latent_channels, rev[0], 3)
    _middle(specs, "dec.mid", rev[0])
    prev = rev[0]
    for j in range(cfg.n_down):
        _resblock(specs, f"dec.level{j}.res", prev, rev[j])
        _conv_t(specs, f"dec.level{j}.up", rev[j], rev[j + 1])
        prev = rev[j + 1]
    _resblock(specs, "dec.final", prev, rev[-1])
    _conv(specs, "dec.conv_out", rev[-1], cfg.in_channels, 3, zero=True)

    specs.append(ParamSpec("log_s2", (), "log_s2"))
    if cfg.supervised:
        for p in cfg.head_products:
            _conv(specs, f"head.{p}", cfg.latent_channels, 1, 1)
    return specs


def init_params(cfg: VaeConfig, rng: RngState) -> VaeParams:
    """Fan-in uniform weights; residual second convs and both 3×3 output projections start at zero.

    Every parameter draws from its own named stream, so adding a head never
    changes the backbone's initial values.
    """
    tensors: Dict[str, Tensor] = {}
    for spec in param_shapes(cfg):
        if spec.init == "zero":
            data = np.zeros(spec.shape, dtype=np.float32)
        elif spec.init == "one":
            data = np.ones(spec.shape, dtype=np.float32)
        elif spec.init == "log_s2":
            data = np.full(spec.shape, cfg.log_s2_init, dtype=np.float32)
        else:
            bound = 1.0 / np.sqrt(spec.fan_in)
            data = rng.split("init", spec.name).uniform(spec.shape, -bound, bound).astype(np.float32)
        tensors[spec.name] = Tensor(data, requires_grad=True)
    return VaeParams(tensors)


def count_params(cfg: VaeConfig) -> int:
    return int(sum(int(np.prod(s.shape)) for s in param_shapes(cfg)))


def count_params_closed_form(cfg: VaeConfig) -> int:
    """Independent layer-size sum; must agree with ``count_params``."""

    def conv(cin: int, cout: int, k: int) -> int:
        return cout * cin * k * k + cout

    def res(cin: int, cout: int) -> int:
        return 2 * cin + conv(cin, cout, 3) + 2 * cout + conv(cout, cout, 3) + (conv(cin, cout, 1) if cin != cout else 0)

    def mid(c: int) -> int:
        return 2 * res(c, c) + 4 * c * c

    chs, c, C = list(cfg.enc_channels), cfg.latent_channels, cfg.in_channels
    enc = conv(C, chs[0], 3) + mid(chs[-1]) + conv(chs[-1], 2 * c, 3)
    enc += sum(res(p, q) for p, q in zip([chs[0]] + chs[:-1], chs))
    enc += sum(conv(ch, ch, 2) for ch in chs[: cfg.n_down])
    rev = chs[::-1]
    dec = conv(c, rev[0], 3) + mid(rev[0]) + res(rev[-1], rev[-1]) + conv(rev[-1], C, 3)
    dec += sum(res(rev[j], rev[j]) + rev[j] * rev[j + 1] * 4 + rev[j + 1] for j in range(cfg.n_down))
    heads = len(cfg.head_products) * (c + 1) if cfg.supervised else 0
    return enc + dec + 1 + heads


def vae_param_hash(params: VaeParams) -> str:
    h = hashlib.sha256()
    for name, t in params.items():
        h.update(name.encode("utf-8"))
        h.update(str(t.shape).encode("ascii"))
        h.update(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    return h.hexdigest()
