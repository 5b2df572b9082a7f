"""Parameterised building blocks over the functional kernels."""
from __future__ import annotations

import math
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from . import functional as F
from .tensor import Tensor, add, concat, relu, reshape, transpose

Pair = Union[int, tuple]


class Module:
    """Container with ordered, named parameters and sub-modules.

    Attributes holding a :class:`Tensor` with ``requires_grad`` become
    parameters; attributes holding a :class:`Module` become children.
    """

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out = {prefix + k: v for k, v in self._params.items()}
        for name, child in self._children.items():
            out.update(child.named_parameters(f"{prefix}{name}."))
        return out

    def named_buffers(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {}
        for name, child in self._children.items():
            out.update(child.named_buffers(f"{prefix}{name}."))
        return out

    def load_buffer(self, name: str, value: np.ndarray) -> None:
        head, _, rest = name.partition(".")
        self._children[head].load_buffer(rest, value)

    def modules(self) -> Iterator["Module"]:
        yield self
        for child in self._children.values():
            yield from child.modules()

    def leaves(self) -> list["Module"]:
        return [m for m in self.modules() if not m._children]

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            object.__setattr__(m, "training", mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)


def kaiming_uniform(rng: np.random.Generator, shape: Sequence[int], fan_in: int) -> Tensor:
    bound = math.sqrt(6.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def zeros(n) -> Tensor:
    return Tensor(np.zeros(n), requires_grad=True)


def ones(n) -> Tensor:
    return Tensor(np.ones(n), requires_grad=True)


class Conv2d(Module):
    def __init__(self, rng, cin: int, cout: int, kernel: Pair, stride: int = 1,
                 padding: Pair = 0, bias: bool = True):
        super().__init__()
        kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
        self.stride, self.padding = stride, padding
        self.kernel = (kh, kw)
        self.weight = kaiming_uniform(rng, (cout, cin, kh, kw), cin * kh * kw)
        self.bias = zeros(cout) if bias else None

    def forward(self, x):
        return F.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class DepthwiseConv2d(Module):
    def __init__(self, rng, channels: int, kernel: int = 3, stride: int = 1, padding: int = 1,
                 bias: bool = False):
        super().__init__()
        self.stride, self.padding = stride, padding
        self.kernel = (kernel, kernel)
        self.weight = kaiming_uniform(rng, (channels, 1, kernel, kernel), kernel * kernel)
        self.bias = zeros(channels) if bias else None

    def forward(self, x):
        return F.depthwise_conv2d(x, self.weight, self.bias, self.stride, self.padding)


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = 0.1, epsilon: float = 1e-5):
        super().__init__()
        self.gamma = ones(channels)
        self.beta = zeros(channels)
        self.stats = F.RunningStats.fresh(channels, momentum)
        self.epsilon = epsilon

    def forward(self, x):
        mode = "train" if self.training else "eval"
        return F.batchnorm2d(x, self.gamma, self.beta, self.stats, mode, self.epsilon)

    def named_buffers(self, prefix=""):
        return {prefix + "running_mean": self.stats.mean, prefix + "running_var": self.stats.var}

    def load_buffer(self, name, value):
        if name == "running_mean":
            self.stats.mean = value.copy()
        elif name == "running_var":
            self.stats.var = value.copy()
        else:
            raise KeyError(name)


class LayerNorm(Module):
    def __init__(self, dim: int, epsilon: float = 1e-5):
        super().__init__()
        self.gamma = ones(dim)
        self.beta = zeros(dim)
        self.epsilon = epsilon

    def forward(self, x):
        return F.layernorm(x, self.gamma, self.beta, self.epsilon)


class Dense(Module):
    def __init__(self, rng, fin: int, fout: int):
        super().__init__()
        self.weight = kaiming_uniform(rng, (fin, fout), fin)
        self.bias = zeros(fout)

    def forward(self, x):
        return F.dense(x, self.weight, self.bias)


class ReLU(Module):
    def forward(self, x):
        return relu(x)


class Pool2d(Module):
    def __init__(self, kind: str, window: int, stride: Optional[int] = None, padding: int = 0):
        super().__init__()
        self.kind, self.window, self.stride, self.padding = kind, window, stride or window, padding

    def forward(self, x):
        return F.pool2d(x, self.kind, self.window, self.stride, self.padding)


class GlobalAvgPool(Module):
    def forward(self, x):
        return F.global_avg_pool(x)


class Flatten(Module):
    def forward(self, x):
        return reshape(x, (x.shape[0], -1))


class Sequential(Module):
    def __init__(self, *layers: Module):
        super().__init__()
        for i, layer in enumerate(layers):
            setattr(self, str(i), layer)

    def __iter__(self):
        return iter(self._children.values())

    def __len__(self):
        return len(self._children)

    def forward(self, x):
        for layer in self._children.values():
            x = layer(x)
            if _trace is not None:
                _trace.append((type(layer).__name__, x.shape))
        return x


# Populated by build_model's dry run so shape failures can report every layer.
_trace: Optional[list] = None


def conv_bn_relu(rng, cin, cout, kernel, stride=1, padding=0) -> Sequential:
    return Sequential(Conv2d(rng, cin, cout, kernel, stride, padding, bias=False),
                      BatchNorm2d(cout), ReLU())


class Branches(Module):
    """Apply parallel branches to the same input and stack outputs on channels."""

    def __init__(self, *branches: Module):
        super().__init__()
        for i, b in enumerate(branches):
            setattr(self, f"branch{i}", b)

    def forward(self, x):
        return concat([b(x) for b in self._children.values()], axis=1)


class BasicBlock(Module):
    """Two 3x3 convolutions plus an identity or 1x1-projected shortcut."""

    def __init__(self, rng, cin: int, cout: int, stride: int = 1):
        super().__init__()
        self.conv1 = Conv2d(rng, cin, cout, 3, stride, 1, bias=False)
        self.bn1 = BatchNorm2d(cout)
        self.conv2 = Conv2d(rng, cout, cout, 3, 1, 1, bias=False)
        self.bn2 = BatchNorm2d(cout)
        if stride != 1 or cin != cout:
            self.shortcut = Sequential(Conv2d(rng, cin, cout, 1, stride, 0, bias=False), BatchNorm2d(cout))
        else:
            self.shortcut = None

    def forward(self, x):
        y = self.bn2(self.conv2(relu(self.bn1(self.conv1(x)))))
        skip = x if self.shortcut is None else self.shortcut(x)
        return relu(add(y, skip))


class InceptionA(Module):
    """1x1 | 1x1->5x5 | 1x1->3x3->3x3 | avgpool->1x1, each ``width`` channels."""

    def __init__(self, rng, cin: int, width: int = 16):
        super().__init__()
        self.branches = Branches(
            conv_bn_relu(rng, cin, width, 1),
            Sequential(conv_bn_relu(rng, cin, 12, 1), conv_bn_relu(rng, 12, width, 5, padding=2)),
            Sequential(conv_bn_relu(rng, cin, width, 1), conv_bn_relu(rng, width, width, 3, padding=1),
                       conv_bn_relu(rng, width, width, 3, padding=1)),
            Sequential(Pool2d("avg", 3, 1, 1), conv_bn_relu(rng, cin, width, 1)),
        )
        self.out_channels = 4 * width

    def forward(self, x):
        return self.branches(x)


class InceptionE(Module):
    """Like :class:`InceptionA` but the 3x3 paths fan out into parallel 1x3 and 3x1 convolutions."""

    def __init__(self, rng, cin: int, width: int = 16):
        super().__init__()
        half = width // 2

        def split():
            return Branches(conv_bn_relu(rng, width, half, (1, 3), padding=(0, 1)),
                            conv_bn_relu(rng, width, width - half, (3, 1), padding=(1, 0)))

        self.branches = Branches(
            conv_bn_relu(rng, cin, width, 1),
            Sequential(conv_bn_relu(rng, cin, width, 1), split()),
            Sequential(conv_bn_relu(rng, cin, width, 1), conv_bn_relu(rng, width, width, 3, padding=1), split()),
            Sequential(Pool2d("avg", 3, 1, 1), conv_bn_relu(rng, cin, width, 1)),
        )
        self.out_channels = 4 * width

    def forward(self, x):
        return self.branches(x)


def depthwise_separable(rng, cin: int, cout: int, stride: int) -> Sequential:
    return Sequential(DepthwiseConv2d(rng, cin, 3, stride, 1), BatchNorm2d(cin), ReLU(),
                      Conv2d(rng, cin, cout, 1, bias=False), BatchNorm2d(cout), ReLU())


class PatchEmbedding(Module):
    """Non-overlapping ``patch`` x ``patch`` projection plus class token and positions."""

    def __init__(self, rng, channels: int, side: int, patch: int, dim: int):
        super().__init__()
        self.proj = Conv2d(rng, channels, dim, patch, patch, 0)
        self.grid = side // patch
        self.num_tokens = self.grid * self.grid + 1
        self.cls_token = Tensor(rng.normal(0.0, 0.02, (1, 1, dim)), requires_grad=True)
        self.pos_embedding = Tensor(rng.normal(0.0, 0.02, (1, self.num_tokens, dim)), requires_grad=True)

    def forward(self, x):
        n = x.shape[0]
        p = self.proj(x)
        d = p.shape[1]
        tokens = transpose(reshape(p, (n, d, -1)), (0, 2, 1))
        cls = add(Tensor(np.zeros((n, 1, d))), self.cls_token)
        return add(concat([cls, tokens], axis=1), self.pos_embedding)


class MultiHeadAttention(Module):
    def __init__(self, rng, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.q, self.k, self.v, self.o = (Dense(rng, dim, dim) for _ in range(4))

    def forward(self, x):
        return F.multihead_attention(x, self.q.weight, self.q.bias, self.k.weight, self.k.bias,
                                     self.v.weight, self.v.bias, self.o.weight, self.o.bias, self.heads)


class TransformerBlock(Module):
    """Pre-norm encoder block: attention and MLP sublayers, each residual."""

    def __init__(self, rng, dim: int, heads: int, mlp_ratio: int = 4):
        super().__init__()
        self.norm1 = LayerNorm(dim)
        self.attn = MultiHeadAttention(rng, dim, heads)
        self.norm2 = LayerNorm(dim)
        self.mlp = Sequential(Dense(rng, dim, dim * mlp_ratio), ReLU(), Dense(rng, dim * mlp_ratio, dim))

    def forward(self, x):
        x = add(x, self.attn(self.norm1(x)))
        return add(x, self.mlp(self.norm2(x)))


class ClassToken(Module):
    """Select the first token of [N, T, D]."""

    def forward(self, x):
        return x[:, 0]
