"""The seven crack classifiers at full and desk scale."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import layers as L
from .tensor import ShapeError, Tensor, no_grad

KINDS = ("lenet5", "alexnet", "inception_a_lenet", "inception_e_lenet", "resnet18", "mobilenet_v1", "vit")
LENET_FAMILY = ("lenet5", "inception_a_lenet", "inception_e_lenet")
SCALES = ("full", "desk")

DISPLAY_NAMES = {
    "lenet5": "LeNet5",
    "alexnet": "AlexNet",
    "inception_a_lenet": "InceptionA",
    "inception_e_lenet": "InceptionE",
    "resnet18": "ResNet18",
    "mobilenet_v1": "MobileNet",
    "vit": "VisionTransformer",
}


def default_side(kind: str, scale: str) -> int:
    if kind in LENET_FAMILY:
        return 32
    return 227 if scale == "full" else 64


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    scale: str = "desk"
    num_classes: int = 2
    input_channels: int = 3
    input_side: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if self.scale not in SCALES:
            raise ValueError(f"unknown scale {self.scale!r}; expected 'full' or 'desk'")
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        if self.input_channels < 1:
            raise ValueError("input_channels must be positive")
        if self.input_side is None:
            object.__setattr__(self, "input_side", default_side(self.kind, self.scale))


@dataclass
class Network:
    spec: ModelSpec
    body: L.Module
    layers: list = field(default_factory=list)

    def __post_init__(self):
        self.layers = self.body.leaves()

    def __call__(self, x: Tensor) -> Tensor:
        return self.body(x)

    def parameters(self) -> dict[str, Tensor]:
        return self.body.named_parameters()

    def buffers(self) -> dict[str, np.ndarray]:
        return self.body.named_buffers()

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def train(self, mode: bool = True) -> "Network":
        self.body.train(mode)
        return self

    def eval(self) -> "Network":
        return self.train(False)


# -- architectures -------------------------------------------------------------

def _lenet_head(rng, features: int, classes: int):
    return [L.Flatten(), L.Dense(rng, features, 120), L.ReLU(), L.Dense(rng, 120, 84), L.ReLU(),
            L.Dense(rng, 84, classes)]


def _lenet5(rng, spec: ModelSpec):
    c = spec.input_channels
    return L.Sequential(
        L.Conv2d(rng, c, 6, 5), L.ReLU(), L.Pool2d("max", 2),
        L.Conv2d(rng, 6, 16, 5), L.ReLU(), L.Pool2d("max", 2),
        *_lenet_head(rng, 16 * 5 * 5, spec.num_classes),
    )


def _inception_lenet(rng, spec: ModelSpec, module_cls):
    # The inception module keeps the 14x14 map, so the dense input is 16*7*7.
    c = spec.input_channels
    block = module_cls(rng, 6)
    side = spec.input_side
    after = ((side - 4) // 2) // 2
    return L.Sequential(
        L.Conv2d(rng, c, 6, 5), L.ReLU(), L.Pool2d("max", 2),
        block, L.Conv2d(rng, block.out_channels, 16, 1), L.ReLU(), L.Pool2d("max", 2),
        *_lenet_head(rng, 16 * after * after, spec.num_classes),
    )


def _alexnet(rng, spec: ModelSpec):
    full = spec.scale == "full"
    widths = (96, 256, 384, 384, 256) if full else (24, 64, 96, 96, 64)
    hidden = (4096, 4096) if full else (256, 128)
    pad1 = 0 if full else 2
    c1, c2, c3, c4, c5 = widths
    features = L.Sequential(
        L.Conv2d(rng, spec.input_channels, c1, 11, 4, pad1), L.ReLU(), L.Pool2d("max", 3, 2),
        L.Conv2d(rng, c1, c2, 5, 1, 2), L.ReLU(), L.Pool2d("max", 3, 2),
        L.Conv2d(rng, c2, c3, 3, 1, 1), L.ReLU(),
        L.Conv2d(rng, c3, c4, 3, 1, 1), L.ReLU(),
        L.Conv2d(rng, c4, c5, 3, 1, 1), L.ReLU(), L.Pool2d("max", 3, 2),
    )
    s = spec.input_side
    s = (s + 2 * pad1 - 11) // 4 + 1
    for _ in range(3):
        s = (s - 3) // 2 + 1
    flat = c5 * max(s, 0) * max(s, 0)
    return L.Sequential(
        features, L.Flatten(),
        L.Dense(rng, max(flat, 1), hidden[0]), L.ReLU(),
        L.Dense(rng, hidden[0], hidden[1]), L.ReLU(),
        L.Dense(rng, hidden[1], spec.num_classes),
    )


def _resnet18(rng, spec: ModelSpec):
    full = spec.scale == "full"
    widths = (64, 128, 256, 512) if full else (16, 32, 64, 128)
    if full:
        stem = [L.Conv2d(rng, spec.input_channels, widths[0], 7, 2, 3, bias=False),
                L.BatchNorm2d(widths[0]), L.ReLU(), L.Pool2d("max", 3, 2, 1)]
    else:
        stem = [L.Conv2d(rng, spec.input_channels, widths[0], 3, 2, 1, bias=False),
                L.BatchNorm2d(widths[0]), L.ReLU()]
    blocks = []
    cin = widths[0]
    for i, w in enumerate(widths):
        stride = 1 if i == 0 else 2
        blocks += [L.BasicBlock(rng, cin, w, stride), L.BasicBlock(rng, w, w, 1)]
        cin = w
    return L.Sequential(*stem, *blocks, L.GlobalAvgPool(), L.Dense(rng, cin, spec.num_classes))


MOBILENET_STAGES = ((64, 1), (128, 2), (128, 1), (256, 2), (256, 1), (512, 2),
                    (512, 1), (512, 1), (512, 1), (512, 1), (512, 1), (1024, 2), (1024, 1))


def _mobilenet_v1(rng, spec: ModelSpec):
    alpha = 1.0 if spec.scale == "full" else 0.25
    cin = int(32 * alpha)
    layers = [L.Conv2d(rng, spec.input_channels, cin, 3, 2, 1, bias=False), L.BatchNorm2d(cin), L.ReLU()]
    for cout, stride in MOBILENET_STAGES:
        cout = int(cout * alpha)
        layers.append(L.depthwise_separable(rng, cin, cout, stride))
        cin = cout
    return L.Sequential(*layers, L.GlobalAvgPool(), L.Dense(rng, cin, spec.num_classes))


VIT_PROFILES = {
    "full": dict(patch=16, dim=192, depth=6, heads=3, mlp_ratio=4),
    "desk": dict(patch=8, dim=64, depth=4, heads=4, mlp_ratio=4),
}


def _vit(rng, spec: ModelSpec):
    cfg = VIT_PROFILES[spec.scale]
    dim = cfg["dim"]
    embed = L.PatchEmbedding(rng, spec.input_channels, spec.input_side, cfg["patch"], dim)
    blocks = [L.TransformerBlock(rng, dim, cfg["heads"], cfg["mlp_ratio"]) for _ in range(cfg["depth"])]
    return L.Sequential(embed, *blocks, L.LayerNorm(dim), L.ClassToken(), L.Dense(rng, dim, spec.num_classes))


BUILDERS = {
    "lenet5": _lenet5,
    "alexnet": _alexnet,
    "inception_a_lenet": lambda rng, spec: _inception_lenet(rng, spec, L.InceptionA),
    "inception_e_lenet": lambda rng, spec: _inception_lenet(rng, spec, L.InceptionE),
    "resnet18": _resnet18,
    "mobilenet_v1": _mobilenet_v1,
    "vit": _vit,
}


def build_model(spec: ModelSpec, seed: int = 0) -> Network:
    """Construct and initialise ``spec`` deterministically from ``seed``.

    A one-image dry run validates the downsampling chain; on failure the
    error message lists the output shape of every layer reached.
    """
    rng = np.random.default_rng(seed)
    body = BUILDERS[spec.kind](rng, spec)
    net = Network(spec, body)
    _dry_run(net)
    return net


def _dry_run(net: Network) -> None:
    spec = net.spec
    x = Tensor(np.zeros((1, spec.input_channels, spec.input_side, spec.input_side)))
    L._trace = []
    net.eval()
    try:
        with no_grad():
            out = net(x)
        if out.shape != (1, spec.num_classes):
            raise ShapeError(f"network emits {out.shape}, expected (1, {spec.num_classes})")
    except ShapeError as exc:
        lines = "\n".join(f"  {name}: {shape}" for name, shape in L._trace)
        raise ShapeError(f"{spec.kind} cannot take {spec.input_side}x{spec.input_side} input: {exc}\n"
                         f"shape trace:\n{lines}") from exc
    finally:
        L._trace = None
        net.train()


def forward_classify(net: Network, batch: Tensor) -> tuple[Tensor, np.ndarray]:
    """Logits and argmax predictions (ties resolve to the lowest class index)."""
    spec = net.spec
    expected = (spec.input_channels, spec.input_side, spec.input_side)
    if batch.ndim != 4 or batch.shape[1:] != expected:
        raise ShapeError(f"batch shape {batch.shape} does not match model input (N, {expected})")
    logits = net(batch)
    return logits, predict(logits.data)


def predict(logits: np.ndarray) -> np.ndarray:
    return np.argmax(logits, axis=1)


# -- checkpoints ---------------------------------------------------------------

MAGIC = b"FSR1"


def save_checkpoint(net: Network, path) -> None:
    """Write parameters and batch-norm statistics in the FSR1 container."""
    entries = list(net.parameters().items())
    entries += [(name, Tensor(value)) for name, value in net.buffers().items()]
    chunks = [MAGIC]
    for name, t in entries:
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", t.ndim))
        chunks.append(struct.pack(f"<{t.ndim}I", *t.shape))
        chunks.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    tmp.replace(path)


def read_checkpoint(path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path}: not an FSR1 checkpoint")
    pos = 4
    out = {}
    while pos < len(blob):
        (n,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos:pos + n].decode("utf-8")
        pos += n
        (rank,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        out[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).reshape(dims).astype(np.float64)
        pos += 8 * count
    return out


def load_checkpoint(net: Network, path) -> None:
    stored = read_checkpoint(path)
    params, buffers = net.parameters(), net.buffers()
    missing = (set(params) | set(buffers)) - set(stored)
    if missing:
        raise ValueError(f"checkpoint lacks {sorted(missing)[:5]}")
    for name, p in params.items():
        if stored[name].shape != p.shape:
            raise ValueError(f"checkpoint {name}: shape {stored[name].shape} != {p.shape}")
        p.data[...] = stored[name]
    for name in buffers:
        net.body.load_buffer(name, stored[name])
