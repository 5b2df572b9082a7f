"""Training loop, test accuracy and the pretrain / scratch / transfer modes."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .augment import AugmentationPolicy, augment_pixels, draw_rng
from .data import Dataset, merge_datasets
from .functional import cross_entropy_loss
from .imageops import resize_bilinear
from .models import DISPLAY_NAMES, ModelSpec, Network, build_model, forward_classify, load_checkpoint, \
    save_checkpoint
from .optim import SgdState, sgd_step, zero_grad
from .rng import derived_rng
from .tensor import Tensor, backward, no_grad

log = logging.getLogger(__name__)

MODES = ("pretrain", "scratch", "transfer_merge", "transfer_finetune")

# fixed input standardisation: [0, 1] pixels -> roughly [-2, 2]
PIXEL_MEAN = 0.5
PIXEL_SCALE = 4.0


@dataclass
class TrainConfig:
    model: ModelSpec
    epochs: int = 10
    batch_size: int = 64
    learning_rate: float = 0.01
    momentum: float = 0.9
    augmentation: Optional[AugmentationPolicy] = None
    seed: int = 0
    mode: str = "pretrain"
    checkpoint_in: Optional[str] = None
    checkpoint_out: Optional[str] = None
    # False records epoch_seconds as 0.0 so record files are byte-reproducible
    timing: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.mode == "transfer_finetune" and not self.checkpoint_in:
            raise ValueError("transfer_finetune requires checkpoint_in")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["augmentation"] = self.augmentation.to_dict() if self.augmentation else None
        return d


@dataclass
class EpochRecord:
    epoch: int
    test_accuracy: float
    train_loss: float
    epoch_seconds: float


@dataclass
class ExperimentResult:
    config: dict
    records: list[EpochRecord] = field(default_factory=list)
    net: Optional[Network] = field(default=None, repr=False, compare=False)

    @property
    def best_accuracy(self) -> float:
        return max(r.test_accuracy for r in self.records)

    @property
    def best_epoch(self) -> int:
        best = self.best_accuracy
        return next(r.epoch for r in self.records if r.test_accuracy == best)

    @property
    def model(self) -> str:
        return self.config["model"]["kind"]

    @property
    def mode(self) -> str:
        return self.config["mode"]

    @property
    def augmented(self) -> bool:
        aug = self.config.get("augmentation")
        return bool(aug) and not AugmentationPolicy(**_policy_args(aug)).is_identity

    @property
    def label(self) -> str:
        return DISPLAY_NAMES[self.model]


def _policy_args(d: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


# -- batches -------------------------------------------------------------------

def to_input(pixels: np.ndarray) -> Tensor:
    """[N, H, W, C] pixels in [0, 1] -> standardised NCHW float64 tensor."""
    x = np.asarray(pixels, dtype=np.float64).transpose(0, 3, 1, 2)
    return Tensor((x - PIXEL_MEAN) * PIXEL_SCALE)


def training_batch(ds: Dataset, indices: np.ndarray, side: int,
                   policy: Optional[AugmentationPolicy], epoch: int) -> np.ndarray:
    if policy is None or policy.is_identity:
        return ds.at_side(side)[indices]
    out = np.empty((len(indices), side, side, 3))
    for k, i in enumerate(indices):
        img = augment_pixels(ds.pixels[i], policy, draw_rng(policy, int(i), epoch))
        out[k] = img if img.shape[0] == side else resize_bilinear(img, side)
    return out


def batch_count(n: int, batch_size: int) -> int:
    return math.ceil(n / batch_size)


# -- loop ----------------------------------------------------------------------

def train_epoch(net: Network, train: Dataset, cfg: TrainConfig, epoch_index: int,
                state: Optional[SgdState] = None) -> tuple[Network, float, float]:
    """One shuffled pass with an SGD step per batch.

    Returns the network, mean batch loss and elapsed seconds (0.0 when
    ``cfg.timing`` is off).
    """
    if len(train) == 0:
        raise ValueError(f"training set {train.name!r} is empty")
    params = net.parameters()
    if state is None:
        state = SgdState(params, cfg.learning_rate, cfg.momentum)
    side = net.spec.input_side
    order = derived_rng(cfg.seed, epoch_index).permutation(len(train))
    start = time.perf_counter()
    net.train()
    losses = []
    for b in range(batch_count(len(train), cfg.batch_size)):
        idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
        x = to_input(training_batch(train, idx, side, cfg.augmentation, epoch_index))
        zero_grad(params)
        logits, _ = forward_classify(net, x)
        loss = cross_entropy_loss(logits, train.labels[idx])
        backward(loss)
        sgd_step(params, state)
        losses.append(loss.item())
    elapsed = time.perf_counter() - start if cfg.timing else 0.0
    return net, float(np.mean(losses)), elapsed


def predict_dataset(net: Network, ds: Dataset, batch_size: int = 256) -> np.ndarray:
    side = net.spec.input_side
    pixels = ds.at_side(side)
    preds = []
    net.eval()
    try:
        with no_grad():
            for lo in range(0, len(ds), batch_size):
                _, p = forward_classify(net, to_input(pixels[lo:lo + batch_size]))
                preds.append(p)
    finally:
        net.train()
    return np.concatenate(preds)


def evaluate_accuracy(net: Network, test: Dataset) -> float:
    """Percent of ``test`` classified correctly, rounded to 3 decimals."""
    if len(test) == 0:
        raise ValueError(f"test set {test.name!r} is empty")
    correct = int((predict_dataset(net, test) == test.labels).sum())
    return accuracy_percent(correct, len(test))


def accuracy_percent(correct: int, total: int) -> float:
    return round(100.0 * correct / total, 3)


# -- experiments -----------------------------------------------------------------

def resolve_datasets(mode: str, source_train=None, source_test=None, target_train=None,
                     target_test=None) -> tuple[Dataset, Dataset]:
    """Pick (train, test) for ``mode``; transfer modes merge source and target training data."""
    need = {
        "pretrain": ("source_train", "source_test"),
        "scratch": ("target_train", "target_test"),
        "transfer_merge": ("source_train", "target_train", "target_test"),
        "transfer_finetune": ("source_train", "target_train", "target_test"),
    }[mode]
    given = dict(source_train=source_train, source_test=source_test,
                 target_train=target_train, target_test=target_test)
    missing = [k for k in need if given[k] is None]
    if missing:
        raise ValueError(f"mode {mode!r} needs datasets: {', '.join(missing)}")
    if mode == "pretrain":
        return source_train, source_test
    if mode == "scratch":
        return target_train, target_test
    return merge_datasets(source_train, target_train), target_test


def check_disjoint(train: Dataset, test: Dataset) -> None:
    overlap = set(train.source_ids) & set(test.source_ids)
    if overlap:
        raise ValueError(f"{len(overlap)} test samples also appear in training data, e.g. {sorted(overlap)[0]}")


def run_experiment(cfg: TrainConfig, *, source_train: Optional[Dataset] = None,
                   source_test: Optional[Dataset] = None, target_train: Optional[Dataset] = None,
                   target_test: Optional[Dataset] = None, keep_network: bool = False) -> ExperimentResult:
    train, test = resolve_datasets(cfg.mode, source_train, source_test, target_train, target_test)
    check_disjoint(train, test)

    net = build_model(cfg.model, cfg.seed)
    if cfg.mode == "transfer_finetune":
        if not Path(cfg.checkpoint_in).is_file():
            raise FileNotFoundError(f"checkpoint {cfg.checkpoint_in} not found")
        load_checkpoint(net, cfg.checkpoint_in)

    state = SgdState(net.parameters(), cfg.learning_rate, cfg.momentum)
    result = ExperimentResult(cfg.to_dict())
    for epoch in range(1, cfg.epochs + 1):
        _, loss, seconds = train_epoch(net, train, cfg, epoch, state)
        acc = evaluate_accuracy(net, test)
        result.records.append(EpochRecord(epoch, acc, loss, seconds))
        log.info("%s %s epoch %d: loss %.4f acc %.3f (%.2fs)", cfg.model.kind, cfg.mode, epoch, loss, acc, seconds)

    if cfg.checkpoint_out:
        save_checkpoint(net, cfg.checkpoint_out)
    if keep_network:
        result.net = net
    return result
