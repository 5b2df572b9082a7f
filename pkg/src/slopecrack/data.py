"""Labelled crack-image datasets: loading, splitting, merging and manifests.

Pixels are stored once per dataset as an [N, side, side, 3] float32 stack in
[0, 1]; :class:`ImageSample` objects are views handed out on access.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .imageops import resize_batch, resize_bilinear
from .rng import SplitMix64, fisher_yates

log = logging.getLogger(__name__)

CRACKED, UNCRACKED = 1, 0
CLASS_DIRS = {CRACKED: "cracked", UNCRACKED: "uncracked"}
PIXEL_DTYPE = np.float32


@dataclass(frozen=True)
class ImageSample:
    pixels: np.ndarray
    label: int
    source_id: str


class Dataset:
    def __init__(self, name: str, side: int, pixels: np.ndarray, labels: Sequence[int],
                 source_ids: Sequence[str]):
        pixels = np.asarray(pixels, dtype=PIXEL_DTYPE)
        labels = np.asarray(labels, dtype=np.int64)
        if pixels.ndim != 4 or pixels.shape[1:] != (side, side, 3):
            raise ValueError(f"dataset {name!r}: pixels {pixels.shape} do not match side {side} x 3 channels")
        if not (len(pixels) == len(labels) == len(source_ids)):
            raise ValueError(f"dataset {name!r}: pixel, label and id counts differ")
        if labels.size and not np.isin(labels, (UNCRACKED, CRACKED)).all():
            raise ValueError(f"dataset {name!r}: labels must be 0 or 1")
        self.name = name
        self.side = side
        self.pixels = pixels
        self.pixels.flags.writeable = False
        self.labels = labels
        self.source_ids = list(source_ids)
        self._resized: dict[int, np.ndarray] = {}
        self.skipped = 0

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> ImageSample:
        return ImageSample(self.pixels[i], int(self.labels[i]), self.source_ids[i])

    @property
    def samples(self) -> list[ImageSample]:
        return [self[i] for i in range(len(self))]

    def class_count(self, label: int) -> int:
        return int((self.labels == label).sum())

    def class_counts(self) -> dict[int, int]:
        return {CRACKED: self.class_count(CRACKED), UNCRACKED: self.class_count(UNCRACKED)}

    def subset(self, indices: Sequence[int], name: Optional[str] = None) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(name or self.name, self.side, self.pixels[idx], self.labels[idx],
                       [self.source_ids[i] for i in idx])

    def at_side(self, side: int) -> np.ndarray:
        """All pixels resized to ``side`` (cached)."""
        if side == self.side:
            return self.pixels
        if side not in self._resized:
            self._resized[side] = resize_batch(self.pixels, side)
        return self._resized[side]

    def manifest(self) -> dict:
        return {
            "name": self.name,
            "side": self.side,
            "counts": {CLASS_DIRS[c]: n for c, n in self.class_counts().items()},
            "source_ids": self.source_ids,
        }

    def __repr__(self) -> str:
        return f"Dataset({self.name!r}, n={len(self)}, side={self.side}, counts={self.class_counts()})"


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")


# -- directories ---------------------------------------------------------------

def decode_png(path: Path, side: int) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return resize_bilinear(arr, side).astype(PIXEL_DTYPE)


def load_dataset(root, side: int, name: Optional[str] = None) -> Dataset:
    """Read ``root/cracked/*.png`` and ``root/uncracked/*.png``.

    Files are taken in lexicographic order. Unreadable files are skipped
    with a warning; the number skipped is stored on the result as
    ``skipped``.
    """
    root = Path(root)
    pixels, labels, ids = [], [], []
    skipped = 0
    for label in (CRACKED, UNCRACKED):
        folder = root / CLASS_DIRS[label]
        files = sorted(folder.glob("*.png")) if folder.is_dir() else []
        loaded = 0
        for f in files:
            try:
                pixels.append(decode_png(f, side))
            except (OSError, UnidentifiedImageError, ValueError) as exc:
                log.warning("skipping unreadable image %s: %s", f, exc)
                skipped += 1
                continue
            labels.append(label)
            ids.append(f"{CLASS_DIRS[label]}/{f.name}")
            loaded += 1
        if loaded == 0:
            raise ValueError(f"class directory {folder} has no readable PNG images")
    ds = Dataset(name or root.name, side, np.stack(pixels), labels, ids)
    ds.skipped = skipped
    return ds


def save_dataset(ds: Dataset, root) -> Path:
    """Write the directory layout plus ``manifest.json``; returns the manifest path."""
    root = Path(root)
    for d in CLASS_DIRS.values():
        (root / d).mkdir(parents=True, exist_ok=True)
    ids = []
    for i in range(len(ds)):
        s = ds[i]
        rel = s.source_id if "/" in s.source_id else f"{CLASS_DIRS[s.label]}/{s.source_id}.png"
        img = np.round(np.clip(s.pixels, 0, 1) * 255).astype(np.uint8)
        Image.fromarray(img).save(root / rel)
        ids.append(rel)
    manifest = Dataset(ds.name, ds.side, ds.pixels, ds.labels, ids).manifest()
    return write_manifest(manifest, root / "manifest.json")


def write_manifest(manifest: dict, path) -> Path:
    path = Path(path)
    atomic_write_text(path, json.dumps(manifest, indent=2) + "\n")
    return path


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_text(text, encoding="utf-8", newline="\n")
    tmp.replace(path)


# -- split / merge -------------------------------------------------------------

def split_dataset(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Stratified split: each class is shuffled and cut independently.

    One splitmix64 stream seeded by ``spec.seed`` drives a Fisher-Yates
    shuffle of class 0, then class 1; the first ``floor(fraction * n)``
    of each go to train.
    """
    stream = SplitMix64(spec.seed)
    train_idx, test_idx = [], []
    for label in (UNCRACKED, CRACKED):
        members = np.flatnonzero(ds.labels == label)
        n = len(members)
        k = int(np.floor(spec.train_fraction * n + 1e-9))
        if n < 2 or k == 0 or k == n:
            raise ValueError(f"split of {ds.name!r}: class {label} with {n} samples leaves an empty side")
        perm = fisher_yates(n, stream)
        train_idx += [int(members[p]) for p in perm[:k]]
        test_idx += [int(members[p]) for p in perm[k:]]
    return ds.subset(train_idx, f"{ds.name}-train"), ds.subset(test_idx, f"{ds.name}-test")


def merge_datasets(source_train: Dataset, target_train: Dataset, name: Optional[str] = None) -> Dataset:
    """Source samples followed by target samples."""
    if source_train.side != target_train.side:
        raise ValueError(f"cannot merge side {source_train.side} with side {target_train.side}; resize first")
    return Dataset(
        name or f"{source_train.name}+{target_train.name}",
        source_train.side,
        np.concatenate([source_train.pixels, target_train.pixels]),
        np.concatenate([source_train.labels, target_train.labels]),
        source_train.source_ids + target_train.source_ids,
    )


def concat_all(datasets: Iterable[Dataset], name: str) -> Dataset:
    datasets = list(datasets)
    out = datasets[0]
    for ds in datasets[1:]:
        out = merge_datasets(out, ds)
    return Dataset(name, out.side, out.pixels, out.labels, out.source_ids)
