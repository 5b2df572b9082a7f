"""Per-access random image transforms for training batches."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from typing import Tuple

import numpy as np
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv

from .data import ImageSample
from .imageops import crop_and_resize, warp_about_center
from .rng import derived_rng


@dataclass(frozen=True)
class AugmentationPolicy:
    """Which transforms run and how strongly.

    Applied in a fixed order: flip, rotate, scale, random crop, centre crop,
    brightness, contrast, hue. Output is clamped to [0, 1] after each step.
    """

    flip: bool = True
    hflip_prob: float = 0.5
    vflip_prob: float = 0.5
    rotate: bool = True
    rotation_degrees: float = 15.0
    scale: bool = True
    scale_range: Tuple[float, float] = (0.8, 1.2)
    random_crop: bool = True
    crop_fraction: float = 0.9
    center_crop: bool = False
    center_crop_fraction: float = 0.9
    brightness: bool = True
    brightness_range: Tuple[float, float] = (0.8, 1.2)
    contrast: bool = True
    contrast_range: Tuple[float, float] = (0.8, 1.2)
    hue: bool = True
    hue_shift: float = 0.05
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("hflip_prob", "vflip_prob"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        for name in ("scale_range", "brightness_range", "contrast_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"{name} must satisfy 0 < low <= high, got {(lo, hi)}")
            object.__setattr__(self, name, (float(lo), float(hi)))
        for name in ("crop_fraction", "center_crop_fraction"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        if self.rotation_degrees < 0 or not 0 <= self.hue_shift <= 0.5:
            raise ValueError("rotation_degrees must be >= 0 and hue_shift in [0, 0.5]")

    @classmethod
    def disabled(cls, **kw) -> "AugmentationPolicy":
        off = {f.name: False for f in fields(cls) if f.type in (bool, "bool")}
        off.update(kw)
        return cls(**off)

    @property
    def is_identity(self) -> bool:
        return not any(getattr(self, f.name) for f in fields(self) if f.type in (bool, "bool"))

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    def with_seed(self, seed: int) -> "AugmentationPolicy":
        return replace(self, rng_seed=seed)


def draw_rng(policy: AugmentationPolicy, index: int, epoch: int) -> np.random.Generator:
    """The random state for one access of sample ``index`` during ``epoch``."""
    return derived_rng(policy.rng_seed, index, epoch)


def hflip(img: np.ndarray) -> np.ndarray:
    return img[:, ::-1].copy()


def vflip(img: np.ndarray) -> np.ndarray:
    return img[::-1].copy()


def augment_pixels(img: np.ndarray, policy: AugmentationPolicy, rng: np.random.Generator) -> np.ndarray:
    dtype = img.dtype
    out = img.astype(np.float64)
    side = out.shape[0]

    if policy.flip:
        if rng.random() < policy.hflip_prob:
            out = hflip(out)
        if rng.random() < policy.vflip_prob:
            out = vflip(out)
    if policy.rotate and policy.rotation_degrees > 0:
        angle = rng.uniform(-policy.rotation_degrees, policy.rotation_degrees)
        out = np.clip(warp_about_center(out, angle_deg=angle), 0, 1)
    if policy.scale:
        out = np.clip(warp_about_center(out, scale=rng.uniform(*policy.scale_range)), 0, 1)
    if policy.random_crop:
        size = max(1, int(round(policy.crop_fraction * side)))
        top, left = rng.integers(0, side - size + 1, size=2)
        out = np.clip(crop_and_resize(out, int(top), int(left), size), 0, 1)
    if policy.center_crop:
        size = max(1, int(round(policy.center_crop_fraction * side)))
        off = (side - size) // 2
        out = np.clip(crop_and_resize(out, off, off, size), 0, 1)
    if policy.brightness:
        out = np.clip(out * rng.uniform(*policy.brightness_range), 0, 1)
    if policy.contrast:
        gray = out.mean()
        out = np.clip((out - gray) * rng.uniform(*policy.contrast_range) + gray, 0, 1)
    if policy.hue and policy.hue_shift > 0:
        hsv = rgb_to_hsv(out)
        hsv[..., 0] = (hsv[..., 0] + rng.uniform(-policy.hue_shift, policy.hue_shift)) % 1.0
        out = np.clip(hsv_to_rgb(hsv), 0, 1)
    return out.astype(dtype, copy=False)


def augment_sample(sample: ImageSample, policy: AugmentationPolicy, rng: np.random.Generator) -> ImageSample:
    return ImageSample(augment_pixels(sample.pixels, policy, rng), sample.label, sample.source_id)
