"""Procedural crack / no-crack images on concrete, soil and rock textures.

Every image is a pure function of (config, label, index), so corpora of any
size can be regenerated bit-exactly without storing them.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage

from .data import CRACKED, UNCRACKED, CLASS_DIRS, Dataset, ImageSample, PIXEL_DTYPE
from .imageops import resize_bilinear
from .rng import derived_rng

# base RGB, per-image tint jitter, lattice sizes of the value-noise octaves
FAMILIES = {
    "concrete": ((0.60, 0.60, 0.58), 0.03, (3, 7, 17)),
    "soil": ((0.55, 0.42, 0.29), 0.04, (4, 9, 21)),
    "rock": ((0.48, 0.46, 0.44), 0.03, (5, 11, 27)),
}
FAMILY_IDS = {name: i for i, name in enumerate(FAMILIES)}

# Soil and rock cracks default to thinner, fainter strokes than concrete ones.
CRACK_DEFAULTS = {
    "concrete": {"crack_width_px": (1.0, 2.5), "crack_darkness": 0.35},
    "soil": {"crack_width_px": (0.8, 1.8), "crack_darkness": 0.3},
    "rock": {"crack_width_px": (0.8, 1.8), "crack_darkness": 0.3},
}


@dataclass(frozen=True)
class CrackGenConfig:
    side: int = 64
    background: str = "concrete"
    crack_walk_steps: int = 12
    crack_width_px: Optional[Tuple[float, float]] = None
    crack_darkness: Optional[float] = None
    noise_amplitude: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.background not in FAMILIES:
            raise ValueError(f"unknown background {self.background!r}; expected one of {sorted(FAMILIES)}")
        for name, value in CRACK_DEFAULTS[self.background].items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)
        if self.side < 8:
            raise ValueError("side must be at least 8 pixels")
        if self.crack_walk_steps < 1:
            raise ValueError("crack_walk_steps must be positive")
        lo, hi = self.crack_width_px
        if not 0 < lo <= hi:
            raise ValueError("crack_width_px must satisfy 0 < low <= high")
        object.__setattr__(self, "crack_width_px", (float(lo), float(hi)))
        if not 0 <= self.crack_darkness <= 1 or not 0 <= self.noise_amplitude <= 1:
            raise ValueError("crack_darkness and noise_amplitude must lie in [0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["crack_width_px"] = list(self.crack_width_px)
        return d


def value_noise(rng: np.random.Generator, side: int, cells: int) -> np.ndarray:
    """Bilinearly interpolated random lattice, zero-centred in [-0.5, 0.5]."""
    lattice = rng.random((cells + 1, cells + 1))
    return resize_bilinear(lattice, side) - 0.5


def background(cfg: CrackGenConfig, rng: np.random.Generator) -> np.ndarray:
    base, tint, octaves = FAMILIES[cfg.background]
    side = cfg.side
    lum = np.zeros((side, side))
    weight = 1.0
    total = 0.0
    for cells in octaves:
        lum += weight * value_noise(rng, side, cells)
        total += weight
        weight *= 0.6
    lum = lum / total * cfg.noise_amplitude * 2
    grain = rng.normal(0.0, cfg.noise_amplitude * 0.15, (side, side, 3))
    color = np.asarray(base) + rng.uniform(-tint, tint, 3)
    return color + lum[..., None] + grain


def crack_polyline(cfg: CrackGenConfig, rng: np.random.Generator) -> np.ndarray:
    """Random-walk vertices whose total length is 0.9 * side."""
    side = cfg.side
    lo, hi = 2.0, side - 3.0
    step = 0.9 * side / cfg.crack_walk_steps
    p = rng.uniform(side * 0.3, side * 0.7, 2)
    heading = rng.uniform(0, 2 * np.pi)
    pts = [p]
    for _ in range(cfg.crack_walk_steps):
        heading += rng.normal(0.0, 0.22)
        q = p + step * np.array([np.sin(heading), np.cos(heading)])
        if not (lo <= q[0] <= hi and lo <= q[1] <= hi):
            # turn back toward the centre, keeping a little wobble
            to_center = np.array([side / 2.0, side / 2.0]) - p
            heading = np.arctan2(to_center[0], to_center[1]) + rng.normal(0.0, 0.3)
            q = np.clip(p + step * np.array([np.sin(heading), np.cos(heading)]), lo, hi)
        pts.append(q)
        p = q
    return np.array(pts)


def polyline_distance(points: np.ndarray, side: int) -> np.ndarray:
    """Distance from each pixel centre to the nearest polyline segment."""
    yy, xx = np.mgrid[0:side, 0:side]
    pix = np.stack([yy.ravel(), xx.ravel()], axis=1).astype(float)
    a, b = points[:-1], points[1:]
    ab = b - a
    denom = np.maximum((ab ** 2).sum(axis=1), 1e-12)
    t = np.clip(((pix[:, None, :] - a[None]) * ab[None]).sum(-1) / denom, 0, 1)
    nearest = a[None] + t[..., None] * ab[None]
    d = np.sqrt(((pix[:, None, :] - nearest) ** 2).sum(-1)).min(axis=1)
    return d.reshape(side, side)


# Redraws allowed before an image that violates its class property is kept anyway.
MAX_REDRAWS = 32


def dark_mask(img: np.ndarray, darkness: float) -> np.ndarray:
    """Pixels whose channel mean lies ``darkness / 2`` or more below the image mean."""
    lum = img.mean(axis=-1)
    return lum <= lum.mean() - darkness / 2


def longest_dark_run(mask: np.ndarray) -> int:
    """Largest bounding-box extent over 8-connected components of ``mask``."""
    labels, _ = ndimage.label(mask, structure=np.ones((3, 3)))
    extents = [max(s[0].stop - s[0].start, s[1].stop - s[1].start) for s in ndimage.find_objects(labels)]
    return max(extents, default=0)


def min_crack_pixels(side: int) -> int:
    return min(50, side * side // 16)


def _draw(cfg: CrackGenConfig, label: int, rng: np.random.Generator) -> np.ndarray:
    img = background(cfg, rng)
    if label == CRACKED:
        pts = crack_polyline(cfg, rng)
        width = rng.uniform(*cfg.crack_width_px)
        alpha = np.clip(width / 2 + 0.5 - polyline_distance(pts, cfg.side), 0, 1)
        img = img - cfg.crack_darkness * alpha[..., None]
    return np.clip(img, 0, 1)


def _acceptable(img: np.ndarray, cfg: CrackGenConfig, label: int) -> bool:
    mask = dark_mask(img, cfg.crack_darkness)
    if label == CRACKED:
        return int(mask.sum()) >= min_crack_pixels(cfg.side)
    return longest_dark_run(mask) <= cfg.side / 4


def generate_crack_image(cfg: CrackGenConfig, label: int, index: int) -> ImageSample:
    """Background texture, plus a rasterised random-walk crack when ``label`` is cracked.

    Draws that break the class property (a visible crack; no crack-like dark
    run in uncracked images) are redrawn from the same seeded stream.
    """
    if label not in (CRACKED, UNCRACKED):
        raise ValueError(f"label must be 0 or 1, got {label}")
    rng = derived_rng(cfg.seed, FAMILY_IDS[cfg.background], label, index)
    for _ in range(MAX_REDRAWS):
        img = _draw(cfg, label, rng).astype(PIXEL_DTYPE)
        if _acceptable(img, cfg, label):
            break
    return ImageSample(img, label, f"{cfg.background}-{cfg.seed}-{CLASS_DIRS[label]}-{index:06d}")


def generate_dataset(cfg: CrackGenConfig, n_per_class: int, name: str | None = None) -> Dataset:
    """``n_per_class`` cracked images (index order) followed by as many uncracked."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be at least 1")
    pixels = np.empty((2 * n_per_class, cfg.side, cfg.side, 3), dtype=PIXEL_DTYPE)
    labels, ids = [], []
    k = 0
    for label in (CRACKED, UNCRACKED):
        for i in range(n_per_class):
            s = generate_crack_image(cfg, label, i)
            pixels[k] = s.pixels
            labels.append(label)
            ids.append(s.source_id)
            k += 1
    return Dataset(name or f"synthetic-{cfg.background}", cfg.side, pixels, labels, ids)
