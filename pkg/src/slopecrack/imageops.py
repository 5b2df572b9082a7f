"""Small H x W x C image helpers shared by loading, augmentation and synthesis."""
from __future__ import annotations

import numpy as np
from scipy import ndimage


def resize_bilinear(img: np.ndarray, height: int, width: int | None = None) -> np.ndarray:
    """Bilinear resize with half-pixel centres and clamped edges (no antialiasing)."""
    width = height if width is None else width
    h, w = img.shape[:2]
    if (h, w) == (height, width):
        return img.copy()
    ys = np.clip((np.arange(height) + 0.5) * (h / height) - 0.5, 0, h - 1)
    xs = np.clip((np.arange(width) + 0.5) * (w / width) - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    if img.ndim == 3:
        wy, wx = wy[..., None], wx[..., None]
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bottom = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    return (top * (1 - wy) + bottom * wy).astype(img.dtype, copy=False)


def resize_batch(images: np.ndarray, side: int) -> np.ndarray:
    """Resize an [N, H, W, C] stack to ``side`` x ``side``."""
    if images.shape[1] == side and images.shape[2] == side:
        return images
    out = np.empty((images.shape[0], side, side, images.shape[3]), dtype=images.dtype)
    for i, img in enumerate(images):
        out[i] = resize_bilinear(img, side)
    return out


def warp_about_center(img: np.ndarray, angle_deg: float = 0.0, scale: float = 1.0) -> np.ndarray:
    """Rotate by ``angle_deg`` and zoom by ``scale`` about the image centre.

    Sampling is bilinear; pixels mapped from outside the source replicate
    the nearest edge.
    """
    h, w = img.shape[:2]
    theta = np.deg2rad(angle_deg)
    c, s = np.cos(theta), np.sin(theta)
    # output -> input coordinate map (inverse of rotate-then-scale)
    inv = np.array([[c, s], [-s, c]]) / scale
    center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    offset = center - inv @ center
    out = np.empty_like(img)
    for ch in range(img.shape[2]):
        out[..., ch] = ndimage.affine_transform(img[..., ch], inv, offset=offset, order=1,
                                                mode="nearest", prefilter=False)
    return out


def crop_and_resize(img: np.ndarray, top: int, left: int, size: int) -> np.ndarray:
    h, w = img.shape[:2]
    return resize_bilinear(img[top:top + size, left:left + size], h, w)


def luminance(img: np.ndarray) -> np.ndarray:
    return img.mean(axis=-1)
