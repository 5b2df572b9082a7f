import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image

from slopecrack.augment import AugmentationPolicy, augment_pixels, augment_sample, draw_rng, hflip, vflip
from slopecrack.data import CRACKED, UNCRACKED, Dataset, ImageSample, SplitSpec, load_dataset, merge_datasets, \
    save_dataset, split_dataset
from slopecrack.imageops import resize_bilinear
from slopecrack.rng import SplitMix64, fisher_yates


def balanced(n_per_class, side=4, name="d", seed=0):
    rng = np.random.default_rng(seed)
    labels = [CRACKED] * n_per_class + [UNCRACKED] * n_per_class
    ids = [f"{name}-{i}" for i in range(2 * n_per_class)]
    return Dataset(name, side, rng.random((2 * n_per_class, side, side, 3)), labels, ids)


def write_png(path, rgb):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(rgb, dtype=np.uint8)).save(path)


# -- rng ---------------------------------------------------------------------

def test_splitmix64_reference_values():
    # reference outputs of splitmix64 seeded with 0
    s = SplitMix64(0)
    assert [s.next() for _ in range(3)] == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_fisher_yates_is_permutation_and_deterministic():
    a = fisher_yates(50, SplitMix64(7))
    assert sorted(a) == list(range(50))
    assert a == fisher_yates(50, SplitMix64(7))
    assert a != fisher_yates(50, SplitMix64(8))


def test_below_is_roughly_uniform():
    s = SplitMix64(1)
    counts = np.bincount([s.below(6) for _ in range(60000)], minlength=6)
    assert np.all(np.abs(counts - 10000) < 400)


# -- load / save -------------------------------------------------------------

def test_load_counts_order_and_values(tmp_path):
    for name in ["b", "a", "c"]:
        write_png(tmp_path / "cracked" / f"{name}.png", np.full((8, 8, 3), 255))
    for name in ["z", "y"]:
        write_png(tmp_path / "uncracked" / f"{name}.png", np.zeros((8, 8, 3)))
    ds = load_dataset(tmp_path, side=4)
    assert len(ds) == 5
    assert ds.class_counts() == {1: 3, 0: 2}
    assert ds.source_ids == ["cracked/a.png", "cracked/b.png", "cracked/c.png", "uncracked/y.png", "uncracked/z.png"]
    assert ds.pixels.shape == (5, 4, 4, 3)
    assert ds.pixels[:3].min() == 1.0 and ds.pixels[3:].max() == 0.0
    again = load_dataset(tmp_path, side=4)
    assert again.source_ids == ds.source_ids and np.array_equal(again.pixels, ds.pixels)


def test_load_converts_grayscale_to_rgb(tmp_path):
    tmp_path.joinpath("cracked").mkdir()
    Image.fromarray(np.full((6, 6), 51, dtype=np.uint8), mode="L").save(tmp_path / "cracked" / "g.png")
    write_png(tmp_path / "uncracked" / "u.png", np.zeros((6, 6, 3)))
    ds = load_dataset(tmp_path, side=6)
    np.testing.assert_allclose(ds.pixels[0], 0.2, atol=1e-6)


def test_load_skips_corrupt_files(tmp_path, caplog):
    write_png(tmp_path / "cracked" / "ok.png", np.zeros((4, 4, 3)))
    (tmp_path / "cracked" / "broken.png").write_bytes(b"not a png")
    write_png(tmp_path / "uncracked" / "ok.png", np.zeros((4, 4, 3)))
    ds = load_dataset(tmp_path, side=4)
    assert len(ds) == 2 and ds.skipped == 1
    assert "broken.png" in caplog.text


def test_load_rejects_empty_class(tmp_path):
    write_png(tmp_path / "cracked" / "ok.png", np.zeros((4, 4, 3)))
    (tmp_path / "uncracked").mkdir()
    with pytest.raises(ValueError, match="uncracked"):
        load_dataset(tmp_path, side=4)


def test_save_then_load_round_trip(tmp_path):
    ds = balanced(3, side=5)
    manifest = save_dataset(ds, tmp_path)
    doc = json.loads(manifest.read_text())
    assert doc["counts"] == {"cracked": 3, "uncracked": 3} and doc["side"] == 5
    back = load_dataset(tmp_path, side=5)
    assert back.class_counts() == ds.class_counts()
    # 8-bit quantisation bounds the error
    order = [doc["source_ids"].index(s) for s in back.source_ids]
    assert np.abs(back.pixels - ds.pixels[order]).max() <= 0.5 / 255 + 1e-6


def test_resize_bilinear_oracles():
    img = np.random.default_rng(0).random((7, 7, 3))
    np.testing.assert_array_equal(resize_bilinear(img, 7), img)
    const = np.full((5, 9, 3), 0.3)
    np.testing.assert_allclose(resize_bilinear(const, 4, 6), 0.3)
    # 2x downsampling with half-pixel centres averages each 2x2 block
    np.testing.assert_allclose(resize_bilinear(img[:6, :6], 3), img[:6, :6].reshape(3, 2, 3, 2, 3).mean((1, 3)))


def test_dataset_rejects_bad_inputs():
    with pytest.raises(ValueError):
        Dataset("x", 4, np.zeros((2, 5, 5, 3)), [0, 1], ["a", "b"])
    with pytest.raises(ValueError):
        Dataset("x", 4, np.zeros((2, 4, 4, 3)), [0, 2], ["a", "b"])
    with pytest.raises(ValueError):
        Dataset("x", 4, np.zeros((2, 4, 4, 3)), [0, 1], ["a"])


# -- split -------------------------------------------------------------------

def test_split_400():
    train, test = split_dataset(balanced(200), SplitSpec(0.8, seed=3))
    assert (len(train), len(test)) == (320, 80)
    assert train.class_counts() == {1: 160, 0: 160}
    assert test.class_counts() == {1: 40, 0: 40}


def test_split_40000_arithmetic():
    ds = Dataset("big", 1, np.zeros((40000, 1, 1, 3)), [1] * 20000 + [0] * 20000, [str(i) for i in range(40000)])
    train, test = split_dataset(ds, SplitSpec(0.8))
    assert (len(train), len(test)) == (32000, 8000)
    assert train.class_counts() == {1: 16000, 0: 16000} and test.class_counts() == {1: 4000, 0: 4000}


def test_split_5_plus_5():
    train, test = split_dataset(balanced(5), SplitSpec(0.8))
    assert train.class_counts() == {1: 4, 0: 4} and test.class_counts() == {1: 1, 0: 1}


def test_split_rejects_single_class():
    ds = Dataset("one", 2, np.zeros((10, 2, 2, 3)), [1] * 10, [str(i) for i in range(10)])
    with pytest.raises(ValueError, match="empty side"):
        split_dataset(ds, SplitSpec(0.8))


def test_split_rejects_fraction_leaving_empty_side():
    with pytest.raises(ValueError):
        split_dataset(balanced(2), SplitSpec(0.4))
    with pytest.raises(ValueError):
        SplitSpec(1.0)


def test_split_matches_hand_shuffle():
    ds = balanced(5)
    train, _ = split_dataset(ds, SplitSpec(0.8, seed=11))
    stream = SplitMix64(11)
    uncracked = [5 + p for p in fisher_yates(5, stream)[:4]]
    cracked = list(fisher_yates(5, stream)[:4])
    assert train.source_ids == [ds.source_ids[i] for i in uncracked + cracked]


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 1000), frac=st.floats(0.05, 0.95), seed=st.integers(0, 2 ** 64 - 1))
def test_split_partition_property(n, frac, seed):
    k = math.floor(frac * n + 1e-9)
    ds = balanced(n, side=1)
    if k in (0, n):
        with pytest.raises(ValueError):
            split_dataset(ds, SplitSpec(frac, seed))
        return
    train, test = split_dataset(ds, SplitSpec(frac, seed))
    a, b = set(train.source_ids), set(test.source_ids)
    assert not a & b and a | b == set(ds.source_ids)
    for label in (0, 1):
        assert abs(train.class_count(label) - frac * n) < 1
        assert train.class_count(label) + test.class_count(label) == n


@settings(max_examples=40, deadline=None)
@given(total=st.integers(2, 1000).map(lambda h: 2 * h))
def test_split_sizes_4_to_2000(total):
    n = total // 2
    train, test = split_dataset(balanced(n, side=1), SplitSpec(0.8))
    k = math.floor(0.8 * n + 1e-9)
    if 0 < k < n:
        assert train.class_counts() == {1: k, 0: k} and test.class_counts() == {1: n - k, 0: n - k}


# -- merge -------------------------------------------------------------------

def test_merge_order_and_counts():
    src, tgt = balanced(4, name="s"), balanced(2, name="t", seed=1)
    m = merge_datasets(src, tgt)
    assert len(m) == 12
    assert m.source_ids == src.source_ids + tgt.source_ids
    assert m.class_counts() == {c: src.class_count(c) + tgt.class_count(c) for c in (0, 1)}


def test_merge_32000_plus_320():
    src = Dataset("s", 1, np.zeros((32000, 1, 1, 3)), [1, 0] * 16000, [f"s{i}" for i in range(32000)])
    tgt = Dataset("t", 1, np.zeros((320, 1, 1, 3)), [1, 0] * 160, [f"t{i}" for i in range(320)])
    assert len(merge_datasets(src, tgt)) == 32320


def test_merge_with_empty_target_is_identity():
    src = balanced(3)
    empty = Dataset("e", 4, np.zeros((0, 4, 4, 3)), [], [])
    m = merge_datasets(src, empty)
    assert m.source_ids == src.source_ids and np.array_equal(m.pixels, src.pixels)


def test_merge_rejects_side_mismatch():
    with pytest.raises(ValueError, match="side"):
        merge_datasets(balanced(2, side=4), balanced(2, side=5))


# -- augmentation ------------------------------------------------------------

def test_disabled_policy_is_identity():
    img = np.random.default_rng(0).random((16, 16, 3)).astype(np.float32)
    out = augment_pixels(img, AugmentationPolicy.disabled(), np.random.default_rng(1))
    assert out.dtype == img.dtype and np.array_equal(out, img)


def test_flip_involution():
    img = np.random.default_rng(0).random((5, 7, 3))
    assert np.array_equal(hflip(hflip(img)), img)
    assert np.array_equal(vflip(vflip(img)), img)
    assert np.array_equal(hflip(img)[:, 0], img[:, -1])


def test_forced_flip_matches_mirror():
    img = np.random.default_rng(0).random((6, 6, 3))
    pol = AugmentationPolicy.disabled(flip=True, hflip_prob=1.0, vflip_prob=0.0)
    assert np.array_equal(augment_pixels(img, pol, np.random.default_rng(0)), img[:, ::-1])


def test_brightness_scales_pixels():
    img = np.full((4, 4, 3), 0.5)
    pol = AugmentationPolicy.disabled(brightness=True, brightness_range=(1.2, 1.2))
    np.testing.assert_allclose(augment_pixels(img, pol, np.random.default_rng(0)), 0.6)


def test_contrast_preserves_mean_when_unclipped():
    img = 0.4 + 0.1 * np.random.default_rng(0).random((8, 8, 3))
    pol = AugmentationPolicy.disabled(contrast=True, contrast_range=(1.1, 1.1))
    out = augment_pixels(img, pol, np.random.default_rng(0))
    np.testing.assert_allclose(out.mean(), img.mean(), atol=1e-12)
    np.testing.assert_allclose(out - out.mean(), 1.1 * (img - img.mean()), atol=1e-12)


def test_zero_hue_shift_round_trip_is_identity():
    img = np.random.default_rng(0).random((6, 6, 3))
    pol = AugmentationPolicy.disabled(hue=True, hue_shift=0.0)
    np.testing.assert_array_equal(augment_pixels(img, pol, np.random.default_rng(0)), img)


def test_rotation_of_constant_image_is_constant():
    img = np.full((9, 9, 3), 0.7)
    pol = AugmentationPolicy.disabled(rotate=True, scale=True)
    np.testing.assert_allclose(augment_pixels(img, pol, np.random.default_rng(3)), 0.7, atol=1e-12)


def test_augmentation_deterministic_per_draw():
    img = np.random.default_rng(0).random((12, 12, 3))
    pol = AugmentationPolicy(rng_seed=9)
    a = augment_pixels(img, pol, draw_rng(pol, 4, 2))
    b = augment_pixels(img, pol, draw_rng(pol, 4, 2))
    c = augment_pixels(img, pol, draw_rng(pol, 4, 3))
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)


def test_policy_validation():
    with pytest.raises(ValueError):
        AugmentationPolicy(hflip_prob=1.5)
    with pytest.raises(ValueError):
        AugmentationPolicy(brightness_range=(0.0, 1.0))
    with pytest.raises(ValueError):
        AugmentationPolicy(crop_fraction=0.0)


def random_policy(rng):
    on = lambda: bool(rng.random() < 0.6)
    lo = rng.uniform(0.5, 1.0)
    return AugmentationPolicy(
        flip=on(), hflip_prob=rng.random(), vflip_prob=rng.random(),
        rotate=on(), rotation_degrees=rng.uniform(0, 45),
        scale=on(), scale_range=(lo, lo + rng.uniform(0, 0.8)),
        random_crop=on(), crop_fraction=rng.uniform(0.3, 1.0),
        center_crop=on(), center_crop_fraction=rng.uniform(0.3, 1.0),
        brightness=on(), brightness_range=(lo, lo + rng.uniform(0, 1.0)),
        contrast=on(), contrast_range=(lo, lo + rng.uniform(0, 1.0)),
        hue=on(), hue_shift=rng.uniform(0, 0.5), rng_seed=int(rng.integers(2 ** 32)),
    )


def test_augmentation_preserves_shape_range_label_over_10000_draws():
    rng = np.random.default_rng(2024)
    base = rng.random((10, 10, 3)).astype(np.float32)
    for i in range(10000):
        pol = random_policy(rng)
        label = i % 2
        s = augment_sample(ImageSample(base, label, "x"), pol, draw_rng(pol, i, i % 7))
        assert s.pixels.shape == base.shape and s.pixels.dtype == base.dtype
        assert s.label == label and s.source_id == "x"
        assert 0.0 <= s.pixels.min() and s.pixels.max() <= 1.0
        assert np.isfinite(s.pixels).all()
