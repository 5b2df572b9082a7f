from collections import deque

import numpy as np
import pytest

from slopecrack.synth import CrackGenConfig, generate_crack_image, generate_dataset, polyline_distance


def dark(pixels, darkness):
    lum = pixels.astype(np.float64).mean(-1)
    return lum <= lum.mean() - darkness / 2


def longest_run_bfs(mask):
    """Largest bounding-box extent of any 8-connected component, by plain BFS."""
    h, w = mask.shape
    seen = np.zeros_like(mask)
    best = 0
    for sy in range(h):
        for sx in range(w):
            if not mask[sy, sx] or seen[sy, sx]:
                continue
            seen[sy, sx] = True
            q = deque([(sy, sx)])
            ys, xs = [sy, sy], [sx, sx]
            while q:
                y, x = q.popleft()
                ys = [min(ys[0], y), max(ys[1], y)]
                xs = [min(xs[0], x), max(xs[1], x)]
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        ny, nx = y + dy, x + dx
                        if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                            seen[ny, nx] = True
                            q.append((ny, nx))
            best = max(best, ys[1] - ys[0] + 1, xs[1] - xs[0] + 1)
    return best


FAMILIES = ["concrete", "soil", "rock"]


def test_determinism():
    cfg = CrackGenConfig(background="soil", seed=4)
    for label in (0, 1):
        a, b = generate_crack_image(cfg, label, 17), generate_crack_image(cfg, label, 17)
        assert a.pixels.tobytes() == b.pixels.tobytes() and a.source_id == b.source_id
    assert not np.array_equal(generate_crack_image(cfg, 1, 17).pixels, generate_crack_image(cfg, 1, 18).pixels)


def test_image_contract():
    s = generate_crack_image(CrackGenConfig(side=40), 1, 0)
    assert s.pixels.shape == (40, 40, 3) and s.label == 1
    assert s.pixels.min() >= 0 and s.pixels.max() <= 1


@pytest.mark.parametrize("background", FAMILIES)
def test_cracked_pixel_count_oracle(background):
    cfg = CrackGenConfig(background=background, seed=1)
    for i in range(40):
        s = generate_crack_image(cfg, 1, i)
        assert dark(s.pixels, cfg.crack_darkness).sum() >= 50, i


@pytest.mark.parametrize("background", FAMILIES)
def test_uncracked_component_oracle(background):
    cfg = CrackGenConfig(background=background, seed=2)
    for i in range(25):
        s = generate_crack_image(cfg, 0, i)
        assert longest_run_bfs(dark(s.pixels, cfg.crack_darkness)) <= cfg.side / 4, i


def test_cracked_contains_long_dark_path():
    cfg = CrackGenConfig(seed=5)
    runs = [longest_run_bfs(dark(generate_crack_image(cfg, 1, i).pixels, cfg.crack_darkness)) for i in range(10)]
    assert np.median(runs) >= cfg.side / 2


def test_polyline_distance_brute_force():
    pts = np.array([[2.0, 3.0], [10.0, 7.0], [5.0, 12.0]])
    d = polyline_distance(pts, 14)

    def seg(p, a, b):
        best = np.inf
        for t in np.linspace(0, 1, 2001):
            best = min(best, np.hypot(*(p - (a + t * (b - a)))))
        return best

    for y, x in [(0, 0), (6, 5), (13, 13), (2, 3), (9, 9)]:
        p = np.array([y, x], float)
        assert abs(d[y, x] - min(seg(p, pts[0], pts[1]), seg(p, pts[1], pts[2]))) < 1e-2


def test_dataset_layout():
    ds = generate_dataset(CrackGenConfig(side=16), 3)
    assert len(ds) == 6 and ds.class_counts() == {1: 3, 0: 3}
    assert ds.labels.tolist() == [1, 1, 1, 0, 0, 0]
    assert ds.source_ids[0].endswith("cracked-000000") and ds.source_ids[3].endswith("uncracked-000000")
    one = generate_dataset(CrackGenConfig(side=16), 1)
    assert one.class_counts() == {1: 1, 0: 1}
    with pytest.raises(ValueError):
        generate_dataset(CrackGenConfig(side=16), 0)


def test_200_per_class_gives_400():
    ds = generate_dataset(CrackGenConfig(side=16, background="soil"), 200)
    assert len(ds) == 400 and ds.class_counts() == {1: 200, 0: 200}


def test_dataset_matches_single_images():
    cfg = CrackGenConfig(side=24, seed=7)
    ds = generate_dataset(cfg, 2)
    assert np.array_equal(ds.pixels[1], generate_crack_image(cfg, 1, 1).pixels)
    assert np.array_equal(ds.pixels[3], generate_crack_image(cfg, 0, 1).pixels)


def test_family_colour_statistics():
    means = {}
    for bg in FAMILIES:
        ds = generate_dataset(CrackGenConfig(side=32, background=bg), 20)
        means[bg] = ds.pixels.reshape(-1, 3).mean(0)
    r, g, b = means["soil"]
    assert r - b > 0.15  # brown
    cr, cg, cb = means["concrete"]
    assert abs(cr - cb) < 0.05  # grey
    assert np.abs(means["soil"] - means["concrete"]).max() > 0.1
    assert np.abs(means["rock"] - means["concrete"]).max() > 0.05


def test_config_validation():
    assert CrackGenConfig(background="soil").crack_darkness == 0.3
    assert CrackGenConfig(background="concrete", crack_darkness=0.5).crack_darkness == 0.5
    with pytest.raises(ValueError):
        CrackGenConfig(background="sand")
    with pytest.raises(ValueError):
        CrackGenConfig(crack_width_px=(2.0, 1.0))
    with pytest.raises(ValueError):
        CrackGenConfig(noise_amplitude=1.5)
