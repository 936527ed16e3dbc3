import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis.extra.numpy import arrays

from qcrack import imaging as I


def test_grayscale_examples():
    px = np.array([[[255, 255, 255], [0, 0, 0], [255, 0, 0]]], dtype=np.uint8)
    assert list(I.to_grayscale(px)[0]) == [255, 0, 76]


def test_downscale_examples():
    assert np.all(I.downscale(np.full((9, 7), 100), 3, 2) == 100)
    assert I.downscale(np.array([[0, 0], [255, 255]]), 1, 1)[0, 0] == 128
    assert I.downscale(np.zeros((227, 227)), 50, 50).shape == (50, 50)


def test_downscale_matches_block_mean_when_divisible():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (12, 18)).astype(float)
    ref = img.reshape(4, 3, 6, 3).mean(axis=(1, 3))
    assert np.array_equal(I.downscale(img, 6, 4), np.floor(ref + 0.5).astype(np.uint8))


def test_blur_properties():
    k = I.gaussian_kernel5(1.0)
    assert k.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(I.gaussian_blur5(np.full((6, 6), 77.0)), 77.0)
    imp = np.zeros((9, 9))
    imp[4, 4] = 200.0
    out = I.gaussian_blur5(imp)
    assert out[4, 4] == pytest.approx(200.0 * k[2] * k[2])
    assert np.allclose(out[2:7, 2:7], 200.0 * np.outer(k, k))


@settings(max_examples=20, deadline=None)
@given(arrays(np.uint8, (12, 10, 3)))
def test_preprocess_range(img):
    out = I.preprocess(img, (5, 6))
    assert out.shape == (6, 5) and out.dtype == np.uint8


def test_regions_connectivity():
    solid = np.zeros((6, 6), bool)
    solid[1:4, 1:4] = True
    assert len(I.extract_regions(solid)) == 1
    two = solid.copy()
    two[5, 5] = two[5, 4] = two[4, 5] = True
    assert len(I.extract_regions(two)) == 2
    diag = np.array([[1, 0], [0, 1]], bool)
    assert len(I.extract_regions(diag, 8, 1)) == 1
    assert len(I.extract_regions(diag, 4, 1)) == 2


@settings(max_examples=30, deadline=None)
@given(arrays(bool, (10, 10)))
def test_regions_partition(mask):
    regs = I.extract_regions(mask, 8, 1)
    union = np.zeros_like(mask)
    total = 0
    for r in regs:
        m = r.mask(mask.shape)
        assert not (union & m).any()
        union |= m
        total += r.size
        assert r.box.area >= r.size - 1e-9
    assert np.array_equal(union, mask) and total == mask.sum()


def test_min_size_filter():
    m = np.zeros((5, 5), bool)
    m[0, 0] = True
    m[3:5, 3:5] = True
    assert [r.size for r in I.extract_regions(m, 8, 3)] == [4]


def test_isolate_region():
    img = np.arange(16, dtype=np.uint8).reshape(4, 4)
    whole = I.Region(1, np.argwhere(np.ones((4, 4), bool)))
    assert np.array_equal(I.isolate_region(img, whole), img)
    empty = I.Region(1, np.zeros((0, 2), int))
    assert np.all(I.isolate_region(img, empty) == 255)
    one = I.isolate_region(img, I.Region(1, np.array([[2, 1]])))
    assert one[2, 1] == 9 and (one == 255).sum() == 15


def test_aspect_ratio_axis_aligned_and_square():
    rect = np.zeros((20, 20), bool)
    rect[5:7, 3:13] = True
    _, ratio = I.oriented_bbox(np.argwhere(rect))
    assert abs(ratio - 5) <= 0.2
    sq = np.zeros((20, 20), bool)
    sq[2:9, 2:9] = True
    assert I.oriented_bbox(np.argwhere(sq))[1] == pytest.approx(1.0)


def test_aspect_ratio_rotated():
    # rasterise a 10x2 rectangle rotated by 45 degrees
    rr, cc = np.mgrid[0:40, 0:40] + 0.5
    u = ((rr - 20) + (cc - 20)) / np.sqrt(2)
    v = ((rr - 20) - (cc - 20)) / np.sqrt(2)
    mask = (np.abs(u) <= 10) & (np.abs(v) <= 2)
    _, ratio = I.oriented_bbox(np.argwhere(mask))
    assert abs(ratio - 5) <= 0.75


def test_iou_examples():
    a = np.zeros((4, 4), bool)
    a[0] = True
    b = np.zeros((4, 4), bool)
    b[3] = True
    assert I.iou(a, a) == 1.0 and I.iou(a, b) == 0.0
    big = a | b
    assert I.iou(a, big) == 0.5
    assert I.iou(np.zeros((2, 2), bool), np.zeros((2, 2), bool)) == 1.0


@settings(max_examples=30, deadline=None)
@given(arrays(bool, (6, 6)), arrays(bool, (6, 6)))
def test_iou_symmetric(a, b):
    assert I.iou(a, b) == I.iou(b, a)
    if a.any() and I.iou(a, b) == 1.0:
        assert np.array_equal(a, b)


def test_generator_examples():
    rgb, mask = I.generate_crack_image(I.CrackSpec(thickness=0, noise=0, shading=0, width=30, height=20))
    assert not mask.any() and rgb.shape == (20, 30, 3)
    assert len(np.unique(I.to_grayscale(rgb))) == 1
    spec = I.CrackSpec(crack=[(10.0, 0.0), (10.0, 39.0)], thickness=3, noise=0, shading=0, width=40, height=20)
    _, mask = I.generate_crack_image(spec)
    assert np.array_equal(mask, I.polyline_mask((20, 40), spec.crack, 3))
    assert mask[9:12].all() and mask.sum() == 120
    a = I.generate_crack_image(I.CrackSpec(seed=4, n_random_blobs=2))
    b = I.generate_crack_image(I.CrackSpec(seed=4, n_random_blobs=2))
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_mask_downscale():
    m = np.zeros((4, 4), bool)
    m[:2, :2] = True
    m[2, 2] = True
    assert np.array_equal(I.downscale_mask(m, 2, 2), [[True, False], [False, False]])


def test_io_roundtrip(tmp_path):
    rgb, mask = I.generate_crack_image(I.CrackSpec(width=40, height=30, seed=2))
    I.write_image(tmp_path / "a.png", rgb)
    I.write_image(tmp_path / "m.png", mask)
    I.write_image(tmp_path / "g.pgm", I.to_grayscale(rgb))
    assert np.array_equal(I.read_image(tmp_path / "a.png"), rgb)
    assert np.array_equal(I.read_mask(tmp_path / "m.png"), mask)
    assert np.array_equal(I.read_image(tmp_path / "g.pgm"), I.to_grayscale(rgb))
    b1 = (tmp_path / "m.png").read_bytes()
    I.write_image(tmp_path / "m.png", mask)
    assert (tmp_path / "m.png").read_bytes() == b1


def test_overlay_marks_pixels():
    img = np.full((4, 4), 100, np.uint8)
    m = np.zeros((2, 2), bool)
    m[0, 0] = True
    out = I.overlay(img, m)
    assert out.shape == (4, 4, 3)
    assert tuple(out[0, 0]) != (100, 100, 100) and tuple(out[3, 3]) == (100, 100, 100)
