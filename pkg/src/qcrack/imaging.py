"""Image preprocessing, region extraction and evaluation helpers.

Images are plain numpy arrays: RGB is ``(H, W, 3)`` uint8, grayscale is
``(H, W)`` with intensities in ``[0, 255]``, masks are ``(H, W)`` bool.
Pixel coordinates are ``(row, col)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

BACKGROUND = 255


def to_grayscale(rgb) -> np.ndarray:
    """ITU-R 601 luma ``0.299 R + 0.587 G + 0.114 B``, rounded to uint8."""
    rgb = np.asarray(rgb, dtype=float)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {rgb.shape}")
    y = rgb @ np.array([0.299, 0.587, 0.114])
    return np.clip(np.floor(y + 0.5), 0, 255).astype(np.uint8)


def _area_weights(src: int, dst: int) -> np.ndarray:
    """(dst, src) matrix averaging source cells over each target cell."""
    edges = np.linspace(0.0, src, dst + 1)
    w = np.zeros((dst, src))
    for i in range(dst):
        lo, hi = edges[i], edges[i + 1]
        j0, j1 = int(math.floor(lo)), int(math.ceil(hi))
        for j in range(j0, min(j1, src)):
            w[i, j] = min(hi, j + 1) - max(lo, j)
        w[i] /= hi - lo
    return w


def downscale(img, width: int, height: int) -> np.ndarray:
    """Area-average resampling to ``(height, width)``, rounded to uint8."""
    img = np.asarray(img, dtype=float)
    if width < 1 or height < 1:
        raise ValueError("target dimensions must be positive")
    h, w = img.shape
    if width > w or height > h:
        raise ValueError("downscale target exceeds source size")
    out = _area_weights(h, height) @ img @ _area_weights(w, width).T
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def gaussian_kernel5(sigma: float = 1.0) -> np.ndarray:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    x = np.arange(-2, 3, dtype=float)
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def gaussian_blur5(img, sigma: float = 1.0) -> np.ndarray:
    """Separable 5x5 Gaussian blur with edge replication; float output."""
    k = gaussian_kernel5(sigma)
    a = np.pad(np.asarray(img, dtype=float), 2, mode="edge")
    a = sum(k[i] * a[:, i:i + a.shape[1] - 4] for i in range(5))
    a = sum(k[i] * a[i:i + a.shape[0] - 4, :] for i in range(5))
    return np.clip(a, 0.0, 255.0)


def preprocess(rgb_or_gray, size: tuple[int, int] = (50, 50), sigma: float = 1.0) -> np.ndarray:
    """Grayscale, downscale to ``size = (width, height)``, blur, round to uint8."""
    img = np.asarray(rgb_or_gray)
    gray = to_grayscale(img) if img.ndim == 3 else img
    small = downscale(gray, *size)
    return np.floor(gaussian_blur5(small, sigma) + 0.5).astype(np.uint8)


def downscale_mask(mask, width: int, height: int) -> np.ndarray:
    """A target cell is positive when at least half its area is positive."""
    m = np.asarray(mask, dtype=float)
    h, w = m.shape
    frac = _area_weights(h, height) @ m @ _area_weights(w, width).T
    return frac >= 0.5


# ---------------------------------------------------------------------------
# regions


@dataclass
class OrientedBox:
    center: tuple[float, float]
    extents: tuple[float, float]  # (long side, short side)
    angle: float  # radians, direction of the long side in (row, col) space
    corners: np.ndarray

    @property
    def area(self) -> float:
        return self.extents[0] * self.extents[1]


@dataclass
class Region:
    label: int
    pixels: np.ndarray  # (N, 2) array of (row, col)
    box: OrientedBox | None = field(default=None, repr=False)
    aspect_ratio: float = 1.0

    @property
    def size(self) -> int:
        return len(self.pixels)

    def mask(self, shape) -> np.ndarray:
        m = np.zeros(shape, dtype=bool)
        if len(self.pixels):
            m[self.pixels[:, 0], self.pixels[:, 1]] = True
        return m


_STRUCTURES = {
    4: ndimage.generate_binary_structure(2, 1),
    8: ndimage.generate_binary_structure(2, 2),
}


def extract_regions(labels, connectivity: int = 8, min_size: int = 3) -> list[Region]:
    """Connected components of the positive pixels, in raster order of their
    first pixel.  Components smaller than ``min_size`` are dropped."""
    if connectivity not in _STRUCTURES:
        raise ValueError("connectivity must be 4 or 8")
    lab, n = ndimage.label(np.asarray(labels, dtype=bool), structure=_STRUCTURES[connectivity])
    regions = []
    if n == 0:
        return regions
    rows, cols = np.nonzero(lab)
    ids = lab[rows, cols]
    order = np.argsort(ids, kind="stable")
    bounds = np.searchsorted(ids[order], np.arange(1, n + 2))
    for i in range(n):
        sel = order[bounds[i]:bounds[i + 1]]
        if sel.size < min_size:
            continue
        px = np.column_stack([rows[sel], cols[sel]])
        box, ratio = oriented_bbox(px)
        regions.append(Region(i + 1, px, box, ratio))
    return regions


def isolate_region(img, region: Region, background: int = BACKGROUND) -> np.ndarray:
    """Copy of ``img`` with everything outside ``region`` set to ``background``."""
    img = np.asarray(img)
    px = np.asarray(region.pixels).reshape(-1, 2)
    if len(px) and (px.min() < 0 or px[:, 0].max() >= img.shape[0] or px[:, 1].max() >= img.shape[1]):
        raise ValueError("region lies outside the image")
    out = np.full_like(img, background)
    if len(px):
        out[px[:, 0], px[:, 1]] = img[px[:, 0], px[:, 1]]
    return out


def convex_hull(points) -> np.ndarray:
    """Andrew's monotone chain; counter-clockwise, no repeated endpoint."""
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def oriented_bbox(pixels) -> tuple[OrientedBox, float]:
    """Minimum-area rectangle around the pixels' unit squares.

    Rotating calipers: the optimal rectangle has a side collinear with a hull
    edge, so every edge direction is tried.  The aspect ratio is long side
    over short side, with the short side clamped to at least one pixel.
    """
    px = np.asarray(pixels, dtype=float).reshape(-1, 2)
    if len(px) == 0:
        raise ValueError("empty region")
    corners = np.concatenate([px, px + [1, 0], px + [0, 1], px + [1, 1]])
    hull = convex_hull(corners)
    edges = np.roll(hull, -1, axis=0) - hull
    angles = np.unique(np.mod(np.arctan2(edges[:, 1], edges[:, 0]), np.pi / 2))
    best = None
    for a in angles:
        u = np.array([np.cos(a), np.sin(a)])
        v = np.array([-u[1], u[0]])
        pu, pv = hull @ u, hull @ v
        lu, lv = pu.max() - pu.min(), pv.max() - pv.min()
        area = lu * lv
        if best is None or area < best[0] - 1e-9:
            best = (area, a, u, v, pu.min(), pu.max(), pv.min(), pv.max())
    _, a, u, v, u0, u1, v0, v1 = best
    rect = np.array([u0 * u + v0 * v, u1 * u + v0 * v, u1 * u + v1 * v, u0 * u + v1 * v])
    lu, lv = u1 - u0, v1 - v0
    long_side, short_side = (lu, lv) if lu >= lv else (lv, lu)
    angle = a if lu >= lv else a + np.pi / 2
    center = tuple(rect.mean(axis=0))
    box = OrientedBox(center, (float(long_side), float(short_side)), float(angle), rect)
    return box, float(long_side / max(short_side, 1.0))


# ---------------------------------------------------------------------------
# masks and scoring


def iou(a, b) -> float:
    """Intersection over union; two empty masks score 1."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def overlay(rgb, mask, color=(255, 0, 0), alpha: float = 0.6) -> np.ndarray:
    """Highlight ``mask`` on an RGB or grayscale image (mask is resized by
    nearest neighbour if needed)."""
    img = np.asarray(rgb)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    m = np.asarray(mask, dtype=bool)
    if m.shape != img.shape[:2]:
        ri = (np.arange(img.shape[0]) * m.shape[0] // img.shape[0])
        ci = (np.arange(img.shape[1]) * m.shape[1] // img.shape[1])
        m = m[ri][:, ci]
    out = img.astype(float).copy()
    out[m] = (1 - alpha) * out[m] + alpha * np.asarray(color, dtype=float)
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# I/O


def read_image(path) -> np.ndarray:
    """PNG/PGM (or anything Pillow reads) as uint8 RGB or grayscale array."""
    with Image.open(path) as im:
        if im.mode in ("L", "1", "I", "I;16"):
            return np.asarray(im.convert("L"))
        return np.asarray(im.convert("RGB"))


def read_mask(path) -> np.ndarray:
    img = read_image(path)
    if img.ndim == 3:
        img = to_grayscale(img)
    return img > 127


def write_image(path, img) -> None:
    """Write uint8 gray/RGB or a bool mask (as 0/255).  PGM when the suffix
    says so, PNG otherwise; no metadata is stored."""
    a = np.asarray(img)
    if a.dtype == bool:
        a = a.astype(np.uint8) * 255
    a = np.clip(a, 0, 255).astype(np.uint8)
    path = Path(path)
    fmt = "PPM" if path.suffix.lower() in (".pgm", ".ppm") else "PNG"
    Image.fromarray(a).save(path, format=fmt)


# ---------------------------------------------------------------------------
# synthetic data


@dataclass
class CrackSpec:
    """Geometry and texture of a synthetic surface image.

    ``crack`` is a polyline of (row, col) points; ``None`` draws a random
    jagged crack when ``thickness > 0``.  ``blobs`` lists square aberrations
    as (row, col, side, intensity); ``n_random_blobs`` adds seeded ones.
    """

    width: int = 227
    height: int = 227
    crack: list | None = None
    thickness: float = 11.0
    crack_intensity: float = 50.0
    background: float = 195.0
    noise: float = 8.0
    shading: float = 15.0
    blobs: list = field(default_factory=list)
    n_random_blobs: int = 0
    blob_side: tuple[int, int] = (18, 30)
    blob_intensity: tuple[float, float] = (45.0, 75.0)
    seed: int = 0


def random_crack_polyline(width: int, height: int, rng: np.random.Generator, segments: int = 8) -> list:
    """Jagged path between two random points on opposite sides of the image."""
    if rng.random() < 0.5:
        start = (rng.uniform(0.1, 0.9) * height, 0.0)
        end = (rng.uniform(0.1, 0.9) * height, width - 1.0)
    else:
        start = (0.0, rng.uniform(0.1, 0.9) * width)
        end = (height - 1.0, rng.uniform(0.1, 0.9) * width)
    t = np.linspace(0, 1, segments + 1)
    pts = np.outer(1 - t, start) + np.outer(t, end)
    jitter = rng.normal(0.0, 0.06 * min(width, height), size=pts.shape)
    jitter[[0, -1]] = 0.0
    pts = pts + jitter
    pts[:, 0] = np.clip(pts[:, 0], 0, height - 1)
    pts[:, 1] = np.clip(pts[:, 1], 0, width - 1)
    return [tuple(p) for p in pts]


def polyline_mask(shape, points, thickness: float) -> np.ndarray:
    """Pixels whose centre lies within ``thickness / 2`` of the polyline."""
    mask = np.zeros(shape, dtype=bool)
    if thickness <= 0 or not points:
        return mask
    rr, cc = np.mgrid[0:shape[0], 0:shape[1]].astype(float)
    pts = np.asarray(points, dtype=float)
    if len(pts) == 1:
        pts = np.vstack([pts, pts])
    half = thickness / 2.0
    for a, b in zip(pts[:-1], pts[1:]):
        ab = b - a
        denom = ab @ ab
        t = np.zeros_like(rr) if denom == 0 else np.clip(((rr - a[0]) * ab[0] + (cc - a[1]) * ab[1]) / denom, 0, 1)
        d2 = (rr - a[0] - t * ab[0]) ** 2 + (cc - a[1] - t * ab[1]) ** 2
        mask |= d2 <= half * half
    return mask


def generate_crack_image(spec: CrackSpec) -> tuple[np.ndarray, np.ndarray]:
    """Bright textured surface with an optional dark crack and square blobs.

    Returns ``(rgb, mask)`` where ``mask`` marks exactly the crack pixels.
    """
    rng = np.random.default_rng(spec.seed)
    h, w = spec.height, spec.width
    rr, cc = np.mgrid[0:h, 0:w]
    phase = rng.uniform(0, 2 * np.pi, size=2)
    shade = spec.shading * np.sin(2 * np.pi * rr / h + phase[0]) * np.cos(2 * np.pi * cc / w + phase[1])
    base = spec.background + shade + rng.normal(0.0, spec.noise, size=(h, w))

    blobs = list(spec.blobs)
    for _ in range(spec.n_random_blobs):
        side = int(rng.integers(spec.blob_side[0], spec.blob_side[1] + 1))
        r0 = int(rng.integers(0, max(1, h - side)))
        c0 = int(rng.integers(0, max(1, w - side)))
        blobs.append((r0, c0, side, float(rng.uniform(*spec.blob_intensity))))
    for r0, c0, side, level in blobs:
        patch = base[r0:r0 + side, c0:c0 + side]
        base[r0:r0 + side, c0:c0 + side] = level + 0.5 * (patch - spec.background)

    mask = np.zeros((h, w), dtype=bool)
    if spec.thickness > 0:
        points = spec.crack if spec.crack is not None else random_crack_polyline(w, h, rng)
        mask = polyline_mask((h, w), points, spec.thickness)
        base[mask] = spec.crack_intensity + 0.5 * (base[mask] - spec.background)

    gray = np.clip(base, 0, 255)
    tint = np.array([1.0, 0.98, 0.95])
    rgb = np.clip(np.floor(gray[:, :, None] * tint + 0.5), 0, 255).astype(np.uint8)
    return rgb, mask
