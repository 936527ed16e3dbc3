"""Classical feature plumbing for the classifiers.

Feature vectors enter either from CSV (any external extractor can write
them) or from the built-in descriptors below, then pass through PCA and a
per-feature min/max scaler onto ``[0, pi]`` before reaching a circuit.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from . import imaging

log = logging.getLogger(__name__)


class FeatureFormatError(ValueError):
    pass


@dataclass
class FeatureMatrix:
    X: np.ndarray
    y: np.ndarray | None = None
    columns: list[str] | None = None

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if not np.all(np.isfinite(self.X)):
            raise FeatureFormatError("feature matrix has non-finite entries")
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=int).reshape(-1)
            if self.y.shape[0] != self.X.shape[0]:
                raise FeatureFormatError("label count does not match row count")
        if self.columns is None:
            self.columns = [f"f{i}" for i in range(self.X.shape[1])]

    def __len__(self):
        return self.X.shape[0]

    def subset(self, idx) -> "FeatureMatrix":
        return FeatureMatrix(self.X[idx], None if self.y is None else self.y[idx], list(self.columns))

    @property
    def positive_fraction(self) -> float:
        return float(np.mean(self.y == 1))


# ---------------------------------------------------------------------------
# PCA


def jacobi_eigh(a, tol: float = 1e-14, max_sweeps: int = 100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(values, vectors)`` sorted by decreasing eigenvalue, with
    eigenvectors in the columns.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n) or not np.allclose(a, a.T, atol=1e-12 * max(1.0, np.abs(a).max())):
        raise ValueError("jacobi_eigh needs a symmetric square matrix")
    v = np.eye(n)
    scale = np.linalg.norm(a)
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.0))
        if off <= tol * scale or scale == 0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p], a[:, q] = c * ap - s * aq, s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :], a[q, :] = c * ap - s * aq, s * ap + c * aq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p], v[:, q] = c * vp - s * vq, s * vp + c * vq
    else:
        log.warning("Jacobi iteration hit %d sweeps without converging", max_sweeps)
    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (d_out, d_in), orthonormal rows
    explained_variance: np.ndarray
    total_variance: float = 0.0
    rank_deficient: bool = False

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "explained_variance": self.explained_variance.tolist(),
            "total_variance": self.total_variance,
            "rank_deficient": self.rank_deficient,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PcaModel":
        return cls(np.array(d["mean"], dtype=float), np.array(d["components"], dtype=float).reshape(-1, len(d["mean"])),
                   np.array(d["explained_variance"], dtype=float), float(d["total_variance"]),
                   bool(d["rank_deficient"]))


def pca_fit(X, d_out: int, solver: str = "jacobi") -> PcaModel:
    """Top ``d_out`` principal axes of ``X`` (rows are examples).

    Covariance uses ``1 / (rows - 1)``.  Each component's largest-magnitude
    entry is made positive.  ``solver="numpy"`` swaps the Jacobi sweep for
    ``numpy.linalg.eigh`` on wide inputs.
    """
    X = X.X if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=float)
    rows, cols = X.shape
    if rows < 2:
        raise ValueError("PCA needs at least two rows")
    if not 1 <= d_out <= min(rows, cols):
        raise ValueError(f"d_out must be in [1, {min(rows, cols)}]")
    mean = X.mean(axis=0)
    centred = X - mean
    cov = centred.T @ centred / (rows - 1)
    if solver == "jacobi":
        w, v = jacobi_eigh(cov)
    elif solver == "numpy":
        w, v = np.linalg.eigh(cov)
        w, v = w[::-1], v[:, ::-1]
    else:
        raise ValueError(f"unknown solver {solver!r}")
    w = np.clip(w, 0.0, None)
    comps = v[:, :d_out].T.copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1
    total = float(np.trace(cov))
    deficient = bool(np.any(w[:d_out] <= 1e-12 * max(total, 1e-300)))
    if deficient:
        log.warning("covariance has fewer than %d meaningful components", d_out)
    return PcaModel(mean, comps, w[:d_out].copy(), total, deficient)


def pca_transform(model: PcaModel, X) -> np.ndarray:
    X = X.X if isinstance(X, FeatureMatrix) else np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.mean.shape[0]:
        raise ValueError(f"expected {model.mean.shape[0]} columns, got {X.shape[1]}")
    return (X - model.mean) @ model.components.T


def pca_inverse(model: PcaModel, Z) -> np.ndarray:
    return np.atleast_2d(Z) @ model.components + model.mean


# ---------------------------------------------------------------------------
# scaling


@dataclass
class Scaler:
    """Per-feature affine map of the training range onto ``[0, pi]``.

    Values outside the training range are clamped and counted; a feature
    that was constant in training maps to ``pi / 2``.
    """

    low: np.ndarray
    high: np.ndarray
    clamp_count: int = 0

    def to_dict(self) -> dict:
        return {"low": self.low.tolist(), "high": self.high.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(np.array(d["low"], dtype=float), np.array(d["high"], dtype=float))


def scale_fit(X) -> Scaler:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return Scaler(X.min(axis=0), X.max(axis=0))


def scale_apply(s: Scaler, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != s.low.shape[0]:
        raise ValueError(f"expected {s.low.shape[0]} columns, got {X.shape[1]}")
    span = s.high - s.low
    flat = span <= 0
    out = np.pi * ((X - s.low) / np.where(flat, 1.0, span))
    out[:, flat] = np.pi / 2
    outside = (out < -1e-12) | (out > np.pi + 1e-12)
    s.clamp_count += int(np.count_nonzero(outside))
    return np.clip(out, 0.0, np.pi)


def scale_fit_transform(X) -> tuple[Scaler, np.ndarray]:
    s = scale_fit(X)
    return s, scale_apply(s, X)


# ---------------------------------------------------------------------------
# splitting


def subsample_imbalanced(data: FeatureMatrix, n: int, positive_fraction: float, seed: int = 0) -> FeatureMatrix:
    """Draw ``n`` examples of which ``round(n * positive_fraction)`` are positive."""
    if data.y is None:
        raise ValueError("imbalance needs labels")
    rng = np.random.default_rng(seed)
    pos = np.flatnonzero(data.y == 1)
    neg = np.flatnonzero(data.y != 1)
    n_pos = int(round(n * positive_fraction))
    if n_pos > pos.size or n - n_pos > neg.size:
        raise ValueError(
            f"need {n_pos} positives and {n - n_pos} negatives, have {pos.size} and {neg.size}"
        )
    idx = np.concatenate([rng.choice(pos, n_pos, replace=False), rng.choice(neg, n - n_pos, replace=False)])
    return data.subset(np.sort(idx))


def split_dataset(data: FeatureMatrix, ratios=(0.25, 0.25), positive_fraction: float | None = None,
                  total: int | None = None, seed: int = 0):
    """Train/validation/test split.

    ``ratios = (test, val)``: ``floor(N * test)`` rows go to test, then
    ``floor(rest * val)`` of the remainder to validation.  With labels the
    split is stratified.  ``positive_fraction`` first subsamples ``total``
    rows (default: as many as the class counts allow) at that class balance.
    """
    r_test, r_val = ratios
    if r_test < 0 or r_val < 0 or r_test > 1 or r_val > 1:
        raise ValueError("ratios must lie in [0, 1]")
    if positive_fraction is not None:
        if total is None:
            n_pos = int(np.sum(data.y == 1))
            n_neg = len(data) - n_pos
            total = int(min(n_pos / positive_fraction if positive_fraction > 0 else np.inf,
                            n_neg / (1 - positive_fraction) if positive_fraction < 1 else np.inf))
        data = subsample_imbalanced(data, total, positive_fraction, seed)
    n = len(data)
    n_test = int(np.floor(n * r_test))
    n_val = int(np.floor((n - n_test) * r_val))
    return split_counts(data, n_test, n_val, seed)


def split_counts(data: FeatureMatrix, n_test: int, n_val: int, seed: int = 0):
    """Stratified split with exact test and validation sizes; the rest trains."""
    n = len(data)
    if n_test < 0 or n_val < 0 or n_test + n_val > n:
        raise ValueError(f"cannot take {n_test} test and {n_val} validation rows from {n}")
    rng = np.random.default_rng(seed + 1)
    if data.y is None:
        perm = rng.permutation(n)
        return (data.subset(np.sort(perm[n_test + n_val:])), data.subset(np.sort(perm[n_test:n_test + n_val])),
                data.subset(np.sort(perm[:n_test])))
    pos = rng.permutation(np.flatnonzero(data.y == 1))
    neg = rng.permutation(np.flatnonzero(data.y != 1))
    frac = pos.size / n
    k_test = int(round(n_test * frac))
    k_val = int(round(n_val * frac))
    test = np.concatenate([pos[:k_test], neg[:n_test - k_test]])
    val = np.concatenate([pos[k_test:k_test + k_val], neg[n_test - k_test:n_test - k_test + n_val - k_val]])
    train = np.concatenate([pos[k_test + k_val:], neg[n_test - k_test + n_val - k_val:]])
    return data.subset(np.sort(train)), data.subset(np.sort(val)), data.subset(np.sort(test))


# ---------------------------------------------------------------------------
# CSV and synthetic data


def load_features_csv(path) -> FeatureMatrix:
    """Numeric CSV with a header row; an optional ``label`` column holds
    +1/-1 or 1/0 (0 becomes -1)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FeatureFormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r and any(c.strip() for c in r)]
    width = len(header)
    values = []
    for i, r in enumerate(body, start=2):
        if len(r) != width:
            raise FeatureFormatError(f"{path}:{i}: expected {width} cells, got {len(r)}")
        try:
            values.append([float(c) for c in r])
        except ValueError:
            raise FeatureFormatError(f"{path}:{i}: non-numeric cell") from None
    arr = np.array(values, dtype=float).reshape(len(values), width)
    y = None
    if "label" in header:
        j = header.index("label")
        raw = arr[:, j]
        if not np.all(np.isin(raw, (-1.0, 0.0, 1.0))):
            raise FeatureFormatError(f"{path}: labels must be -1/+1 or 0/1")
        y = np.where(raw == 1.0, 1, -1)
        arr = np.delete(arr, j, axis=1)
        header = header[:j] + header[j + 1:]
    return FeatureMatrix(arr, y, header)


def save_features_csv(data: FeatureMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        cols = list(data.columns) + (["label"] if data.y is not None else [])
        w.writerow(cols)
        for i in range(len(data)):
            row = [repr(float(v)) for v in data.X[i]]
            if data.y is not None:
                row.append(str(int(data.y[i])))
            w.writerow(row)


@dataclass
class SyntheticSpec:
    """Two isotropic Gaussian blobs whose centres are ``separation * sigma``
    apart along a seeded random direction."""

    n: int = 500
    d: int = 4
    separation: float = 6.0
    positive_fraction: float = 0.25
    sigma: float = 1.0


def generate_synthetic_features(spec: SyntheticSpec, seed: int = 0) -> FeatureMatrix:
    rng = np.random.default_rng(seed)
    direction = np.random.default_rng(0xD1).normal(size=spec.d)
    direction /= np.linalg.norm(direction)
    n_pos = int(round(spec.n * spec.positive_fraction))
    y = np.concatenate([np.ones(n_pos, dtype=int), -np.ones(spec.n - n_pos, dtype=int)])
    y = y[rng.permutation(spec.n)]
    X = rng.normal(0.0, spec.sigma, size=(spec.n, spec.d))
    X += np.outer(y * spec.separation * spec.sigma / 2.0, direction)
    return FeatureMatrix(X, y)


# ---------------------------------------------------------------------------
# descriptors (stand-in for a neural feature extractor)

IMAGE_FEATURES = ["mean", "std", "p2", "dark_fraction", "dark_extent", "dark_elongation", "edge_energy"]
REGION_FEATURES = ["mean", "min", "std", "contrast", "p75"]


def _dark_threshold(gray: np.ndarray) -> float:
    return float(np.median(gray)) - 50.0


def describe_image(gray) -> np.ndarray:
    """Global appearance statistics of a preprocessed grayscale image.

    ``dark_extent`` and ``dark_elongation`` describe the longest connected
    dark structure (long side of its oriented box relative to the image, and
    its log aspect ratio).
    """
    g = np.asarray(gray, dtype=float)
    dark = g < _dark_threshold(g)
    extent, elong = 0.0, 0.0
    for r in imaging.extract_regions(dark, 8, 3):
        long_side = r.box.extents[0] / max(g.shape)
        if long_side > extent:
            extent, elong = long_side, float(np.log(r.aspect_ratio))
    gr, gc = np.gradient(g)
    return np.array([
        g.mean() / 255.0,
        g.std() / 255.0,
        np.percentile(g, 2) / 255.0,
        dark.mean(),
        extent,
        elong,
        np.hypot(gr, gc).mean() / 255.0,
    ])


def describe_region(isolated, background: int = imaging.BACKGROUND, reference: float | None = None) -> np.ndarray:
    """Intensity statistics of the non-background pixels of an isolated
    region image.  Shape is deliberately left to the aspect-ratio filter.

    ``reference`` is the typical surface intensity (the image median); the
    ``contrast`` feature is its gap to the region mean.
    """
    g = np.asarray(isolated, dtype=float)
    vals = g[g != background]
    if vals.size == 0:
        vals = np.array([float(background)])
    ref = float(background) if reference is None else float(reference)
    return np.array([
        vals.mean() / 255.0,
        vals.min() / 255.0,
        vals.std() / 255.0,
        (ref - vals.mean()) / 255.0,
        np.percentile(vals, 75) / 255.0,
    ])
