"""k-means and q-means segmentation of 8-bit pixel intensities.

Both algorithms share one loop: assign every pixel to its nearest centroid,
replace each centroid by the mean of its members, stop once no centroid
moves by ``tol`` or more.  They differ only in how "nearest" is measured.
``kmeans_classical`` uses ``|p - c|``; ``qmeans`` runs a quantum similarity
circuit per (pixel, centroid) pair and uses its ``dsq``.  Because ``dsq`` is
strictly monotone in ``|p - c|``, an exact-mode q-means run reproduces the
classical assignments step for step.

Centroids are kept as floats but rounded to 8-bit integers (nearest,
ties-to-even) for the distance step when ``quantize`` is on, mirroring the
8-bit centroid registers of the quantum circuit.  Both algorithms apply the
same rounding so their outputs remain comparable.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .protocols import PIXEL_ENCODER, encoding_gates, similarity
from .qsim import Circuit, make_rng, qubit_zero_counts, qubit_zero_probabilities, sample_counts

# exact-mode distances closer than this count as a tie (lowest index wins)
TIE_TOL = 1e-12


@dataclass
class ClusterConfig:
    k: int = 2
    max_iters: int = 50
    tol: float = 0.5
    shots: int = 1000
    batch_qubits: int = 10
    seed: int = 0
    init: str = "spread"
    quantize: bool = True
    protocol: str = "overlap"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.batch_qubits < 1:
            raise ValueError("batch_qubits must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.init not in ("spread", "random"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass
class ClusterState:
    centroids: np.ndarray
    assignments: np.ndarray
    iteration: int = 0
    history: list = field(default_factory=list)
    assignment_history: list = field(default_factory=list)
    converged: bool = False
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "centroids": [float(c) for c in self.centroids],
            "iteration": self.iteration,
            "converged": self.converged,
            "flags": list(self.flags),
            "history": [[float(c) for c in h] for h in self.history],
            "cluster_sizes": np.bincount(self.assignments, minlength=len(self.centroids)).tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _check_pixels(pixels) -> np.ndarray:
    p = np.asarray(pixels, dtype=float).reshape(-1)
    if p.size == 0:
        raise ValueError("no pixels to cluster")
    if p.min() < 0 or p.max() > 255 or not np.all(np.isfinite(p)):
        raise ValueError("pixel intensities must lie in [0, 255]")
    return p


def initial_centroids(pixels: np.ndarray, cfg: ClusterConfig) -> np.ndarray:
    """Spread init: evenly between min and max intensity (min/max for k=2)."""
    if cfg.init == "spread":
        return np.linspace(pixels.min(), pixels.max(), cfg.k)
    values = np.unique(pixels)
    rng = make_rng(cfg.seed, 0xC1)
    pick = rng.choice(values.size, size=min(cfg.k, values.size), replace=False)
    out = values[np.sort(pick)]
    if out.size < cfg.k:
        out = np.concatenate([out, np.full(cfg.k - out.size, out[-1])])
    return out.astype(float)


def quantize_centroids(centroids: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(centroids), 0, 255)


def nearest(distances: np.ndarray, tie_tol: float = 0.0) -> np.ndarray:
    """Row-wise argmin; candidates within ``tie_tol`` of the minimum tie and
    the lowest index wins."""
    best = distances.min(axis=1, keepdims=True)
    return np.argmax(distances <= best + tie_tol, axis=1)


def batch_distances(pixel_block, centroid: float, cfg: ClusterConfig,
                    stream: tuple = ()) -> np.ndarray:
    """Simple-overlap ``dsq`` for a block of pixels against one centroid.

    The block runs as a single circuit with one qubit per pixel and no
    entangling gates, so each qubit's zero-probability is that pixel's
    ``P(all zero)``.  With shots, every shot reads out all qubits at once.
    """
    block = np.asarray(pixel_block, dtype=float).reshape(-1)
    m = block.size
    if m > cfg.batch_qubits:
        raise ValueError(f"block of {m} pixels exceeds batch_qubits={cfg.batch_qubits}")
    if m == 0:
        return np.empty(0)
    gates = encoding_gates(PIXEL_ENCODER, block)
    gates += [g.adjoint() for g in encoding_gates(PIXEL_ENCODER, np.full(m, centroid))]
    circuit = Circuit(m, gates)
    if cfg.shots == 0:
        p0 = qubit_zero_probabilities(circuit)
    else:
        counts = sample_counts(circuit, cfg.shots, cfg.seed, stream)
        p0 = qubit_zero_counts(counts, m) / cfg.shots
    return 1.0 - p0


def quantum_distances(pixels: np.ndarray, centroids: np.ndarray, cfg: ClusterConfig,
                      iteration: int = 0) -> np.ndarray:
    """(N, k) matrix of quantum ``dsq`` values.

    Exact mode evaluates each distinct intensity once.  With shots every pixel
    gets its own circuit execution, seeded by (iteration, centroid, block).
    """
    if cfg.shots == 0:
        values, inverse = np.unique(pixels, return_inverse=True)
    else:
        values, inverse = pixels, np.arange(pixels.size)
    out = np.empty((values.size, len(centroids)))
    n = cfg.batch_qubits
    for j, c in enumerate(centroids):
        if cfg.protocol == "overlap":
            for b, start in enumerate(range(0, values.size, n)):
                out[start:start + n, j] = batch_distances(
                    values[start:start + n], c, cfg, stream=(iteration, j, b))
        else:
            res = similarity(cfg.protocol, values[:, None], np.full((values.size, 1), c),
                             shots=cfg.shots, seed=cfg.seed, stream=(iteration, j))
            out[:, j] = res.dsq
    return out[inverse]


def _run(pixels, cfg: ClusterConfig, init, distance_fn) -> ClusterState:
    p = _check_pixels(pixels)
    cent = initial_centroids(p, cfg) if init is None else np.asarray(init, dtype=float).copy()
    if cent.shape != (cfg.k,):
        raise ValueError(f"expected {cfg.k} initial centroids")
    state = ClusterState(cent.copy(), np.zeros(p.size, dtype=np.int64), history=[cent.tolist()])
    frozen = set()
    for it in range(1, cfg.max_iters + 1):
        used = quantize_centroids(cent) if cfg.quantize else cent
        dist, tie_tol = distance_fn(p, used, it)
        assign = nearest(dist, tie_tol)
        new = cent.copy()
        for j in range(cfg.k):
            members = p[assign == j]
            if members.size:
                new[j] = members.mean()
                frozen.discard(j)
            elif j not in frozen:
                others = np.delete(new, j)
                gap = np.abs(p[:, None] - others[None, :]).min(axis=1) if others.size else np.zeros_like(p)
                if gap.max() > 0:
                    new[j] = p[np.argmax(gap)]
                else:
                    frozen.add(j)
                    if "no-contrast" not in state.flags:
                        state.flags.append("no-contrast")
        shift = np.max(np.abs(new - cent))
        cent = new
        state.assignments = assign
        state.assignment_history.append(assign)
        state.history.append(cent.tolist())
        state.iteration = it
        if shift < cfg.tol:
            state.converged = True
            break
    state.centroids = cent
    if np.unique(p).size < 2 and "no-contrast" not in state.flags:
        state.flags.append("no-contrast")
    return state


def kmeans_classical(pixels, cfg: ClusterConfig | None = None, init=None) -> ClusterState:
    """Classical k-means on scalar intensities with ``|p - c|`` distances."""
    cfg = cfg or ClusterConfig()

    def dist(p, c, it):
        return np.abs(p[:, None] - c[None, :]), 0.0

    return _run(pixels, cfg, init, dist)


def qmeans(pixels, cfg: ClusterConfig | None = None, init=None) -> ClusterState:
    """k-means whose distance step runs quantum similarity circuits."""
    cfg = cfg or ClusterConfig()

    def dist(p, c, it):
        return quantum_distances(p, c, cfg, it), TIE_TOL

    return _run(pixels, cfg, init, dist)


def within_cluster_cost(pixels, state: ClusterState) -> float:
    p = np.asarray(pixels, dtype=float).reshape(-1)
    return float(np.abs(p - state.centroids[state.assignments]).sum())


def segment_image(img, cfg: ClusterConfig | None = None, method: str = "qmeans"):
    """Cluster a grayscale image and label the darkest cluster crack-candidate.

    Returns ``(labels, state)`` where ``labels`` is a boolean image.  A
    uniform image yields no candidates and the ``no-contrast`` flag.
    """
    cfg = cfg or ClusterConfig()
    img = np.asarray(img, dtype=float)
    if img.size == 0:
        raise ValueError("empty image")
    if method == "qmeans":
        state = qmeans(img.reshape(-1), cfg)
    elif method == "kmeans":
        state = kmeans_classical(img.reshape(-1), cfg)
    else:
        raise ValueError(f"unknown method {method!r}")
    if "no-contrast" in state.flags and np.unique(img).size < 2:
        return np.zeros(img.shape, dtype=bool), state
    dark = int(np.argmin(state.centroids))
    return (state.assignments == dark).reshape(img.shape), state


def config_dict(cfg: ClusterConfig) -> dict:
    return asdict(cfg)
