"""Data encoders and quantum similarity protocols.

Three circuits estimate how close two encoded states are:

``swap_test``
    ancilla + two registers, CSWAP per qubit pair; ``P(ancilla=0) = (1 + |<x|y>|^2) / 2``.
``hadamard_test``
    ancilla + one register, controlled ``E(y)^dag E(x)``; ``<Z>_ancilla = Re <0|E(y)^dag E(x)|0>``.
``simple_overlap``
    one register, ``E(x)`` then ``E(y)^dag``; ``P(all zero) = |<y|x>|^2``.

Each returns a :class:`SimilarityResult` whose ``dsq`` is a squared-distance
surrogate.  For normalised real states ``||x - y||^2 = 2 - 2<x|y>``; swap and
Hadamard results use that identity directly (the swap test needs the extra
assumption ``<x|y> >= 0``, which holds for pixel encodings).  The simple
overlap circuit only yields ``|<x|y>|^2`` and uses ``dsq = 1 - P(all zero)``.
All three are strictly increasing in ``|p - c|`` for pixel encodings, which is
the only property nearest-centroid assignment relies on.

Inputs may be 1-D (one pair of vectors) or 2-D ``(B, m)`` to evaluate ``B``
pairs in one batched circuit.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .qsim import (
    CSWAP,
    Circuit,
    Gate,
    H,
    MeasurementSpec,
    RY,
    RZ,
    controlled_block,
    run,
)

log = logging.getLogger(__name__)

ANGLE_RY = "angle-RY"
PHASE_HRZ = "phase-HRZ"
PROTOCOLS = ("swap", "hadamard", "overlap")
SWAP_DEPTH_WARNING = 8


@dataclass(frozen=True)
class Encoder:
    """Maps raw values in ``[low, high]`` to rotation angles ``scale * value``."""

    kind: str = ANGLE_RY
    low: float = 0.0
    high: float = 255.0
    scale: float = np.pi / 255.0

    def __post_init__(self):
        if self.kind not in (ANGLE_RY, PHASE_HRZ):
            raise ValueError(f"unknown encoder kind {self.kind!r}")
        if self.high < self.low:
            raise ValueError("encoder range is empty")

    @classmethod
    def pixels(cls) -> "Encoder":
        """``E(p) = RY(p * pi / 255)`` for 8-bit intensities."""
        return cls(ANGLE_RY, 0.0, 255.0, np.pi / 255.0)

    @classmethod
    def features(cls, kind: str = PHASE_HRZ) -> "Encoder":
        """Features already scaled to ``[0, pi]`` used as angles unchanged."""
        return cls(kind, 0.0, np.pi, 1.0)


PIXEL_ENCODER = Encoder.pixels()


def _as_batch(values) -> tuple[np.ndarray, bool]:
    v = np.asarray(values, dtype=float)
    if v.ndim == 0:
        v = v[None]
    if v.ndim == 1:
        return v[None, :], False
    if v.ndim == 2:
        return v, True
    raise ValueError("values must be a vector or a (batch, m) matrix")


def encoding_gates(encoder: Encoder, values, offset: int = 0) -> list[Gate]:
    """Gates preparing ``E(values)`` on qubits ``offset .. offset + m - 1``."""
    v, batched = _as_batch(values)
    tol = 1e-9 * max(1.0, abs(encoder.high))
    if np.any(v < encoder.low - tol) or np.any(v > encoder.high + tol) or not np.all(np.isfinite(v)):
        raise ValueError(
            f"values outside encoder range [{encoder.low}, {encoder.high}]"
        )
    gates = []
    for j in range(v.shape[1]):
        angle = encoder.scale * (v[:, j] if batched else v[0, j])
        q = offset + j
        if encoder.kind == ANGLE_RY:
            gates.append(RY(q, angle))
        else:
            gates.extend([H(q), RZ(q, angle)])
    return gates


def encode(encoder: Encoder, values) -> Circuit:
    """Circuit fragment preparing ``E(values)|0...0>``, one qubit per value."""
    v, _ = _as_batch(values)
    return Circuit(v.shape[1], encoding_gates(encoder, values))


@dataclass(frozen=True)
class SimilarityResult:
    protocol: str
    raw: float | np.ndarray
    overlap: float | np.ndarray
    dsq: float | np.ndarray
    shots: int
    clamped: bool = False


def _check_pair(x, y):
    xv, xb = _as_batch(x)
    yv, yb = _as_batch(y)
    if xv.shape[1] != yv.shape[1]:
        raise ValueError("x and y must have the same length")
    if xb or yb:
        b = max(xv.shape[0], yv.shape[0])
        xv = np.broadcast_to(xv, (b, xv.shape[1]))
        yv = np.broadcast_to(yv, (b, yv.shape[1]))
        return xv, yv, True
    return xv[0], yv[0], False


def _out(a, batched):
    return a if batched else float(np.asarray(a).reshape(-1)[0])


def swap_test(x, y, encoder: Encoder = PIXEL_ENCODER, shots: int = 0, seed: int = 0,
              stream: Sequence[int] = ()) -> SimilarityResult:
    xv, yv, batched = _check_pair(x, y)
    m = xv.shape[-1]
    if m > SWAP_DEPTH_WARNING:
        log.warning("swap test over %d data qubits per register; CSWAP depth grows linearly", m)
    ops = [H(0)]
    ops += encoding_gates(encoder, xv, offset=1)
    ops += encoding_gates(encoder, yv, offset=1 + m)
    ops += [CSWAP(0, 1 + j, 1 + m + j) for j in range(m)]
    ops.append(H(0))
    circuit = Circuit(1 + 2 * m, ops)
    raw = np.asarray(run(circuit, MeasurementSpec("prob_zero", 0, shots, seed), stream))
    affine = 2.0 * raw - 1.0
    overlap = np.clip(affine, 0.0, 1.0)
    clamped = bool(np.any(overlap != affine))
    dsq = 2.0 - 2.0 * np.sqrt(overlap)
    return SimilarityResult("swap", _out(raw, batched), _out(overlap, batched),
                            _out(dsq, batched), shots, clamped)


def hadamard_test(x, y, encoder: Encoder = PIXEL_ENCODER, shots: int = 0, seed: int = 0,
                  stream: Sequence[int] = ()) -> SimilarityResult:
    xv, yv, batched = _check_pair(x, y)
    m = xv.shape[-1]
    ex = encoding_gates(encoder, xv, offset=1)
    ey_dag = [g.adjoint() for g in reversed(encoding_gates(encoder, yv, offset=1))]
    ops = [H(0)] + controlled_block(ex + ey_dag, 0) + [H(0)]
    circuit = Circuit(1 + m, ops)
    raw = np.asarray(run(circuit, MeasurementSpec("expval_z", 0, shots, seed), stream))
    dsq = 2.0 - 2.0 * raw
    return SimilarityResult("hadamard", _out(raw, batched), _out(raw, batched),
                            _out(dsq, batched), shots)


def simple_overlap(x, y, encoder: Encoder = PIXEL_ENCODER, shots: int = 0, seed: int = 0,
                   stream: Sequence[int] = ()) -> SimilarityResult:
    xv, yv, batched = _check_pair(x, y)
    m = xv.shape[-1]
    ex = encoding_gates(encoder, xv)
    ey_dag = [g.adjoint() for g in reversed(encoding_gates(encoder, yv))]
    circuit = Circuit(m, ex + ey_dag)
    raw = np.asarray(run(circuit, MeasurementSpec("prob_all_zero", None, shots, seed), stream))
    return SimilarityResult("overlap", _out(raw, batched), _out(raw, batched),
                            _out(1.0 - raw, batched), shots)


_DISPATCH = {"swap": swap_test, "hadamard": hadamard_test, "overlap": simple_overlap}


def similarity(protocol: str, x, y, encoder: Encoder = PIXEL_ENCODER, shots: int = 0,
               seed: int = 0, stream: Sequence[int] = ()) -> SimilarityResult:
    try:
        fn = _DISPATCH[protocol]
    except KeyError:
        raise ValueError(f"unknown protocol {protocol!r}; pick one of {PROTOCOLS}") from None
    return fn(x, y, encoder, shots, seed, stream)


def classical_scale_distance(result: SimilarityResult) -> np.ndarray | float:
    """Map a single-pixel result back onto ``((p - c) / 255)^2``.

    For ``E(p) = RY(p pi / 255)`` the overlap is ``cos(|p - c| pi / 510)``, so
    inverting the cosine recovers ``|p - c| / 255`` exactly in the noiseless
    limit.  Shot noise passes through the inverse smoothly.
    """
    if result.protocol == "hadamard":
        cos_half = np.clip(np.asarray(result.raw, dtype=float), 0.0, 1.0)
    else:
        cos_half = np.sqrt(np.clip(np.asarray(result.overlap, dtype=float), 0.0, 1.0))
    frac = 2.0 * np.arccos(cos_half) / np.pi
    out = frac**2
    return out if out.ndim else float(out)


ERROR_COLUMNS = ("protocol", "shots", "c", "mean_abs_err", "std_err_abs", "seed_count")


def distance_error_study(protocol: str, shot_grid: Iterable[int], p_values=None,
                         c_values=None, seeds: Iterable[int] = range(20),
                         estimator: str = "calibrated") -> list[dict]:
    """Quantum vs classical pixel-distance error for each (c, shots) cell.

    For every centroid ``c`` and shot count the pixel sweep ``p_values`` is
    run once per seed; the absolute error against ``((p - c) / 255)^2`` is
    averaged over pixels and seeds.  ``shots == 0`` is the exact backend and
    is evaluated once.

    ``estimator="calibrated"`` compares :func:`classical_scale_distance`,
    which is unbiased in the noiseless limit.  ``estimator="raw"`` compares the
    protocol's own ``dsq`` and therefore includes the systematic gap between
    ``sin^2`` and the parabola.
    """
    shot_grid = [int(s) for s in shot_grid]
    p = np.arange(256.0) if p_values is None else np.asarray(p_values, dtype=float)
    cs = np.arange(256.0) if c_values is None else np.asarray(c_values, dtype=float)
    seeds = [int(s) for s in seeds]
    if not shot_grid or p.size == 0 or cs.size == 0 or not seeds:
        raise ValueError("shot grid, pixel range, centroid range and seeds must be nonempty")
    if estimator not in ("calibrated", "raw"):
        raise ValueError(f"unknown estimator {estimator!r}")
    for arr in (p, cs):
        if arr.min() < 0 or arr.max() > 255:
            raise ValueError("pixel and centroid values must lie in [0, 255]")

    rows = []
    px = p[:, None]
    for shots in shot_grid:
        run_seeds = seeds if shots > 0 else seeds[:1]
        for c in cs:
            reference = ((p - c) / 255.0) ** 2
            errs = []
            for s in run_seeds:
                res = similarity(protocol, px, np.full_like(px, c), shots=shots, seed=s,
                                 stream=(shots, int(round(c * 16))))
                est = classical_scale_distance(res) if estimator == "calibrated" else res.dsq
                errs.append(np.abs(np.asarray(est) - reference))
            errs = np.concatenate(errs)
            rows.append({
                "protocol": protocol,
                "shots": shots,
                "c": float(c),
                "mean_abs_err": float(errs.mean()),
                "std_err_abs": float(errs.std()),
                "seed_count": len(run_seeds),
            })
    return rows


def write_error_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=ERROR_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in ERROR_COLUMNS})
