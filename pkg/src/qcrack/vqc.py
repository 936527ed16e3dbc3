"""Variational quantum classifier.

A feature vector already scaled to ``[0, pi]`` is encoded one feature per
qubit, an ``L``-layer parametrised ansatz acts on the register, and the
Pauli-Z expectation of qubit 0 plus a trainable bias gives the score.  The
predicted label is its sign, with a score of exactly zero mapped to ``+1``.
Training minimises the mean squared error against labels in ``{-1, +1}``.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .optim import OptimizerConfig, OptResult, minimize
from .protocols import ANGLE_RY, PHASE_HRZ, Encoder, encoding_gates
from .qsim import CNOT, RY, RZ, Circuit, MeasurementSpec, run

log = logging.getLogger(__name__)

STRONGLY = "strongly-entangling"
BASIC = "basic-entangling"
FIXED = "fixed-topology"
ANSATZ_KINDS = (STRONGLY, BASIC, FIXED)
_ALIASES = {"strongly": STRONGLY, "basic": BASIC, "fixed": FIXED}


def canonical_kind(kind: str) -> str:
    kind = _ALIASES.get(kind, kind)
    if kind not in ANSATZ_KINDS:
        raise ValueError(f"unknown ansatz {kind!r}")
    return kind


@dataclass(frozen=True)
class Ansatz:
    kind: str
    n_qubits: int
    layers: int

    def __post_init__(self):
        object.__setattr__(self, "kind", canonical_kind(self.kind))
        if self.n_qubits < 1 or self.layers < 1:
            raise ValueError("ansatz needs at least one qubit and one layer")

    @property
    def n_params(self) -> int:
        per = 3 if self.kind == STRONGLY else 1
        return per * self.n_qubits * self.layers


def entangler_range(layer: int, n: int) -> int:
    """Offset ``r`` of the skip-connected CNOTs ``c -> (c + r) mod n``.

    ``r = layer + 1`` while that is a valid offset; deeper layers cycle
    through ``1 .. n - 1`` so no CNOT ever targets its own control.
    """
    if n < 2:
        return 0
    return layer % (n - 1) + 1


def _ring(n: int, layer: int) -> list:
    r = entangler_range(layer, n)
    if r == 0:
        return []
    if n == 2:
        return [CNOT(0, 1)]
    return [CNOT(c, (c + r) % n) for c in range(n)]


def _ladder(n: int) -> list:
    return [CNOT(i, i + 1) for i in range(0, n - 1, 2)] + [CNOT(i, i + 1) for i in range(1, n - 1, 2)]


def build_ansatz(ansatz: Ansatz, params) -> list:
    """Gate list of the ansatz for a flat parameter vector."""
    theta = np.asarray(params, dtype=float).reshape(-1)
    if theta.size != ansatz.n_params:
        raise ValueError(f"{ansatz.kind} with n={ansatz.n_qubits}, L={ansatz.layers} "
                         f"takes {ansatz.n_params} parameters, got {theta.size}")
    n = ansatz.n_qubits
    gates = []
    if ansatz.kind == STRONGLY:
        t = theta.reshape(ansatz.layers, 3, n)
        for l in range(ansatz.layers):
            for q in range(n):
                gates += [RY(q, t[l, 0, q]), RZ(q, t[l, 1, q]), RY(q, t[l, 2, q])]
            gates += _ring(n, l)
    elif ansatz.kind == BASIC:
        t = theta.reshape(ansatz.layers, n)
        for l in range(ansatz.layers):
            gates += [RY(q, t[l, q]) for q in range(n)]
            gates += _ring(n, l)
    else:
        t = theta.reshape(ansatz.layers, n)
        for l in range(ansatz.layers):
            gates += _ladder(n)
            gates += [RY(q, t[l, q]) for q in range(n)]
    return gates


@dataclass
class VqcModel:
    ansatz: Ansatz
    encoding: str = PHASE_HRZ
    params: np.ndarray | None = None
    bias: float = 0.0
    shots: int = 1000
    seed: int = 0
    pca: object = None
    scaler: object = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.encoding not in (ANGLE_RY, PHASE_HRZ):
            raise ValueError(f"unknown encoding {self.encoding!r}")
        if self.ansatz.kind == FIXED and self.encoding != ANGLE_RY:
            raise ValueError("the fixed-topology ansatz is only defined for angle-RY encoding")
        if self.params is None:
            self.params = np.zeros(self.ansatz.n_params)
        self.params = np.asarray(self.params, dtype=float).reshape(-1)
        if self.params.size != self.ansatz.n_params:
            raise ValueError(f"expected {self.ansatz.n_params} parameters, got {self.params.size}")
        if self.shots < 0:
            raise ValueError("shots must be >= 0")

    @property
    def encoder(self) -> Encoder:
        return Encoder.features(self.encoding)

    def circuit(self, features, params=None) -> Circuit:
        p = self.params if params is None else params
        gates = encoding_gates(self.encoder, features) + build_ansatz(self.ansatz, p)
        return Circuit(self.ansatz.n_qubits, gates)

    def preprocess(self, raw) -> np.ndarray:
        """Raw feature rows through the stored PCA and scaler."""
        from .features import pca_transform, scale_apply

        X = np.atleast_2d(np.asarray(raw, dtype=float))
        if self.pca is not None:
            X = pca_transform(self.pca, X)
        if self.scaler is not None:
            X = scale_apply(self.scaler, X)
        return X


def _check_features(model: VqcModel, X) -> tuple[np.ndarray, bool]:
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != model.ansatz.n_qubits:
        raise ValueError(f"expected {model.ansatz.n_qubits} features, got {X.shape[1]}")
    if X.shape[0] == 0:
        raise ValueError("no examples")
    if np.any(X < -1e-9) or np.any(X > np.pi + 1e-9) or not np.all(np.isfinite(X)):
        raise ValueError("features must be scaled into [0, pi] before the circuit")
    return np.clip(X, 0.0, np.pi), single


def forward(model: VqcModel, X, params=None, stream: tuple = ()) -> np.ndarray | float:
    """``<Z>`` of qubit 0 for one feature vector or a batch of rows."""
    X, single = _check_features(model, X)
    circ = model.circuit(X, params)
    m = MeasurementSpec("expval_z", 0, model.shots, model.seed)
    out = np.atleast_1d(np.asarray(run(circ, m, stream), dtype=float))
    if out.size == 1 and X.shape[0] > 1:
        out = np.full(X.shape[0], out[0])
    return float(out[0]) if single else out


def decide(score) -> np.ndarray | int:
    """Sign with zero mapped to ``+1``."""
    s = np.asarray(score, dtype=float)
    lab = np.where(s >= 0, 1, -1)
    return int(lab) if lab.ndim == 0 else lab


def predict(model: VqcModel, X, stream: tuple = ()):
    return decide(np.asarray(forward(model, X, stream=stream)) + model.bias)


def mse_loss(model: VqcModel, X, y, params=None, bias=None, stream: tuple = ()) -> float:
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size == 0:
        raise ValueError("empty dataset")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    f = np.atleast_1d(forward(model, X, params, stream))
    b = model.bias if bias is None else bias
    return float(np.mean((f + b - y) ** 2))


def accuracy(model: VqcModel, X, y) -> float:
    return float(np.mean(np.atleast_1d(predict(model, X)) == np.asarray(y).reshape(-1)))


@dataclass
class TrainReport:
    train_loss: list
    val_loss: list
    best_loss: list
    iterations: int
    wall_time: float
    termination: str
    converged_at: int
    rejected: int = 0
    metrics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "wall_time": self.wall_time,
            "termination": self.termination,
            "converged_at": self.converged_at,
            "rejected": self.rejected,
            "train_loss": [float(v) for v in self.train_loss],
            "val_loss": [float(v) for v in self.val_loss],
            "metrics": self.metrics,
        }


def convergence_iteration(best: np.ndarray, frac: float = 0.05) -> int:
    """First iteration (1-based) after which the best-so-far loss is within
    ``frac`` of the total improvement from its final value."""
    best = np.asarray(best, dtype=float)
    if best.size == 0:
        return 0
    finite = np.isfinite(best)
    if not finite.any():
        return best.size
    start = best[np.argmax(finite)]
    end = best[-1]
    target = end + frac * (start - end)
    return int(np.argmax(best <= target)) + 1


def train(model: VqcModel, X_train, y_train, X_val=None, y_val=None,
          cfg: OptimizerConfig | None = None, init_scale: float = 0.1) -> tuple[VqcModel, TrainReport]:
    """Fit ``params`` and ``bias`` by minimising training MSE.

    Parameters start uniform in ``[-init_scale, init_scale]`` from
    ``cfg.seed``; the bias starts at 0.  Validation loss is recorded at every
    evaluation but never steers the optimiser.  The returned model carries the
    best parameters seen.
    """
    cfg = cfg or OptimizerConfig()
    X_train, _ = _check_features(model, X_train)
    y_train = np.asarray(y_train, dtype=float).reshape(-1)
    if y_train.size != X_train.shape[0]:
        raise ValueError("label count does not match training rows")
    has_val = X_val is not None and len(X_val) > 0
    if has_val:
        X_val, _ = _check_features(model, X_val)
        y_val = np.asarray(y_val, dtype=float).reshape(-1)
    rng = np.random.default_rng(cfg.seed)
    x0 = np.concatenate([rng.uniform(-init_scale, init_scale, model.ansatz.n_params), [0.0]])
    val_hist = []

    def objective(z):
        k = len(val_hist)
        loss = mse_loss(model, X_train, y_train, z[:-1], z[-1], stream=(k, 0))
        val_hist.append(mse_loss(model, X_val, y_val, z[:-1], z[-1], stream=(k, 1)) if has_val else np.nan)
        return loss

    t0 = time.perf_counter()
    res: OptResult = minimize(objective, x0, cfg)
    wall = time.perf_counter() - t0
    if not res.success:
        log.warning("training never produced a finite loss; keeping initial parameters")
    model.params = res.x[:-1].copy()
    model.bias = float(res.x[-1])
    best = res.best_trajectory
    report = TrainReport(
        train_loss=list(res.trajectory),
        val_loss=val_hist[: len(res.trajectory)],
        best_loss=best.tolist(),
        iterations=res.nfev,
        wall_time=wall,
        termination=res.termination,
        converged_at=convergence_iteration(best),
        rejected=res.rejected,
    )
    report.metrics["train_accuracy"] = accuracy(model, X_train, y_train)
    if has_val:
        report.metrics["val_accuracy"] = accuracy(model, X_val, y_val)
    report.metrics["best_train_loss"] = float(res.fun)
    return model, report


def model_dict(model: VqcModel) -> dict:
    return {
        "ansatz": {"kind": model.ansatz.kind, "qubits": model.ansatz.n_qubits, "layers": model.ansatz.layers},
        "encoding": model.encoding,
        "params": [float(v) for v in model.params],
        "bias": float(model.bias),
        "shots": model.shots,
        "seed": model.seed,
        "pca": None if model.pca is None else model.pca.to_dict(),
        "scaler": None if model.scaler is None else model.scaler.to_dict(),
        "metadata": model.metadata,
    }


def model_from_dict(d: dict) -> VqcModel:
    from .features import PcaModel, Scaler

    a = d["ansatz"]
    return VqcModel(
        Ansatz(a["kind"], int(a["qubits"]), int(a["layers"])),
        d["encoding"],
        np.array(d["params"], dtype=float),
        float(d["bias"]),
        int(d["shots"]),
        int(d["seed"]),
        None if d["pca"] is None else PcaModel.from_dict(d["pca"]),
        None if d["scaler"] is None else Scaler.from_dict(d["scaler"]),
        dict(d.get("metadata", {})),
    )
