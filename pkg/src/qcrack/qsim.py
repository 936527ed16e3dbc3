"""Dense statevector simulator.

Conventions
-----------
* Qubit 0 is the most significant bit of a basis-state index, so the
  amplitude of ``|q0 q1 ... q_{n-1}>`` lives at ``int("q0q1...", 2)``.
* ``RY(t) = [[cos t/2, -sin t/2], [sin t/2, cos t/2]]`` and
  ``RZ(t) = diag(exp(-i t/2), exp(i t/2))``.
* A gate angle may be a 1-D array instead of a scalar.  The circuit is then
  *batched*: it describes ``B`` circuits of identical structure that differ
  only in their angles, and every measurement returns an array of length
  ``B``.  Batching is how per-pixel and per-example sweeps stay vectorised.

Shot sampling uses :func:`make_rng`, a Philox counter-based generator keyed
by a ``SeedSequence`` built from the seed and a stream tuple, so results are
bit-reproducible across platforms.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MAX_QUBITS = 20

# snap exact probabilities this close to 0/1, so deterministic outcomes stay
# deterministic under binomial sampling
_SNAP = 1e-12

_SQRT1_2 = 1.0 / np.sqrt(2.0)
_FIXED = {
    "H": np.array([[_SQRT1_2, _SQRT1_2], [_SQRT1_2, -_SQRT1_2]], dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "SWAP": np.array(
        [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
    ),
}
_ROTATIONS = ("RX", "RY", "RZ")
_ARITY = {"H": 1, "X": 1, "Y": 1, "Z": 1, "RX": 1, "RY": 1, "RZ": 1, "SWAP": 2}


class CircuitError(ValueError):
    """Raised for malformed gates, circuits or measurement requests."""


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator for ``seed`` and an optional integer stream path."""
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(s) & 0xFFFFFFFFFFFFFFFF for s in stream]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


@dataclass(frozen=True, eq=False)
class Gate:
    """One gate application.

    ``kind`` is one of H, X, Y, Z, RX, RY, RZ, SWAP.  Controlled gates carry
    their control qubits in ``controls`` (CNOT is X with one control, CSWAP is
    SWAP with one control, and so on).
    """

    kind: str
    targets: tuple[int, ...]
    controls: tuple[int, ...] = ()
    angle: float | np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in _ARITY:
            raise CircuitError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "targets", tuple(int(q) for q in self.targets))
        object.__setattr__(self, "controls", tuple(int(q) for q in self.controls))
        if len(self.targets) != _ARITY[self.kind]:
            raise CircuitError(f"{self.kind} acts on {_ARITY[self.kind]} qubit(s)")
        qubits = self.targets + self.controls
        if len(set(qubits)) != len(qubits):
            raise CircuitError(f"repeated qubit index in {self}")
        if min(qubits) < 0:
            raise CircuitError("negative qubit index")
        if self.kind in _ROTATIONS:
            if self.angle is None:
                raise CircuitError(f"{self.kind} needs an angle")
            a = np.asarray(self.angle, dtype=float)
            if a.ndim > 1:
                raise CircuitError("angle must be a scalar or 1-D array")
            if not np.all(np.isfinite(a)):
                raise CircuitError(f"non-finite angle in {self.kind}")
            object.__setattr__(self, "angle", float(a) if a.ndim == 0 else a)
        elif self.angle is not None:
            raise CircuitError(f"{self.kind} takes no angle")

    @property
    def qubits(self) -> tuple[int, ...]:
        return self.controls + self.targets

    @property
    def batch_size(self) -> int | None:
        if isinstance(self.angle, np.ndarray):
            return self.angle.shape[0]
        return None

    def adjoint(self) -> "Gate":
        if self.kind in _ROTATIONS:
            return Gate(self.kind, self.targets, self.controls, -self.angle)
        return self  # every fixed gate here is Hermitian

    def controlled(self, control: int) -> "Gate":
        return Gate(self.kind, self.targets, (control,) + self.controls, self.angle)

    def shifted(self, offset: int) -> "Gate":
        return Gate(
            self.kind,
            tuple(q + offset for q in self.targets),
            tuple(q + offset for q in self.controls),
            self.angle,
        )

    def matrix(self) -> np.ndarray:
        """Target-space matrix, shape (d, d) or (B, d, d) for batched angles."""
        if self.kind in _FIXED:
            return _FIXED[self.kind]
        half = np.asarray(self.angle, dtype=float) / 2.0
        c, s = np.cos(half), np.sin(half)
        if self.kind == "RY":
            m = np.array([[c, -s], [s, c]], dtype=complex)
        elif self.kind == "RX":
            m = np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)
        else:
            z = np.zeros_like(half)
            m = np.array([[np.exp(-1j * half), z], [z, np.exp(1j * half)]], dtype=complex)
        return np.moveaxis(m, (0, 1), (-2, -1)) if m.ndim == 3 else m

    def __repr__(self):
        parts = [self.kind]
        if self.controls:
            parts.append(f"c={self.controls}")
        parts.append(f"t={self.targets}")
        if self.angle is not None:
            parts.append(f"angle={self.angle!r}" if self.batch_size is None else f"angle[{self.batch_size}]")
        return "Gate(" + ", ".join(parts) + ")"


# convenience constructors
def H(q):
    return Gate("H", (q,))


def X(q):
    return Gate("X", (q,))


def Z(q):
    return Gate("Z", (q,))


def RX(q, angle):
    return Gate("RX", (q,), angle=angle)


def RY(q, angle):
    return Gate("RY", (q,), angle=angle)


def RZ(q, angle):
    return Gate("RZ", (q,), angle=angle)


def CNOT(control, target):
    return Gate("X", (target,), (control,))


def CZ(control, target):
    return Gate("Z", (target,), (control,))


def CSWAP(control, a, b):
    return Gate("SWAP", (a, b), (control,))


def controlled_block(gates: Iterable[Gate], control: int) -> list[Gate]:
    """Controlled version of a gate sequence, built gate by gate."""
    return [g.controlled(control) for g in gates]


@dataclass(frozen=True, eq=False)
class Circuit:
    n_qubits: int
    ops: tuple[Gate, ...] = field(default_factory=tuple)
    max_qubits: int = MAX_QUBITS

    def __post_init__(self):
        if not 1 <= self.n_qubits <= self.max_qubits:
            raise CircuitError(
                f"qubit count {self.n_qubits} outside [1, {self.max_qubits}]"
            )
        object.__setattr__(self, "ops", tuple(self.ops))
        batch = None
        for g in self.ops:
            if max(g.qubits) >= self.n_qubits:
                raise CircuitError(f"{g} addresses a qubit >= {self.n_qubits}")
            b = g.batch_size
            if b is not None:
                if batch is not None and b != batch:
                    raise CircuitError("inconsistent batch sizes across gate angles")
                batch = b
        object.__setattr__(self, "_batch", batch)

    @property
    def batch_size(self) -> int | None:
        return self._batch

    def __add__(self, other: "Circuit") -> "Circuit":
        n = max(self.n_qubits, other.n_qubits)
        return Circuit(n, self.ops + other.ops, max(self.max_qubits, other.max_qubits))

    def append(self, *gates: Gate) -> "Circuit":
        return Circuit(self.n_qubits, self.ops + tuple(gates), self.max_qubits)

    def adjoint(self) -> "Circuit":
        return Circuit(self.n_qubits, tuple(g.adjoint() for g in reversed(self.ops)), self.max_qubits)

    def placed(self, offset: int, n_qubits: int) -> "Circuit":
        """The same gates moved up by ``offset`` inside a wider register."""
        return Circuit(n_qubits, tuple(g.shifted(offset) for g in self.ops), max(self.max_qubits, n_qubits))

    def __len__(self):
        return len(self.ops)

    def __iter__(self):
        return iter(self.ops)


@dataclass(frozen=True)
class MeasurementSpec:
    """What to read out of a circuit.

    kind: ``"expval_z"`` (Pauli-Z expectation of ``qubit``), ``"prob_zero"``
    (probability ``qubit`` reads 0) or ``"prob_all_zero"``.  ``shots == 0``
    selects the exact backend.
    """

    kind: str
    qubit: int | None = None
    shots: int = 0
    seed: int = 0

    KINDS = ("expval_z", "prob_zero", "prob_all_zero")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise CircuitError(f"unknown measurement kind {self.kind!r}")
        if self.kind != "prob_all_zero" and self.qubit is None:
            raise CircuitError(f"{self.kind} needs a qubit index")
        if self.shots < 0:
            raise CircuitError("shots must be >= 0")


# --------------------------------------------------------------------------
# state evolution


def zero_state(n_qubits: int) -> np.ndarray:
    psi = np.zeros(2**n_qubits, dtype=complex)
    psi[0] = 1.0
    return psi


def _apply_dense(psi, mat, targets):
    k = len(targets)
    axes = [t + 1 for t in targets]
    front = list(range(1, k + 1))
    moved = np.moveaxis(psi, axes, front)
    shape = moved.shape
    flat = moved.reshape(shape[0], 2**k, -1)
    out = mat @ flat
    return np.moveaxis(out.reshape(shape), front, axes)


def _apply(psi, gate: Gate):
    """Apply ``gate`` to a batched tensor of shape (B, 2, ..., 2)."""
    mat = gate.matrix()
    if not gate.controls:
        return _apply_dense(psi, mat, gate.targets)
    psi = psi.copy()
    idx = [slice(None)] * psi.ndim
    for c in gate.controls:
        idx[c + 1] = 1
    idx = tuple(idx)
    rest = [q for q in range(psi.ndim - 1) if q not in gate.controls]
    local = [rest.index(t) for t in gate.targets]
    psi[idx] = _apply_dense(psi[idx], mat, local)
    return psi


def apply_gate(state: np.ndarray, gate: Gate) -> np.ndarray:
    """Return ``U_gate @ state`` for a flat state vector of length 2**n."""
    state = np.asarray(state, dtype=complex)
    n = int(np.log2(state.shape[-1]))
    if 2**n != state.shape[-1]:
        raise CircuitError("state length is not a power of two")
    if max(gate.qubits) >= n:
        raise CircuitError(f"{gate} addresses a qubit >= {n}")
    if gate.batch_size is not None:
        raise CircuitError("apply_gate takes scalar-angle gates; use simulate for batches")
    psi = state.reshape((1,) + (2,) * n)
    return _apply(psi, gate).reshape(-1)


def simulate(circuit: Circuit, initial: np.ndarray | None = None) -> np.ndarray:
    """Final statevector(s): shape (2**n,), or (B, 2**n) for a batched circuit."""
    n = circuit.n_qubits
    b = circuit.batch_size or 1
    if initial is None:
        psi = np.zeros((b, 2**n), dtype=complex)
        psi[:, 0] = 1.0
    else:
        psi = np.broadcast_to(np.asarray(initial, dtype=complex), (b, 2**n)).copy()
    psi = psi.reshape((b,) + (2,) * n)
    for g in circuit.ops:
        psi = _apply(psi, g)
    psi = psi.reshape(b, 2**n)
    return psi if circuit.batch_size is not None else psi[0]


def probabilities(circuit: Circuit) -> np.ndarray:
    psi = simulate(circuit)
    return np.abs(psi) ** 2


def _event_probability(probs: np.ndarray, n: int, m: MeasurementSpec) -> np.ndarray:
    """Probability of the 'success' outcome: qubit==0 or all-zero, per batch row."""
    probs = np.atleast_2d(probs)
    if m.kind == "prob_all_zero":
        p = probs[:, 0]
    else:
        if not 0 <= m.qubit < n:
            raise CircuitError(f"measured qubit {m.qubit} outside register of {n}")
        p = probs.reshape((probs.shape[0],) + (2,) * n).take(0, axis=m.qubit + 1)
        p = p.reshape(probs.shape[0], -1).sum(axis=1)
    p = np.clip(p, 0.0, 1.0)
    p = np.where(p < _SNAP, 0.0, p)
    return np.where(p > 1.0 - _SNAP, 1.0, p)


def _finish(value: np.ndarray, circuit: Circuit):
    return value if circuit.batch_size is not None else float(value[0])


def run_exact(circuit: Circuit, m: MeasurementSpec):
    """Analytic probability or expectation from the final statevector."""
    if m.shots != 0:
        raise CircuitError("run_exact needs shots == 0")
    p = _event_probability(probabilities(circuit), circuit.n_qubits, m)
    value = 2.0 * p - 1.0 if m.kind == "expval_z" else p
    return _finish(value, circuit)


def run_shots(circuit: Circuit, m: MeasurementSpec, stream: Sequence[int] = ()):
    """Shot-sampled estimate of the same quantity :func:`run_exact` returns.

    Each batch row is an independent circuit execution of ``m.shots`` shots.
    The count of the measured event is binomial with the exact marginal
    probability, which is the distribution you get by tallying full bitstring
    samples.
    """
    if m.shots < 1:
        raise CircuitError("run_shots needs shots >= 1; use run_exact for shots == 0")
    p = _event_probability(probabilities(circuit), circuit.n_qubits, m)
    rng = make_rng(m.seed, *stream)
    hits = rng.binomial(m.shots, p)
    freq = hits / m.shots
    value = 2.0 * freq - 1.0 if m.kind == "expval_z" else freq
    return _finish(value, circuit)


def run(circuit: Circuit, m: MeasurementSpec, stream: Sequence[int] = ()):
    """Dispatch on ``m.shots``: 0 is exact, anything else is sampled."""
    if m.shots == 0:
        return run_exact(circuit, m)
    return run_shots(circuit, m, stream)


def sample_counts(circuit: Circuit, shots: int, seed: int, stream: Sequence[int] = ()) -> np.ndarray:
    """Outcome counts over all 2**n basis states (index convention as above)."""
    if shots < 1:
        raise CircuitError("shots must be >= 1")
    if circuit.batch_size is not None:
        raise CircuitError("bitstring sampling needs an unbatched circuit")
    probs = probabilities(circuit)
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum()
    return make_rng(seed, *stream).multinomial(shots, probs)


def sample_bitstrings(circuit: Circuit, shots: int, seed: int, stream: Sequence[int] = ()) -> Counter:
    """Multiset of measured bitstrings, qubit 0 leftmost."""
    counts = sample_counts(circuit, shots, seed, stream)
    n = circuit.n_qubits
    return Counter({format(i, f"0{n}b"): int(c) for i, c in enumerate(counts) if c})


def qubit_zero_counts(counts: np.ndarray, n_qubits: int) -> np.ndarray:
    """Per-qubit number of shots that read 0, from full outcome counts."""
    t = np.asarray(counts).reshape((2,) * n_qubits)
    out = np.empty(n_qubits, dtype=np.int64)
    for q in range(n_qubits):
        out[q] = t.take(0, axis=q).sum()
    return out


def qubit_zero_probabilities(circuit: Circuit) -> np.ndarray:
    """Exact P(qubit q reads 0) for every qubit of an unbatched circuit."""
    if circuit.batch_size is not None:
        raise CircuitError("marginals need an unbatched circuit")
    n = circuit.n_qubits
    t = probabilities(circuit).reshape((2,) * n)
    return np.array([t.take(0, axis=q).sum() for q in range(n)])


def expval_z(state: np.ndarray, qubit: int) -> float:
    """<Z_qubit> of a flat state vector."""
    n = int(np.log2(state.shape[-1]))
    p = (np.abs(state) ** 2).reshape((2,) * n)
    p0 = p.take(0, axis=qubit).sum()
    return float(2.0 * p0 - 1.0)
