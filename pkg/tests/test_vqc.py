import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles as O
from qcrack import features as F
from qcrack.optim import OptimizerConfig
from qcrack.protocols import ANGLE_RY, PHASE_HRZ
from qcrack.vqc import (
    BASIC,
    FIXED,
    STRONGLY,
    Ansatz,
    VqcModel,
    accuracy,
    build_ansatz,
    decide,
    entangler_range,
    forward,
    mse_loss,
    predict,
    train,
)


@pytest.mark.parametrize("kind,count", [(STRONGLY, 36), (BASIC, 12), (FIXED, 12)])
def test_parameter_counts(kind, count):
    assert Ansatz(kind, 4, 3).n_params == count


def test_parameter_count_grid():
    for n in range(1, 7):
        for L in range(1, 5):
            assert Ansatz("strongly", n, L).n_params == 3 * n * L
            assert Ansatz("basic", n, L).n_params == n * L
            assert Ansatz("fixed", n, L).n_params == n * L
            for kind in ("strongly", "basic", "fixed"):
                a = Ansatz(kind, n, L)
                assert len([g for g in build_ansatz(a, np.zeros(a.n_params)) if g.angle is not None]) == a.n_params


def test_wiring_rule():
    gates = [g for g in build_ansatz(Ansatz("basic", 4, 2), np.zeros(8)) if g.kind == "X"]
    pairs = [(g.controls[0], g.targets[0]) for g in gates]
    assert pairs[:4] == [(0, 1), (1, 2), (2, 3), (3, 0)]
    assert pairs[4] == (0, 2)
    for layer in range(6):
        assert entangler_range(layer, 4) in (1, 2, 3)
    assert entangler_range(0, 4) == 1 and entangler_range(2, 4) == 3


def test_fixed_topology_order():
    gates = build_ansatz(Ansatz("fixed", 4, 1), np.arange(4.0))
    assert [(g.kind, g.controls, g.targets) for g in gates[:3]] == [
        ("X", (0,), (1,)), ("X", (2,), (3,)), ("X", (1,), (2,))]
    assert all(g.kind == "RY" for g in gates[3:])


def test_wrong_param_count():
    with pytest.raises(ValueError):
        build_ansatz(Ansatz("basic", 4, 3), np.zeros(11))
    with pytest.raises(ValueError):
        VqcModel(Ansatz("basic", 4, 3), params=np.zeros(5))


def test_fixed_requires_ry_encoding():
    with pytest.raises(ValueError):
        VqcModel(Ansatz("fixed", 4, 3), PHASE_HRZ)
    VqcModel(Ansatz("fixed", 4, 3), ANGLE_RY)


def test_fixed_zero_example():
    m = VqcModel(Ansatz("fixed", 4, 3), ANGLE_RY, shots=0)
    assert forward(m, np.zeros(4)) == pytest.approx(1.0)
    assert predict(m, np.zeros(4)) == 1


def _oracle_forward(model, x):
    n = model.ansatz.n_qubits
    if model.encoding == ANGLE_RY:
        psi = O.ry_state(x).astype(complex)
    else:
        psi = O.hrz_state(x)
    for g in build_ansatz(model.ansatz, model.params):
        if g.kind == "X":
            psi = O.cnot(n, g.controls[0], g.targets[0]) @ psi
        else:
            m = O.ry(g.angle) if g.kind == "RY" else O.rz(g.angle)
            psi = O.on(n, g.targets[0], m) @ psi
    return O.z0(psi)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([("strongly", PHASE_HRZ), ("basic", PHASE_HRZ), ("fixed", ANGLE_RY), ("basic", ANGLE_RY)]),
       st.integers(0, 2**31 - 1))
def test_forward_matches_oracle(kind_enc, seed):
    rng = np.random.default_rng(seed)
    a = Ansatz(kind_enc[0], 3, 2)
    m = VqcModel(a, kind_enc[1], rng.uniform(-np.pi, np.pi, a.n_params), shots=0)
    x = rng.uniform(0, np.pi, 3)
    f = forward(m, x)
    assert -1 <= f <= 1
    assert f == pytest.approx(_oracle_forward(m, x), abs=1e-10)
    assert forward(m, x) == f


def test_batched_forward():
    rng = np.random.default_rng(1)
    m = VqcModel(Ansatz("strongly", 4, 2), PHASE_HRZ, rng.normal(size=24), shots=0)
    X = rng.uniform(0, np.pi, (5, 4))
    assert np.allclose(forward(m, X), [forward(m, x) for x in X], atol=1e-12)


def test_phase_zero_params_bounded():
    m = VqcModel(Ansatz("basic", 4, 3), PHASE_HRZ, shots=0)
    for x in np.random.default_rng(2).uniform(0, np.pi, (10, 4)):
        assert abs(forward(m, x)) <= 1


def test_unscaled_features_rejected():
    m = VqcModel(Ansatz("basic", 4, 1), shots=0)
    with pytest.raises(ValueError):
        forward(m, [0, 0, 0, 4.0])
    with pytest.raises(ValueError):
        forward(m, [0, 0, 0])


def test_decision_rule():
    assert decide(0.6) == 1
    assert decide(0.2 - 0.5) == -1
    assert decide(0.5 - 0.5) == 1
    s = np.array([-0.3, 0.0, 0.7])
    for k in (0.1, 1.0, 50.0):
        assert np.array_equal(decide(k * s), decide(s))


def test_mse_examples():
    m = VqcModel(Ansatz("fixed", 4, 1), ANGLE_RY, shots=0)
    zero = np.zeros((1, 4))
    assert mse_loss(m, zero, [1]) == pytest.approx(0.0)
    m.bias = -1.0
    assert mse_loss(m, zero, [1]) == pytest.approx(1.0)
    m.bias = 0.0
    assert mse_loss(m, np.zeros((2, 4)), [1, -1]) == pytest.approx(2.0)
    m.bias = -1.0
    # residuals 1 and -1
    assert mse_loss(m, np.zeros((2, 4)), [-1, 1]) == pytest.approx(1.0 * 0.5 + 1.0 * 0.5)
    with pytest.raises(ValueError):
        mse_loss(m, np.zeros((0, 4)), [])
    with pytest.raises(ValueError):
        mse_loss(m, zero, [0])


def _blobs(n, seed):
    fm = F.generate_synthetic_features(F.SyntheticSpec(n=n, positive_fraction=0.5), seed)
    s, X = F.scale_fit_transform(fm.X)
    return X, fm.y


def test_train_separable_basic():
    X, y = _blobs(100, 3)
    m = VqcModel(Ansatz("basic", 4, 3), PHASE_HRZ, shots=0)
    m, rep = train(m, X, y, cfg=OptimizerConfig(max_iters=200))
    assert accuracy(m, X, y) >= 0.9
    assert rep.iterations <= 200 and len(rep.train_loss) == rep.iterations
    assert np.all(np.diff(rep.best_loss) <= 0)


def test_train_deterministic_with_shots():
    X, y = _blobs(40, 4)
    runs = []
    for _ in range(2):
        m = VqcModel(Ansatz("basic", 4, 1), PHASE_HRZ, shots=200, seed=3)
        m, rep = train(m, X, y, X, y, OptimizerConfig(max_iters=30, seed=3))
        runs.append((m.params.copy(), rep.train_loss, rep.val_loss))
    assert np.array_equal(runs[0][0], runs[1][0]) and runs[0][1:] == runs[1][1:]


def test_identical_points_best_loss():
    X = np.tile([[0.3, 1.2, 2.0, 0.7]], (5, 1))
    y = np.ones(5)
    m = VqcModel(Ansatz("basic", 4, 1), PHASE_HRZ, shots=0)
    m, rep = train(m, X, y, cfg=OptimizerConfig(max_iters=150))
    assert np.all(np.diff(rep.best_loss) <= 0)
    assert rep.best_loss[-1] < 1e-3


def test_strongly_slower_than_basic():
    data = F.generate_synthetic_features(F.SyntheticSpec(n=300, positive_fraction=0.5), 5)
    _, X = F.scale_fit_transform(data.X)
    conv = {}
    for kind in ("strongly", "basic"):
        m = VqcModel(Ansatz(kind, 4, 3), PHASE_HRZ, shots=0)
        _, rep = train(m, X, data.y, cfg=OptimizerConfig(max_iters=500))
        conv[kind] = rep.converged_at
    assert conv["strongly"] > conv["basic"]
