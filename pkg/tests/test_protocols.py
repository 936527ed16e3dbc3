import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles as O
from qcrack import protocols as P
from qcrack.protocols import PIXEL_ENCODER, Encoder


def _ry_state(values):
    return O.ry_state(np.asarray(values, dtype=float) * np.pi / 255)


def test_pixel_encoder_endpoints():
    from qcrack import qsim

    assert np.allclose(qsim.simulate(P.encode(PIXEL_ENCODER, [0])), [1, 0])
    assert np.allclose(np.abs(qsim.simulate(P.encode(PIXEL_ENCODER, [255]))), [0, 1])


def test_phase_encoder_zero_features_on_equator():
    from qcrack import qsim

    psi = qsim.simulate(P.encode(Encoder.features(P.PHASE_HRZ), [0, 0, 0, 0]))
    assert np.allclose(psi, np.full(16, 0.25))
    for q in range(4):
        assert abs(qsim.expval_z(psi, q)) < 1e-12


def test_encoder_range_rejected():
    with pytest.raises(ValueError):
        P.encoding_gates(PIXEL_ENCODER, [256])
    with pytest.raises(ValueError):
        P.encoding_gates(Encoder.features(), [4.0])


@pytest.mark.parametrize("proto", P.PROTOCOLS)
def test_identical_inputs(proto):
    r = P.similarity(proto, [120], [120])
    assert r.overlap == pytest.approx(1.0, abs=1e-12)
    assert r.dsq == pytest.approx(0.0, abs=1e-12)


def test_swap_examples():
    r = P.swap_test([0], [255])
    assert r.raw == pytest.approx(0.5, abs=1e-12) and r.overlap == pytest.approx(0.0, abs=1e-12)
    r = P.swap_test([85], [0])
    assert r.raw == pytest.approx(0.875, abs=1e-12) and r.overlap == pytest.approx(0.75, abs=1e-12)


def test_hadamard_examples():
    r = P.hadamard_test([0], [255])
    assert r.raw == pytest.approx(0.0, abs=1e-12) and r.dsq == pytest.approx(2.0, abs=1e-12)
    r = P.hadamard_test([85], [0])
    assert r.raw == pytest.approx(np.cos(np.pi / 6), abs=1e-12)
    assert r.dsq == pytest.approx(2 - np.sqrt(3), abs=1e-12)


def test_overlap_examples():
    r = P.simple_overlap([0], [255])
    assert r.raw == pytest.approx(0.0, abs=1e-12) and r.dsq == pytest.approx(1.0, abs=1e-12)
    r = P.simple_overlap([85], [0])
    assert r.raw == pytest.approx(0.75, abs=1e-12) and r.dsq == pytest.approx(0.25, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 255), min_size=3, max_size=3), st.lists(st.integers(0, 255), min_size=3, max_size=3))
def test_multi_qubit_against_inner_product(x, y):
    inner = float(np.real(np.vdot(_ry_state(y), _ry_state(x))))
    sw = P.swap_test(x, y)
    hd = P.hadamard_test(x, y)
    ov = P.simple_overlap(x, y)
    assert sw.raw == pytest.approx(0.5 * (1 + inner**2), abs=1e-10)
    assert hd.raw == pytest.approx(inner, abs=1e-10)
    assert ov.raw == pytest.approx(inner**2, abs=1e-10)
    # consistency between protocols and symmetry
    assert sw.overlap == pytest.approx(hd.raw**2, abs=1e-10)
    assert ov.dsq == pytest.approx(P.simple_overlap(y, x).dsq, abs=1e-12)


def test_hadamard_phase_encoding_real_part():
    rng = np.random.default_rng(3)
    enc = Encoder.features(P.PHASE_HRZ)
    for _ in range(10):
        x, y = rng.uniform(0, np.pi, 2), rng.uniform(0, np.pi, 2)
        ref = np.real(np.vdot(O.hrz_state(y), O.hrz_state(x)))
        assert P.hadamard_test(x, y, enc).raw == pytest.approx(ref, abs=1e-10)


@pytest.mark.parametrize("proto", P.PROTOCOLS)
def test_monotone_in_pixel_gap(proto):
    for c in (0, 77, 200, 255):
        p = np.arange(256.0)
        d = np.asarray(P.similarity(proto, p[:, None], np.full((256, 1), c)).dsq)
        gap = np.abs(p - c)
        order = np.argsort(gap, kind="stable")
        g, dd = gap[order], d[order]
        strictly_larger = g[1:] > g[:-1]
        assert np.all(dd[1:][strictly_larger] > dd[:-1][strictly_larger])


def test_batched_matches_single():
    xs = np.array([[10.0], [90.0], [250.0]])
    ys = np.array([[30.0], [30.0], [30.0]])
    batched = P.hadamard_test(xs, ys).raw
    single = [P.hadamard_test(x, y).raw for x, y in zip(xs, ys)]
    assert np.allclose(batched, single, atol=1e-14)


def test_shot_estimate_unbiased():
    exact = P.simple_overlap([40], [160]).raw
    est = np.array([P.simple_overlap([40], [160], shots=1000, seed=s).raw for s in range(100)])
    se = np.sqrt(exact * (1 - exact) / 1000) / np.sqrt(100)
    assert abs(est.mean() - exact) < 3 * se


def test_swap_clamp_flag():
    flagged = [P.swap_test([0], [255], shots=10, seed=s).clamped for s in range(30)]
    assert any(flagged)


def test_classical_scale_distance_exact():
    p = np.arange(0, 256, 15.0)[:, None]
    ref = ((p[:, 0] - 100) / 255) ** 2
    for proto in P.PROTOCOLS:
        d = P.classical_scale_distance(P.similarity(proto, p, np.full_like(p, 100)))
        assert np.allclose(d, ref, atol=1e-9)


def test_error_study_exact_row_zero_error_on_diagonal():
    rows = P.distance_error_study("overlap", [0], p_values=[50, 120], c_values=[50, 120], seeds=[0])
    assert len(rows) == 2 and all(r["seed_count"] == 1 for r in rows)
    rows = P.distance_error_study("overlap", [0], p_values=[77], c_values=[77])
    assert rows[0]["mean_abs_err"] == pytest.approx(0.0, abs=1e-12)


def test_error_study_csv(tmp_path):
    rows = P.distance_error_study("swap", [10, 100], c_values=[200], seeds=range(3))
    P.write_error_csv(rows, tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == ",".join(P.ERROR_COLUMNS)
    assert len(lines) == 3


def test_error_study_curve_monotone_at_1000_shots():
    """Quantum distance against p for c=200 falls then rises like the classical one."""
    p = np.arange(256.0)[:, None]
    d = np.asarray(P.simple_overlap(p, np.full_like(p, 200.0), shots=1000, seed=0).dsq)
    exact = np.asarray(P.simple_overlap(p, np.full_like(p, 200.0)).dsq)
    assert np.corrcoef(d, exact)[0, 1] > 0.99
    assert np.argmin(exact) == 200
