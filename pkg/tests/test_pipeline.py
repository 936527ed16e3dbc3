import json

import numpy as np
import pytest
from conftest import EXACT_PIPELINE

from qcrack import imaging
from qcrack.features import PcaModel, Scaler
from qcrack.pipeline import (
    FORMAT_VERSION,
    CorpusSpec,
    ModelFileError,
    evaluate_corpus,
    load_model,
    postfilter_regions,
    run_pipeline,
    save_model,
    synthetic_corpus,
)
from qcrack.protocols import ANGLE_RY, PHASE_HRZ
from qcrack.vqc import Ansatz, VqcModel


def _region(mask):
    return imaging.extract_regions(mask, 8, 1)[0]


def test_postfilter_examples():
    sq = np.zeros((30, 30), bool)
    sq[5:15, 5:15] = True
    line = np.zeros((30, 30), bool)
    line[20:22, 2:18] = True
    regs = [_region(sq), _region(line)]
    assert regs[0].aspect_ratio < 1.1 and regs[1].aspect_ratio == pytest.approx(8.0)
    labels, demoted = postfilter_regions(regs, [1, 1], 2.5)
    assert list(labels) == [-1, 1] and list(demoted) == [True, False]
    labels, demoted = postfilter_regions(regs, [1, 1], 0)
    assert list(labels) == [1, 1] and not demoted.any()
    labels, _ = postfilter_regions(regs, [-1, -1], 2.5)
    assert list(labels) == [-1, -1]


def test_no_crack_early_exit(trained_models):
    gate, seg = trained_models
    rgb, mask = imaging.generate_crack_image(imaging.CrackSpec(thickness=0, seed=321))
    res = run_pipeline(rgb, gate, seg, EXACT_PIPELINE, mask)
    assert res.early_exit and not res.final_mask.any()
    assert res.timings["cluster"] == 0 and res.timings["classify"] == 0 and res.timings["filter"] == 0


def test_single_crack_iou(trained_models):
    gate, seg = trained_models
    rgb, mask = imaging.generate_crack_image(imaging.CrackSpec(seed=77))
    res = run_pipeline(rgb, gate, seg, EXACT_PIPELINE, mask)
    assert not res.early_exit
    assert res.iou >= 0.5


def test_mask_provenance_and_determinism(trained_models):
    gate, seg = trained_models
    rgb, mask = imaging.generate_crack_image(imaging.CrackSpec(seed=5, n_random_blobs=2))
    a = run_pipeline(rgb, gate, seg, EXACT_PIPELINE, mask)
    b = run_pipeline(rgb, gate, seg, EXACT_PIPELINE, mask)
    assert a.summary() == b.summary() and np.array_equal(a.final_mask, b.final_mask)
    assert not (a.final_mask & ~a.candidate_mask).any()
    kept = np.zeros_like(a.final_mask)
    regions = imaging.extract_regions(a.candidate_mask, 8, 3)
    for r, d in zip(regions, a.regions):
        if d.final == 1:
            assert d.classified == 1 and not d.demoted
            kept |= r.mask(kept.shape)
    assert np.array_equal(kept, a.final_mask)


def _random_model(rng):
    kind = rng.choice(["strongly", "basic", "fixed"])
    enc = ANGLE_RY if kind == "fixed" or rng.random() < 0.5 else PHASE_HRZ
    a = Ansatz(kind, int(rng.integers(1, 6)), int(rng.integers(1, 4)))
    d_in = int(rng.integers(a.n_qubits, a.n_qubits + 4))
    pca = PcaModel(rng.normal(size=d_in), rng.normal(size=(a.n_qubits, d_in)) * 1e-3,
                   rng.random(a.n_qubits), float(rng.random()), bool(rng.random() < 0.5))
    scaler = Scaler(rng.normal(size=a.n_qubits), rng.normal(size=a.n_qubits) + 5)
    return VqcModel(a, enc, rng.normal(size=a.n_params) * 10 ** rng.uniform(-8, 3), float(rng.normal()),
                    int(rng.integers(0, 2000)), int(rng.integers(0, 2**31)), pca, scaler, {"note": "x"})


def _same(a: VqcModel, b: VqcModel):
    assert a.ansatz == b.ansatz and a.encoding == b.encoding
    assert a.params.tobytes() == b.params.tobytes() and a.bias == b.bias
    assert a.shots == b.shots and a.seed == b.seed
    assert a.pca.components.tobytes() == b.pca.components.tobytes()
    assert a.pca.mean.tobytes() == b.pca.mean.tobytes()
    assert a.scaler.low.tobytes() == b.scaler.low.tobytes()
    assert a.scaler.high.tobytes() == b.scaler.high.tobytes()


def test_persistence_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    for i in range(20):
        m = _random_model(rng)
        save_model(m, tmp_path / "m.json")
        _same(m, load_model(tmp_path / "m.json"))


def test_persistence_errors(tmp_path):
    m = _random_model(np.random.default_rng(1))
    p = tmp_path / "m.json"
    save_model(m, p)
    text = p.read_text()
    (tmp_path / "trunc.json").write_text(text[: len(text) // 2])
    with pytest.raises(ModelFileError, match="corrupt"):
        load_model(tmp_path / "trunc.json")
    doc = json.loads(text)
    doc["version"] = FORMAT_VERSION + 1
    (tmp_path / "v.json").write_text(json.dumps(doc))
    with pytest.raises(ModelFileError, match="version"):
        load_model(tmp_path / "v.json")
    doc = json.loads(text)
    doc["model"]["bias"] += 1.0
    (tmp_path / "c.json").write_text(json.dumps(doc))
    with pytest.raises(ModelFileError, match="checksum"):
        load_model(tmp_path / "c.json")
    with pytest.raises(ModelFileError):
        load_model(tmp_path / "missing.json")


def test_evaluate_trivial_corpora():
    img = np.full((50, 50), 200, np.uint8)
    img[20:23, 5:45] = 20
    gt = np.zeros((50, 50), bool)
    gt[20:23, 5:45] = True
    rep = evaluate_corpus([("a", img, gt)], None, None, EXACT_PIPELINE)
    assert rep["mean_iou"] == pytest.approx(1.0)
    flat = np.full((50, 50), 200, np.uint8)
    rep = evaluate_corpus([("b", flat, gt)], None, None, EXACT_PIPELINE)
    assert rep["mean_iou"] == 0.0
    with pytest.raises(ValueError):
        evaluate_corpus([], None, None)
    with pytest.raises(ValueError):
        evaluate_corpus([("c", img, None)], None, None)


def test_evaluate_reproducible(trained_models, tmp_path):
    gate, seg = trained_models
    items = synthetic_corpus(CorpusSpec(n=8, seed=3))
    evaluate_corpus(items, gate, seg, EXACT_PIPELINE, tmp_path / "a")
    evaluate_corpus(items, gate, seg, EXACT_PIPELINE, tmp_path / "b", jobs=2)
    for name in ("metrics.json", "per_image.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
