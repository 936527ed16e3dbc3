"""End-to-end crack segmentation.

Stages per image:

1. preprocess to a small blurred grayscale working image;
2. the image classifier decides whether a crack is present at all, and a
   negative answer ends the run with an empty mask;
3. q-means (or k-means) splits the pixels in two and the darker cluster is
   cut into connected regions;
4. the segment classifier labels each region from its isolated image;
5. crack-labelled regions whose oriented box is not elongated enough are
   demoted.

The final mask lives at working resolution; IoU compares it with the
ground-truth mask reduced the same way.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import features as F
from . import imaging
from .clustering import ClusterConfig, ClusterState, segment_image
from .optim import OptimizerConfig
from .protocols import PHASE_HRZ
from .vqc import Ansatz, TrainReport, VqcModel, forward, model_dict, model_from_dict, train

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
STAGES = ("preprocess", "gate", "cluster", "regions", "classify", "filter")


class ModelFileError(ValueError):
    pass


@dataclass
class PipelineConfig:
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    method: str = "qmeans"
    ratio_threshold: float = 2.5
    work_size: tuple[int, int] = (50, 50)
    sigma: float = 1.0
    connectivity: int = 8
    min_region: int = 3

    def to_dict(self) -> dict:
        d = asdict(self)
        d["work_size"] = list(self.work_size)
        return d


@dataclass
class RegionDecision:
    label: int
    size: int
    aspect_ratio: float
    score: float
    classified: int
    final: int
    demoted: bool = False
    truth: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PipelineResult:
    gate_label: int
    gate_score: float
    early_exit: bool
    work_image: np.ndarray
    candidate_mask: np.ndarray
    final_mask: np.ndarray
    regions: list = field(default_factory=list)
    cluster: ClusterState | None = None
    iou: float | None = None
    timings: dict = field(default_factory=dict)

    @property
    def demoted(self) -> int:
        return sum(r.demoted for r in self.regions)

    def summary(self) -> dict:
        """Deterministic description (no timings)."""
        return {
            "gate_label": self.gate_label,
            "gate_score": self.gate_score,
            "early_exit": self.early_exit,
            "iou": self.iou,
            "candidate_pixels": int(self.candidate_mask.sum()),
            "final_pixels": int(self.final_mask.sum()),
            "cluster": None if self.cluster is None else self.cluster.to_dict(),
            "regions": [r.to_dict() for r in self.regions],
        }


# ---------------------------------------------------------------------------
# stages


def image_features(work) -> np.ndarray:
    return F.describe_image(work)


def region_features(work, region: imaging.Region) -> np.ndarray:
    iso = imaging.isolate_region(work, region)
    return F.describe_region(iso, reference=float(np.median(work)))


def _score(model: VqcModel, raw) -> np.ndarray:
    X = model.preprocess(np.atleast_2d(raw))
    return np.atleast_1d(forward(model, X)) + model.bias


def postfilter_regions(regions, labels, ratio_threshold: float = 2.5):
    """Demote crack-labelled regions whose aspect ratio is below the threshold.

    Returns ``(new_labels, demoted_mask)``.  A threshold of 0 disables the
    filter.
    """
    labels = np.asarray(labels, dtype=int).copy()
    demoted = np.zeros(len(regions), dtype=bool)
    if ratio_threshold <= 0:
        return labels, demoted
    for i, r in enumerate(regions):
        if labels[i] == 1 and r.aspect_ratio < ratio_threshold:
            labels[i] = -1
            demoted[i] = True
            log.info("region %d demoted: aspect ratio %.2f < %.2f", r.label, r.aspect_ratio, ratio_threshold)
    return labels, demoted


def region_truth(region: imaging.Region, gt_work) -> int:
    """+1 when more than half of the region's pixels are crack pixels."""
    hits = gt_work[region.pixels[:, 0], region.pixels[:, 1]].sum()
    return 1 if hits * 2 > region.size else -1


def run_pipeline(image, image_model: VqcModel | None, segment_model: VqcModel | None,
                 cfg: PipelineConfig | None = None, ground_truth=None) -> PipelineResult:
    """Run every stage on one RGB or grayscale image.

    ``image_model=None`` skips the gate (every image proceeds);
    ``segment_model=None`` accepts every candidate region before the filter.
    """
    cfg = cfg or PipelineConfig()
    timings = {s: 0.0 for s in STAGES}
    t = time.perf_counter()
    work = imaging.preprocess(image, cfg.work_size, cfg.sigma)
    timings["preprocess"] = time.perf_counter() - t
    shape = work.shape
    gt = None
    if ground_truth is not None:
        gt = imaging.downscale_mask(ground_truth, shape[1], shape[0])

    gate_label, gate_score = 1, 1.0
    if image_model is not None:
        t = time.perf_counter()
        gate_score = float(_score(image_model, image_features(work))[0])
        gate_label = 1 if gate_score >= 0 else -1
        timings["gate"] = time.perf_counter() - t
    empty = np.zeros(shape, dtype=bool)
    if gate_label < 0:
        res = PipelineResult(gate_label, gate_score, True, work, empty, empty.copy(), timings=timings)
        res.iou = None if gt is None else imaging.iou(res.final_mask, gt)
        return res

    t = time.perf_counter()
    candidates, state = segment_image(work, cfg.cluster, cfg.method)
    timings["cluster"] = time.perf_counter() - t

    t = time.perf_counter()
    regions = imaging.extract_regions(candidates, cfg.connectivity, cfg.min_region)
    timings["regions"] = time.perf_counter() - t

    t = time.perf_counter()
    if segment_model is not None and regions:
        feats = np.vstack([region_features(work, r) for r in regions])
        scores = _score(segment_model, feats)
    else:
        scores = np.ones(len(regions))
    classified = np.where(scores >= 0, 1, -1)
    timings["classify"] = time.perf_counter() - t

    t = time.perf_counter()
    final_labels, demoted = postfilter_regions(regions, classified, cfg.ratio_threshold)
    final = np.zeros(shape, dtype=bool)
    decisions = []
    for i, r in enumerate(regions):
        if final_labels[i] == 1:
            final[r.pixels[:, 0], r.pixels[:, 1]] = True
        decisions.append(RegionDecision(
            r.label, r.size, float(r.aspect_ratio), float(scores[i]), int(classified[i]),
            int(final_labels[i]), bool(demoted[i]), None if gt is None else region_truth(r, gt)))
    timings["filter"] = time.perf_counter() - t

    res = PipelineResult(gate_label, gate_score, False, work, candidates, final, decisions, state,
                         timings=timings)
    res.iou = None if gt is None else imaging.iou(final, gt)
    return res


def upscale_mask(mask, shape) -> np.ndarray:
    """Nearest-neighbour resize of a working-resolution mask."""
    mask = np.asarray(mask, dtype=bool)
    rows = (np.arange(shape[0]) * mask.shape[0]) // shape[0]
    cols = (np.arange(shape[1]) * mask.shape[1]) // shape[1]
    return mask[np.ix_(rows, cols)]


# ---------------------------------------------------------------------------
# persistence


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def save_model(model: VqcModel, path, kind: str = "classifier", training: dict | None = None) -> str:
    """Write ``model`` as canonical JSON with a version and sha256 checksum.

    Floats are written with ``repr`` precision so a load reproduces every
    parameter bit for bit.  Returns the checksum.
    """
    payload = {"version": FORMAT_VERSION, "kind": kind, "model": model_dict(model), "training": training or {}}
    digest = hashlib.sha256(_canonical(payload).encode()).hexdigest()
    doc = dict(payload, checksum=digest)
    Path(path).write_text(_canonical(doc) + "\n")
    return digest


def load_model_file(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, UnicodeDecodeError) as e:
        raise ModelFileError(f"{path}: cannot read model file ({e})") from None
    except json.JSONDecodeError as e:
        raise ModelFileError(f"{path}: corrupt model file ({e.msg} at char {e.pos})") from None
    if not isinstance(doc, dict) or "version" not in doc:
        raise ModelFileError(f"{path}: not a model file")
    if doc["version"] != FORMAT_VERSION:
        raise ModelFileError(f"{path}: format version {doc['version']!r}, expected {FORMAT_VERSION}")
    digest = doc.pop("checksum", None)
    if digest != hashlib.sha256(_canonical(doc).encode()).hexdigest():
        raise ModelFileError(f"{path}: checksum mismatch")
    return doc


def load_model(path) -> VqcModel:
    doc = load_model_file(path)
    try:
        return model_from_dict(doc["model"])
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFileError(f"{path}: invalid model contents ({e})") from None


# ---------------------------------------------------------------------------
# synthetic corpora


@dataclass
class CorpusSpec:
    n: int = 50
    positive_fraction: float = 0.5
    blob_fraction: float = 0.5
    max_blobs: int = 2
    thickness: tuple[float, float] = (9.0, 14.0)
    size: int = 227
    seed: int = 0


def synthetic_corpus(spec: CorpusSpec):
    """List of ``(name, rgb, mask)``; negatives have an all-false mask."""
    rng = np.random.default_rng(spec.seed)
    n_pos = int(round(spec.n * spec.positive_fraction))
    has_crack = np.zeros(spec.n, dtype=bool)
    has_crack[rng.permutation(spec.n)[:n_pos]] = True
    items = []
    for i in range(spec.n):
        blobs = int(rng.integers(1, spec.max_blobs + 1)) if rng.random() < spec.blob_fraction else 0
        cs = imaging.CrackSpec(
            width=spec.size, height=spec.size,
            thickness=float(rng.uniform(*spec.thickness)) if has_crack[i] else 0.0,
            n_random_blobs=blobs, seed=int(rng.integers(2**31)))
        rgb, mask = imaging.generate_crack_image(cs)
        items.append((f"img{i:04d}", rgb, mask))
    return items


# ---------------------------------------------------------------------------
# training helpers


def image_dataset(items, cfg: PipelineConfig | None = None) -> F.FeatureMatrix:
    cfg = cfg or PipelineConfig()
    X = [image_features(imaging.preprocess(rgb, cfg.work_size, cfg.sigma)) for _, rgb, _ in items]
    y = [1 if m.any() else -1 for _, _, m in items]
    return F.FeatureMatrix(np.vstack(X), np.array(y), list(F.IMAGE_FEATURES))


def region_dataset(items, cfg: PipelineConfig | None = None) -> F.FeatureMatrix:
    """One row per candidate region of every image, labelled by ground truth."""
    cfg = cfg or PipelineConfig()
    X, y = [], []
    for _, rgb, mask in items:
        work = imaging.preprocess(rgb, cfg.work_size, cfg.sigma)
        gt = imaging.downscale_mask(mask, work.shape[1], work.shape[0])
        cand, _ = segment_image(work, cfg.cluster, cfg.method)
        for r in imaging.extract_regions(cand, cfg.connectivity, cfg.min_region):
            X.append(region_features(work, r))
            y.append(region_truth(r, gt))
    if not X:
        raise ValueError("no candidate regions in the corpus")
    return F.FeatureMatrix(np.vstack(X), np.array(y), list(F.REGION_FEATURES))


def fit_classifier(data: F.FeatureMatrix, ansatz: str = "basic", encoding: str = PHASE_HRZ,
                   layers: int = 3, n_components: int = 4, val_ratio: float = 0.2, shots: int = 1000,
                   opt: OptimizerConfig | None = None, seed: int = 0) -> tuple[VqcModel, TrainReport]:
    """PCA + scaler fitted on the training part, then a VQC on top."""
    opt = opt or OptimizerConfig(seed=seed)
    train_set, val_set, _ = F.split_dataset(data, (0.0, val_ratio), seed=seed)
    pca = F.pca_fit(train_set.X, min(n_components, train_set.X.shape[1]))
    scaler = F.scale_fit(F.pca_transform(pca, train_set.X))
    model = VqcModel(Ansatz(ansatz, pca.n_components, layers), encoding, shots=shots, seed=seed,
                     pca=pca, scaler=scaler)
    model, report = train(model, model.preprocess(train_set.X), train_set.y,
                          model.preprocess(val_set.X) if len(val_set) else None, val_set.y, opt)
    model.scaler.clamp_count = 0
    return model, report


# ---------------------------------------------------------------------------
# evaluation


def _eval_one(args):
    name, rgb, mask, image_model, segment_model, cfg = args
    res = run_pipeline(rgb, image_model, segment_model, cfg, mask)
    fp = sum(1 for r in res.regions if r.final == 1 and r.truth == -1)
    fp_pre = sum(1 for r in res.regions if r.classified == 1 and r.truth == -1)
    row = {
        "name": name,
        "has_crack": int(np.asarray(mask).any()),
        "gate": res.gate_label,
        "iou": res.iou,
        "regions": len(res.regions),
        "demoted": res.demoted,
        "fp_regions": fp,
        "fp_regions_unfiltered": fp_pre,
    }
    pairs = [(r.final, r.truth) for r in res.regions]
    return row, pairs, res


def _confusion(pairs) -> dict:
    c = {"tp": 0, "fp": 0, "fn": 0, "tn": 0}
    for pred, truth in pairs:
        key = ("t" if pred == truth else "f") + ("p" if pred == 1 else "n")
        c[key] += 1
    return c


def evaluate_corpus(items, image_model, segment_model, cfg: PipelineConfig | None = None,
                    out_dir=None, jobs: int = 1, keep_results: bool = False) -> dict:
    """Run the pipeline over ``(name, rgb, mask)`` items and score it.

    ``mean_iou`` averages over images that contain a crack; ``mean_iou_all``
    includes crack-free images (an empty prediction there scores 1).
    """
    cfg = cfg or PipelineConfig()
    items = list(items)
    if not items:
        raise ValueError("empty corpus")
    for name, _, mask in items:
        if mask is None:
            raise ValueError(f"{name}: missing ground-truth mask")
    args = [(n, rgb, m, image_model, segment_model, cfg) for n, rgb, m in items]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            outs = list(ex.map(_eval_one, args))
    else:
        outs = [_eval_one(a) for a in args]
    rows = [o[0] for o in outs]
    region_pairs = [p for o in outs for p in o[1]]
    crack_ious = [r["iou"] for r in rows if r["has_crack"]]
    gate_pairs = [(r["gate"], 1 if r["has_crack"] else -1) for r in rows]
    gate = _confusion(gate_pairs)
    report = {
        "images": len(rows),
        "mean_iou": float(np.mean(crack_ious)) if crack_ious else float("nan"),
        "mean_iou_all": float(np.mean([r["iou"] for r in rows])),
        "gate_confusion": gate,
        "gate_recall": gate["tp"] / max(1, gate["tp"] + gate["fn"]),
        "region_confusion": _confusion(region_pairs),
        "fp_regions": int(sum(r["fp_regions"] for r in rows)),
        "fp_regions_unfiltered": int(sum(r["fp_regions_unfiltered"] for r in rows)),
        "demoted": int(sum(r["demoted"] for r in rows)),
        "per_image": rows,
    }
    if keep_results:
        report["results"] = [o[2] for o in outs]
    if out_dir is not None:
        write_report(report, out_dir)
    return report


def write_report(report: dict, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = report["per_image"]
    with open(out / "per_image.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    summary = {k: v for k, v in report.items() if k not in ("per_image", "results")}
    (out / "metrics.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
