"""Command-line interface.

Every command writes under ``--out-dir`` and always leaves a
``run_manifest.json`` there describing the command, its flags, seeds,
library versions and exit code.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

A ``--config`` file is INI-style ``key = value``.  Keys in ``[DEFAULT]``
apply to every command, keys in a section named after the command apply to
that command only.  Keys are flag names with dashes or underscores
(``max-iters = 300``).  Flags given on the command line win.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import features as F
from . import imaging
from .clustering import ClusterConfig, segment_image
from .optim import OptimizerConfig
from .pipeline import (
    CorpusSpec,
    ModelFileError,
    PipelineConfig,
    evaluate_corpus,
    fit_classifier,
    image_dataset,
    image_features,
    load_model,
    region_dataset,
    run_pipeline,
    save_model,
    synthetic_corpus,
    upscale_mask,
)
from .protocols import PROTOCOLS, distance_error_study, write_error_csv
from .vqc import ANSATZ_KINDS, predict

log = logging.getLogger("qcrack")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
IMAGE_SUFFIXES = (".png", ".pgm", ".ppm")


class UsageError(Exception):
    pass


class NumericalError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# helpers


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _size(text: str) -> tuple[int, int]:
    parts = _int_list(text.replace("x", ","))
    if len(parts) != 2 or min(parts) < 1:
        raise argparse.ArgumentTypeError(f"expected WIDTH,HEIGHT, got {text!r}")
    return parts[0], parts[1]


def _read_corpus(path) -> list:
    """``images/`` and optional ``masks/`` subdirectories; masks share the
    image's stem.  A plain directory of images works too."""
    root = Path(path)
    img_dir = root / "images" if (root / "images").is_dir() else root
    if not img_dir.is_dir():
        raise FileNotFoundError(f"corpus directory {root} does not exist")
    mask_dir = root / "masks"
    items = []
    for p in sorted(img_dir.iterdir()):
        if p.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        mask = None
        for suffix in IMAGE_SUFFIXES:
            m = mask_dir / (p.stem + suffix)
            if m.is_file():
                mask = imaging.read_mask(m)
                break
        items.append((p.stem, imaging.read_image(p), mask))
    if not items:
        raise FileNotFoundError(f"no images in {img_dir}")
    return items


def _need_masks(items):
    missing = [n for n, _, m in items if m is None]
    if missing:
        raise FileNotFoundError(f"missing ground-truth masks for: {', '.join(missing[:5])}")


def _cluster_cfg(a) -> ClusterConfig:
    return ClusterConfig(k=a.k, shots=a.shots, seed=a.seed, batch_qubits=a.batch_qubits,
                         protocol=a.protocol, max_iters=a.cluster_iters)


def _pipeline_cfg(a) -> PipelineConfig:
    return PipelineConfig(cluster=_cluster_cfg(a), method=a.method, ratio_threshold=a.ratio_threshold,
                          work_size=a.size, sigma=a.sigma, connectivity=a.connectivity, min_region=a.min_region)


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_loss_csv(path, report):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "train_loss", "val_loss", "best_train_loss"])
        for i, (t, v, b) in enumerate(zip(report.train_loss, report.val_loss, report.best_loss), start=1):
            w.writerow([i, repr(float(t)), repr(float(v)), repr(float(b))])


def _plot(a, name, draw):
    if not a.plot:
        return None
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        log.warning("--plot needs matplotlib; skipping %s", name)
        return None
    fig, ax = plt.subplots(figsize=(6, 4))
    draw(ax)
    fig.tight_layout()
    out = Path(a.out_dir) / name
    fig.savefig(out, dpi=100)
    plt.close(fig)
    return str(out)


# ---------------------------------------------------------------------------
# commands


def cmd_synth_gen(a):
    spec = CorpusSpec(n=a.n, positive_fraction=a.positive_fraction, blob_fraction=a.blob_fraction,
                      max_blobs=a.max_blobs, size=a.image_size, seed=a.seed)
    out = Path(a.out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    rows = []
    for name, rgb, mask in synthetic_corpus(spec):
        imaging.write_image(out / "images" / f"{name}.png", rgb)
        imaging.write_image(out / "masks" / f"{name}.png", mask)
        rows.append((name, 1 if mask.any() else -1))
    with open(out / "labels.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "label"])
        w.writerows(rows)
    return ["images/", "masks/", "labels.csv"]


def _train(a, which: str):
    if a.features:
        data = F.load_features_csv(a.features)
        if data.y is None:
            raise ValueError(f"{a.features}: a label column is required for training")
    elif a.corpus:
        items = _read_corpus(a.corpus)
        _need_masks(items)
        cfg = _pipeline_cfg(a)
        data = image_dataset(items, cfg) if which == "image" else region_dataset(items, cfg)
    else:
        raise UsageError("give --features CSV or --corpus DIR")
    if np.unique(data.y).size < 2:
        raise ValueError("training data needs both classes")
    opt = OptimizerConfig(algorithm=a.optimizer, max_iters=a.max_iters, seed=a.seed)
    model, report = fit_classifier(data, a.ansatz, a.encoding, a.layers, a.components,
                                   a.val_ratio, a.shots, opt, a.seed)
    if not np.isfinite(report.metrics["best_train_loss"]):
        raise NumericalError("training produced no finite loss")
    out = Path(a.out_dir)
    name = f"{which}_model.json"
    save_model(model, out / name, kind=f"{which}-classifier",
               training={"rows": len(data), "columns": list(data.columns),
                         "iterations": report.iterations, "termination": report.termination,
                         "converged_at": report.converged_at, "metrics": report.metrics})
    _write_loss_csv(out / f"{which}_loss.csv", report)
    outputs = [name, f"{which}_loss.csv"]

    def draw(ax):
        ax.plot(report.train_loss, label="train")
        ax.plot(report.val_loss, label="validation")
        ax.set_xlabel("iteration")
        ax.set_ylabel("MSE")
        ax.legend()

    png = _plot(a, f"{which}_loss.png", draw)
    if png:
        outputs.append(Path(png).name)
    log.info("%s classifier: %s", which, report.metrics)
    return outputs


def cmd_train_image(a):
    return _train(a, "image")


def cmd_train_segment(a):
    return _train(a, "segment")


def cmd_classify(a):
    model = load_model(a.model)
    out = Path(a.out_dir)
    if a.features:
        data = F.load_features_csv(a.features)
        names = [str(i) for i in range(len(data))]
        X = data.X
    elif a.input:
        paths = [Path(p) for p in a.input]
        names = [p.stem for p in paths]
        X = np.vstack([image_features(imaging.preprocess(imaging.read_image(p), a.size, a.sigma)) for p in paths])
    else:
        raise UsageError("give --features CSV or --input IMAGE")
    labels = np.atleast_1d(predict(model, model.preprocess(X)))
    with open(out / "predictions.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "label"])
        w.writerows(zip(names, labels.tolist()))
    return ["predictions.csv"]


def cmd_qmeans(a):
    img = imaging.read_image(a.input)
    work = imaging.preprocess(img, a.size, a.sigma) if not a.raw else (
        imaging.to_grayscale(img) if img.ndim == 3 else img)
    mask, state = segment_image(work, _cluster_cfg(a), a.method)
    out = Path(a.out_dir)
    imaging.write_image(out / "mask.png", mask)
    _write_json(out / "clusters.json", state.to_dict())
    return ["mask.png", "clusters.json"]


def _save_result(a, img, res, gt_given: bool):
    out = Path(a.out_dir)
    imaging.write_image(out / "mask.png", res.final_mask)
    imaging.write_image(out / "candidates.png", res.candidate_mask)
    rgb = img if img.ndim == 3 else np.repeat(img[:, :, None], 3, axis=2)
    imaging.write_image(out / "overlay.png", imaging.overlay(rgb, upscale_mask(res.final_mask, rgb.shape[:2])))
    summary = res.summary()
    if not gt_given:
        summary.pop("iou")
    _write_json(out / "result.json", summary)
    return ["mask.png", "candidates.png", "overlay.png", "result.json"]


def cmd_segment(a):
    img = imaging.read_image(a.input)
    seg = load_model(a.segment_model) if a.segment_model else None
    gt = imaging.read_mask(a.mask) if a.mask else None
    res = run_pipeline(img, None, seg, _pipeline_cfg(a), gt)
    return _save_result(a, img, res, gt is not None)


def cmd_pipeline_run(a):
    img = imaging.read_image(a.input)
    gate, seg = load_model(a.image_model), load_model(a.segment_model)
    gt = imaging.read_mask(a.mask) if a.mask else None
    res = run_pipeline(img, gate, seg, _pipeline_cfg(a), gt)
    return _save_result(a, img, res, gt is not None)


def cmd_evaluate(a):
    items = _read_corpus(a.corpus)
    _need_masks(items)
    gate = load_model(a.image_model) if a.image_model else None
    seg = load_model(a.segment_model) if a.segment_model else None
    report = evaluate_corpus(items, gate, seg, _pipeline_cfg(a), a.out_dir, a.jobs)
    log.info("mean IoU %.4f, gate recall %.3f", report["mean_iou"], report["gate_recall"])
    return ["per_image.csv", "metrics.json"]


def cmd_bench_distance(a):
    rows = distance_error_study(a.protocol, a.shots_grid, c_values=a.c, seeds=range(a.seed, a.seed + a.seeds),
                                estimator=a.estimator)
    name = f"distance_error_{a.protocol}.csv"
    write_error_csv(rows, Path(a.out_dir) / name)
    outputs = [name]

    def draw(ax):
        for c in sorted({r["c"] for r in rows}):
            sel = [r for r in rows if r["c"] == c]
            ax.errorbar([r["shots"] for r in sel], [r["mean_abs_err"] for r in sel],
                        yerr=[r["std_err_abs"] for r in sel], label=f"c={c:g}", capsize=2)
        ax.set_xscale("log")
        ax.set_xlabel("shots")
        ax.set_ylabel("mean |error|")
        ax.legend(fontsize=7)

    png = _plot(a, f"distance_error_{a.protocol}.png", draw)
    if png:
        outputs.append(Path(png).name)
    return outputs


# ---------------------------------------------------------------------------
# parser


def _common(parser, shot_grid: bool = False):
    g = parser.add_argument_group("global")
    g.add_argument("--seed", type=int, default=0)
    if shot_grid:
        g.add_argument("--shots", dest="shots_grid", type=_int_list, default=[10, 100, 1000, 10000],
                       help="comma-separated shot counts (0 = exact)")
        parser.set_defaults(shots=0)
    else:
        g.add_argument("--shots", type=int, default=0, help="shots per circuit; 0 = exact")
    g.add_argument("--out-dir", default="out")
    g.add_argument("--config", help="INI-style key = value file")
    g.add_argument("--jobs", type=int, default=1)
    g.add_argument("--plot", action="store_true", help="also render PNG plots (needs matplotlib)")
    g.add_argument("-v", "--verbose", action="store_true")


def _imaging_flags(parser):
    parser.add_argument("--size", type=_size, default=(50, 50), help="working size WIDTH,HEIGHT")
    parser.add_argument("--sigma", type=float, default=1.0)


def _segment_flags(parser):
    _imaging_flags(parser)
    parser.add_argument("--k", type=int, default=2)
    parser.add_argument("--method", choices=("qmeans", "kmeans"), default="qmeans")
    parser.add_argument("--protocol", choices=PROTOCOLS, default="overlap")
    parser.add_argument("--batch-qubits", type=int, default=10)
    parser.add_argument("--cluster-iters", type=int, default=50)
    parser.add_argument("--ratio-threshold", type=float, default=2.5, help="0 disables the filter")
    parser.add_argument("--connectivity", type=int, choices=(4, 8), default=8)
    parser.add_argument("--min-region", type=int, default=3)


def _train_flags(parser):
    _segment_flags(parser)
    src = parser.add_mutually_exclusive_group()
    src.add_argument("--features", help="labelled feature CSV")
    src.add_argument("--corpus", help="directory with images/ and masks/")
    parser.add_argument("--ansatz", choices=ANSATZ_KINDS + ("strongly", "basic", "fixed"), default="basic")
    parser.add_argument("--encoding", choices=("phase-HRZ", "angle-RY"), default="phase-HRZ")
    parser.add_argument("--layers", type=int, default=3)
    parser.add_argument("--components", type=int, default=4)
    parser.add_argument("--val-ratio", type=float, default=0.2)
    parser.add_argument("--max-iters", type=int, default=300)
    parser.add_argument("--optimizer", choices=("cobyla", "nelder-mead"), default="cobyla")


COMMANDS = {}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qcrack", description="Quantum-assisted crack segmentation toolkit.", allow_abbrev=False)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text, allow_abbrev=False)
        _common(p, shot_grid=name == "bench-distance")
        p.set_defaults(func=fn)
        COMMANDS[name] = p
        return p

    p = add("synth-gen", cmd_synth_gen, "Generate a synthetic crack corpus (images, masks, labels).")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--positive-fraction", type=float, default=0.5)
    p.add_argument("--blob-fraction", type=float, default=0.5)
    p.add_argument("--max-blobs", type=int, default=2)
    p.add_argument("--image-size", type=int, default=227)

    p = add("train-image-clf", cmd_train_image, "Train the crack / no-crack image classifier.")
    _train_flags(p)
    p = add("train-segment-clf", cmd_train_segment, "Train the region classifier.")
    _train_flags(p)

    p = add("classify", cmd_classify, "Apply a saved classifier to images or a feature CSV.")
    p.add_argument("--model", required=True)
    p.add_argument("--input", nargs="+")
    p.add_argument("--features")
    _imaging_flags(p)

    p = add("qmeans", cmd_qmeans, "Cluster one image and write the crack-candidate mask.")
    p.add_argument("--input", required=True)
    p.add_argument("--raw", action="store_true", help="cluster the image as is, no resize or blur")
    _segment_flags(p)

    p = add("segment", cmd_segment, "Segment one image without the image gate.")
    p.add_argument("--input", required=True)
    p.add_argument("--segment-model")
    p.add_argument("--mask", help="ground-truth mask for IoU")
    _segment_flags(p)

    p = add("pipeline-run", cmd_pipeline_run, "Run the full pipeline on one image.")
    p.add_argument("--input", required=True)
    p.add_argument("--image-model", required=True)
    p.add_argument("--segment-model", required=True)
    p.add_argument("--mask", help="ground-truth mask for IoU")
    _segment_flags(p)

    p = add("evaluate", cmd_evaluate, "Score the pipeline on a corpus with masks.")
    p.add_argument("--corpus", required=True)
    p.add_argument("--image-model")
    p.add_argument("--segment-model")
    _segment_flags(p)

    p = add("bench-distance", cmd_bench_distance, "Distance error against shots for one protocol.")
    p.add_argument("--protocol", choices=PROTOCOLS, default="overlap")
    p.add_argument("--c", type=_float_list, default=[0, 50, 100, 150, 200, 250],
                   help="comma-separated centroid intensities")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--estimator", choices=("calibrated", "raw"), default="calibrated")
    return parser


def _apply_config(parser: argparse.ArgumentParser, path, command: str):
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FileNotFoundError(f"config file {path} not found")
    values = dict(cp.defaults())
    if cp.has_section(command):
        values.update({k: v for k, v in cp.items(command)})
    actions = {a.dest: a for a in parser._actions}
    for key, raw in values.items():
        dest = key.replace("-", "_")
        if dest == "shots" and "shots_grid" in actions:
            dest = "shots_grid"
        act = actions.get(dest)
        if act is None or dest in ("config", "help"):
            raise UsageError(f"{path}: unknown key {key!r} for {command}")
        if act.nargs == 0:
            value = raw.strip().lower() in ("1", "true", "yes", "on")
        elif act.nargs == "+":
            value = raw.split()
        else:
            try:
                value = act.type(raw) if act.type else raw
            except (argparse.ArgumentTypeError, ValueError) as e:
                raise UsageError(f"{path}: bad value for {key}: {e}") from None
            if act.choices is not None and value not in act.choices:
                raise UsageError(f"{path}: {key} must be one of {list(act.choices)}")
        act.default = value
        act.required = False


def _manifest(a, argv, outputs, code, error=None) -> dict:
    import scipy

    flags = {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(vars(a).items()) if k != "func"}
    return {
        "command": a.command,
        "argv": list(argv),
        "flags": flags,
        "seed": a.seed,
        "shots": getattr(a, "shots", None),
        "exit_code": code,
        "error": error,
        "outputs": outputs,
        "versions": {"qcrack": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
    }


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        pre = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
        pre.add_argument("--config")
        known, _ = pre.parse_known_args(argv)
        command = next((t for t in argv if t in COMMANDS), None)
        if known.config and command:
            _apply_config(COMMANDS[command], known.config, command)
        a = parser.parse_args(argv)
        if a.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        shots = getattr(a, "shots_grid", None) or [a.shots]
        if min(shots) < 0 or a.jobs < 1:
            raise UsageError("--shots must be >= 0 and --jobs >= 1")
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(f"qcrack: {e}", file=sys.stderr)
        return EXIT_DATA

    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs, code, error = [], EXIT_OK, None
    try:
        with np.errstate(invalid="raise", divide="raise", over="raise"):
            outputs = a.func(a) or []
    except UsageError as e:
        code, error = EXIT_USAGE, str(e)
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as e:
        code, error = EXIT_NUMERIC, f"numerical failure: {e}"
    except (FileNotFoundError, ModelFileError, F.FeatureFormatError, ValueError, OSError) as e:
        code, error = EXIT_DATA, str(e)
    if error:
        print(f"qcrack {a.command}: {error}", file=sys.stderr)
    _write_json(out / "run_manifest.json", _manifest(a, argv, outputs, code, error))
    return code


if __name__ == "__main__":
    sys.exit(main())
