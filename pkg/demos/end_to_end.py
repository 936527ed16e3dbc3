"""Full pipeline: gate classifier, q-means, region classifier, shape filter.

Both classifiers are trained on one synthetic corpus and evaluated on
another.  The second run switches the aspect-ratio filter off to show what it
removes.
"""
from qcrack.clustering import ClusterConfig
from qcrack.optim import OptimizerConfig
from qcrack.pipeline import (CorpusSpec, PipelineConfig, evaluate_corpus, fit_classifier, image_dataset,
                             region_dataset, synthetic_corpus)

cfg = PipelineConfig(cluster=ClusterConfig(shots=0))
train_items = synthetic_corpus(CorpusSpec(n=80, seed=100))
opt = OptimizerConfig(max_iters=300)
gate, _ = fit_classifier(image_dataset(train_items, cfg), "basic", shots=0, opt=opt)
cracked = [it for it in train_items if it[2].any()]
seg, _ = fit_classifier(region_dataset(cracked, cfg), "basic", shots=0, opt=opt)

test_items = synthetic_corpus(CorpusSpec(n=50, seed=7))
for label, c in [("with filter", cfg), ("no filter", PipelineConfig(cluster=cfg.cluster, ratio_threshold=0))]:
    rep = evaluate_corpus(test_items, gate, seg, c)
    print(f"{label:12s} mean IoU {rep['mean_iou']:.3f}  gate recall {rep['gate_recall']:.2f}  "
          f"false-positive regions {rep['fp_regions']}  demoted {rep['demoted']}")
