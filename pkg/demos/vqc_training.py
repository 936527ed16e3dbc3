"""Train the three ansatz families on a separable toy problem.

The data are 4-D Gaussian clusters with 25% positives, reduced by PCA and
scaled to [0, pi] before encoding.  The printout compares test accuracy and
the iteration at which each loss curve levels off.
"""
from qcrack import features as F
from qcrack.optim import OptimizerConfig
from qcrack.protocols import ANGLE_RY, PHASE_HRZ
from qcrack.vqc import Ansatz, VqcModel, accuracy, train

pool = F.generate_synthetic_features(F.SyntheticSpec(n=2000, positive_fraction=0.5), seed=7)
data = F.subsample_imbalanced(pool, 792, 0.25, seed=7)
tr, va, te = F.split_counts(data, 167, 125, seed=7)
pca = F.pca_fit(tr.X, 4)
scaler = F.scale_fit(F.pca_transform(pca, tr.X))
Xtr, Xva, Xte = (F.scale_apply(scaler, F.pca_transform(pca, d.X)) for d in (tr, va, te))
print(f"train {len(tr)}  val {len(va)}  test {len(te)}  positives {tr.positive_fraction:.2f}")

for kind, enc in [("strongly", PHASE_HRZ), ("basic", PHASE_HRZ), ("fixed", ANGLE_RY)]:
    model = VqcModel(Ansatz(kind, 4, 3), enc, shots=0, seed=7)
    model, rep = train(model, Xtr, tr.y, Xva, va.y, OptimizerConfig(max_iters=500, seed=7))
    print(f"{kind:9s} params {model.ansatz.n_params:2d}  test acc {accuracy(model, Xte, te.y):.3f}  "
          f"converged at {rep.converged_at:3d}  best loss {rep.best_loss[-1]:.3f}  {rep.wall_time:.1f} s")
