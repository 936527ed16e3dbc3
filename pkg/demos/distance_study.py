"""How shot noise affects quantum pixel distances.

Each pixel p is encoded as RY(p pi / 255) and compared with a centroid c by
one of the three similarity circuits.  The mean absolute error against
((p - c) / 255)^2 should fall roughly as 1 / sqrt(shots).
"""
import numpy as np

from qcrack.protocols import PROTOCOLS, classical_scale_distance, distance_error_study, similarity

# one pixel against one centroid, exact vs sampled
for protocol in PROTOCOLS:
    exact = similarity(protocol, [100.0], [200.0])
    noisy = similarity(protocol, [100.0], [200.0], shots=1000, seed=1)
    print(f"{protocol:9s} exact d={classical_scale_distance(exact):.5f}  "
          f"1000 shots d={classical_scale_distance(noisy):.5f}  target={(100 / 255) ** 2:.5f}")

shots = [10, 100, 1000, 10000]
print("\nmean |error| over p in 0..255, c in {0, 50, ..., 250}, 20 seeds")
for protocol in PROTOCOLS:
    rows = distance_error_study(protocol, shots, c_values=range(0, 251, 50), seeds=range(20))
    err = [np.mean([r["mean_abs_err"] for r in rows if r["shots"] == s]) for s in shots]
    print(f"{protocol:9s}", "  ".join(f"{s:>5d}:{e:.4f}" for s, e in zip(shots, err)),
          f"  ratio 100/10000 = {err[1] / err[3]:.1f}")
