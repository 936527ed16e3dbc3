"""Independent reference computations used by the tests.

Nothing here imports the simulator: states are built from explicit 2x2
matrices and Kronecker products, qubit 0 being the leftmost factor.
"""
import numpy as np

I2 = np.eye(2)
H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
X = np.array([[0, 1], [1, 0]])
Z = np.diag([1.0, -1.0])
P0 = np.diag([1.0, 0.0])
P1 = np.diag([0.0, 1.0])


def ry(t):
    c, s = np.cos(t / 2), np.sin(t / 2)
    return np.array([[c, -s], [s, c]])


def rz(t):
    return np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)])


def kron_all(mats):
    out = np.array([[1.0 + 0j]])
    for m in mats:
        out = np.kron(out, m)
    return out


def on(n, q, m):
    mats = [I2] * n
    mats[q] = m
    return kron_all(mats)


def cnot(n, c, t):
    a = [I2] * n
    a[c] = P0
    b = [I2] * n
    b[c] = P1
    b[t] = X
    return kron_all(a) + kron_all(b)


def zero(n):
    v = np.zeros(2**n, dtype=complex)
    v[0] = 1
    return v


def ry_state(angles):
    """Product state of RY(angle)|0> per qubit."""
    return kron_all([ry(a)[:, :1] for a in angles]).reshape(-1)


def hrz_state(angles):
    return kron_all([(rz(a) @ H)[:, :1] for a in angles]).reshape(-1)


def z0(state):
    n = int(np.log2(state.size))
    return float(np.real(np.conj(state) @ on(n, 0, Z) @ state))


def kmeans_1d(pixels, init, max_iters=50, tol=0.5, quantize=True):
    """Plain loop k-means on scalars, written independently for comparison."""
    p = np.asarray(pixels, dtype=float)
    cent = np.asarray(init, dtype=float).copy()
    hist = []
    for _ in range(max_iters):
        used = np.clip(np.rint(cent), 0, 255) if quantize else cent
        assign = np.array([int(np.argmin([abs(x - c) for c in used])) for x in p])
        new = cent.copy()
        for j in range(len(cent)):
            if np.any(assign == j):
                new[j] = p[assign == j].mean()
        hist.append(assign)
        shift = np.max(np.abs(new - cent))
        cent = new
        if shift < tol:
            break
    return cent, hist
