"""NumPy implementations of the compiled kernels, used when the extension is unavailable."""
import numpy as np


def csr_matvec(indptr, indices, data, x):
    n = indptr.size - 1
    prod = data * x[indices]
    out = np.zeros(n, dtype=np.complex128)
    nonempty = indptr[1:] > indptr[:-1]
    if prod.size:
        out[nonempty] = np.add.reduceat(prod, indptr[:-1][nonempty])
    return out


def segment_sum(vals, starts):
    if starts.size == 0:
        return np.zeros(0, dtype=np.complex128)
    return np.add.reduceat(vals, starts)


def holder_max(pts, vals, alpha, min_dist, chunk=512):
    m = pts.shape[0]
    best = 0.0
    count = 0
    min2 = min_dist * min_dist
    for s in range(0, m, chunk):
        p = pts[s:s + chunk]
        d2 = np.sum((p[:, None, :] - pts[None, :, :]) ** 2, axis=2)
        rows = np.arange(s, s + p.shape[0])[:, None]
        ok = (np.arange(m)[None, :] > rows) & (d2 >= min2)
        if not ok.any():
            continue
        count += int(ok.sum())
        du = np.abs(vals[s:s + chunk, None] - vals[None, :])
        q = du[ok] / d2[ok] ** (0.5 * alpha)
        best = max(best, float(q.max()))
    return best, count
