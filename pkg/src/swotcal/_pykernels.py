"""Pure numpy versions of the compiled kernels in ``_ckernels.pyx``.

Same signatures, same summation order; used when the extension is not built
or when ``SWOTCAL_PURE_PYTHON=1``.
"""
import numpy as np


def reflect_index(idx, n):
    """Map arbitrary integer indices into [0, n) by half-sample symmetric extension."""
    period = 2 * n
    idx = np.mod(idx, period)
    return np.where(idx >= n, period - 1 - idx, idx)


def blur_columns(x, kernel):
    x = np.asarray(x, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    n = x.shape[0]
    r = (kernel.shape[0] - 1) // 2
    padded = x[reflect_index(np.arange(-r, n + r), n)]
    out = np.zeros_like(x)
    for k, w in enumerate(kernel):
        out += w * padded[k:k + n]
    return out


def pad_replicate_cm(x, ph, pw):
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)), mode="edge")
    C = x.shape[1]
    return np.ascontiguousarray(xp.transpose(1, 0, 2, 3)).reshape(C, -1)


def fold_replicate_cm(g, N, H, W, ph, pw):
    C = g.shape[0]
    gp = g.reshape(C, N, H + 2 * ph, W + 2 * pw).transpose(1, 0, 2, 3)
    # collapse padded rows onto the edge rows, then padded columns onto edge columns
    rows = gp[:, :, ph:ph + H, :].copy()
    if ph:
        rows[:, :, 0, :] += gp[:, :, :ph, :].sum(axis=2)
        rows[:, :, -1, :] += gp[:, :, ph + H:, :].sum(axis=2)
    out = rows[:, :, :, pw:pw + W].copy()
    if pw:
        out[:, :, :, 0] += rows[:, :, :, :pw].sum(axis=3)
        out[:, :, :, -1] += rows[:, :, :, pw + W:].sum(axis=3)
    return out
