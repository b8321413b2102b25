"""Numpy implementation of the batch kernels.

Used when the compiled ``_kernels`` extension is unavailable; the API and
results match it up to floating-point summation order.
"""

import numpy as np


def _offsets(sizes, width):
    offsets = np.concatenate(([0], np.cumsum(sizes)))
    if offsets[-1] != width:
        raise ValueError("sizes do not add up to the row length")
    return offsets


def pairwise_loss_sums(data, sizes, loss):
    data = np.asarray(data, dtype=np.float64)
    sizes = np.asarray(sizes, dtype=np.int64)
    if data.ndim != 2:
        raise ValueError("data must be 2-D")
    k = sizes.size
    offsets = _offsets(sizes, data.shape[1])
    blocks = [data[:, offsets[j]:offsets[j + 1]] for j in range(k)]
    means = [b.mean(axis=1) for b in blocks]
    out = np.zeros((data.shape[0], k, k))
    for j in range(k):
        for l in range(k):
            if l == j:
                continue
            r = blocks[j] - means[l][:, None]
            out[:, j, l] = (r * r if loss == 0 else np.abs(r)).sum(axis=1)
    return out


def oos_rows(data, sizes, loss):
    sizes = np.asarray(sizes, dtype=np.int64)
    S = pairwise_loss_sums(data, sizes, loss)
    n = float(sizes.sum())
    k = sizes.size
    total = np.zeros(S.shape[0])
    for j in range(k):
        inner = np.zeros(S.shape[0])
        for l in range(k):
            if l != j:
                inner += sizes[l] * S[:, j, l]
        total += inner / (n - sizes[j])
    return total / n
