"""Pure numpy/Python implementations of the hot kernels.

Reference semantics for the compiled versions in ``_ckernels.pyx``; both are
exercised by the same tests.
"""

import numpy as np


def interference_tensor(gain, cell, band, power, K, B):
    """T[k_rx, k_tx, b] = sum of P_j * gain[j, k_rx] over devices j of cell k_tx on band b."""
    gain = np.asarray(gain, dtype=float)
    T = np.zeros((K, K, B))
    on = np.flatnonzero((np.asarray(band) >= 0) & (np.asarray(power) > 0))
    if on.size:
        contrib = gain[on, :] * np.asarray(power, dtype=float)[on, None]  # (m, K_rx)
        for idx, j in enumerate(on):
            T[:, cell[j], band[j]] += contrib[idx]
    return T


def deferred_acceptance(order, n_ok, band_rank, band_ok):
    """Device-proposing deferred acceptance on pre-ranked lists.

    order[j] lists band ids best-first, of which the first ``n_ok[j]`` are
    acceptable. band_rank[b, j] is j's position in b's list (lower is better);
    band_ok[b, j] marks acceptable proposers. Returns (match, proposals).
    """
    n, B = order.shape[0], band_rank.shape[0]
    match = np.full(n, -1, dtype=np.int64)
    holder = np.full(B, -1, dtype=np.int64)
    nxt = np.zeros(n, dtype=np.int64)
    free = list(range(n - 1, -1, -1))
    proposals = 0
    while free:
        j = free.pop()
        while nxt[j] < n_ok[j]:
            b = order[j, nxt[j]]
            nxt[j] += 1
            proposals += 1
            if not band_ok[b, j]:
                continue
            h = holder[b]
            if h < 0:
                holder[b] = j
                match[j] = b
                break
            if band_rank[b, j] < band_rank[b, h]:
                holder[b] = j
                match[j] = b
                match[h] = -1
                free.append(h)
                break
    return match, proposals


def blocking_pairs(dev_rank, dev_ok, band_rank, band_ok, match):
    """All (j, b) pairs that strictly prefer each other to their current state."""
    n, B = dev_rank.shape
    holder = np.full(B, -1, dtype=np.int64)
    for j in range(n):
        if match[j] >= 0:
            holder[match[j]] = j
    out = []
    for j in range(n):
        m = match[j]
        for b in range(B):
            if b == m or not dev_ok[j, b] or not band_ok[b, j]:
                continue
            if m >= 0 and dev_rank[j, b] > dev_rank[j, m]:
                continue
            h = holder[b]
            if h >= 0 and band_rank[b, j] > band_rank[b, h]:
                continue
            out.append((j, b))
    return out


def project_simplex_rows(V, total):
    """Euclidean projection of every row of V onto {x >= 0, sum x = total}."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    n = V.shape[1]
    U = -np.sort(-V, axis=1)
    css = np.cumsum(U, axis=1) - np.asarray(total, dtype=float).reshape(-1, 1)
    idx = np.arange(1, n + 1)
    cond = U - css / idx > 0
    rho = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(V.shape[0]), rho] / (rho + 1)
    return np.maximum(V - theta[:, None], 0.0)
