"""Numpy implementation of the windowed kernel sums (used when the extension is unavailable)."""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

CHUNK = 256


def _quartic(u: NDArray[np.float64]) -> NDArray[np.float64]:
    w = np.clip(1.0 - u * u, 0.0, None)
    return 0.9375 * w * w


def kernel_sums(
    tkey: NDArray[np.float64],
    tx: NDArray[np.float64],
    tz: NDArray[np.float64],
    qkey: NDArray[np.float64],
    qx: NDArray[np.float64],
    qz: NDArray[np.float64],
    h: float,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Same contract as the compiled ``kernel_sums``; queries are processed in key-sorted chunks."""
    nq = qkey.shape[0]
    num = np.zeros(nq)
    den = np.zeros(nq)
    order = np.argsort(qkey, kind="stable")
    for start in range(0, nq, CHUNK):
        idx = order[start : start + CHUNK]
        lo = np.searchsorted(tkey, qkey[idx[0]] - h, side="left")
        hi = np.searchsorted(tkey, qkey[idx[-1]] + h, side="left")
        if hi <= lo:
            continue
        kz = np.ones((idx.shape[0], hi - lo))
        for col in range(tz.shape[1]):
            kz *= _quartic((tz[None, lo:hi, col] - qz[idx, col, None]) / h)
        # window on the key column is strict on both sides
        inside = (tkey[None, lo:hi] > qkey[idx, None] - h) & (tkey[None, lo:hi] < qkey[idx, None] + h)
        kz *= inside
        den[idx] = kz.sum(axis=1)
        num[idx] = (kz * _quartic((tx[None, lo:hi] - qx[idx, None]) / h)).sum(axis=1)
    return num, den
