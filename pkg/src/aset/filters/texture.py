"""Sliding-window texture statistics with replicate padding."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

ENTROPY_BINS = 32


def _windows(band: np.ndarray, window: int) -> np.ndarray:
    r = window // 2
    padded = np.pad(np.asarray(band, dtype=np.float64), r, mode="edge")
    return sliding_window_view(padded, (window, window))


def _box_count(indicator: np.ndarray, window: int) -> np.ndarray:
    """Exact integer window sums through an integral image (replicate padding)."""
    r = window // 2
    padded = np.pad(indicator.astype(np.int64), r, mode="edge")
    ii = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1), dtype=np.int64)
    ii[1:, 1:] = padded.cumsum(0).cumsum(1)
    h, w = indicator.shape
    return (ii[window:window + h, window:window + w] - ii[:h, window:window + w]
            - ii[window:window + h, :w] + ii[:h, :w])


def local_entropy(band: np.ndarray, window: int, bins: int = ENTROPY_BINS) -> np.ndarray:
    """Shannon entropy (nats) of a ``bins``-bin histogram in each window.

    Bin edges span the global min..max of ``band``.
    """
    band = np.asarray(band, dtype=np.float64)
    lo, hi = band.min(), band.max()
    if hi <= lo:
        return np.zeros_like(band)
    idx = np.minimum(((band - lo) / (hi - lo) * bins).astype(np.int64), bins - 1)
    n = float(window * window)
    out = np.zeros_like(band)
    for k in np.unique(idx):
        count = _box_count(idx == k, window)
        p = count / n
        nz = count > 0
        out[nz] -= p[nz] * np.log(p[nz])
    return np.maximum(out, 0.0)


def texture_filter(band: np.ndarray, kind: str, window: int, bins: int = ENTROPY_BINS) -> np.ndarray:
    if window < 3 or window % 2 == 0:
        raise ValueError("texture window must be odd and >= 3")
    if kind == "entropy":
        return local_entropy(band, window, bins)
    win = _windows(band, window)
    lo = win.min(axis=(-2, -1))
    hi = win.max(axis=(-2, -1))
    if kind == "range":
        return hi - lo
    flat = hi == lo
    if kind == "avg":
        out = win.mean(axis=(-2, -1))
        out[flat] = lo[flat]
        return out
    if kind == "stddev":
        out = win.std(axis=(-2, -1))
        out[flat] = 0.0
        return out
    raise ValueError(f"not a texture kind: {kind!r}")
