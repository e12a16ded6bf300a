"""Pointwise band combinations."""

import numpy as np

#: Denominators below this magnitude produce 0 instead of a division.
GUARD = 1e-12


def _guarded_divide(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros(np.broadcast(num, den).shape)
    ok = np.abs(den) >= GUARD
    np.divide(num, den, out=out, where=ok)
    return out


def band_combination(a: np.ndarray, b: np.ndarray, kind: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("band combination needs equally shaped bands")
    if kind == "ratio":
        return _guarded_divide(a, b)
    if kind == "norm_ratio":
        return _guarded_divide(a - b, a + b)
    if kind == "sum":
        return a + b
    if kind == "product":
        return a * b
    raise ValueError(f"not a band combination: {kind!r}")
