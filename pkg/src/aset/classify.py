"""Apply a trained model to full images."""

from __future__ import annotations

import numpy as np

from .errors import UnknownBandError
from .filters import materialize
from .filters.descriptor import FeatureDescriptor
from .glasso import ModelState, predict
from .tensor import BandMeta, ImageCube, apply_normalization


def resolve_bank(cube: ImageCube, bank: dict[int, FeatureDescriptor]) -> ImageCube:
    """Add the model's derived bands to ``cube``, parents before children.

    Each derived band is computed once even when shared by several features.
    """
    pending = {bid: desc for bid, desc in bank.items() if bid not in cube}
    while pending:
        ready = [bid for bid, desc in sorted(pending.items())
                 if all(i in cube for i in desc.inputs)]
        if not ready:
            missing = sorted({i for d in pending.values() for i in d.inputs
                              if i not in cube and i not in pending})
            raise UnknownBandError(f"model references bands absent from the cube: {missing}")
        for bid in ready:
            desc = pending.pop(bid)
            cube = cube.with_band(materialize(cube, desc), BandMeta(bid, "derived", desc.depth))
    return cube


def feature_stack(cube: ImageCube, state: ModelState, cache: dict | None = None) -> np.ndarray:
    """(H*W) x d matrix of normalized features, pixels in row-major order."""
    if state.means is None or state.norms is None:
        raise ValueError("model lacks normalization statistics")
    cube = resolve_bank(cube, state.bank)
    cache = {} if cache is None else cache
    cols = []
    for j, desc in enumerate(state.descriptors):
        if desc not in cache:
            cache[desc] = materialize(cube, desc)
        cols.append(apply_normalization(cache[desc].ravel(), state.means[j], state.norms[j]))
    n = cube.height * cube.width
    return np.column_stack(cols) if cols else np.zeros((n, 0))


def classify_image(cube: ImageCube, state: ModelState) -> tuple[np.ndarray, np.ndarray]:
    """Label map (H x W, ids 1..C) and probability stack (H x W x C)."""
    X = feature_stack(cube, state)
    labels, proba = predict(state, X)
    h, w = cube.shape
    return labels.reshape(h, w), proba.reshape(h, w, -1)
