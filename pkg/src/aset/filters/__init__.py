"""Filter bank: every filter family plus candidate sampling and materialization."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from ..errors import UnknownBandError
from ..tensor import ImageCube
from .attribute import attribute_filter, attribute_opening
from .combination import band_combination
from .descriptor import (
    ALL_KINDS, ATTRIBUTE_KINDS, BAND_KIND, COMBINATION_KINDS, FILTER_KINDS, MORPH_KINDS,
    SE_SHAPES, TEXTURE_KINDS, FeatureDescriptor, StructuringElement, child_depth, from_text,
    to_text,
)
from .morphology import (
    close_rec, closing, dilate, erode, morph_filter, open_rec, opening, reconstruct, tophat,
)
from .sampler import SamplerConfig, sample_minibatch
from .texture import ENTROPY_BINS, texture_filter

__all__ = [
    "ALL_KINDS", "FILTER_KINDS", "FeatureDescriptor", "SamplerConfig", "StructuringElement",
    "attribute_filter", "attribute_opening", "band_combination", "child_depth", "close_rec",
    "closing", "dilate", "erode", "from_text", "materialize", "materialize_many",
    "morph_filter", "open_rec", "opening", "reconstruct", "sample_minibatch", "texture_filter",
    "to_text", "tophat", "thread_count",
]


def materialize(cube: ImageCube, desc: FeatureDescriptor,
                entropy_bins: int = ENTROPY_BINS) -> np.ndarray:
    """Compute the full-image band described by ``desc``."""
    for band_id in desc.inputs:
        if band_id not in cube:
            raise UnknownBandError(f"{to_text(desc)} needs band {band_id}, absent from the cube")
    a = cube.band(desc.input_a)
    kind = desc.kind
    if kind == BAND_KIND:
        return np.array(a, dtype=np.float64)
    if kind in ("opening", "closing"):
        return morph_filter(a, kind, desc.se)
    if kind == "open_rec":
        return open_rec(a, desc.se)
    if kind == "close_rec":
        return close_rec(a, desc.se)
    if kind in MORPH_KINDS:
        return tophat(a, kind, desc.se)
    if kind in TEXTURE_KINDS:
        return texture_filter(a, kind, desc.window, entropy_bins)
    if kind in ATTRIBUTE_KINDS:
        return attribute_filter(a, kind, desc.threshold)
    if kind in COMBINATION_KINDS:
        return band_combination(a, cube.band(desc.input_b), kind)
    raise ValueError(f"unknown kind {kind!r}")


def thread_count() -> int:
    """Worker cap from ``ASET_THREADS`` (default: CPU count, at most 8)."""
    env = os.environ.get("ASET_THREADS")
    if env:
        return max(1, int(env))
    return max(1, min(8, os.cpu_count() or 1))


def materialize_many(cube: ImageCube, descs: Sequence[FeatureDescriptor],
                     entropy_bins: int = ENTROPY_BINS) -> list[np.ndarray]:
    """Materialize descriptors in parallel; output order follows ``descs``."""
    workers = thread_count()
    if workers == 1 or len(descs) < 2:
        return [materialize(cube, d, entropy_bins) for d in descs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda d: materialize(cube, d, entropy_bins), descs))
