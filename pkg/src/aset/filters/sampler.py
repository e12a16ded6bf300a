"""Random generation of candidate filter descriptors."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..errors import InfeasibleConfigError
from ..tensor import ImageCube
from .descriptor import (
    ATTRIBUTE_KINDS, COMBINATION_KINDS, FILTER_KINDS, MORPH_KINDS, SE_SHAPES, TEXTURE_KINDS,
    FeatureDescriptor, StructuringElement, child_depth,
)
from .texture import ENTROPY_BINS


@dataclass(frozen=True)
class SamplerConfig:
    """Ranges the minibatch sampler draws from.

    ``size_range`` serves both structuring-element sizes and texture windows.
    ``threshold_range`` is an inclusive integer interval in pixels.
    """

    bands_per_minibatch: int = 20
    filters_per_band: int = 3
    size_range: tuple[int, ...] = (3, 5, 7, 9, 11, 13, 15)
    threshold_range: tuple[int, int] = (2, 100)
    allowed_kinds: tuple[str, ...] = FILTER_KINDS
    se_shapes: tuple[str, ...] = SE_SHAPES
    include_auxiliary_always: bool = True
    allow_derived_inputs: bool = True
    entropy_bins: int = ENTROPY_BINS
    max_retries: int = 200

    def __post_init__(self):
        if self.bands_per_minibatch < 1 or self.filters_per_band < 1:
            raise InfeasibleConfigError("minibatch sizes must be positive")
        if not self.size_range or any(s < 3 or s % 2 == 0 for s in self.size_range):
            raise InfeasibleConfigError("sizes must be odd integers >= 3")
        lo, hi = self.threshold_range
        if not 1 <= lo <= hi:
            raise InfeasibleConfigError("threshold range must satisfy 1 <= lo <= hi")
        if not self.allowed_kinds or any(k not in FILTER_KINDS for k in self.allowed_kinds):
            raise InfeasibleConfigError(f"allowed kinds must be a non-empty subset of {FILTER_KINDS}")
        if not self.se_shapes or any(s not in SE_SHAPES for s in self.se_shapes):
            raise InfeasibleConfigError("unknown structuring element shape")

    def clipped(self, n_bands: int) -> "SamplerConfig":
        """Same config with ``bands_per_minibatch`` capped at ``n_bands``."""
        return replace(self, bands_per_minibatch=min(self.bands_per_minibatch, n_bands))


def input_pool(cube: ImageCube, config: SamplerConfig) -> list[int]:
    return cube.band_ids if config.allow_derived_inputs else cube.original_ids()


def draw_bands(rng: np.random.Generator, cube: ImageCube, config: SamplerConfig) -> list[int]:
    pool = input_pool(cube, config)
    forced = cube.auxiliary_ids() if config.include_auxiliary_always else []
    rest = [b for b in pool if b not in forced]
    n_draw = config.bands_per_minibatch - len(forced)
    if len(pool) < config.bands_per_minibatch or n_draw < 0:
        raise InfeasibleConfigError(
            f"{config.bands_per_minibatch} bands per minibatch but only {len(pool)} available")
    picked = rng.choice(len(rest), size=n_draw, replace=False) if n_draw else []
    return forced + [rest[i] for i in picked]


def _draw_descriptor(rng, cube: ImageCube, config: SamplerConfig, band: int,
                     partners: list[int]) -> FeatureDescriptor | None:
    kind = config.allowed_kinds[rng.integers(len(config.allowed_kinds))]
    depth_a = cube.depth(band)
    if kind in MORPH_KINDS:
        shape = config.se_shapes[rng.integers(len(config.se_shapes))]
        size = int(config.size_range[rng.integers(len(config.size_range))])
        angle = float(rng.uniform(-math.pi / 2, math.pi / 2)) if shape == "line" else 0.0
        return FeatureDescriptor(kind, band, se=StructuringElement(shape, size, angle),
                                 depth=child_depth(depth_a))
    if kind in TEXTURE_KINDS:
        window = int(config.size_range[rng.integers(len(config.size_range))])
        return FeatureDescriptor(kind, band, window=window, depth=child_depth(depth_a))
    if kind in ATTRIBUTE_KINDS:
        lo, hi = config.threshold_range
        threshold = int(rng.integers(lo, hi + 1))
        return FeatureDescriptor(kind, band, threshold=threshold, depth=child_depth(depth_a))
    others = [b for b in partners if b != band]
    if not others:
        return None
    other = others[rng.integers(len(others))]
    return FeatureDescriptor(kind, band, input_b=other,
                             depth=child_depth(depth_a, cube.depth(other)))


def sample_minibatch(rng: np.random.Generator, cube: ImageCube, config: SamplerConfig,
                     exclude=frozenset()) -> list[FeatureDescriptor]:
    """Draw a minibatch of unique candidate descriptors not in ``exclude``.

    Band combinations pair a drawn band with another band of the same
    minibatch. Slots that cannot be filled after ``max_retries`` attempts are
    dropped; an empty minibatch raises :class:`InfeasibleConfigError`.
    """
    bands = draw_bands(rng, cube, config)
    exclude = set(exclude)
    out: list[FeatureDescriptor] = []
    seen: set[FeatureDescriptor] = set()
    for band in bands:
        for _ in range(config.filters_per_band):
            for _attempt in range(config.max_retries):
                desc = _draw_descriptor(rng, cube, config, band, bands)
                if desc is not None and desc not in exclude and desc not in seen:
                    out.append(desc)
                    seen.add(desc)
                    break
    if not out:
        raise InfeasibleConfigError("sampler could not produce any new descriptor")
    return out
