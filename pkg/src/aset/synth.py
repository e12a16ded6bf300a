"""Synthetic labeled scenes whose hardest classes need spatial filters.

Each scene is a Voronoi partition of the grid into regions, each region
assigned a class. Classes have smooth random mean spectra plus i.i.d. noise.
The two classes of a confuser pair share their mean spectrum and differ only
in the size of the bright square objects sprinkled over them (same amplitude,
same covered fraction), so single pixels carry no information about which of
the two classes they belong to.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import InfeasibleConfigError
from .tensor import BandMeta, ImageCube, LabeledSamples


@dataclass(frozen=True)
class SceneSpec:
    height: int = 96
    width: int = 96
    n_classes: int = 5
    n_bands: int = 16
    region_scale: int = 400
    within_class_noise: float = 0.1
    confuser_pairs: tuple[tuple[int, int], ...] = ((4, 5),)
    #: Side length of the square objects of the first / second class of a pair.
    object_sizes: tuple[int, int] = (2, 5)
    object_coverage: float = 0.2
    object_amplitude: float = 0.6
    spectral_contrast: float = 0.15
    auxiliary_height: bool = False
    seed: int = 0

    def validate(self) -> None:
        if self.n_classes < 2 or self.n_bands < 4:
            raise InfeasibleConfigError("a scene needs at least 2 classes and 4 bands")
        if self.height < 8 or self.width < 8 or self.region_scale < 16:
            raise InfeasibleConfigError("scene too small")
        n_regions = self.height * self.width // self.region_scale
        if n_regions < self.n_classes:
            raise InfeasibleConfigError(
                f"{n_regions} regions cannot host {self.n_classes} classes; lower region_scale")
        used = [c for pair in self.confuser_pairs for c in pair]
        if any(c < 1 or c > self.n_classes for c in used) or len(set(used)) != len(used):
            raise InfeasibleConfigError("confuser pairs must be disjoint valid class ids")
        if any(s < 1 for s in self.object_sizes) or not 0 < self.object_coverage < 0.5:
            raise InfeasibleConfigError("invalid object sizes or coverage")


def composed_scene_spec(**overrides) -> SceneSpec:
    """Scene whose confuser pair is told apart by smoothing an opening.

    Single-pixel dots against 3x3 squares: an opening with a 3x3 element
    keeps only the squares, and a window average of that opening separates
    the pair, while any single filter leaves most pixels ambiguous.
    """
    params = dict(object_sizes=(1, 3), object_coverage=0.15)
    params.update(overrides)
    return SceneSpec(**params)


def _smooth_spectrum(rng: np.random.Generator, n_bands: int, contrast: float) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n_bands)
    curve = np.full(n_bands, rng.uniform(0.4, 0.6))
    for _ in range(3):
        center, width = rng.uniform(0, 1), rng.uniform(0.1, 0.35)
        curve += rng.uniform(-1, 1) * contrast * np.exp(-0.5 * ((t - center) / width) ** 2)
    return curve


def _regions(rng: np.random.Generator, spec: SceneSpec) -> tuple[np.ndarray, int]:
    n_regions = spec.height * spec.width // spec.region_scale
    seeds = np.column_stack([rng.uniform(0, spec.height, n_regions),
                             rng.uniform(0, spec.width, n_regions)])
    rr, cc = np.mgrid[0:spec.height, 0:spec.width]
    d2 = (rr[..., None] - seeds[:, 0]) ** 2 + (cc[..., None] - seeds[:, 1]) ** 2
    return np.argmin(d2, axis=-1), n_regions


def _assign_classes(rng: np.random.Generator, region_map: np.ndarray, n_regions: int,
                    n_classes: int) -> np.ndarray:
    """Greedy area balancing: largest regions first, each to the smallest class."""
    areas = np.bincount(region_map.ravel(), minlength=n_regions)
    order = np.lexsort((rng.random(n_regions), -areas))
    totals = np.zeros(n_classes)
    region_class = np.zeros(n_regions, dtype=np.int64)
    for k, r in enumerate(order):
        c = k if k < n_classes else int(np.argmin(totals))
        region_class[r] = c + 1
        totals[c] += areas[r]
    return region_class[region_map]


def _place_objects(rng: np.random.Generator, mask: np.ndarray, size: int,
                   coverage: float) -> np.ndarray:
    """Non-touching ``size x size`` squares inside ``mask`` covering ``coverage`` of it."""
    target = int(round(coverage * mask.sum()))
    placed = np.zeros_like(mask)
    blocked = ~mask
    h, w = mask.shape
    covered, attempts = 0, 0
    free = np.argwhere(mask)
    while covered < target and attempts < 50 * max(target, 1):
        attempts += 1
        r, c = free[rng.integers(len(free))]
        r, c = min(r, h - size), min(c, w - size)
        if blocked[r:r + size, c:c + size].any():
            continue
        placed[r:r + size, c:c + size] = True
        covered += size * size
        # keep a one-pixel gap so objects stay separate components under 8-connectivity
        blocked[max(r - 1, 0):r + size + 1, max(c - 1, 0):c + size + 1] = True
    return placed


def _layout(spec: SceneSpec):
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    region_map, n_regions = _regions(rng, spec)
    class_map = _assign_classes(rng, region_map, n_regions, spec.n_classes)
    spectra = [_smooth_spectrum(rng, spec.n_bands, spec.spectral_contrast)
               for _ in range(spec.n_classes)]
    for a, b in spec.confuser_pairs:
        spectra[b - 1] = spectra[a - 1].copy()
    return rng, region_map, n_regions, class_map, np.array(spectra)


def design_spectra(spec: SceneSpec = SceneSpec()) -> np.ndarray:
    """C x B background spectra before objects and noise; confuser rows are equal."""
    return _layout(spec)[4]


def generate(spec: SceneSpec = SceneSpec()) -> tuple[ImageCube, LabeledSamples]:
    """Build the cube and a label for every pixel.

    Both classes of a confuser pair share a background spectrum and receive
    objects of the same amplitude and coverage, so their mean spectra agree;
    only the object size differs.
    """
    rng, region_map, n_regions, class_map, spectra = _layout(spec)
    cube = spectra[class_map - 1]
    profile = rng.uniform(0.6, 1.0, spec.n_bands)
    for a, b in spec.confuser_pairs:
        for cls, size in zip((a, b), spec.object_sizes):
            objects = _place_objects(rng, class_map == cls, size, spec.object_coverage)
            cube[objects] += spec.object_amplitude * profile
    cube = cube + rng.normal(0.0, spec.within_class_noise, cube.shape)

    bands = [cube[:, :, k] for k in range(spec.n_bands)]
    meta = [BandMeta(k, "spectral") for k in range(spec.n_bands)]
    if spec.auxiliary_height:
        heights = rng.uniform(0.0, 20.0, n_regions)
        bands.append(heights[region_map])
        meta.append(BandMeta(spec.n_bands, "auxiliary"))

    rr, cc = np.mgrid[0:spec.height, 0:spec.width]
    samples = LabeledSamples(rr.ravel(), cc.ravel(), class_map.ravel(), spec.n_classes)
    return ImageCube(bands, meta), samples


def class_spectra(cube: ImageCube, samples: LabeledSamples) -> np.ndarray:
    """Empirical per-class mean spectrum over the original bands."""
    X = cube.to_array(cube.original_ids())[samples.rows, samples.cols]
    return np.array([X[samples.labels == c].mean(axis=0)
                     for c in range(1, samples.n_classes + 1)])


def window_stddev_by_class(cube: ImageCube, samples: LabeledSamples, band_id: int,
                           window: int) -> np.ndarray:
    """Mean local standard deviation of one band, per class."""
    x = cube.band(band_id)
    m = ndimage.uniform_filter(x, window, mode="nearest")
    m2 = ndimage.uniform_filter(x * x, window, mode="nearest")
    sd = np.sqrt(np.maximum(m2 - m * m, 0.0))[samples.rows, samples.cols]
    return np.array([sd[samples.labels == c].mean() for c in range(1, samples.n_classes + 1)])
