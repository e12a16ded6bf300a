"""Raster and matrix containers, labeled-sample bookkeeping and column normalization.

Bands are kept in memory as float64 grids; the on-disk raw format stores
float32. Feature matrices and all solver arithmetic are float64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Iterable, Sequence

import numpy as np

from .errors import (
    DimensionError, DuplicateDescriptorError, FileFormatError, UnknownBandError, ZeroVarianceError,
)

ORIGINS = ("spectral", "auxiliary", "derived")

#: Columns whose centered norm falls below this are treated as constant.
DEGENERATE_NORM = 1e-12


@dataclass(frozen=True)
class BandMeta:
    id: int
    origin: str = "spectral"
    depth: int = 0

    def __post_init__(self):
        if self.origin not in ORIGINS:
            raise ValueError(f"unknown band origin {self.origin!r}")
        if self.depth < 0:
            raise ValueError("band depth must be non-negative")
        if self.origin != "derived" and self.depth != 0:
            raise ValueError("original bands have depth 0")


class ImageCube:
    """H x W raster stack addressed by stable integer band ids.

    The cube is immutable: :meth:`with_band` returns a new cube sharing the
    existing band arrays.
    """

    def __init__(self, bands: dict[int, np.ndarray] | Sequence[np.ndarray],
                 meta: Sequence[BandMeta] | None = None):
        if not isinstance(bands, dict):
            arrays = list(bands)
            if meta is None:
                meta = [BandMeta(i) for i in range(len(arrays))]
            if len(meta) != len(arrays):
                raise DimensionError("one BandMeta per band is required")
            bands = {m.id: a for m, a in zip(meta, arrays)}
        if meta is None:
            meta = [BandMeta(i) for i in bands]
        self._meta = {m.id: m for m in meta}
        if len(self._meta) != len(meta):
            raise ValueError("band ids must be unique")
        if set(self._meta) != set(bands):
            raise DimensionError("band ids and metadata ids disagree")
        self._bands: dict[int, np.ndarray] = {}
        shape = None
        for bid in self._meta:
            arr = np.array(bands[bid], dtype=np.float64)
            if arr.ndim != 2:
                raise DimensionError("bands must be 2-D grids")
            if shape is None:
                shape = arr.shape
            elif arr.shape != shape:
                raise DimensionError("all bands must share the same shape")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"band {bid} has non-finite values")
            arr.flags.writeable = False
            self._bands[bid] = arr
        if shape is None:
            raise DimensionError("a cube needs at least one band")
        self.height, self.width = shape

    @classmethod
    def from_array(cls, array: np.ndarray, origins: Sequence[str] | None = None) -> "ImageCube":
        """Build a cube from an (H, W, B) array; band ids are 0..B-1."""
        array = np.asarray(array)
        if array.ndim != 3:
            raise DimensionError("expected an H x W x B array")
        n = array.shape[2]
        origins = origins or ["spectral"] * n
        meta = [BandMeta(i, o) for i, o in enumerate(origins)]
        return cls([array[:, :, i] for i in range(n)], meta)

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    @property
    def band_ids(self) -> list[int]:
        return list(self._meta)

    @property
    def n_bands(self) -> int:
        return len(self._meta)

    def original_ids(self) -> list[int]:
        return [m.id for m in self._meta.values() if m.origin != "derived"]

    def auxiliary_ids(self) -> list[int]:
        return [m.id for m in self._meta.values() if m.origin == "auxiliary"]

    def __contains__(self, band_id: int) -> bool:
        return band_id in self._meta

    def band(self, band_id: int) -> np.ndarray:
        try:
            return self._bands[band_id]
        except KeyError:
            raise UnknownBandError(f"unknown band id {band_id}") from None

    def meta(self, band_id: int) -> BandMeta:
        try:
            return self._meta[band_id]
        except KeyError:
            raise UnknownBandError(f"unknown band id {band_id}") from None

    def depth(self, band_id: int) -> int:
        return self.meta(band_id).depth

    def next_id(self) -> int:
        return max(self._meta) + 1

    def with_band(self, values: np.ndarray, meta: BandMeta) -> "ImageCube":
        if meta.id in self._meta:
            raise ValueError(f"band id {meta.id} already present")
        bands = dict(self._bands)
        bands[meta.id] = values
        return ImageCube(bands, list(self._meta.values()) + [meta])

    def to_array(self, band_ids: Iterable[int] | None = None) -> np.ndarray:
        ids = self.band_ids if band_ids is None else list(band_ids)
        return np.stack([self.band(i) for i in ids], axis=-1)


@dataclass
class LabeledSamples:
    """Pixel positions with class ids in ``1..n_classes``."""

    rows: np.ndarray
    cols: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if not (len(self.rows) == len(self.cols) == len(self.labels)):
            raise DimensionError("rows, cols and labels must have equal length")
        if len(self.labels) and (self.labels.min() < 1 or self.labels.max() > self.n_classes):
            raise ValueError(f"labels must lie in 1..{self.n_classes}")

    @classmethod
    def from_pixels(cls, pixels: Sequence[tuple[int, int]], labels: Sequence[int],
                    n_classes: int | None = None) -> "LabeledSamples":
        pix = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
        labels = np.asarray(labels, dtype=np.int64)
        if n_classes is None:
            n_classes = int(labels.max()) if len(labels) else 0
        return cls(pix[:, 0], pix[:, 1], labels, n_classes)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def pixels(self) -> list[tuple[int, int]]:
        return list(zip(self.rows.tolist(), self.cols.tolist()))

    def subset(self, index) -> "LabeledSamples":
        return LabeledSamples(self.rows[index], self.cols[index], self.labels[index], self.n_classes)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes + 1)[1:]

    def missing_classes(self) -> list[int]:
        return [c + 1 for c, n in enumerate(self.class_counts()) if n == 0]

    def check_bounds(self, shape: tuple[int, int]) -> None:
        h, w = shape
        if len(self) and (self.rows.min() < 0 or self.cols.min() < 0
                          or self.rows.max() >= h or self.cols.max() >= w):
            raise IndexError("sample index out of bounds")


def extract_column(cube: ImageCube, band_id: int, samples: LabeledSamples) -> np.ndarray:
    """Values of one band at the labeled pixels, in sample order."""
    band = cube.band(band_id)
    samples.check_bounds(cube.shape)
    return band[samples.rows, samples.cols].astype(np.float64)


def normalize_column(raw: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Mean-center ``raw`` and scale it to unit Euclidean norm.

    Returns
    -------
    column, mean, norm
        ``column = (raw - mean) / norm``.

    Raises
    ------
    ZeroVarianceError
        If the centered column has norm below ``DEGENERATE_NORM``.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 1 or raw.size < 2:
        raise DimensionError("normalization needs a 1-D column with at least 2 entries")
    mean = float(raw.mean())
    centered = raw - mean
    norm = float(np.linalg.norm(centered))
    if not np.isfinite(norm) or norm < DEGENERATE_NORM:
        raise ZeroVarianceError("zero-variance feature")
    return centered / norm, mean, norm


def apply_normalization(values: np.ndarray, mean: float, norm: float) -> np.ndarray:
    """Apply frozen training statistics to new pixel values."""
    return (np.asarray(values, dtype=np.float64) - mean) / norm


@dataclass(frozen=True)
class FeatureMatrix:
    """l x d matrix of normalized features paired with their descriptors."""

    values: np.ndarray
    descriptors: tuple = ()
    means: np.ndarray = field(default_factory=lambda: np.zeros(0))
    norms: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def empty(cls, n_samples: int) -> "FeatureMatrix":
        return cls(np.zeros((n_samples, 0)), (), np.zeros(0), np.zeros(0))

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def index(self, desc: Hashable) -> int:
        return self.descriptors.index(desc)

    def __contains__(self, desc: Hashable) -> bool:
        return desc in self.descriptors

    def append(self, column: np.ndarray, desc: Hashable, mean: float = 0.0,
               norm: float = 1.0) -> "FeatureMatrix":
        return append_column(self, column, desc, mean, norm)

    def keep(self, index: Sequence[int]) -> "FeatureMatrix":
        """Sub-matrix with the given columns, in the given order."""
        index = list(index)
        return FeatureMatrix(self.values[:, index],
                             tuple(self.descriptors[i] for i in index),
                             self.means[index], self.norms[index])


def append_column(mat: FeatureMatrix, col: np.ndarray, desc: Hashable,
                  mean: float = 0.0, norm: float = 1.0) -> FeatureMatrix:
    col = np.asarray(col, dtype=np.float64)
    if col.shape != (mat.n_samples,):
        raise DimensionError(f"column length {col.shape} does not match l = {mat.n_samples}")
    if desc in mat.descriptors:
        raise DuplicateDescriptorError(f"descriptor already present: {desc}")
    values = np.column_stack([mat.values, col]) if mat.n_features else col[:, None].copy()
    return FeatureMatrix(values, mat.descriptors + (desc,),
                         np.append(mat.means, mean), np.append(mat.norms, norm))


# -- raw cube and label files -------------------------------------------------

def write_cube(cube: ImageCube, directory: str | Path, name: str = "cube") -> Path:
    """Write ``<name>.json`` metadata and band-sequential float32 ``<name>.raw``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ids = cube.band_ids
    meta = {
        "height": cube.height,
        "width": cube.width,
        "bands": len(ids),
        "band_ids": ids,
        "origins": [cube.meta(i).origin for i in ids],
        "dtype": "float32",
        "byte_order": "little",
        "interleave": "bsq",
        "data_file": f"{name}.raw",
    }
    data = np.stack([cube.band(i) for i in ids]).astype("<f4")
    (directory / f"{name}.raw").write_bytes(data.tobytes())
    path = directory / f"{name}.json"
    path.write_text(json.dumps(meta, indent=2) + "\n")
    return path


def read_cube(path: str | Path) -> ImageCube:
    path = Path(path)
    if path.is_dir():
        path = path / "cube.json"
    try:
        meta = json.loads(path.read_text())
        if meta.get("dtype", "float32") != "float32":
            raise FileFormatError("only float32 raw cubes are supported")
        h, w, n = int(meta["height"]), int(meta["width"]), int(meta["bands"])
        data_file = path.parent / meta["data_file"]
        ids = meta.get("band_ids", list(range(n)))
        origins = meta.get("origins", ["spectral"] * n)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FileFormatError):
            raise
        raise FileFormatError(f"corrupt cube metadata {path}: {exc}") from None
    data = np.fromfile(data_file, dtype="<f4")
    if data.size != h * w * n:
        raise FileFormatError(f"raw file holds {data.size} values, expected {h * w * n}")
    data = data.reshape(n, h, w)
    return ImageCube([data[k] for k in range(n)],
                     [BandMeta(int(i), o) for i, o in zip(ids, origins)])


def write_labels(samples: LabeledSamples, path: str | Path) -> None:
    lines = ["row\tcol\tclass_id"]
    lines += [f"{r}\t{c}\t{y}" for r, c, y in zip(samples.rows, samples.cols, samples.labels)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_labels(path: str | Path, n_classes: int | None = None) -> LabeledSamples:
    try:
        table = np.loadtxt(path, dtype=np.int64, skiprows=1, ndmin=2)
    except ValueError as exc:
        raise FileFormatError(f"corrupt label table {path}: {exc}") from None
    if table.size and table.shape[1] != 3:
        raise FileFormatError(f"label table {path} must have columns row, col, class_id")
    if table.size == 0:
        return LabeledSamples(np.zeros(0), np.zeros(0), np.zeros(0), n_classes or 0)
    if n_classes is None:
        n_classes = int(table[:, 2].max())
    return LabeledSamples(table[:, 0], table[:, 1], table[:, 2], n_classes)
