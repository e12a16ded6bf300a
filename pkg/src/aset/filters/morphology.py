"""Grayscale morphology: erosion, dilation, openings, reconstruction, top-hats.

Windowed extrema only look at neighbours inside the image. For disks,
diamonds and squares this gives the same result as replicate padding, and
for every shape it keeps erosion and dilation adjoint, so openings and
closings stay exactly idempotent at the border too.
"""

import numpy as np
from scipy import ndimage
from skimage.morphology import reconstruction as _sk_reconstruction

from .descriptor import StructuringElement

_CONN8 = np.ones((3, 3), dtype=bool)


def erode(band: np.ndarray, se: StructuringElement) -> np.ndarray:
    return ndimage.minimum_filter(np.asarray(band, dtype=np.float64), footprint=se.footprint,
                                  mode="constant", cval=np.inf)


def dilate(band: np.ndarray, se: StructuringElement) -> np.ndarray:
    return ndimage.maximum_filter(np.asarray(band, dtype=np.float64), footprint=se.footprint,
                                  mode="constant", cval=-np.inf)


def opening(band: np.ndarray, se: StructuringElement) -> np.ndarray:
    return dilate(erode(band, se), se)


def closing(band: np.ndarray, se: StructuringElement) -> np.ndarray:
    return erode(dilate(band, se), se)


def morph_filter(band: np.ndarray, kind: str, se: StructuringElement) -> np.ndarray:
    if kind == "opening":
        return opening(band, se)
    if kind == "closing":
        return closing(band, se)
    raise ValueError(f"not a plain morphological filter: {kind!r}")


def reconstruct(marker: np.ndarray, mask: np.ndarray, direction: str = "by_dilation") -> np.ndarray:
    """Geodesic reconstruction of ``marker`` under ``mask`` with 8-connectivity.

    ``by_dilation`` needs ``marker <= mask`` everywhere; ``by_erosion`` needs
    ``marker >= mask``.
    """
    marker = np.asarray(marker, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if marker.shape != mask.shape:
        raise ValueError("marker and mask shapes differ")
    if direction == "by_dilation":
        if np.any(marker > mask):
            raise ValueError("reconstruction by dilation needs marker <= mask")
        method = "dilation"
    elif direction == "by_erosion":
        if np.any(marker < mask):
            raise ValueError("reconstruction by erosion needs marker >= mask")
        method = "erosion"
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return _sk_reconstruction(marker.copy(), mask.copy(), method=method, footprint=_CONN8)


def open_rec(band: np.ndarray, se: StructuringElement) -> np.ndarray:
    return reconstruct(erode(band, se), band, "by_dilation")


def close_rec(band: np.ndarray, se: StructuringElement) -> np.ndarray:
    return reconstruct(dilate(band, se), band, "by_erosion")


def tophat(band: np.ndarray, kind: str, se: StructuringElement) -> np.ndarray:
    band = np.asarray(band, dtype=np.float64)
    if kind == "tophat_open":
        return band - opening(band, se)
    if kind == "tophat_close":
        return closing(band, se) - band
    if kind == "open_rec_tophat":
        return band - open_rec(band, se)
    if kind == "close_rec_tophat":
        return close_rec(band, se) - band
    raise ValueError(f"not a top-hat kind: {kind!r}")
