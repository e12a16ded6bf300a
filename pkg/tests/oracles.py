"""Slow reference implementations used as test oracles."""

import numpy as np
from scipy import ndimage

CONN8 = np.ones((3, 3), dtype=bool)


def attribute_opening_levelsets(band, attribute, threshold):
    """Attribute opening by explicit threshold decomposition.

    Every pixel gets the highest level t at which its 8-connected component
    of ``band >= t`` has attribute >= ``threshold``; pixels with no such level
    get the global minimum.
    """
    band = np.asarray(band, dtype=np.float64)
    out = np.full(band.shape, band.min())
    for t in np.unique(band):
        labels, n = ndimage.label(band >= t, structure=CONN8)
        for k, sl in enumerate(ndimage.find_objects(labels), start=1):
            comp = labels == k
            if attribute == "area":
                value = comp.sum()
            else:
                h = sl[0].stop - sl[0].start
                w = sl[1].stop - sl[1].start
                value = np.hypot(h, w)
            if value >= threshold:
                out[comp] = np.maximum(out[comp], t)
    return out


def reconstruct_by_iteration(marker, mask):
    """Reconstruction by dilation: repeat 3x3 geodesic dilation until stable."""
    cur = np.asarray(marker, dtype=np.float64)
    while True:
        grown = ndimage.maximum_filter(cur, footprint=CONN8, mode="constant", cval=-np.inf)
        nxt = np.minimum(grown, mask)
        if np.array_equal(nxt, cur):
            return cur
        cur = nxt


def window_stat_bruteforce(band, window, fn):
    """Apply ``fn`` to every window of an edge-padded copy of ``band``."""
    r = window // 2
    padded = np.pad(band, r, mode="edge")
    h, w = band.shape
    out = np.empty((h, w))
    for i in range(h):
        for j in range(w):
            out[i, j] = fn(padded[i:i + window, j:j + window])
    return out


def erode_replicate(band, footprint):
    """Erosion with edge replication, written out pixel by pixel."""
    r = footprint.shape[0] // 2
    padded = np.pad(band, r, mode="edge")
    h, w = band.shape
    out = np.empty((h, w))
    for i in range(h):
        for j in range(w):
            out[i, j] = padded[i:i + 2 * r + 1, j:j + 2 * r + 1][footprint].min()
    return out
