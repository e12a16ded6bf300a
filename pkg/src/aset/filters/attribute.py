"""Attribute openings on the max-tree (8-connectivity, direct filtering rule)."""

import numpy as np
from skimage.morphology import max_tree


def _node_attributes(parent: np.ndarray, order: np.ndarray, width: int):
    """Area and bounding-box diagonal of every max-tree node.

    Values are only meaningful at canonical pixels.
    """
    n = parent.size
    area = [1] * n
    rows = [p // width for p in range(n)]
    cols = [p % width for p in range(n)]
    rmin, rmax, cmin, cmax = rows[:], rows[:], cols[:], cols[:]
    par = parent.tolist()
    for p in reversed(order.tolist()[1:]):
        q = par[p]
        area[q] += area[p]
        if rmin[p] < rmin[q]:
            rmin[q] = rmin[p]
        if rmax[p] > rmax[q]:
            rmax[q] = rmax[p]
        if cmin[p] < cmin[q]:
            cmin[q] = cmin[p]
        if cmax[p] > cmax[q]:
            cmax[q] = cmax[p]
    area = np.array(area, dtype=np.float64)
    h = np.array(rmax) - np.array(rmin) + 1
    w = np.array(cmax) - np.array(cmin) + 1
    diag = np.sqrt(h.astype(np.float64) ** 2 + w ** 2)
    return area, diag


def attribute_opening(band: np.ndarray, attribute: str, threshold: float) -> np.ndarray:
    """Flatten upper-level-set components whose attribute is below ``threshold``.

    ``attribute`` is ``"area"`` (pixel count) or ``"diag"`` (bounding-box
    diagonal, in pixels). Removed components take the level of their nearest
    surviving ancestor; the root is always kept.
    """
    band = np.array(band, dtype=np.float64)  # max_tree rejects read-only buffers
    if threshold < 1:
        raise ValueError("attribute threshold must be >= 1")
    parent, order = max_tree(band, connectivity=2)
    parent = parent.ravel()
    flat = band.ravel()
    area, diag = _node_attributes(parent, order, band.shape[1])
    if attribute == "area":
        attr = area
    elif attribute == "diag":
        attr = diag
    else:
        raise ValueError(f"unknown attribute {attribute!r}")

    canonical = flat != flat[parent]
    keep = (canonical & (attr >= threshold)).tolist()
    par = parent.tolist()
    values = flat.tolist()
    out = values[:]
    for p in order.tolist()[1:]:
        if not keep[p]:
            out[p] = out[par[p]]
    return np.array(out).reshape(band.shape)


def attribute_filter(band: np.ndarray, kind: str, threshold: float) -> np.ndarray:
    if kind == "attr_area":
        return attribute_opening(band, "area", threshold)
    if kind == "attr_diag":
        return attribute_opening(band, "diag", threshold)
    raise ValueError(f"not an attribute kind: {kind!r}")
