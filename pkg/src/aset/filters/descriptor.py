"""Filter recipes: structuring elements and feature descriptors.

A :class:`FeatureDescriptor` fully identifies one feature. Descriptors are
frozen dataclasses, so equal fields mean the same feature, and each has a
one-line canonical text form used in model files and reports::

    open_rec(band=17, se=disk, size=11, depth=1)
    opening(band=2, se=line, size=7, angle=0.7853981633974483, depth=1)
    norm_ratio(a=4, b=9, depth=1)
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property

import numpy as np

SE_SHAPES = ("disk", "diamond", "square", "line")

MORPH_KINDS = (
    "opening", "closing", "tophat_open", "tophat_close",
    "open_rec", "close_rec", "open_rec_tophat", "close_rec_tophat",
)
TEXTURE_KINDS = ("avg", "entropy", "stddev", "range")
ATTRIBUTE_KINDS = ("attr_area", "attr_diag")
COMBINATION_KINDS = ("ratio", "norm_ratio", "sum", "product")
#: Identity feature: an input band used as-is (the initial active set).
BAND_KIND = "band"

FILTER_KINDS = MORPH_KINDS + TEXTURE_KINDS + ATTRIBUTE_KINDS + COMBINATION_KINDS
ALL_KINDS = (BAND_KIND,) + FILTER_KINDS


@dataclass(frozen=True)
class StructuringElement:
    shape: str
    size: int
    angle: float = 0.0

    def __post_init__(self):
        if self.shape not in SE_SHAPES:
            raise ValueError(f"unknown structuring element {self.shape!r}")
        if self.size < 3 or self.size % 2 == 0:
            raise ValueError("structuring element size must be odd and >= 3")
        if self.shape == "line":
            if not -math.pi / 2 <= self.angle <= math.pi / 2:
                raise ValueError("line angle must lie in [-pi/2, pi/2]")
        else:
            # angle is meaningless for isotropic shapes; pin it so equality is by shape/size
            object.__setattr__(self, "angle", 0.0)
        object.__setattr__(self, "angle", float(self.angle))

    @cached_property
    def footprint(self) -> np.ndarray:
        """Boolean ``size x size`` mask, symmetric about its center."""
        r = self.size // 2
        yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
        if self.shape == "square":
            fp = np.ones((self.size, self.size), dtype=bool)
        elif self.shape == "disk":
            fp = xx ** 2 + yy ** 2 <= r * r
        elif self.shape == "diamond":
            fp = np.abs(xx) + np.abs(yy) <= r
        else:
            fp = np.zeros((self.size, self.size), dtype=bool)
            dx = int(round(r * math.cos(self.angle)))
            dy = -int(round(r * math.sin(self.angle)))  # rows grow downwards
            for y, x in _bresenham(0, 0, dy, dx):
                fp[r + y, r + x] = True
                fp[r - y, r - x] = True
        fp.flags.writeable = False
        return fp


def _bresenham(y0: int, x0: int, y1: int, x1: int) -> list[tuple[int, int]]:
    points = []
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    while True:
        points.append((y0, x0))
        if x0 == x1 and y0 == y1:
            return points
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


@dataclass(frozen=True)
class FeatureDescriptor:
    """Recipe of one feature.

    Parameters are exactly those needed by ``kind``: a structuring element for
    morphological kinds, a window for texture kinds, a threshold for attribute
    kinds and a second input band for band combinations.
    """

    kind: str
    input_a: int
    input_b: int | None = None
    se: StructuringElement | None = None
    window: int | None = None
    threshold: int | None = None
    depth: int = 1

    def __post_init__(self):
        k = self.kind
        if k not in ALL_KINDS:
            raise ValueError(f"unknown feature kind {k!r}")
        want_b = k in COMBINATION_KINDS
        want_se = k in MORPH_KINDS
        want_window = k in TEXTURE_KINDS
        want_threshold = k in ATTRIBUTE_KINDS
        for name, wanted in (("input_b", want_b), ("se", want_se),
                             ("window", want_window), ("threshold", want_threshold)):
            present = getattr(self, name) is not None
            if present != wanted:
                verb = "requires" if wanted else "does not take"
                raise ValueError(f"{k} {verb} parameter {name}")
        if want_window and (self.window < 3 or self.window % 2 == 0):
            raise ValueError("texture window must be odd and >= 3")
        if want_threshold and self.threshold < 1:
            raise ValueError("attribute threshold must be >= 1")
        if k == BAND_KIND and self.depth < 0:
            raise ValueError("band depth must be non-negative")
        if k != BAND_KIND and self.depth < 1:
            raise ValueError("filtered features have depth >= 1")

    @property
    def inputs(self) -> tuple[int, ...]:
        return (self.input_a,) if self.input_b is None else (self.input_a, self.input_b)

    @classmethod
    def band(cls, band_id: int) -> "FeatureDescriptor":
        return cls(BAND_KIND, band_id, depth=0)

    def __str__(self) -> str:
        return to_text(self)


def child_depth(*parent_depths: int) -> int:
    """Depth of a filter applied to inputs of the given depths."""
    return max(parent_depths) + 1


def to_text(desc: FeatureDescriptor) -> str:
    k = desc.kind
    if k in COMBINATION_KINDS:
        args = [f"a={desc.input_a}", f"b={desc.input_b}"]
    else:
        args = [f"band={desc.input_a}"]
    if desc.se is not None:
        args += [f"se={desc.se.shape}", f"size={desc.se.size}"]
        if desc.se.shape == "line":
            args.append(f"angle={desc.se.angle!r}")
    if desc.window is not None:
        args.append(f"window={desc.window}")
    if desc.threshold is not None:
        args.append(f"threshold={desc.threshold}")
    args.append(f"depth={desc.depth}")
    return f"{k}({', '.join(args)})"


_TEXT_RE = re.compile(r"^\s*([a-z_]+)\((.*)\)\s*$")


def from_text(text: str) -> FeatureDescriptor:
    m = _TEXT_RE.match(text)
    if not m:
        raise ValueError(f"not a descriptor: {text!r}")
    kind, body = m.groups()
    fields = {}
    for part in filter(None, (p.strip() for p in body.split(","))):
        key, _, value = part.partition("=")
        fields[key.strip()] = value.strip()
    try:
        se = None
        if "se" in fields:
            se = StructuringElement(fields["se"], int(fields["size"]),
                                    float(fields.get("angle", 0.0)))
        input_a = int(fields["a"] if "a" in fields else fields["band"])
        return FeatureDescriptor(
            kind=kind,
            input_a=input_a,
            input_b=int(fields["b"]) if "b" in fields else None,
            se=se,
            window=int(fields["window"]) if "window" in fields else None,
            threshold=int(fields["threshold"]) if "threshold" in fields else None,
            depth=int(fields.get("depth", 0 if kind == BAND_KIND else 1)),
        )
    except KeyError as exc:
        raise ValueError(f"descriptor {text!r} is missing {exc}") from None
