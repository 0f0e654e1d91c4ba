"""Anchor spaces, primary data references and n-dimensional regions.

Regions are half-open boxes (start inclusive, end exclusive).  A box whose
start equals its end on an axis degenerates to a single position on that
axis, which is how landmarks (time stamps, insertion points) are expressed.
A region holding several boxes is a discontinuous segment.
"""

from __future__ import annotations

import enum
import functools
import hashlib
import itertools
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import (
    CrossDocumentComparison,
    NegativeCoordinate,
    OutOfExtent,
    StartAfterEnd,
    UnknownSpace,
    WrongArity,
)
from .ids import check_id

Box = tuple[tuple[int, int], ...]

_HEX64 = re.compile(r"[0-9a-f]{64}")


@dataclass(frozen=True)
class AnchorSpace:
    name: str
    dimension: int
    unit: str

    def __post_init__(self):
        if self.dimension < 1:
            raise WrongArity(f"anchor space {self.name} needs dimension >= 1")


CHAR = AnchorSpace("char", 1, "Unicode code point index of the UTF-8 decoded text")
BYTE = AnchorSpace("byte", 1, "byte offset into the raw resource")
TIME_MS = AnchorSpace("time-ms", 1, "milliseconds from the start of the signal")
PIXEL = AnchorSpace("pixel", 2, "pixel column and row")

SPACES: dict[str, AnchorSpace] = {s.name: s for s in (CHAR, BYTE, TIME_MS, PIXEL)}


def get_space(name: str) -> AnchorSpace:
    try:
        return SPACES[name]
    except KeyError:
        raise UnknownSpace(f"unknown anchor space {name!r}") from None


def content_hash(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class PrimaryDataRef:
    """A primary resource that annotations point into, bound by its SHA-256."""

    pid: str
    uri: str
    space: AnchorSpace
    extent: tuple[int, ...]
    content_hash: str

    def __post_init__(self):
        check_id(self.pid, "primary id")
        object.__setattr__(self, "extent", tuple(int(x) for x in self.extent))
        if len(self.extent) != self.space.dimension:
            raise WrongArity(
                f"primary {self.pid}: extent needs {self.space.dimension} entries, "
                f"got {len(self.extent)}"
            )
        if any(x < 0 for x in self.extent):
            raise NegativeCoordinate(f"primary {self.pid}: negative extent")
        if not _HEX64.fullmatch(self.content_hash):
            raise ValueError(f"primary {self.pid}: content hash must be 64 lowercase hex digits")

    @classmethod
    def from_bytes(cls, pid: str, uri: str, data: bytes, space: AnchorSpace = CHAR,
                   extent: Sequence[int] | None = None) -> "PrimaryDataRef":
        if extent is None:
            if space is CHAR or space.name == "char":
                extent = (len(data.decode("utf-8")),)
            elif space.name == "byte":
                extent = (len(data),)
            else:
                raise WrongArity(f"extent must be given for {space.name} resources")
        return cls(pid, uri, space, tuple(extent), content_hash(data))

    def verify(self, data: bytes) -> bool:
        return content_hash(data) == self.content_hash


@dataclass(frozen=True)
class Region:
    rid: str | None
    pid: str
    boxes: tuple[Box, ...]

    @property
    def dimension(self) -> int:
        return len(self.boxes[0])

    @property
    def coords(self) -> tuple[int, ...]:
        return tuple(c for box in self.boxes for pair in box for c in pair)

    @property
    def is_point(self) -> bool:
        return all(s == e for box in self.boxes for s, e in box)

    @property
    def is_discontinuous(self) -> bool:
        return len(self.boxes) > 1

    def same_extent(self, other: "Region") -> bool:
        return self.pid == other.pid and self.boxes == other.boxes

    def with_rid(self, rid: str) -> "Region":
        return Region(rid, self.pid, self.boxes)


def normalize_boxes(boxes: Iterable[Box]) -> tuple[Box, ...]:
    """Sort boxes by their flattened coordinate tuples and drop duplicates."""
    flat = sorted({tuple(c for pair in box for c in pair) for box in boxes})
    return tuple(tuple(zip(f[0::2], f[1::2])) for f in flat)


def boxes_from_coords(coords: Sequence[int], dimension: int,
                      extent: Sequence[int] | None = None) -> tuple[Box, ...]:
    coords = [int(c) for c in coords]
    step = 2 * dimension
    if not coords or len(coords) % step:
        raise WrongArity(f"coordinate count {len(coords)} is not a positive multiple of {step}")
    boxes = []
    for i in range(0, len(coords), step):
        chunk = coords[i:i + step]
        box = tuple(zip(chunk[0::2], chunk[1::2]))
        for axis, (s, e) in enumerate(box):
            if s < 0 or e < 0:
                raise NegativeCoordinate(f"negative coordinate in box {box}")
            if s > e:
                raise StartAfterEnd(f"start {s} after end {e}")
            if extent is not None and e > extent[axis]:
                raise OutOfExtent(f"end {e} beyond extent {extent[axis]} on axis {axis}")
        boxes.append(box)
    return normalize_boxes(boxes)


def region_new(pid: str, space: AnchorSpace, coords: Sequence[int], *,
               rid: str | None = None, extent: Sequence[int] | None = None) -> Region:
    """Build a region from a flat coordinate list ``[s0, e0, s1, e1, ...]``.

    Each box takes ``2 * space.dimension`` numbers, axis by axis.  The
    result has its boxes sorted and deduplicated.
    """
    if extent is not None and len(extent) != space.dimension:
        raise WrongArity("extent does not match anchor space dimension")
    return Region(rid, pid, boxes_from_coords(coords, space.dimension, extent))


def region_key(region: Region) -> tuple:
    starts = min(tuple(s for s, _ in box) for box in region.boxes)
    ends = max(tuple(e for _, e in box) for box in region.boxes)
    return starts, ends, region.coords


def region_cmp(a: Region, b: Region) -> int:
    """Three-way comparison: -1, 0 or 1."""
    if a.pid != b.pid:
        raise CrossDocumentComparison(f"cannot compare regions over {a.pid} and {b.pid}")
    ka, kb = region_key(a), region_key(b)
    return (ka > kb) - (ka < kb)


region_sort_key = functools.cmp_to_key(region_cmp)


class Relation(str, enum.Enum):
    DISJOINT = "disjoint"
    OVERLAPS = "overlaps"
    CONTAINS = "contains"
    CONTAINED_BY = "contained_by"
    EQUAL = "equal"

    def __str__(self) -> str:
        return self.value


def _closed(box: Box) -> tuple[tuple[int, int], ...]:
    # integer cells as half-open [lo, hi); a degenerate axis keeps its one position
    return tuple((s, e) if e > s else (s, s + 1) for s, e in box)


def _intersects(a, b) -> bool:
    return all(alo < bhi and blo < ahi for (alo, ahi), (blo, bhi) in zip(a, b))


def _covered(box, cover) -> bool:
    """True if ``box`` lies inside the union of ``cover`` (all in cell form)."""
    relevant = [c for c in cover if _intersects(box, c)]
    if not relevant:
        return False
    cuts = []
    for axis, (lo, hi) in enumerate(box):
        points = {lo, hi}
        for c in relevant:
            for p in c[axis]:
                if lo < p < hi:
                    points.add(p)
        cuts.append(sorted(points))
    for cell in itertools.product(*(list(zip(p, p[1:])) for p in cuts)):
        if not any(all(clo <= lo and hi <= chi for (lo, hi), (clo, chi) in zip(cell, c))
                   for c in relevant):
            return False
    return True


def _contains(outer: Region, inner: Region) -> bool:
    cover = [_closed(b) for b in outer.boxes]
    return all(_covered(_closed(b), cover) for b in inner.boxes)


def region_relate(a: Region, b: Region) -> frozenset[Relation]:
    """Set-theoretic relations between the point sets of two regions."""
    if a.pid != b.pid:
        raise CrossDocumentComparison(f"cannot relate regions over {a.pid} and {b.pid}")
    ca = [_closed(x) for x in a.boxes]
    cb = [_closed(x) for x in b.boxes]
    if not any(_intersects(x, y) for x in ca for y in cb):
        return frozenset({Relation.DISJOINT})
    rels = {Relation.OVERLAPS}
    if _contains(a, b):
        rels.add(Relation.CONTAINS)
    if _contains(b, a):
        rels.add(Relation.CONTAINED_BY)
    if len(rels) == 3:
        rels.add(Relation.EQUAL)
    return frozenset(rels)


def union_boxes(boxes: Iterable[Box]) -> tuple[Box, ...]:
    """Union of boxes, with touching or overlapping 1-D spans merged.

    Points are kept apart from spans unless they fall strictly inside one
    (a landmark at a span's end is outside the span).  For more than one
    dimension only exact duplicates and boxes nested in another are dropped.
    """
    boxes = list(normalize_boxes(boxes))
    if not boxes:
        return ()
    if len(boxes[0]) != 1:
        def inside(x, y):
            return _covered(_closed(x), [_closed(y)])

        # of two boxes covering the same cells, keep the first in order
        kept = [b for b in boxes
                if not any(o != b and inside(b, o) and (o < b or not inside(o, b))
                           for o in boxes)]
        return normalize_boxes(kept)
    spans = [b[0] for b in boxes if b[0][0] < b[0][1]]
    points = [b[0][0] for b in boxes if b[0][0] == b[0][1]]
    merged: list[list[int]] = []
    for s, e in spans:
        if merged and s <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    out = [((s, e),) for s, e in merged]
    out += [((p, p),) for p in points if not any(s <= p < e for s, e in merged)]
    return normalize_boxes(out)
