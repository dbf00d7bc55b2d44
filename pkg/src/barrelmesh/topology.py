"""Linear work-zone layouts and unit-disk connectivity.

A layout is a row of barrels placed along roadway chainage, split into
segments (taper, buffer, work area) that each have their own spacing, plus a
single sink node. Distances are meters internally; helpers accept feet where
noted because roadway standards are written in feet.

Connectivity is a unit-disk graph: two nodes are neighbors iff their
euclidean distance d satisfies 0 < d < range_r. Node ids are contiguous,
barrels first in ascending chainage, sink last.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

FEET_PER_METER = 1 / 0.3048
METERS_PER_FOOT = 0.3048

# Dedupe tolerance for barrels that land on a shared segment boundary.
_COORD_EPS = 1e-9


def feet(value: float) -> float:
    """Convert feet to meters."""
    return value * METERS_PER_FOOT


class LayoutError(ValueError):
    """Raised for geometrically invalid layout specs."""


@dataclass(frozen=True)
class Segment:
    name: str
    length_m: float
    spacing_m: float


@dataclass(frozen=True)
class LayoutSpec:
    """Geometry of one closed lane: ordered segments plus sink placement.

    sink_placement is "start", "end", or an explicit chainage in meters.
    For start/end the sink sits sink_standoff_m upstream/downstream of the
    barrel row (roadside equipment is staged off the row, and a zero standoff
    would collide with the boundary barrel). An explicit chainage is used
    as-is.
    """

    segments: tuple[Segment, ...]
    sink_placement: Union[str, float] = "start"
    sink_standoff_m: float = 10.0
    lateral_offset_m: float = 0.0

    def total_length_m(self) -> float:
        return sum(s.length_m for s in self.segments)


@dataclass(frozen=True)
class Topology:
    """Immutable node set with precomputed unit-disk adjacency.

    positions[i] is the (x, y) of node i; sink is the last id. adjacency is
    one bitmask per node: bit j of adjacency[i] set means i and j are
    neighbors. The mask form keeps the hot simulation paths cheap.
    """

    positions: tuple[tuple[float, float], ...]
    sink: int
    range_r: float
    adjacency: tuple[int, ...] = field(repr=False)

    @property
    def node_count(self) -> int:
        return len(self.positions)

    @property
    def barrels(self) -> range:
        return range(self.sink)

    def distance(self, i: int, j: int) -> float:
        (xi, yi), (xj, yj) = self.positions[i], self.positions[j]
        return math.hypot(xi - xj, yi - yj)

    def neighbor(self, i: int, j: int) -> bool:
        return bool(self.adjacency[i] >> j & 1)

    def neighbors_of(self, i: int) -> list[int]:
        mask = self.adjacency[i]
        out = []
        j = 0
        while mask:
            if mask & 1:
                out.append(j)
            mask >>= 1
            j += 1
        return out


def _build_adjacency(positions: Sequence[tuple[float, float]], range_r: float) -> tuple[int, ...]:
    n = len(positions)
    masks = [0] * n
    for i in range(n):
        xi, yi = positions[i]
        for j in range(i + 1, n):
            xj, yj = positions[j]
            d = math.hypot(xi - xj, yi - yj)
            if 0.0 < d < range_r:
                masks[i] |= 1 << j
                masks[j] |= 1 << i
    return tuple(masks)


def topology_from_positions(
    barrel_positions: Sequence[tuple[float, float]],
    sink_position: tuple[float, float],
    range_r: float,
) -> Topology:
    """Build a topology from explicit coordinates (barrels first, sink last)."""
    if range_r <= 0:
        raise LayoutError(f"range_r must be positive, got {range_r}")
    positions = [tuple(map(float, p)) for p in barrel_positions]
    positions.append(tuple(map(float, sink_position)))
    for a in range(len(positions)):
        for b in range(a + 1, len(positions)):
            if (
                abs(positions[a][0] - positions[b][0]) <= _COORD_EPS
                and abs(positions[a][1] - positions[b][1]) <= _COORD_EPS
            ):
                raise LayoutError(f"nodes {a} and {b} share coordinates {positions[a]}")
    return Topology(
        positions=tuple(positions),
        sink=len(positions) - 1,
        range_r=float(range_r),
        adjacency=_build_adjacency(positions, range_r),
    )


def barrel_chainages(spec: LayoutSpec) -> list[float]:
    """Chainage of every barrel: multiples of each segment's spacing measured
    from the segment start, shared boundaries placed once. A single segment of
    length L and spacing s yields floor(L/s) + 1 barrels (both ends included).
    """
    chainages: list[float] = []
    seg_start = 0.0
    for seg in spec.segments:
        if seg.spacing_m <= 0:
            raise LayoutError(f"segment {seg.name!r} spacing must be positive")
        if seg.length_m < 0:
            raise LayoutError(f"segment {seg.name!r} length must be >= 0")
        if seg.length_m == 0:
            continue
        count = int(math.floor(seg.length_m / seg.spacing_m + _COORD_EPS))
        for k in range(count + 1):
            x = seg_start + k * seg.spacing_m
            if not chainages or x - chainages[-1] > _COORD_EPS:
                chainages.append(x)
        seg_start += seg.length_m
    return chainages


def build_layout(spec: LayoutSpec, range_r: float = 100.0) -> Topology:
    """Materialize a LayoutSpec into a Topology at the given radio range."""
    chainages = barrel_chainages(spec)
    total = spec.total_length_m()
    if isinstance(spec.sink_placement, str):
        if spec.sink_placement == "start":
            sink_x = -spec.sink_standoff_m
        elif spec.sink_placement == "end":
            sink_x = total + spec.sink_standoff_m
        else:
            raise LayoutError(f"unknown sink placement {spec.sink_placement!r}")
    else:
        sink_x = float(spec.sink_placement)
    y = spec.lateral_offset_m
    barrels = [(x, y) for x in chainages]
    return topology_from_positions(barrels, (sink_x, y), range_r)


def neighbor_degrees(topology: Topology) -> list[int]:
    """In-range neighbor count per node (row sums of the adjacency matrix)."""
    return [mask.bit_count() for mask in topology.adjacency]


# Shipped layout: one 45 mph freeway lane closure, 1140 ft end to end, 30
# barrels. The taper row is delineated densest (30 ft on centers), the buffer
# at 48 ft, the short work area sparsest; segment lengths are chosen so the
# three segments tile 1140 ft with exactly 30 barrels.
FDOT_45MPH = LayoutSpec(
    segments=(
        Segment("taper", feet(480.0), feet(30.0)),
        Segment("buffer", feet(480.0), feet(48.0)),
        Segment("work", feet(180.0), feet(60.0)),
    ),
    sink_placement="start",
    sink_standoff_m=10.0,
)

LAYOUT_PRESETS: dict[str, LayoutSpec] = {
    "fdot_45mph": FDOT_45MPH,
}
