"""Partitions of a sample, half-space pairs, and moves between them."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ArgumentError
from .geometry import (Profile, RegionMask, SiteCloud, _check_same, intersect, thicken,
                       transversality_profile)

ANGLE_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class QPartition:
    """Ordered disjoint cover (A_0, ..., A_q) of a cloud.  Order matters."""

    parts: tuple[RegionMask, ...]

    def __post_init__(self):
        parts = tuple(self.parts)
        if len(parts) < 1:
            raise ArgumentError("a partition needs at least one part")
        _check_same(*(p.cloud for p in parts))
        counts = np.sum([p.bits for p in parts], axis=0)
        if np.any(counts != 1):
            bad = int(np.flatnonzero(counts != 1)[0])
            raise ArgumentError(
                f"parts must be disjoint and cover the cloud (site {bad} is in {int(counts[bad])} parts)")
        object.__setattr__(self, "parts", parts)

    @property
    def q(self) -> int:
        return len(self.parts) - 1

    @property
    def cloud(self) -> SiteCloud:
        return self.parts[0].cloud

    def __len__(self):
        return len(self.parts)

    def __getitem__(self, i) -> RegionMask:
        return self.parts[i]

    def __iter__(self):
        return iter(self.parts)

    def sizes(self) -> tuple[int, ...]:
        return tuple(p.count for p in self.parts)

    def swapped(self, i: int, j: int) -> "QPartition":
        parts = list(self.parts)
        parts[i], parts[j] = parts[j], parts[i]
        return QPartition(tuple(parts))

    def equals(self, other: "QPartition") -> bool:
        return len(self) == len(other) and all(a.equals(b) for a, b in zip(self, other))

    def on(self, cloud: SiteCloud) -> "QPartition":
        """Same site sets, re-attached to another cloud with the same site count."""
        return QPartition(tuple(RegionMask(p.bits, cloud) for p in self.parts))

    def to_json(self) -> dict:
        return {"parts": [p.to_json() for p in self.parts]}

    @classmethod
    def from_json(cls, obj: dict, cloud: SiteCloud) -> "QPartition":
        return cls(tuple(cloud.from_indices(ix) for ix in obj["parts"]))


def _require_three(p: QPartition) -> None:
    if len(p) != 3:
        raise ArgumentError(f"expected a 3-part partition, got {len(p)} parts")


@dataclass(frozen=True, eq=False)
class HalfSpacePair:
    X: RegionMask
    Y: RegionMask

    def __post_init__(self):
        _check_same(self.X.cloud, self.Y.cloud)

    @property
    def cloud(self) -> SiteCloud:
        return self.X.cloud

    @cached_property
    def quadrants(self) -> dict[str, RegionMask]:
        X, Y = self.X, self.Y
        return {"XY": X & Y, "XYc": X - Y, "XcY": Y - X, "XcYc": ~(X | Y)}

    def regions(self) -> list[RegionMask]:
        """X, X^c, Y, Y^c."""
        return [self.X, ~self.X, self.Y, ~self.Y]


def coordinate_halfspaces(cloud: SiteCloud, x0: float, y0: float) -> HalfSpacePair:
    """X = {x >= x0}, Y = {y >= y0}."""
    x, y = cloud.coords[:, 0], cloud.coords[:, 1]
    return HalfSpacePair(RegionMask(x >= x0, cloud), RegionMask(y >= y0, cloud))


def sector_partition(cloud: SiteCloud, center, cut_angles: Sequence[float]) -> QPartition:
    """Three angular sectors about ``center``.

    Part ``i`` starts at ``cut_angles[i]`` and runs counterclockwise to the next
    cut.  A site lying on a cut belongs to the sector starting there; a site at
    the centre itself is treated as having angle 0.
    """
    cuts = np.mod(np.asarray(cut_angles, dtype=float), 2 * math.pi)
    if cuts.shape != (3,):
        raise ArgumentError("sector_partition takes exactly three cut angles")
    for a in range(3):
        for b in range(a + 1, 3):
            gap = abs(cuts[a] - cuts[b])
            if min(gap, 2 * math.pi - gap) < ANGLE_EPS:
                raise ArgumentError("cut angles must be distinct modulo 2*pi")
    cx, cy = center
    ang = np.arctan2(cloud.coords[:, 1] - cy, cloud.coords[:, 0] - cx)

    # angular offset of each site past each cut, in [0, 2pi)
    rel = np.mod(ang[:, None] - cuts[None, :], 2 * math.pi)
    rel[rel > 2 * math.pi - ANGLE_EPS] = 0.0
    rel[rel < ANGLE_EPS] = 0.0
    label = np.argmin(rel, axis=1)
    return QPartition(tuple(RegionMask(label == i, cloud) for i in range(3)))


def halfspaces_to_partition(hs: HalfSpacePair) -> QPartition:
    """(X, X^c & Y, X^c & Y^c)."""
    X, Y = hs.X, hs.Y
    return QPartition((X, Y - X, ~(X | Y)))


def partition_to_halfspaces(p: QPartition) -> HalfSpacePair:
    """X = A, Y = W + B with W the part of A at least as close to B as to C.

    An empty B or C is infinitely far away, so an empty B gives W = {} (and an
    empty C, with B nonempty, gives W = A).
    """
    _require_three(p)
    A, B, C = p.parts
    dB, dC = B.distances(), C.distances()
    W = RegionMask(A.bits & (dB <= dC) & np.isfinite(dB), A.cloud)
    return HalfSpacePair(A, W | B)


def bisector_region(p: QPartition) -> RegionMask:
    """The set W used by :func:`partition_to_halfspaces`."""
    hs = partition_to_halfspaces(p)
    return hs.Y - p[1]


@dataclass
class CobordismMove:
    partition: QPartition
    witness: Profile


def elementary_cobordism(p: QPartition, i: int, j: int, W: RegionMask,
                         r_samples=(1.0, 2.0, 4.0, 8.0)) -> CobordismMove:
    """Move ``W`` (a subset of part i) into part j.

    The witness is the transversality profile of W against the parts other
    than i and j; a slowly growing diameter is the finite-sample stand-in for
    W being coarsely transverse to them.
    """
    if i == j:
        raise ArgumentError("cobordism needs two different parts")
    if not W.issubset(p[i]):
        raise ArgumentError(f"W is not contained in part {i}")
    parts = list(p.parts)
    parts[i] = parts[i] - W
    parts[j] = parts[j] | W
    others = [part for k, part in enumerate(p.parts) if k not in (i, j)]
    witness = transversality_profile([W, *others], r_samples) if others else Profile(
        "diameter", np.asarray(r_samples, float), np.zeros(len(r_samples)))
    return CobordismMove(QPartition(tuple(parts)), witness)


def bulk_window(p: QPartition, r: float) -> RegionMask:
    """K = A_r & B_r & C_r."""
    _require_three(p)
    if r <= 0:
        raise ArgumentError("window radius must be positive")
    return intersect([thicken(part, r) for part in p.parts])


def coordinate_quadrant_partition(cloud: SiteCloud, x0: float, y0: float) -> QPartition:
    return halfspaces_to_partition(coordinate_halfspaces(cloud, x0, y0))


def cloud_center(cloud: SiteCloud) -> tuple[float, float]:
    """Centre of the bounding box."""
    lo, hi = cloud.coords.min(axis=0), cloud.coords.max(axis=0)
    c = (lo + hi) / 2
    return float(c[0]), float(c[1])


def save_partition(p: QPartition, path) -> None:
    Path(path).write_text(json.dumps(p.to_json()))


def load_partition(path, cloud: SiteCloud) -> QPartition:
    return QPartition.from_json(json.loads(Path(path).read_text()), cloud)
