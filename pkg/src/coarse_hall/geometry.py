"""Finite sample geometries: site clouds, region masks, thickenings, tilings.

A :class:`SiteCloud` is a finite set of points in the plane with the Euclidean
metric and counting measure.  Subsets are :class:`RegionMask` objects (one bool
per site).  Everything here is immutable once built.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree
from scipy.spatial.distance import pdist

from .errors import ArgumentError, CapacityError, EmptyCloudError

MAX_SITES_ENV = "COARSE_HALL_MAX_SITES"
DEFAULT_MAX_SITES = 10_000

# absolute slack on distance comparisons; lattice distances such as sqrt(2)
# must land on the closed side of "d <= r"
DIST_EPS = 1e-9


def max_sites() -> int:
    value = os.environ.get(MAX_SITES_ENV)
    if value is None:
        return DEFAULT_MAX_SITES
    try:
        return int(value)
    except ValueError as exc:
        raise ArgumentError(f"{MAX_SITES_ENV} must be an integer, got {value!r}") from exc


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SiteCloud:
    """Ordered 2D sites with the Euclidean metric.

    ``shape``/``spacing`` are set only for clouds made by
    :func:`build_square_lattice`; models that need a square lattice check them.
    """

    coords: np.ndarray
    label: str = "cloud"
    shape: tuple[int, int] | None = None
    spacing: float | None = None

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ArgumentError(f"coords must have shape (N, 2), got {coords.shape}")
        if coords.shape[0] < 1:
            raise EmptyCloudError("a site cloud needs at least one site")
        if not np.all(np.isfinite(coords)):
            raise ArgumentError("site coordinates must be finite")
        if np.unique(coords, axis=0).shape[0] != coords.shape[0]:
            raise ArgumentError("site coordinates must be distinct")
        object.__setattr__(self, "coords", _readonly(coords))

    @property
    def n_sites(self) -> int:
        return self.coords.shape[0]

    def __len__(self) -> int:
        return self.n_sites

    @property
    def is_square_lattice(self) -> bool:
        return self.shape is not None

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.coords)

    @cached_property
    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.label.encode())
        h.update(np.ascontiguousarray(self.coords, dtype="<f8").tobytes())
        return h.hexdigest()

    def distance(self, i: int, j: int) -> float:
        return float(np.hypot(*(self.coords[i] - self.coords[j])))

    def distance_matrix(self) -> np.ndarray:
        diff = self.coords[:, None, :] - self.coords[None, :, :]
        return np.hypot(diff[..., 0], diff[..., 1])

    def diameter(self) -> float:
        return _point_set_diameter(self.coords)

    def full(self) -> "RegionMask":
        return RegionMask(np.ones(self.n_sites, dtype=bool), self)

    def empty(self) -> "RegionMask":
        return RegionMask(np.zeros(self.n_sites, dtype=bool), self)

    def mask(self, bits) -> "RegionMask":
        return RegionMask(np.asarray(bits, dtype=bool), self)

    def from_indices(self, indices: Iterable[int]) -> "RegionMask":
        bits = np.zeros(self.n_sites, dtype=bool)
        bits[np.asarray(list(indices), dtype=int)] = True
        return RegionMask(bits, self)

    def mirrored(self) -> "SiteCloud":
        """Reflect x -> -x, keeping site order (an orientation reversal)."""
        coords = self.coords * np.array([-1.0, 1.0])
        return SiteCloud(coords, label=self.label + "-mirrored", shape=self.shape, spacing=self.spacing)

    def to_json(self) -> dict:
        out = {"label": self.label, "sites": self.coords.tolist()}
        if self.shape is not None:
            out["shape"] = list(self.shape)
            out["spacing"] = self.spacing
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "SiteCloud":
        shape = tuple(obj["shape"]) if obj.get("shape") is not None else None
        return cls(np.asarray(obj["sites"], dtype=float), label=obj.get("label", "cloud"),
                   shape=shape, spacing=obj.get("spacing"))


def same_cloud(a: SiteCloud, b: SiteCloud) -> bool:
    return a is b or (a.n_sites == b.n_sites and a.digest == b.digest)


def _check_same(*clouds: SiteCloud) -> SiteCloud:
    first = clouds[0]
    for c in clouds[1:]:
        if not same_cloud(first, c):
            raise ArgumentError("regions live on different site clouds")
    return first


@dataclass(frozen=True, eq=False)
class RegionMask:
    """A subset of a cloud's sites, stored as one bool per site."""

    bits: np.ndarray
    cloud: SiteCloud

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.shape != (self.cloud.n_sites,):
            raise ArgumentError(
                f"mask has {bits.shape} bits but cloud has {self.cloud.n_sites} sites")
        object.__setattr__(self, "bits", _readonly(bits))

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    def __len__(self) -> int:
        return self.count

    @property
    def is_empty(self) -> bool:
        return not self.bits.any()

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.bits)

    def points(self) -> np.ndarray:
        return self.cloud.coords[self.bits]

    def as_float(self) -> np.ndarray:
        return self.bits.astype(float)

    def _other(self, other: "RegionMask") -> np.ndarray:
        _check_same(self.cloud, other.cloud)
        return other.bits

    def __and__(self, other):
        return RegionMask(self.bits & self._other(other), self.cloud)

    def __or__(self, other):
        return RegionMask(self.bits | self._other(other), self.cloud)

    def __sub__(self, other):
        return RegionMask(self.bits & ~self._other(other), self.cloud)

    def __xor__(self, other):
        return RegionMask(self.bits ^ self._other(other), self.cloud)

    def __invert__(self):
        return self.complement()

    def complement(self) -> "RegionMask":
        return RegionMask(~self.bits, self.cloud)

    def issubset(self, other: "RegionMask") -> bool:
        return not np.any(self.bits & ~self._other(other))

    def equals(self, other: "RegionMask") -> bool:
        return same_cloud(self.cloud, other.cloud) and np.array_equal(self.bits, other.bits)

    def diameter(self) -> float:
        return _point_set_diameter(self.points())

    def distances(self) -> np.ndarray:
        """Distance from every cloud site to the nearest site of this region (+inf if empty)."""
        if self.is_empty:
            return np.full(self.cloud.n_sites, np.inf)
        d, _ = cKDTree(self.points()).query(self.cloud.coords, k=1)
        return d

    def to_json(self) -> list[int]:
        return self.indices().tolist()


def _point_set_diameter(pts: np.ndarray) -> float:
    if len(pts) < 2:
        return 0.0
    if len(pts) > 64:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except QhullError:
            # collinear points: extremes along the principal direction suffice
            centered = pts - pts.mean(axis=0)
            _, _, vt = np.linalg.svd(centered, full_matrices=False)
            proj = centered @ vt[0]
            pts = pts[[np.argmin(proj), np.argmax(proj)]]
    return float(pdist(pts).max())


def mask_distance(a: RegionMask, b: RegionMask) -> float:
    """d(A, B) = min over site pairs; +inf if either set is empty."""
    _check_same(a.cloud, b.cloud)
    if a.is_empty or b.is_empty:
        return math.inf
    return float(b.distances()[a.bits].min())


# ---------------------------------------------------------------- builders

def build_square_lattice(nx: int, ny: int, spacing: float = 1.0, label: str = "square") -> SiteCloud:
    """``nx * ny`` grid sites; site ``j * nx + i`` sits at ``(i*spacing, j*spacing)``."""
    if nx < 1 or ny < 1:
        raise ArgumentError("lattice dimensions must be positive")
    if spacing <= 0:
        raise ArgumentError("spacing must be positive")
    if nx * ny > max_sites():
        raise CapacityError(f"{nx}x{ny} lattice exceeds the {max_sites()}-site cap")
    j, i = np.divmod(np.arange(nx * ny), nx)
    coords = np.column_stack([i * spacing, j * spacing]).astype(float)
    return SiteCloud(coords, label=label, shape=(nx, ny), spacing=float(spacing))


def lattice_index(cloud: SiteCloud, i: int, j: int) -> int:
    nx, _ = cloud.shape
    return j * nx + i


def build_poisson_cloud(density: float, width: float, height: float, seed: int,
                        label: str = "poisson") -> SiteCloud:
    """Seeded homogeneous Poisson process on ``[0, width] x [0, height]``."""
    if density < 0 or width < 0 or height < 0:
        raise ArgumentError("density and box sides must be nonnegative")
    expected = density * width * height
    if expected <= 0:
        raise EmptyCloudError("expected site count is zero")
    if expected > max_sites():
        raise CapacityError(f"expected {expected:.0f} sites exceeds the {max_sites()}-site cap")
    rng = np.random.default_rng(seed)
    n = int(rng.poisson(expected))
    if n == 0:
        raise EmptyCloudError(f"seed {seed} produced an empty cloud")
    coords = rng.uniform(0.0, 1.0, size=(n, 2)) * np.array([width, height])
    return SiteCloud(coords, label=label)


# ---------------------------------------------------------------- thickening

def thicken(region: RegionMask, r: float) -> RegionMask:
    """All sites within distance ``r`` of the region (closed ball convention)."""
    if r < 0:
        raise ArgumentError(f"thickening radius must be nonnegative, got {r}")
    if r == 0:
        return region
    return RegionMask(region.distances() <= r + DIST_EPS, region.cloud)


def intersect(regions: Sequence[RegionMask]) -> RegionMask:
    cloud = _check_same(*(z.cloud for z in regions))
    bits = np.logical_and.reduce([z.bits for z in regions])
    return RegionMask(bits, cloud)


@dataclass
class Profile:
    """A radius-indexed table (r, value) with an optional fitted exponent."""

    name: str
    r: np.ndarray
    value: np.ndarray
    exponent: float | None = None

    def rows(self) -> list[tuple[float, float]]:
        return [(float(a), float(b)) for a, b in zip(self.r, self.value)]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", self.name])
            for a, b in self.rows():
                w.writerow([repr(a), repr(b)])


def _check_radii(r_samples) -> np.ndarray:
    r = np.asarray(r_samples, dtype=float)
    if r.ndim != 1 or r.size == 0:
        raise ArgumentError("r_samples must be a nonempty 1D list")
    if np.any(np.diff(r) < 0):
        raise ArgumentError("r_samples must be sorted ascending")
    if np.any(r < 0):
        raise ArgumentError("radii must be nonnegative")
    return r


MIN_FIT_POINTS = 4


def loglog_slope(x, y) -> float | None:
    """Least-squares slope of log y against log x over positive finite samples.

    Returns None when fewer than four samples are usable.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = (x > 0) & (y > 0) & np.isfinite(y)
    if ok.sum() < MIN_FIT_POINTS:
        return None
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def transversality_profile(regions: Sequence[RegionMask], r_samples) -> Profile:
    """Diameter of the common intersection of r-thickenings, per radius."""
    if len(regions) < 2:
        raise ArgumentError("need at least two regions")
    _check_same(*(z.cloud for z in regions))
    r = _check_radii(r_samples)
    dist = [z.distances() for z in regions]
    diam = []
    for radius in r:
        bits = np.logical_and.reduce([d <= radius + DIST_EPS for d in dist])
        diam.append(_point_set_diameter(regions[0].cloud.coords[bits]))
    return Profile("diameter", r, np.array(diam))


@dataclass
class ExcisivenessReport:
    r_samples: np.ndarray
    f_hat: np.ndarray
    mu_hat: float | None
    verdict: str
    slope: float | None = None
    power_sse: float | None = None
    exp_sse: float | None = None

    def profile(self) -> Profile:
        return Profile("f_hat", self.r_samples, self.f_hat, self.mu_hat)


POLYNOMIAL = "polynomial-like"
NON_POLYNOMIAL = "non-polynomial-like"
INCONCLUSIVE = "inconclusive"


def excisiveness_profile(regions: Sequence[RegionMask], r_samples) -> ExcisivenessReport:
    """Smallest s with  (cap of Z_n thickened by r)  inside  (cap of Z_n) thickened by s.

    The verdict compares a power-law fit (log f vs log r) with an exponential
    fit (log f vs r): the power law must fit at least as well to count as
    polynomial-like.
    """
    if len(regions) < 2:
        raise ArgumentError("need at least two regions")
    _check_same(*(z.cloud for z in regions))
    r = _check_radii(r_samples)
    core = intersect(regions)
    core_dist = core.distances()
    dist = [z.distances() for z in regions]
    f_hat = []
    for radius in r:
        bits = np.logical_and.reduce([d <= radius + DIST_EPS for d in dist])
        if not bits.any():
            f_hat.append(0.0)
        else:
            f_hat.append(float(core_dist[bits].max()))
    f_hat = np.array(f_hat)

    if np.any(np.isinf(f_hat)):
        return ExcisivenessReport(r, f_hat, None, NON_POLYNOMIAL)
    ok = (r > 0) & (f_hat > 0)
    if ok.sum() < MIN_FIT_POINTS:
        return ExcisivenessReport(r, f_hat, None, INCONCLUSIVE)
    lr, lf = np.log(r[ok]), np.log(f_hat[ok])
    pw = np.polyfit(lr, lf, 1, full=True)
    ex = np.polyfit(r[ok], lf, 1, full=True)
    slope = float(pw[0][0])
    power_sse = float(pw[1][0]) if len(pw[1]) else 0.0
    exp_sse = float(ex[1][0]) if len(ex[1]) else 0.0
    verdict = POLYNOMIAL if power_sse <= exp_sse else NON_POLYNOMIAL
    return ExcisivenessReport(r, f_hat, max(slope, 1.0), verdict, slope, power_sse, exp_sse)


# ---------------------------------------------------------------- tilings

@dataclass(frozen=True, eq=False)
class Tiling:
    """Disjoint grid cells of side ``r0/sqrt(2)`` covering the cloud."""

    cloud: SiteCloud
    r0: float
    cell_of: np.ndarray
    cells: tuple[np.ndarray, ...]
    keys: np.ndarray = field(repr=False)

    @property
    def n_tiles(self) -> int:
        return len(self.cells)

    @property
    def side(self) -> float:
        return self.r0 / math.sqrt(2.0)

    @cached_property
    def padded(self) -> np.ndarray:
        """(T, m) site indices per tile, padded with -1."""
        m = max(len(c) for c in self.cells)
        out = np.full((self.n_tiles, m), -1, dtype=int)
        for t, c in enumerate(self.cells):
            out[t, :len(c)] = c
        return out

    @cached_property
    def distances(self) -> np.ndarray:
        """(T, T) tile-to-tile distances d(V, W) = min over site pairs."""
        idx = self.padded
        pts = self.cloud.coords[np.where(idx >= 0, idx, 0)]
        pts = np.where((idx >= 0)[..., None], pts, np.nan)
        T = self.n_tiles
        out = np.empty((T, T))
        step = max(1, 4_000_000 // max(1, T * idx.shape[1] ** 2))
        for s in range(0, T, step):
            a = pts[s:s + step, None, :, None, :]
            b = pts[None, :, None, :, :]
            d = np.sqrt(((a - b) ** 2).sum(-1))
            out[s:s + step] = np.nanmin(d.reshape(d.shape[0], T, -1), axis=2)
        return out

    def region_distances(self, z: RegionMask) -> np.ndarray:
        """d(V, Z) for each tile V."""
        d = z.distances()
        return np.array([d[c].min() for c in self.cells])

    def tiles_within(self, z: RegionMask) -> np.ndarray:
        """Indices of tiles entirely contained in ``z``."""
        return np.array([t for t, c in enumerate(self.cells) if z.bits[c].all()], dtype=int)

    def local_finiteness(self, r: float) -> int:
        """Max number of tiles met by a ball of radius r centred at a site."""
        balls = self.cloud.tree.query_ball_point(self.cloud.coords, r + DIST_EPS)
        return max(len(np.unique(self.cell_of[b])) for b in balls)

    def validate(self, probe_radii=(1.0, 2.0, 4.0)) -> dict[float, int]:
        """Check tiling properties; returns the local-finiteness constant per probe radius."""
        seen = np.zeros(self.cloud.n_sites, dtype=int)
        for c in self.cells:
            seen[c] += 1
        if np.any(seen != 1):
            raise ArgumentError("tiles are not a disjoint cover of the cloud")
        for t, c in enumerate(self.cells):
            if not np.all(self.cell_of[c] == t):
                raise ArgumentError(f"cell_of disagrees with tile {t}")
            if _point_set_diameter(self.cloud.coords[c]) > self.r0 + DIST_EPS:
                raise ArgumentError(f"tile {t} has diameter above r0={self.r0}")
        return {float(r): self.local_finiteness(r) for r in probe_radii}


def build_tiling(cloud: SiteCloud, r0: float) -> Tiling:
    if r0 <= 0:
        raise ArgumentError("r0 must be positive")
    side = r0 / math.sqrt(2.0)
    key = np.floor((cloud.coords - cloud.coords.min(axis=0)) / side + DIST_EPS).astype(np.int64)
    keys, cell_of = np.unique(key, axis=0, return_inverse=True)
    cell_of = cell_of.ravel()
    order = np.argsort(cell_of, kind="stable")
    bounds = np.searchsorted(cell_of[order], np.arange(len(keys) + 1))
    cells = tuple(_readonly(order[bounds[t]:bounds[t + 1]]) for t in range(len(keys)))
    return Tiling(cloud, float(r0), _readonly(cell_of), cells, _readonly(keys))


def volume_growth_profile(cloud: SiteCloud, r_samples) -> Profile:
    """Largest ball population sup_x #B(x, r) per radius, with log-log exponent."""
    r = _check_radii(r_samples)
    pops = np.array([
        cloud.tree.query_ball_point(cloud.coords, radius + DIST_EPS, return_length=True).max()
        for radius in r
    ], dtype=float)
    return Profile("population", r, pops, loglog_slope(r, pops))


# ---------------------------------------------------------------- serialization

def save_cloud(cloud: SiteCloud, path) -> None:
    Path(path).write_text(json.dumps(cloud.to_json()))


def load_cloud(path) -> SiteCloud:
    return SiteCloud.from_json(json.loads(Path(path).read_text()))
