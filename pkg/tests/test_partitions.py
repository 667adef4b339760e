import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.distance import cdist

from coarse_hall.errors import ArgumentError
from coarse_hall.geometry import RegionMask, build_poisson_cloud, build_square_lattice
from coarse_hall.partitions import (HalfSpacePair, QPartition, bisector_region, bulk_window,
                                    cloud_center, coordinate_halfspaces, elementary_cobordism,
                                    halfspaces_to_partition, load_partition,
                                    partition_to_halfspaces, save_partition, sector_partition)

CUTS = [math.radians(a) for a in (90, 210, 330)]


def _random_partition(c, rng):
    labels = rng.integers(0, 3, c.n_sites)
    return QPartition(tuple(RegionMask(labels == k, c) for k in range(3)))


# ---------------------------------------------------------------- half-spaces

def test_halfspace_count():
    c = build_square_lattice(32, 32)
    assert coordinate_halfspaces(c, 15.5, 15.5).X.count == 512


def test_halfspace_degenerate():
    c = build_square_lattice(6, 6)
    hs = coordinate_halfspaces(c, -1.0, 2.5)
    assert hs.X.count == c.n_sites
    assert (~hs.X).is_empty


def test_quadrants_partition_cloud():
    c = build_poisson_cloud(1.0, 10, 10, seed=3)
    q = coordinate_halfspaces(c, 4.2, 6.1).quadrants
    counts = sum(z.bits.astype(int) for z in q.values())
    assert np.all(counts == 1)


# ---------------------------------------------------------------- sectors

def test_sectors_match_square_areas():
    # exact share of a centred square cut at 90/210/330 degrees: the sector
    # through the bottom edge gets (2 - tan 30)/4, the other two (2 + tan 30)/8
    c = build_square_lattice(32, 32)
    p = sector_partition(c, cloud_center(c), CUTS)
    n = c.n_sites
    t = math.tan(math.radians(30))
    shares = [(2 + t) / 8, (2 - t) / 4, (2 + t) / 8]
    assert sum(p.sizes()) == n
    for size, share in zip(p.sizes(), shares):
        assert abs(size - share * n) <= 0.02 * share * n
    assert all(abs(s - n / 3) <= 0.08 * n / 3 for s in p.sizes())


def test_sectors_rotation_permutes_cyclically():
    # odd side with the centre on a site: 120 degree rotation is not a lattice
    # symmetry, so compare against brute-force angular counting instead
    c = build_square_lattice(33, 33)
    center = cloud_center(c)
    base = sector_partition(c, center, CUTS)
    rot = sector_partition(c, center, [a + 2 * math.pi / 3 for a in CUTS])
    ang = np.mod(np.arctan2(c.coords[:, 1] - 16, c.coords[:, 0] - 16), 2 * math.pi)
    for p, cuts in ((base, CUTS), (rot, [a + 2 * math.pi / 3 for a in CUTS])):
        for k in range(3):
            lo = cuts[k] % (2 * math.pi)
            width = 2 * math.pi / 3
            inside = np.mod(ang - lo + 1e-9, 2 * math.pi) < width
            assert p[k].count == int(inside.sum())
    # rotated part k starts where base part k+1 starts
    assert rot.sizes() == base.sizes()[1:] + base.sizes()[:1]


def test_sectors_coincident_cuts():
    c = build_square_lattice(4, 4)
    with pytest.raises(ArgumentError):
        sector_partition(c, (1.5, 1.5), [0.0, 2 * math.pi, 1.0])


def test_partition_validator_rejects_overlap():
    c = build_square_lattice(3, 3)
    with pytest.raises(ArgumentError):
        QPartition((c.full(), c.from_indices([0]), c.empty()))


# ---------------------------------------------------------------- conversions

def test_halfspaces_to_partition_sizes():
    c = build_square_lattice(32, 32)
    p = halfspaces_to_partition(coordinate_halfspaces(c, 15.5, 15.5))
    assert p.sizes() == (512, 256, 256)


def test_halfspaces_full_x():
    c = build_square_lattice(5, 5)
    p = halfspaces_to_partition(HalfSpacePair(c.full(), c.from_indices([1, 2])))
    assert p.sizes() == (25, 0, 0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_halfspaces_to_partition_valid(seed):
    rng = np.random.default_rng(seed)
    c = build_square_lattice(7, 5)
    X = RegionMask(rng.random(c.n_sites) < 0.5, c)
    Y = RegionMask(rng.random(c.n_sites) < 0.5, c)
    p = halfspaces_to_partition(HalfSpacePair(X, Y))
    assert sum(p.sizes()) == c.n_sites


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_round_trip(seed):
    rng = np.random.default_rng(seed)
    c = build_poisson_cloud(1.0, 8, 8, seed=seed % 1000)
    p = _random_partition(c, rng)
    assert halfspaces_to_partition(partition_to_halfspaces(p)).equals(p)


def test_round_trip_sectors():
    c = build_square_lattice(64, 64)
    p = sector_partition(c, cloud_center(c), CUTS)
    assert halfspaces_to_partition(partition_to_halfspaces(p)).equals(p)


def test_empty_b_gives_empty_w():
    c = build_square_lattice(6, 6)
    x = c.coords[:, 0]
    p = QPartition((RegionMask(x < 3, c), c.empty(), RegionMask(x >= 3, c)))
    assert bisector_region(p).is_empty


def test_bisector_is_half_of_a():
    c = build_square_lattice(64, 64)
    p = sector_partition(c, cloud_center(c), CUTS)
    A, B, C = p.parts
    W = bisector_region(p)
    assert W.issubset(A)
    dB = cdist(W.points(), B.points()).min(axis=1)
    dC = cdist(W.points(), C.points()).min(axis=1)
    assert np.all(dB <= dC + 1e-12)
    rest = A - W
    assert np.all(cdist(rest.points(), B.points()).min(axis=1)
                  > cdist(rest.points(), C.points()).min(axis=1))
    assert abs(W.count - A.count / 2) <= 0.05 * A.count


def test_partition_file_roundtrip(tmp_path):
    c = build_square_lattice(5, 4)
    p = _random_partition(c, np.random.default_rng(0))
    save_partition(p, tmp_path / "p.json")
    assert load_partition(tmp_path / "p.json", c).equals(p)


# ---------------------------------------------------------------- cobordism

def _quadrant_setup():
    c = build_square_lattice(12, 12)
    hs = coordinate_halfspaces(c, 5.5, 5.5)
    X, Y = hs.X, hs.Y
    return c, X, Y, QPartition((X, Y - X, ~(X | Y)))


def test_cobordism_empty_w():
    c, X, Y, p = _quadrant_setup()
    assert elementary_cobordism(p, 0, 1, c.empty()).partition.equals(p)


def test_cobordism_whole_part():
    c, X, Y, p = _quadrant_setup()
    moved = elementary_cobordism(p, 0, 1, X).partition
    assert moved[0].is_empty
    assert moved[1].equals(X | p[1])


def test_cobordism_quadrant_move():
    c, X, Y, p = _quadrant_setup()
    moved = elementary_cobordism(p, 0, 1, X & Y).partition
    assert moved.equals(QPartition((X - Y, Y, ~(X | Y))))


def test_cobordism_requires_subset():
    c, X, Y, p = _quadrant_setup()
    with pytest.raises(ArgumentError):
        elementary_cobordism(p, 0, 1, Y)


# ---------------------------------------------------------------- bulk window

def test_window_near_triple_point():
    c = build_square_lattice(40, 40)
    center = cloud_center(c)
    p = sector_partition(c, center, CUTS)
    for r in (2, 4, 6, 8):
        K = bulk_window(p, r)
        pts = K.points()
        assert np.any(np.all(np.abs(pts - center) <= 0.5, axis=1))
        assert np.all(np.hypot(*(pts - center).T) <= r * math.sqrt(2) + 1e-9)


def test_window_empty_for_separated_parts():
    c = build_square_lattice(30, 3)
    x = c.coords[:, 0]
    p = QPartition((RegionMask(x < 10, c), RegionMask((x >= 10) & (x < 20), c),
                    RegionMask(x >= 20, c)))
    assert bulk_window(p, 4.0).is_empty


def test_window_monotone():
    c = build_square_lattice(24, 24)
    p = sector_partition(c, cloud_center(c), CUTS)
    prev = None
    for r in (1, 2, 3, 5, 8, 13):
        K = bulk_window(p, r)
        if prev is not None:
            assert prev.issubset(K)
        prev = K
