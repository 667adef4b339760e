import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coarse_hall import experiments as ex
from coarse_hall import operators as ops
from coarse_hall.errors import ArgumentError
from coarse_hall.geometry import RegionMask, SiteCloud, build_square_lattice, build_tiling
from coarse_hall.models import hofstadter, interior_mask


def _random_regions(c, rng, k=3):
    labels = rng.integers(0, k, c.n_sites)
    return [RegionMask(labels == i, c) for i in range(k)]


def _idempotent(n, rng, hermitian=False):
    return ex.random_idempotent(n, int(rng.integers(0, n + 1)), rng, hermitian=hermitian)


# ---------------------------------------------------------------- compressions

def test_compress_full_region(rng):
    c = build_square_lattice(4, 3)
    P = _idempotent(c.n_sites, rng)
    assert np.allclose(ops.as_matrix(ops.compress(P, c.full())), P @ P, atol=1e-12)
    assert np.allclose(ops.as_matrix(ops.compress(P, c.full())), P, atol=1e-10)


def test_compress_empty_region(rng):
    c = build_square_lattice(4, 3)
    P = _idempotent(c.n_sites, rng)
    assert not np.any(ops.as_matrix(ops.compress(P, c.empty())))


def test_compress_identity(rng):
    c = build_square_lattice(5, 2)
    Z = RegionMask(rng.random(c.n_sites) < 0.5, c)
    out = ops.as_matrix(ops.compress(ops.SiteOperator.identity(c), Z))
    assert np.array_equal(out, np.diag(Z.as_float()))


def test_mask_commutator_definition(rng):
    c = build_square_lattice(4, 4)
    P = _idempotent(c.n_sites, rng)
    Z = RegionMask(rng.random(c.n_sites) < 0.5, c)
    D = np.diag(Z.as_float())
    assert np.allclose(ops.as_matrix(ops.mask_commutator(Z, P)), D @ P - P @ D, atol=1e-14)


# ---------------------------------------------------------------- generalized commutator

def _brute_generalized_commutator(A, B, C, P):
    """Six-term sum written out with dense diagonal projections."""
    a, b, c = (np.diag(z.as_float()) for z in (A, B, C))
    t = lambda x, y, z: P @ x @ P @ y @ P @ z @ P
    return t(a, b, c) + t(b, c, a) + t(c, a, b) - t(b, a, c) - t(a, c, b) - t(c, b, a)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 12))
def test_generalized_commutator_matches_six_terms(seed, n):
    rng = np.random.default_rng(seed)
    c = build_square_lattice(n, 1)
    P = _idempotent(n, rng)
    A, B, C = _random_regions(c, rng)
    got = ops.as_matrix(ops.generalized_commutator(A, B, C, P))
    assert np.allclose(got, _brute_generalized_commutator(A, B, C, P), atol=1e-10)
    tr = ops.generalized_commutator_trace(A, B, C, P)
    assert abs(tr - np.trace(got)) < 1e-10


def test_repeated_entry_vanishes(rng):
    c = build_square_lattice(4, 4)
    P = _idempotent(c.n_sites, rng)
    A, B, _ = _random_regions(c, rng)
    assert np.abs(ops.as_matrix(ops.generalized_commutator(A, B, A, P))).max() < 1e-12


def test_full_entry_gives_compression_commutator(rng):
    c = build_square_lattice(5, 5)
    P = _idempotent(c.n_sites, rng)
    A, B, _ = _random_regions(c, rng)
    PA, PB = (ops.as_matrix(ops.compress(P, z)) for z in (A, B))
    lhs = ops.as_matrix(ops.generalized_commutator(A, B, c.full(), P))
    scale = max(1.0, ops.op_norm(P)) ** 3
    assert np.abs(lhs - (PA @ PB - PB @ PA)).max() <= 1e-12 * scale


def test_additivity_in_first_slot(rng):
    c = build_square_lattice(8, 1)
    P = _idempotent(8, rng)
    parts = _random_regions(c, rng, 4)
    A, A2, B, C = parts
    lhs = ops.as_matrix(ops.generalized_commutator(A | A2, B, C, P))
    rhs = ops.as_matrix(ops.generalized_commutator(A, B, C, P)) + ops.as_matrix(
        ops.generalized_commutator(A2, B, C, P))
    assert np.abs(lhs - rhs).max() <= 1e-12 * max(1.0, ops.op_norm(P)) ** 3


# ---------------------------------------------------------------- trace norms

def test_block_trace_norm_identity_site():
    c = build_square_lattice(3, 3)
    z = c.from_indices([4])
    assert ops.block_trace_norm(ops.SiteOperator.identity(c), z, z) == pytest.approx(1.0)


def test_block_trace_norm_disjoint_support(rng):
    c = build_square_lattice(4, 1)
    L = np.zeros((4, 4), dtype=complex)
    L[:2, :] = rng.normal(size=(2, 4))
    assert ops.block_trace_norm(L, c.from_indices([2, 3]), c.full()) == 0.0


def test_block_trace_norm_full_matches_svd(rng):
    c = build_square_lattice(6, 1)
    L = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    ref = np.linalg.svd(L, compute_uv=False).sum()
    assert ops.block_trace_norm(L, c.full(), c.full()) == pytest.approx(ref, rel=1e-14)


def test_block_norms_match_direct_blocks(rng):
    c = build_square_lattice(6, 6)
    t = build_tiling(c, 2.5)
    L = rng.normal(size=(36, 36))
    norms = ops.block_norms(L, t)
    for v in range(t.n_tiles):
        for w in range(0, t.n_tiles, 2):
            V, W = c.from_indices(t.cells[v]), c.from_indices(t.cells[w])
            assert norms[v, w] == pytest.approx(ops.block_trace_norm(L, V, W), rel=1e-12)


# ---------------------------------------------------------------- seminorms

@pytest.mark.parametrize("nu", [0.0, 1.0, 2.0, 8.0])
def test_identity_bracket_seminorm(nu):
    c = build_square_lattice(6, 6)
    t = build_tiling(c, 1.0)
    assert ops.seminorm(ops.SiteOperator.identity(c), nu, t, "bracket") == pytest.approx(1.0)


@pytest.mark.parametrize("kind", ["bracket", "sum"])
@pytest.mark.parametrize("nu", [0.0, 4.0])
def test_zero_operator_seminorm(kind, nu):
    c = build_square_lattice(5, 5)
    t = build_tiling(c, 2.0)
    z = c.from_indices([0])
    assert ops.seminorm(ops.SiteOperator.zeros(c), nu, t, kind) == 0.0
    assert ops.seminorm(ops.SiteOperator.zeros(c), nu, t, kind, Z=z) == 0.0


def test_seminorm_rejects_bad_input():
    c = build_square_lattice(3, 3)
    t = build_tiling(c, 2.0)
    with pytest.raises(ArgumentError):
        ops.seminorm(np.eye(9), -1.0, t)
    with pytest.raises(ArgumentError):
        ops.seminorm(np.eye(9), 1.0, t, "max")


def _central_seminorms(size):
    s = ex.build_sample({"model": {"name": "hofstadter", "size": size, "flux": "1/4"},
                         "fermi": {"gap": 1}})
    c = s.cloud
    cx, cy = s.center
    box = RegionMask((np.abs(c.coords[:, 0] - cx) <= 6.5) & (np.abs(c.coords[:, 1] - cy) <= 6.5), c)
    t = build_tiling(c, 2 * math.sqrt(2))
    P = s.projection()
    return {k: ops.seminorm(P, 8.0, t, k, restrict=box) for k in ("bracket", "sum")}


def test_seminorm_stable_across_sizes():
    small, large = _central_seminorms(24), _central_seminorms(32)
    for kind in ("bracket", "sum"):
        assert math.isfinite(large[kind])
        assert abs(small[kind] - large[kind]) <= 0.05 * large[kind]


def test_seminorm_report_rows():
    c = build_square_lattice(6, 6)
    t = build_tiling(c, 2.0)
    rep = ops.seminorm_report(np.eye(36), t, nus=(0, 2), zones={"corner": c.from_indices([0])})
    assert len(rep.rows()) == 2 * 2 * 2
    assert all(v >= 0 for *_, v in rep.rows())


# ---------------------------------------------------------------- propagation

def test_propagation_diagonal(rng):
    c = build_square_lattice(4, 4)
    L = np.diag(rng.normal(size=16))
    assert ops.propagation_radius(L, 1e-3, c) == 0.0


def test_propagation_nearest_neighbour():
    c = build_square_lattice(6, 6)
    H = hofstadter(c, "1/4", 1.0)
    assert ops.propagation_radius(H.matrix, 0.5, c) == pytest.approx(1.0)


def test_propagation_grows_logarithmically(hof32, hof32_projection):
    # restrict to interior sites so edge channels do not dominate
    c = hof32.cloud
    idx = interior_mask(c, 6).indices()
    sub = SiteCloud(c.coords[idx])
    P = hof32_projection[np.ix_(idx, idx)]
    x = np.arange(1, 6)
    radii = np.array([ops.propagation_radius(P, 10.0 ** -k, sub) for k in x])
    assert np.all(np.diff(radii) >= 0)
    slope, intercept = np.polyfit(x, radii, 1)
    resid = radii - (slope * x + intercept)
    assert 1.0 <= slope <= 6.0
    assert np.abs(resid).max() <= 0.25 * radii.max()


# ---------------------------------------------------------------- decay profiles

def test_identity_decay_only_zero_bin():
    c = build_square_lattice(8, 8)
    t = build_tiling(c, 2.0)
    prof = ops.decay_profile(np.eye(64), t, [0, 0.5, 2, 4, 8])
    assert prof.value[0] > 0
    assert np.all(np.nan_to_num(prof.value[1:]) == 0)


def test_gapped_projection_decays(hof32, hof32_projection):
    t = build_tiling(hof32.cloud, 2 * math.sqrt(2))
    prof = ops.decay_profile(hof32_projection, t, np.arange(0, 13),
                             restrict=interior_mask(hof32.cloud, 4))
    assert prof.slope() <= -0.2


def test_decay_profile_adjoint(rng):
    c = build_square_lattice(8, 8)
    t = build_tiling(c, 2.0)
    L = rng.normal(size=(64, 64)) + 1j * rng.normal(size=(64, 64))
    a = ops.decay_profile(L, t, [0, 1, 2, 4, 8, 16])
    b = ops.decay_profile(L.conj().T, t, [0, 1, 2, 4, 8, 16])
    assert np.allclose(a.value, b.value, rtol=1e-12, equal_nan=True)
    sym = ops.block_norms(L, t)
    assert np.allclose(sym, ops.block_norms(L.conj().T, t).T, rtol=1e-12)


def test_decay_bins_validated():
    c = build_square_lattice(3, 3)
    with pytest.raises(ArgumentError):
        ops.decay_profile(np.eye(9), build_tiling(c, 2.0), [2, 1])


# ---------------------------------------------------------------- dumps

@pytest.mark.parametrize("fmt", ["json", "binary"])
def test_operator_dump_roundtrip(tmp_path, rng, fmt):
    c = build_square_lattice(3, 4)
    L = rng.normal(size=(12, 12)) + 1j * rng.normal(size=(12, 12))
    dump = getattr(ops, f"dump_operator_{fmt}")
    load = getattr(ops, f"load_operator_{fmt}")
    dump(L, c, tmp_path / "op")
    assert np.array_equal(load(tmp_path / "op", c), L)
    with pytest.raises(ArgumentError):
        load(tmp_path / "op", build_square_lattice(4, 3))
