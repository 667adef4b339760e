import math

import numpy as np
import pytest

from coarse_hall.errors import ArgumentError, ContractError, GapError
from coarse_hall.geometry import build_poisson_cloud, build_square_lattice, lattice_index
from coarse_hall.models import (Hamiltonian, amorphous_magnetic, checkerboard_trivial,
                                fermi_projection, hofstadter, hofstadter_band_edges,
                                hofstadter_gap_energy, interior_mask, landau_gap_energy,
                                magnetic_bloch_hamiltonian, onsite_disorder, parse_flux, spectrum,
                                symmetric_gauge_phase)


# ---------------------------------------------------------------- Hofstadter

def test_zero_flux_is_real():
    H = hofstadter(build_square_lattice(6, 5), 0)
    assert np.array_equal(H.matrix, H.matrix.conj())
    assert np.array_equal(H.matrix, H.matrix.T)


def test_half_flux_plaquette_phase():
    c = build_square_lattice(2, 2)
    m = hofstadter(c, "1/2", 1.0).matrix
    s = [lattice_index(c, *ij) for ij in ((0, 0), (1, 0), (1, 1), (0, 1))]
    # hopping amplitude for i -> j is m[j, i]; walk the plaquette counterclockwise
    loop = np.prod([m[s[(k + 1) % 4], s[k]] / -1.0 for k in range(4)])
    assert loop == pytest.approx(-1.0, abs=1e-15)


@pytest.mark.parametrize("flux", ["1/3", "1/4", "2/7"])
def test_plaquette_flux(flux):
    c = build_square_lattice(5, 4)
    m = hofstadter(c, flux).matrix
    for i in range(4):
        for j in range(3):
            s = [lattice_index(c, *ij) for ij in ((i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1))]
            loop = np.prod([-m[s[(k + 1) % 4], s[k]] for k in range(4)])
            assert loop == pytest.approx(np.exp(2j * math.pi * float(parse_flux(flux))), abs=1e-13)


def test_hofstadter_requires_lattice():
    with pytest.raises(ArgumentError):
        hofstadter(build_poisson_cloud(1.0, 5, 5, seed=1), "1/4")


def test_flux_quarter_gaps():
    # two open bulk gaps; the middle bands touch at E = 0
    c = build_square_lattice(32, 32)
    H = hofstadter(c, "1/4")
    info = spectrum(H, 0.5, bulk=interior_mask(c, 4))
    assert len(info.gaps) == 2
    assert all(g[2] > 0.5 for g in info.gaps)
    edges = hofstadter_band_edges("1/4")
    assert edges[1, 1] == pytest.approx(edges[2, 0], abs=1e-12)
    with pytest.raises(GapError):
        hofstadter_gap_energy("1/4", 2)


def test_flux_third_three_bands():
    c = build_square_lattice(24, 24)
    info = spectrum(hofstadter(c, "1/3"), 0.3, bulk=interior_mask(c, 4))
    assert len(info.gaps) == 2  # three bulk bands
    edges = hofstadter_band_edges("1/3")
    assert np.all(edges[1:, 0] > edges[:-1, 1])


def test_bloch_hamiltonian_matches_band_edges_at_zero_field():
    # flux 0: single band -2t(cos kx + cos ky) spanning [-4t, 4t]
    e = [magnetic_bloch_hamiltonian("0", kx, ky)[0, 0].real
         for kx in np.linspace(0, 2 * math.pi, 9) for ky in np.linspace(0, 2 * math.pi, 9)]
    assert min(e) == pytest.approx(-4.0)
    assert max(e) == pytest.approx(4.0)


# ---------------------------------------------------------------- amorphous

def test_amorphous_zero_field_real():
    c = build_poisson_cloud(1.0, 8, 8, seed=5)
    H = amorphous_magnetic(c, 1.5, 1.0, 0.0)
    assert np.array_equal(H.matrix, H.matrix.conj())
    assert np.array_equal(H.matrix, H.matrix.T)


def test_gauge_phase_antisymmetric():
    c = build_poisson_cloud(1.0, 8, 8, seed=5)
    theta = symmetric_gauge_phase(c, 0.7)
    assert np.array_equal(theta + theta.T, np.zeros_like(theta))


def test_amorphous_hermitian_and_local():
    c = build_poisson_cloud(1.0, 10, 10, seed=2)
    H = amorphous_magnetic(c, 1.8, 1.0, 2 * math.pi / 8)
    H.validate()
    assert H.hermiticity_defect() == 0.0
    assert H.locality_violation() == 0.0


def test_amorphous_landau_gap():
    c = build_poisson_cloud(1.0, 30, 30, seed=1)
    H = amorphous_magnetic(c, 1.4, 1.0, 2 * math.pi / 8)
    info = spectrum(H, 0.2, bulk=interior_mask(c, 4))
    assert len(info.gaps) >= 1


def test_amorphous_default_range_fills_one_level():
    c = build_poisson_cloud(1.0, 20, 20, seed=0)
    B = 2 * math.pi / 8
    H = amorphous_magnetic(c, 2.6, 1.0, B)
    E = landau_gap_energy(H, B)
    rank = fermi_projection(H, E).rank
    box = np.prod(c.coords.max(axis=0) - c.coords.min(axis=0))
    assert abs(rank - B * box / (2 * math.pi)) <= 0.25 * B * box / (2 * math.pi)


# ---------------------------------------------------------------- checkerboard

def test_checkerboard_real():
    H = checkerboard_trivial(build_square_lattice(6, 6), 1.0, 3.0)
    assert np.array_equal(H.matrix, H.matrix.conj())


@pytest.mark.parametrize("n", [6, 10])
def test_checkerboard_strong_stagger(n):
    c = build_square_lattice(n, n)
    fp = fermi_projection(checkerboard_trivial(c, 1.0, 10.0), 0.0)
    assert fp.rank == math.ceil(c.n_sites / 2)
    i, j = c.coords[:, 0].astype(int), c.coords[:, 1].astype(int)
    odd = ((i + j) % 2 == 1).astype(float)
    assert np.abs(fp.matrix - np.diag(odd)).max() < 0.05


def test_checkerboard_chiral_symmetry():
    # delta must be positive, so strip the staggered onsite term by hand
    c = build_square_lattice(6, 8)
    m = checkerboard_trivial(c, 1.0, 1.0).matrix
    w, _ = Hamiltonian(m - np.diag(np.diag(m)), c).eigh
    assert np.allclose(np.sort(w), np.sort(-w), atol=1e-12)


def test_checkerboard_rejects_nonpositive_delta():
    with pytest.raises(ArgumentError):
        checkerboard_trivial(build_square_lattice(2, 2), 1.0, 0.0)


# ---------------------------------------------------------------- Fermi projections

def test_projection_below_and_above_spectrum():
    H = hofstadter(build_square_lattice(5, 5), "1/5")
    w, _ = H.eigh
    low = fermi_projection(H, w[0] - 1)
    high = fermi_projection(H, w[-1] + 1)
    assert low.rank == 0 and np.abs(low.matrix).max() == 0
    assert high.rank == 25
    assert np.allclose(high.matrix, np.eye(25), atol=1e-12)


def test_quarter_flux_first_gap_rank():
    c = build_square_lattice(32, 32)
    H = hofstadter(c, "1/4")
    E = hofstadter_gap_energy("1/4", 1)
    fp = fermi_projection(H, E)
    edges = hofstadter_band_edges("1/4")
    w, _ = H.eigh
    edge_states = int(np.sum((w > edges[0, 1]) & (w < edges[1, 0])))
    assert abs(fp.rank - c.n_sites // 4) <= edge_states
    assert fp.idempotency_defect() < 1e-12


def test_projection_inside_spectrum():
    H = hofstadter(build_square_lattice(6, 6), "1/4")
    w, _ = H.eigh
    with pytest.raises(GapError, match="nearest gap"):
        fermi_projection(H, float(w[10]))


def test_projection_contract():
    H = hofstadter(build_square_lattice(8, 8), "1/4")
    fp = fermi_projection(H, -1.5)
    lo, hi = fp.gap
    assert lo < fp.fermi_energy < hi
    assert abs(np.trace(fp.matrix).real - fp.rank) < 1e-9


# ---------------------------------------------------------------- spectra

def test_single_site_spectrum():
    c = build_square_lattice(1, 1)
    info = spectrum(Hamiltonian(np.zeros((1, 1)), c))
    assert info.eigenvalues.tolist() == [0.0]


def test_spectrum_shift():
    H = hofstadter(build_square_lattice(8, 8), "1/3")
    c = 0.37
    a = spectrum(H).eigenvalues
    b = spectrum(H.shifted(c)).eigenvalues
    assert np.abs(b - a - c).max() <= 1e-12 * max(1.0, float(np.abs(H.matrix).max())) * 8


def test_hamiltonian_shape_check():
    with pytest.raises(ArgumentError):
        Hamiltonian(np.zeros((3, 3)), build_square_lattice(2, 2))


def test_validate_rejects_nonhermitian():
    c = build_square_lattice(2, 2)
    m = np.zeros((4, 4), dtype=complex)
    m[0, 1] = 1.0
    with pytest.raises(ContractError):
        Hamiltonian(m, c).validate()


def test_disorder_seeded():
    a = onsite_disorder(50, 0.05, 3)
    assert np.array_equal(a, onsite_disorder(50, 0.05, 3))
    assert np.all(np.abs(a) <= 0.05)
