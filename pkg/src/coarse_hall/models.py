"""Gapped tight-binding Hamiltonians and their Fermi projections.

Gauges are fixed: Landau gauge (phase on vertical bonds, depending on the
column) for the square lattice, symmetric gauge for point clouds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np

from .errors import ArgumentError, ContractError, GapError, NumericalError
from .geometry import DIST_EPS, RegionMask, SiteCloud

HERMITIAN_RTOL = 1e-12
IDEMPOTENT_TOL = 1e-10
TRACE_TOL = 1e-8
GAP_MARGIN_REL = 1e-6


def parse_flux(flux) -> Fraction:
    """Accept '1/4', Fraction(1, 4), 0.25, or (1, 4)."""
    if isinstance(flux, Fraction):
        return flux
    if isinstance(flux, (tuple, list)):
        return Fraction(int(flux[0]), int(flux[1]))
    if isinstance(flux, str):
        return Fraction(flux.strip())
    if isinstance(flux, int):
        return Fraction(flux)
    return Fraction(float(flux)).limit_denominator(1000)


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    matrix: np.ndarray
    cloud: SiteCloud
    params: dict = field(default_factory=dict)
    hop_range: float = math.inf

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        n = self.cloud.n_sites
        if m.shape != (n, n):
            raise ArgumentError(f"matrix shape {m.shape} does not match {n} sites")
        m = np.ascontiguousarray(m)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n_sites(self) -> int:
        return self.cloud.n_sites

    def norm(self) -> float:
        return float(np.abs(self.matrix).max()) if self.matrix.size else 0.0

    def hermiticity_defect(self) -> float:
        return float(np.abs(self.matrix - self.matrix.conj().T).max())

    def locality_violation(self) -> float:
        """Largest |H_ij| over pairs farther apart than the hopping range."""
        if not math.isfinite(self.hop_range):
            return 0.0
        far = self.cloud.distance_matrix() > self.hop_range + DIST_EPS
        return float(np.abs(self.matrix[far]).max()) if far.any() else 0.0

    def validate(self) -> None:
        scale = max(self.norm(), 1.0)
        if self.hermiticity_defect() > HERMITIAN_RTOL * scale:
            raise ContractError(f"Hamiltonian not Hermitian (defect {self.hermiticity_defect():.3e})")
        if self.locality_violation() > 0:
            raise ContractError("Hamiltonian hops beyond its declared range")

    def is_real(self, tol: float = 0.0) -> bool:
        return bool(np.abs(self.matrix.imag).max() <= tol)

    @cached_property
    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues (ascending) and eigenvectors, computed once."""
        try:
            w, v = np.linalg.eigh(self.matrix)
        except np.linalg.LinAlgError as exc:
            cond = np.linalg.cond(self.matrix)
            raise NumericalError(f"eigensolver failed (condition number {cond:.3e}): {exc}") from exc
        w.setflags(write=False)
        v.setflags(write=False)
        return w, v

    def with_onsite(self, potential) -> "Hamiltonian":
        pot = np.asarray(potential, dtype=float)
        m = self.matrix + np.diag(pot)
        params = dict(self.params, onsite=True)
        return Hamiltonian(m, self.cloud, params, self.hop_range)

    def shifted(self, c: float) -> "Hamiltonian":
        return self.with_onsite(np.full(self.n_sites, float(c)))

    def gauge_transformed(self, phases) -> "Hamiltonian":
        """D H D^* with D = diag(exp(i * phases))."""
        d = np.exp(1j * np.asarray(phases, dtype=float))
        m = d[:, None] * self.matrix * d.conj()[None, :]
        return Hamiltonian(m, self.cloud, dict(self.params, gauge="transformed"), self.hop_range)

    def on(self, cloud: SiteCloud) -> "Hamiltonian":
        """The same matrix attached to another cloud with the same site count."""
        return Hamiltonian(self.matrix, cloud, dict(self.params), self.hop_range)


def _require_lattice(cloud: SiteCloud) -> tuple[int, int]:
    if cloud.shape is None:
        raise ArgumentError("this model needs a square lattice built by build_square_lattice")
    return cloud.shape


def _nn_bonds(cloud: SiteCloud):
    """(from, to, column) for horizontal and vertical nearest-neighbour bonds."""
    nx, ny = _require_lattice(cloud)
    idx = np.arange(nx * ny).reshape(ny, nx)  # idx[j, i]
    col = np.tile(np.arange(nx), ny).reshape(ny, nx)
    horiz = (idx[:, :-1].ravel(), idx[:, 1:].ravel())
    vert = (idx[:-1, :].ravel(), idx[1:, :].ravel(), col[:-1, :].ravel())
    return horiz, vert


def hofstadter(cloud: SiteCloud, flux, hopping: float = 1.0) -> Hamiltonian:
    """Nearest-neighbour hopping -t with flux ``p/q`` per plaquette, open boundary.

    The bond (x, y) -> (x, y+1) carries exp(2 pi i flux x); horizontal bonds are real.
    """
    phi = parse_flux(flux)
    (h_from, h_to), (v_from, v_to, v_col) = _nn_bonds(cloud)
    n = cloud.n_sites
    m = np.zeros((n, n), dtype=complex)
    m[h_to, h_from] = -hopping
    m[h_from, h_to] = -hopping
    ph = np.exp(2j * math.pi * float(phi) * v_col)
    if phi.denominator in (1, 2):
        ph = ph.real.round() + 0j  # keep zero/half flux exactly real
    m[v_to, v_from] = -hopping * ph
    m[v_from, v_to] = -hopping * ph.conj()
    params = {"model": "hofstadter", "flux": str(phi), "t": hopping}
    return Hamiltonian(m, cloud, params, hop_range=cloud.spacing)


def checkerboard_trivial(cloud: SiteCloud, t: float = 1.0, delta: float = 3.0) -> Hamiltonian:
    """Real hopping -t with a staggered onsite +delta (even x+y) / -delta (odd)."""
    if delta <= 0:
        raise ArgumentError("delta must be positive")
    nx, ny = _require_lattice(cloud)
    (h_from, h_to), (v_from, v_to, _) = _nn_bonds(cloud)
    n = cloud.n_sites
    m = np.zeros((n, n), dtype=complex)
    for a, b in ((h_from, h_to), (v_from, v_to)):
        m[a, b] = -t
        m[b, a] = -t
    j, i = np.divmod(np.arange(n), nx)
    m[np.arange(n), np.arange(n)] = np.where((i + j) % 2 == 0, delta, -delta)
    return Hamiltonian(m, cloud, {"model": "checkerboard", "t": t, "delta": delta},
                       hop_range=cloud.spacing)


def symmetric_gauge_phase(cloud: SiteCloud, field_b: float) -> np.ndarray:
    """theta_ij = (B/2) (x_i y_j - x_j y_i); antisymmetric by construction."""
    x, y = cloud.coords[:, 0], cloud.coords[:, 1]
    return 0.5 * field_b * (np.outer(x, y) - np.outer(y, x))


def amorphous_magnetic(cloud: SiteCloud, hop_range: float, t: float = 1.0,
                       field_b: float = 0.0) -> Hamiltonian:
    """-t exp(i theta_ij) between all pairs within ``hop_range``; no onsite term."""
    if hop_range <= 0:
        raise ArgumentError("hop_range must be positive")
    pairs = cloud.tree.query_pairs(hop_range + DIST_EPS, output_type="ndarray")
    n = cloud.n_sites
    m = np.zeros((n, n), dtype=complex)
    if len(pairs):
        i, j = pairs[:, 0], pairs[:, 1]
        x, y = cloud.coords[:, 0], cloud.coords[:, 1]
        theta = 0.5 * field_b * (x[i] * y[j] - x[j] * y[i])
        hop = -t * np.exp(1j * theta)
        if field_b == 0:
            hop = hop.real + 0j
        m[i, j] = hop
        m[j, i] = hop.conj()
    params = {"model": "amorphous", "hop_range": hop_range, "t": t, "field": field_b}
    return Hamiltonian(m, cloud, params, hop_range=hop_range)


def onsite_disorder(n_sites: int, strength: float, seed: int) -> np.ndarray:
    """Uniform onsite energies in [-strength, strength]."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-strength, strength, size=n_sites)


def interior_mask(cloud: SiteCloud, margin: float) -> RegionMask:
    """Sites at least ``margin`` from every edge of the bounding box."""
    lo, hi = cloud.coords.min(axis=0), cloud.coords.max(axis=0)
    c = cloud.coords
    bits = np.all((c - lo >= margin - DIST_EPS) & (hi - c >= margin - DIST_EPS), axis=1)
    return RegionMask(bits, cloud)


# ---------------------------------------------------------------- spectra

@dataclass
class SpectrumInfo:
    eigenvalues: np.ndarray
    gaps: list[tuple[float, float, float]]
    bulk_eigenvalues: np.ndarray | None = None

    def gap_containing(self, energy: float):
        for g in self.gaps:
            if g[0] < energy < g[1]:
                return g
        return None

    def nearest_gap(self, energy: float):
        if not self.gaps:
            return None
        return min(self.gaps, key=lambda g: 0.0 if g[0] < energy < g[1]
                   else min(abs(energy - g[0]), abs(energy - g[1])))


def _maximal_gaps(levels: np.ndarray, threshold: float) -> list[tuple[float, float, float]]:
    if len(levels) < 2:
        return []
    d = np.diff(levels)
    return [(float(levels[k]), float(levels[k + 1]), float(d[k]))
            for k in np.flatnonzero(d > threshold)]


def bulk_weights(H: Hamiltonian, bulk: RegionMask) -> np.ndarray:
    """Weight of each eigenvector on the bulk sites."""
    _, v = H.eigh
    return (np.abs(v[bulk.bits]) ** 2).sum(axis=0)


def spectrum(H: Hamiltonian, gap_width_threshold: float = 0.0, bulk: RegionMask | None = None,
             bulk_fraction: float = 0.5) -> SpectrumInfo:
    """Full eigendecomposition and the maximal gaps wider than the threshold.

    With ``bulk`` given, eigenvalues whose eigenvector puts less than
    ``bulk_fraction`` of the uniform share (|bulk|/N) on the bulk sites are
    treated as edge states and ignored when locating gaps.
    """
    w, _ = H.eigh
    if bulk is None:
        return SpectrumInfo(w, _maximal_gaps(w, gap_width_threshold))
    share = bulk.count / H.n_sites
    keep = bulk_weights(H, bulk) >= bulk_fraction * share
    wb = w[keep]
    return SpectrumInfo(w, _maximal_gaps(wb, gap_width_threshold), wb)


@dataclass(frozen=True, eq=False)
class FermiProjection:
    matrix: np.ndarray
    fermi_energy: float
    gap: tuple[float, float]
    rank: int
    cloud: SiteCloud

    def idempotency_defect(self) -> float:
        return float(np.abs(self.matrix @ self.matrix - self.matrix).max())

    def validate(self) -> None:
        if self.idempotency_defect() > IDEMPOTENT_TOL:
            raise ContractError(f"Fermi projection not idempotent ({self.idempotency_defect():.3e})")
        if abs(np.trace(self.matrix).real - self.rank) > TRACE_TOL:
            raise ContractError("trace of Fermi projection is not its rank")
        lo, hi = self.gap
        if not lo < self.fermi_energy < hi:
            raise ContractError("Fermi energy outside its gap")


def projection_from_vectors(vectors: np.ndarray) -> np.ndarray:
    """V V^* made exactly Hermitian."""
    p = vectors @ vectors.conj().T
    return 0.5 * (p + p.conj().T)


def fermi_projection(H: Hamiltonian, energy: float, margin_rel: float = GAP_MARGIN_REL,
                     gap_width_threshold: float = 0.0) -> FermiProjection:
    """Spectral projection of H onto eigenvalues below ``energy``.

    Raises GapError if some eigenvalue is within ``margin_rel`` times the
    spectral radius of ``energy``.
    """
    w, v = H.eigh
    radius = float(np.abs(w).max()) if len(w) else 0.0
    margin = margin_rel * max(radius, 1.0)
    dist = np.abs(w - energy)
    if dist.min() < margin:
        info = spectrum(H, gap_width_threshold)
        near = info.nearest_gap(energy)
        where = f"nearest gap ({near[0]:.6g}, {near[1]:.6g})" if near else "no gap found"
        raise GapError(f"E={energy:.6g} is within {dist.min():.3e} of the spectrum; {where}")
    occ = w < energy
    rank = int(occ.sum())
    lower = float(w[occ].max()) if rank else -math.inf
    upper = float(w[~occ].min()) if rank < len(w) else math.inf
    p = projection_from_vectors(v[:, occ])
    if H.is_real():
        p = p.real + 0j
    fp = FermiProjection(p, float(energy), (lower, upper), rank, H.cloud)
    fp.validate()
    return fp


# ---------------------------------------------------------------- bulk bands

def magnetic_bloch_hamiltonian(flux, kx: float, ky: float, t: float = 1.0) -> np.ndarray:
    """q x q Bloch Hamiltonian of the Landau-gauge Hofstadter model.

    Magnetic cell of q columns; Bloch convention psi(r) ~ exp(i k.r) with the
    cell-periodic part taken without intra-cell phases, so H is periodic under
    kx -> kx + 2 pi/q and ky -> ky + 2 pi.
    """
    phi = parse_flux(flux)
    p, q = phi.numerator, phi.denominator
    theta = 2 * math.pi * p / q
    hk = np.zeros((q, q), dtype=complex)
    m = np.arange(q)
    hk[m, m] = -2 * t * np.cos(ky - theta * m)
    if q == 1:
        hk[0, 0] += -2 * t * math.cos(kx)
        return hk
    for a in range(q - 1):
        hk[a + 1, a] += -t
        hk[a, a + 1] += -t
    hk[0, q - 1] += -t * np.exp(-1j * kx * q)
    hk[q - 1, 0] += -t * np.exp(1j * kx * q)
    return hk


def hofstadter_band_edges(flux, t: float = 1.0, nk: int = 48) -> np.ndarray:
    """(q, 2) array of [min, max] of each magnetic band over a k grid."""
    phi = parse_flux(flux)
    q = phi.denominator
    kxs = np.arange(nk) * 2 * math.pi / (q * nk)
    kys = np.arange(nk) * 2 * math.pi / nk
    bands = np.array([np.linalg.eigvalsh(magnetic_bloch_hamiltonian(phi, kx, ky, t))
                      for kx in kxs for ky in kys])
    return np.column_stack([bands.min(axis=0), bands.max(axis=0)])


def hofstadter_gap_energy(flux, gap_index: int, t: float = 1.0, nk: int = 48) -> float:
    """Mid-point of the bulk gap above band ``gap_index`` (1-based count of filled bands)."""
    edges = hofstadter_band_edges(flux, t, nk)
    q = len(edges)
    if not 1 <= gap_index < q:
        raise ArgumentError(f"gap index must be in [1, {q - 1}] for {q} bands")
    lo, hi = edges[gap_index - 1, 1], edges[gap_index, 0]
    if hi - lo <= 1e-9 * max(abs(t), 1.0):
        raise GapError(f"bulk gap {gap_index} is closed (bands touch at {lo:.6g})")
    return float(0.5 * (lo + hi))


def landau_gap_energy(H: Hamiltonian, field_b: float, margin: float = 4.0,
                      gap_width_threshold: float = 0.2) -> float:
    """Fermi energy in the bulk gap whose filling is closest to one Landau level.

    One Landau level holds |B| * area / (2 pi) states; the area is the
    bounding box of the cloud.
    """
    cloud = H.cloud
    lo, hi = cloud.coords.min(axis=0), cloud.coords.max(axis=0)
    target = abs(field_b) * float(np.prod(hi - lo)) / (2 * math.pi)
    info = spectrum(H, gap_width_threshold * abs(H.params.get("t", 1.0)),
                    bulk=interior_mask(cloud, margin))
    if not info.gaps:
        raise GapError("no bulk gap above the width threshold")
    w = info.eigenvalues
    best = min(info.gaps, key=lambda g: abs(np.sum(w < 0.5 * (g[0] + g[1])) - target))
    return 0.5 * (best[0] + best[1])
