"""Pairings of partitions with idempotents, windowed Hall conductance, and an
independent momentum-space Chern number.

Conventions: for a 3-part partition the pairing is Tr [A, B, C]_P and its
integer normalization is ``4 pi i * raw``; for a half-space pair the
commutator trace is Tr [P_X, P_Y] normalized by ``2 pi i``.  Both raw values
are purely imaginary for Hermitian P, so ``normalized`` keeps the real part of
the normalized number and ``residual`` records what was discarded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import operators as ops
from .errors import ArgumentError, ContractError, GapError, NumericalError
from .geometry import RegionMask
from .models import magnetic_bloch_hamiltonian, parse_flux
from .partitions import HalfSpacePair, QPartition

TRACE_RTOL = 1e-10          # formula-path agreement, times N
WINDOW_RTOL = 1e-9          # 12 pi i cross-check for sigma_K, times N
OPERATOR_RTOL = 1e-12       # entrywise operator identities, times ||P||^3
IDEMPOTENT_RTOL = 1e-9      # times max(1, ||P||)^2


@dataclass
class PairingResult:
    raw: complex
    normalized: float
    residual: float
    provenance: str
    checks: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"raw_re": self.raw.real, "raw_im": self.raw.imag, "normalized": self.normalized,
                "residual": self.residual, "provenance": self.provenance}


def _is_hermitian(p: np.ndarray) -> bool:
    return bool(np.abs(p - p.conj().T).max() <= 1e-12 * max(1.0, float(np.abs(p).max())))


def _scale(P, defect: float | None = None) -> float:
    """max(1, ||P||), without an SVD when P is Hermitian.

    A Hermitian P has eigenvalues with |l^2 - l| <= N * max|P^2 - P|, which
    bounds its norm by 1 + N * defect once the defect is small.
    """
    p = ops.as_matrix(P)
    if p.size and _is_hermitian(p):
        if defect is None:
            defect = ops.idempotency_defect(p)
        bound = len(p) * defect
        if bound < 0.25:
            return 1.0 + bound
    return max(1.0, ops.op_norm(p))


def check_idempotent(P) -> float:
    """Idempotency defect of P; ContractError when above tolerance."""
    defect = ops.idempotency_defect(P)
    if defect > IDEMPOTENT_RTOL * _scale(P, defect) ** 2:
        raise ContractError(f"P is not idempotent (max |P^2 - P| = {defect:.3e})")
    return defect


def _result(raw: complex, factor: complex, P, defect: float, provenance: str, **checks) -> PairingResult:
    p = ops.as_matrix(P)
    normalized = (factor * raw).real
    residual = (abs(raw.real) if _is_hermitian(p) else 0.0) + defect
    return PairingResult(complex(raw), float(normalized), float(residual), provenance, checks)


def _three(p: QPartition):
    if len(p) != 3:
        raise ArgumentError(f"expected a 3-part partition, got {len(p)} parts")
    return p.parts


def partition_pairing(p: QPartition, P) -> PairingResult:
    """Tr [A, B, C]_P, cross-checked against Tr [P_A, P_B]."""
    A, B, C = _three(p)
    defect = check_idempotent(P)
    raw = ops.generalized_commutator_trace(A, B, C, P)
    pa, pb = ops.as_matrix(ops.compress(P, A)), ops.as_matrix(ops.compress(P, B))
    via_commutator = complex(np.trace(pa @ pb - pb @ pa))
    n = p.cloud.n_sites
    if abs(raw - via_commutator) > TRACE_RTOL * n * _scale(P, defect) ** 3:
        raise ContractError(f"pairing paths disagree: {raw} vs {via_commutator}")
    return _result(raw, 4j * math.pi, P, defect, "trace:generalized_commutator",
                   commutator_trace=via_commutator)


def subdivided_commutator_terms(hs: HalfSpacePair, P) -> list[np.ndarray]:
    """The four successive rewritings of [P_X, P_Y] through the quadrants."""
    q = hs.quadrants
    c = lambda Z: ops.as_matrix(ops.compress(P, Z))
    com = lambda a, b: a @ b - b @ a
    PX, PY = c(hs.X), c(hs.Y)
    P_XcY, P_XY, P_XYc = c(q["XcY"]), c(q["XY"]), c(q["XYc"])
    return [
        com(PX, P_XcY) + com(PX, P_XY),
        com(PX, P_XcY) + com(P_XYc, P_XY) + com(P_XY, P_XY),
        com(PX, P_XcY) - com(P_XY, P_XYc),
        com(PX, P_XcY) - com(PY, P_XYc) + com(P_XcY, P_XYc),
    ]


def commutator_trace(hs: HalfSpacePair, P) -> PairingResult:
    """Tr [P_X, P_Y], with every line of the quadrant rewriting checked."""
    defect = check_idempotent(P)
    PX, PY = ops.as_matrix(ops.compress(P, hs.X)), ops.as_matrix(ops.compress(P, hs.Y))
    full = PX @ PY - PY @ PX
    tol = OPERATOR_RTOL * _scale(P) ** 3 * max(1, hs.cloud.n_sites)
    worst = max(float(np.abs(t - full).max()) for t in subdivided_commutator_terms(hs, P))
    if worst > tol:
        raise ContractError(f"quadrant rewriting of [P_X, P_Y] fails by {worst:.3e}")
    raw = complex(np.trace(full))
    return _result(raw, 2j * math.pi, P, defect, "trace:commutator_PX_PY", subdivision_defect=worst)


def _triangle_sum(p: np.ndarray, a, b, c) -> complex:
    """sum_{i in a, j in b, k in c} p_ij p_jk p_ki."""
    pab, pbc, pca = p[np.ix_(a, b)], p[np.ix_(b, c)], p[np.ix_(c, a)]
    return complex(np.sum((pab @ pbc) * pca.T))


def two_current_sum(p: QPartition, P) -> complex:
    """3 * sum over triangles with one vertex per part of (P_ij P_jk P_ki - P_ik P_kj P_ji)."""
    A, B, C = _three(p)
    m = ops.as_matrix(P)
    a, b, c = A.bits, B.bits, C.bits
    # the reversed orientation is the same sum evaluated on P^T, so a
    # symmetric P cancels bit for bit
    return 3 * (_triangle_sum(m, a, b, c) - _triangle_sum(np.ascontiguousarray(m.T), a, b, c))


def kubo_commutator(hs: HalfSpacePair, P):
    """P [[X, P], [Y, P]], checked entrywise against [P_X, P_Y]."""
    defect = ops.idempotency_defect(P)
    p = ops.as_matrix(P)
    xp, yp = ops.as_matrix(ops.mask_commutator(hs.X, p)), ops.as_matrix(ops.mask_commutator(hs.Y, p))
    kubo = p @ (xp @ yp - yp @ xp)
    PX, PY = ops.as_matrix(ops.compress(p, hs.X)), ops.as_matrix(ops.compress(p, hs.Y))
    gap = float(np.abs(kubo - (PX @ PY - PY @ PX)).max())
    if gap > OPERATOR_RTOL * _scale(P) ** 3 * max(1, hs.cloud.n_sites):
        raise ContractError(
            f"P[[X,P],[Y,P]] differs from [P_X,P_Y] by {gap:.3e} (idempotency defect {defect:.3e})")
    return ops.SiteOperator(kubo, hs.cloud)


def window_cross_check(p: QPartition, K: RegionMask, P) -> complex:
    """3 Tr(K [PKAKP, PKBKP] K), the rewritten form of the windowed trace.

    Evaluated blockwise: K P (KAK) P P (KBK) P K only touches rows and
    columns in K, A & K and B & K, with the middle P P summed over all sites.
    """
    A, B, _ = _three(p)
    m = ops.as_matrix(P)
    k, a, b = K.indices(), (A & K).indices(), (B & K).indices()

    def chain(x, y):
        return m[np.ix_(k, x)] @ (m[x, :] @ m[:, y]) @ m[np.ix_(y, k)]
    return 3 * complex(np.trace(chain(a, b) - chain(b, a)))


def bulk_conductance(p: QPartition, K: RegionMask, P) -> PairingResult:
    """sigma_K = 4 pi i Tr [A&K, B&K, C&K]_P, cross-checked with the 12 pi i form."""
    A, B, C = _three(p)
    if K.is_empty:
        raise ArgumentError("bulk window is empty")
    defect = check_idempotent(P)
    raw = ops.generalized_commutator_trace(A & K, B & K, C & K, P)
    alt = window_cross_check(p, K, P)
    n = p.cloud.n_sites
    if abs(4 * math.pi * (raw - alt)) > WINDOW_RTOL * n * _scale(P, defect) ** 3:
        raise ContractError(f"windowed trace disagrees with its 12 pi i form: {raw} vs {alt}")
    return _result(raw, 4j * math.pi, P, defect, "trace:windowed_generalized_commutator",
                   twelve_pi_form=alt, window_sites=K.count)


# ---------------------------------------------------------------- FHS oracle

GAP_CLOSING_TOL = 1e-6
ROUNDING_TOL = 1e-3


@dataclass
class ChernResult:
    value: int
    field_sum: float
    rounding_defect: float
    min_gap: float


def _link(u: np.ndarray, v: np.ndarray) -> complex:
    d = np.linalg.det(u.conj().T @ v)
    a = abs(d)
    if a < 1e-12:
        raise NumericalError("singular link variable; refine the k grid")
    return d / a


def _fhs_bands(phi, lo: int, hi: int, k_grid: int, t: float) -> ChernResult:
    """Link-variable Chern number of magnetic bands lo..hi-1 (0-based)."""
    q = phi.denominator
    if k_grid < 6 * q:
        raise ArgumentError(f"k_grid must be at least 6q = {6 * q}")
    if lo == hi or (lo == 0 and hi == q):
        return ChernResult(0, 0.0, 0.0, math.inf)
    kxs = np.arange(k_grid) * 2 * math.pi / (q * k_grid)
    kys = np.arange(k_grid) * 2 * math.pi / k_grid
    vecs = np.empty((k_grid, k_grid, q, hi - lo), dtype=complex)
    min_gap = math.inf
    for i, kx in enumerate(kxs):
        for j, ky in enumerate(kys):
            w, v = np.linalg.eigh(magnetic_bloch_hamiltonian(phi, kx, ky, t))
            if lo > 0:
                min_gap = min(min_gap, float(w[lo] - w[lo - 1]))
            if hi < q:
                min_gap = min(min_gap, float(w[hi] - w[hi - 1]))
            vecs[i, j] = v[:, lo:hi]
    if min_gap < GAP_CLOSING_TOL * max(abs(t), 1.0):
        raise GapError(f"a gap bounding bands {lo}..{hi - 1} closes on the k grid "
                       f"(min width {min_gap:.3e})")
    total = 0.0
    for i in range(k_grid):
        i1 = (i + 1) % k_grid
        for j in range(k_grid):
            j1 = (j + 1) % k_grid
            loop = (_link(vecs[i, j], vecs[i1, j]) * _link(vecs[i1, j], vecs[i1, j1])
                    * _link(vecs[i1, j1], vecs[i, j1]) * _link(vecs[i, j1], vecs[i, j]))
            total += float(np.angle(loop))
    c = total / (2 * math.pi)
    value = int(round(c))
    defect = abs(c - value)
    if defect >= ROUNDING_TOL:
        raise NumericalError(f"Chern sum {c:.6f} is not near an integer; refine the k grid")
    return ChernResult(value, c, defect, min_gap)


def fhs_chern(flux, fermi_gap_index: int, k_grid: int, t: float = 1.0) -> ChernResult:
    """Chern number of all bands below gap ``fermi_gap_index`` (number of filled bands)."""
    phi = parse_flux(flux)
    n = int(fermi_gap_index)
    if not 0 <= n <= phi.denominator:
        raise ArgumentError(f"gap index must lie in [0, {phi.denominator}]")
    return _fhs_bands(phi, 0, n, k_grid, t)


def fhs_band_chern(flux, band: int, k_grid: int, t: float = 1.0) -> ChernResult:
    """Chern number of the single magnetic band ``band`` (0-based)."""
    phi = parse_flux(flux)
    if not 0 <= band < phi.denominator:
        raise ArgumentError("band index out of range")
    if phi.denominator == 1:
        return ChernResult(0, 0.0, 0.0, math.inf)
    return _fhs_bands(phi, band, band + 1, k_grid, t)


def fhs_chern_oracle(flux, fermi_gap_index: int, k_grid: int | None = None, t: float = 1.0) -> int:
    phi = parse_flux(flux)
    k_grid = k_grid or 6 * phi.denominator
    return fhs_chern(phi, fermi_gap_index, k_grid, t).value
