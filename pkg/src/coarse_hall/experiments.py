"""Verification suites and quantization studies.

Every suite returns an :class:`ExperimentTable` whose rows carry their own
pass criterion, so a failure is data rather than an exception.  Samples are
described by small JSON-able dicts (see :func:`build_sample`).
"""
from __future__ import annotations

import copy
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from . import operators as ops
from .errors import ArgumentError, ContractError, GapError, NumericalError
from .geometry import (RegionMask, SiteCloud, build_poisson_cloud, build_square_lattice,
                       build_tiling, thicken)
from .models import (Hamiltonian, amorphous_magnetic, checkerboard_trivial, fermi_projection,
                     hofstadter, hofstadter_band_edges, hofstadter_gap_energy, interior_mask,
                     landau_gap_energy, onsite_disorder, parse_flux, projection_from_vectors,
                     spectrum)
from .pairing import (PairingResult, bulk_conductance, commutator_trace, fhs_chern_oracle,
                      subdivided_commutator_terms)
from .partitions import (HalfSpacePair, QPartition, bulk_window, cloud_center,
                         coordinate_halfspaces, coordinate_quadrant_partition, sector_partition)
from .tables import ExperimentTable, config_hash

IDENTITY_TOL = 1e-10
DETERMINANT_TOL = 1e-8
DETERMINANT_MAX_SITES = 200
QUANTIZATION_TOL = 0.05
DRIFT_TOL = 0.05
ADDITIVITY_TOL = 0.1
ORTHOGONALITY_TOL = 1e-9
CONVERGENCE_SLACK = 0.2
BULK_GAP_WIDTH = 0.1  # in units of t; finite-size level spacing sits well below this
DEFAULT_CUTS_DEG = (90.0, 210.0, 330.0)
AMORPHOUS_DEFAULTS = {"density": 1.0, "box": 20.0, "hop_range": 2.6, "t": 1.0,
                      "field": 2 * math.pi / 8}


def pmap(fn, items, jobs: int = 1) -> list:
    """Ordered map, threaded when jobs > 1 (numpy releases the GIL in LAPACK)."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- random inputs

def _haar_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))[None, :]


def random_idempotent(n: int, rank: int, rng: np.random.Generator, hermitian: bool = False,
                      cond_max: float = 10.0) -> np.ndarray:
    """Q diag(1,..,1,0,..,0) Q^-1 with cond(Q) <= cond_max (Q unitary if hermitian)."""
    if not 0 <= rank <= n:
        raise ArgumentError("rank must lie in [0, n]")
    d = np.zeros(n)
    d[:rank] = 1.0
    u = _haar_unitary(n, rng)
    if hermitian:
        return projection_from_vectors(u[:, :rank])
    v = _haar_unitary(n, rng)
    s = rng.uniform(1.0, cond_max, n)
    q = (u * s[None, :]) @ v.conj().T
    q_inv = (v * (1.0 / s)[None, :]) @ u.conj().T
    return (q * d[None, :]) @ q_inv


def random_partition(cloud: SiteCloud, rng: np.random.Generator, parts: int = 3) -> QPartition:
    labels = rng.integers(0, parts, cloud.n_sites)
    return QPartition(tuple(RegionMask(labels == k, cloud) for k in range(parts)))


def random_halfspaces(cloud: SiteCloud, rng: np.random.Generator) -> HalfSpacePair:
    return HalfSpacePair(RegionMask(rng.random(cloud.n_sites) < 0.5, cloud),
                         RegionMask(rng.random(cloud.n_sites) < 0.5, cloud))


def random_instance(seed: int, n_range=(8, 32)):
    """(P, partition, half-spaces) on a chain of random length; every other seed Hermitian."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    cloud = build_square_lattice(n, 1, label="chain")
    P = random_idempotent(n, int(rng.integers(0, n + 1)), rng, hermitian=bool(seed % 2))
    return ops.SiteOperator(P, cloud), random_partition(cloud, rng), random_halfspaces(cloud, rng)


# ---------------------------------------------------------------- identity suite

IDENTITY_COLUMNS = [("instance", ""), ("identity", ""), ("defect", "relative"),
                    ("tolerance", "relative"), ("gated", ""), ("passed", "")]


def _maxabs(m) -> float:
    m = np.asarray(m)
    return float(np.abs(m).max()) if m.size else 0.0


def identity_suite(P, p: QPartition, hs: HalfSpacePair, seed: int = 0, instance: int = 0,
                   tolerance: float = IDENTITY_TOL) -> ExperimentTable:
    """Exact finite-dimensional identities of the generalized commutator.

    Defects are max-entry differences divided by max(1, ||P||)^3.  Rows marked
    ``gated`` hold only for idempotent P; the rest are algebraic and hold for
    any matrix.  ``seed`` drives the random splits used for additivity and
    the cobordism subset W.
    """
    if len(p) != 3:
        raise ArgumentError("identity_suite needs a 3-part partition")
    p_mat = ops.as_matrix(P)
    cloud = p.cloud
    rng = np.random.default_rng(seed)
    scale = max(1.0, ops.op_norm(p_mat)) ** 3
    A, B, C = p.parts
    M = cloud.full()
    gc = lambda a, b, c: ops.as_matrix(ops.generalized_commutator(a, b, c, p_mat))
    cmp = lambda Z: ops.as_matrix(ops.compress(p_mat, Z))
    com = lambda x, y: x @ y - y @ x
    table = ExperimentTable("identity", list(IDENTITY_COLUMNS), metadata={"seed": seed})

    def row(name, defect, gated):
        rel = defect / scale
        table.add(instance, name, rel, tolerance, gated, bool(rel <= tolerance))

    row("idempotency", ops.idempotency_defect(p_mat), True)

    base = gc(A, B, C)
    # a finite sample has no room for a nonzero global pairing
    trace_tol = tolerance * cloud.n_sites
    global_trace = abs(np.trace(base)) / scale
    table.add(instance, "global pairing trace", global_trace, trace_tol, True,
              bool(global_trace <= trace_tol))
    row("antisymmetry(A<->B)", _maxabs(gc(B, A, C) + base), False)
    row("antisymmetry(B<->C)", _maxabs(gc(A, C, B) + base), False)
    row("antisymmetry(A<->C)", _maxabs(gc(C, B, A) + base), False)

    for slot, name in enumerate("ABC"):
        part = p.parts[slot]
        first = RegionMask(part.bits & (rng.random(cloud.n_sites) < 0.5), cloud)
        second = part - first
        args = lambda z: tuple(z if k == slot else p.parts[k] for k in range(3))
        split = gc(*args(first)) + gc(*args(second))
        row(f"additivity({name})", _maxabs(base - split), False)

    PA, PB, PC = cmp(A), cmp(B), cmp(C)
    row("[A,B,M]=[P_A,P_B]", _maxabs(gc(A, B, M) - com(PA, PB)), True)

    PX, PY = cmp(hs.X), cmp(hs.Y)
    full = com(PX, PY)
    for k, line in enumerate(subdivided_commutator_terms(hs, p_mat), start=1):
        row(f"subdivided_commutator(line {k})", _maxabs(line - full), False)

    W = RegionMask(A.bits & (rng.random(cloud.n_sites) < 0.5), cloud)
    PW = cmp(W)
    row("cobordism", _maxabs(base - gc(A - W, W | B, C) + com(PW, PC)), True)

    xp = ops.as_matrix(ops.mask_commutator(hs.X, p_mat))
    yp = ops.as_matrix(ops.mask_commutator(hs.Y, p_mat))
    row("kubo", _maxabs(p_mat @ com(xp, yp) - full), True)

    row("trace(P_A P_B)=trace(P_B P_A)", abs(np.trace(PA @ PB) - np.trace(PB @ PA)), False)
    return table


def identity_batch(n_instances: int = 200, seed: int = 0, jobs: int = 1,
                   n_range=(8, 32)) -> ExperimentTable:
    """identity_suite over seeded random instances."""
    def one(k):
        P, p, hs = random_instance(seed + k, n_range)
        return identity_suite(P, p, hs, seed=seed + k, instance=k)

    out = ExperimentTable("identity", list(IDENTITY_COLUMNS),
                          metadata={"seed": seed, "instances": n_instances})
    for t in pmap(one, range(n_instances), jobs):
        out.extend(t)
    return out


# ---------------------------------------------------------------- determinants

DETERMINANT_COLUMNS = [("case", ""), ("check", ""), ("value_re", ""), ("value_im", ""),
                       ("defect", "absolute"), ("tolerance", "absolute"), ("passed", "")]


def _expm(m: np.ndarray) -> np.ndarray:
    try:
        out = expm(m)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise NumericalError(f"matrix exponential failed: {exc}") from exc
    if not np.all(np.isfinite(out)):
        raise NumericalError("matrix exponential is not finite")
    return out


def _det(m: np.ndarray) -> complex:
    try:
        d = complex(np.linalg.det(m))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"determinant failed: {exc}") from exc
    if not np.isfinite(d):
        raise NumericalError("determinant is not finite")
    return d


def multiplicative_commutator_check(a: np.ndarray, b: np.ndarray) -> tuple[complex, complex]:
    """(det(e^a e^b e^-a e^-b), exp(tr[a, b]))."""
    ea, eb, ea_inv, eb_inv = _expm(a), _expm(b), _expm(-a), _expm(-b)
    det = _det(ea @ eb @ ea_inv @ eb_inv)
    return det, complex(np.exp(np.trace(a @ b - b @ a)))


def determinant_identity_suite(P, hs: HalfSpacePair, extra_pairs: int = 0, seed: int = 0,
                               pair_dim: int = 8, tolerance: float = DETERMINANT_TOL) -> ExperimentTable:
    """det(UVU^-1V^-1) against exp(Tr[2 pi i P_X, 2 pi i P_Y]), both against 1.

    ``extra_pairs`` random Hermitian pairs (H1, H2) of size ``pair_dim`` repeat
    the check with A = 2 pi i H1, B = 2 pi i H2 in place of the compressions.
    """
    p_mat = ops.as_matrix(P)
    n = p_mat.shape[0]
    if n > DETERMINANT_MAX_SITES:
        raise ArgumentError(f"determinant suite is limited to N <= {DETERMINANT_MAX_SITES} (got {n})")
    table = ExperimentTable("determinant", list(DETERMINANT_COLUMNS), metadata={"seed": seed})

    def rows(case, a, b):
        det, ex = multiplicative_commutator_check(a, b)
        for check, value, ref in (("det-exp", det, ex), ("det-1", det, 1.0), ("exp-1", ex, 1.0)):
            d = abs(value - ref)
            table.add(case, check, value.real, value.imag, d, tolerance, bool(d <= tolerance))

    two_pi_i = 2j * math.pi
    rows("compressions", two_pi_i * ops.as_matrix(ops.compress(p_mat, hs.X)),
         two_pi_i * ops.as_matrix(ops.compress(p_mat, hs.Y)))
    rng = np.random.default_rng(seed)
    for k in range(extra_pairs):
        h = []
        for _ in range(2):
            z = rng.standard_normal((pair_dim, pair_dim)) + 1j * rng.standard_normal((pair_dim, pair_dim))
            z = 0.5 * (z + z.conj().T)
            h.append(z / np.linalg.norm(z, 2))
        rows(f"hermitian_pair_{k}", two_pi_i * h[0], two_pi_i * h[1])
    return table


# ---------------------------------------------------------------- samples

@dataclass(frozen=True, eq=False)
class Sample:
    """A Hamiltonian with its partition, Fermi level, and oracle integer (if known)."""

    H: Hamiltonian
    partition: QPartition
    fermi_energy: float
    oracle: int | None
    spec: dict

    @property
    def cloud(self) -> SiteCloud:
        return self.H.cloud

    @property
    def center(self) -> tuple[float, float]:
        return _partition_center(self.spec, self.cloud)

    def window(self, r: float) -> RegionMask:
        return bulk_window(self.partition, r)

    def projection(self, energy: float | None = None, H: Hamiltonian | None = None) -> np.ndarray:
        H = H or self.H
        return fermi_projection(H, self.fermi_energy if energy is None else energy).matrix


def _size(model: dict) -> tuple[int, int]:
    s = model.get("size", 32)
    if isinstance(s, (list, tuple)):
        return int(s[0]), int(s[1])
    return int(s), int(s)


def build_cloud(model: dict, seed: int = 0) -> SiteCloud:
    """Lattice or Poisson cloud described by a model dict; no Hamiltonian is built."""
    name = model.get("name", "hofstadter")
    if name in ("hofstadter", "checkerboard"):
        nx, ny = _size(model)
        return build_square_lattice(nx, ny)
    if name == "amorphous":
        m = {**AMORPHOUS_DEFAULTS, **model}
        box = float(m["box"])
        return build_poisson_cloud(float(m["density"]), box, box, int(m.get("seed", seed)))
    raise ArgumentError(f"unknown model {name!r}")


def _build_hamiltonian(model: dict, cloud: SiteCloud) -> Hamiltonian:
    name = model.get("name", "hofstadter")
    if name == "hofstadter":
        return hofstadter(cloud, model.get("flux", "1/4"), float(model.get("t", 1.0)))
    if name == "checkerboard":
        return checkerboard_trivial(cloud, float(model.get("t", 1.0)), float(model.get("delta", 3.0)))
    m = {**AMORPHOUS_DEFAULTS, **model}
    return amorphous_magnetic(cloud, float(m["hop_range"]), float(m["t"]), float(m["field"]))


def _partition_center(spec: dict, cloud: SiteCloud) -> tuple[float, float]:
    c = spec.get("partition", {}).get("center")
    return (float(c[0]), float(c[1])) if c is not None else cloud_center(cloud)


def build_partition(spec: dict, cloud: SiteCloud) -> QPartition:
    part = spec.get("partition", {})
    kind = part.get("kind", "sectors")
    cx, cy = _partition_center(spec, cloud)
    if kind == "sectors":
        cuts = [math.radians(a) for a in part.get("cuts_deg", DEFAULT_CUTS_DEG)]
        return sector_partition(cloud, (cx, cy), cuts)
    if kind == "quadrants":
        return coordinate_quadrant_partition(cloud, cx, cy)
    raise ArgumentError(f"unknown partition kind {kind!r}")


def hofstadter_oracle(flux, energy: float, t: float = 1.0) -> int | None:
    """Oracle Chern number for a Fermi energy, or None if E sits in a bulk band."""
    edges = hofstadter_band_edges(flux, t)
    if np.any((edges[:, 0] <= energy) & (energy <= edges[:, 1])):
        return None
    filled = int(np.sum(edges[:, 1] < energy))
    try:
        return fhs_chern_oracle(flux, filled, t=t)
    except GapError:
        return None


def _fermi_energy(model: dict, fermi: dict, H: Hamiltonian) -> float:
    name = model.get("name", "hofstadter")
    if "energy" in fermi:
        return float(fermi["energy"])
    if name == "hofstadter":
        return hofstadter_gap_energy(model.get("flux", "1/4"), int(fermi.get("gap", 1)),
                                     float(model.get("t", 1.0)))
    if name == "checkerboard":
        return 0.0
    m = {**AMORPHOUS_DEFAULTS, **model}
    return landau_gap_energy(H, float(m["field"]))


def _oracle(model: dict, energy: float) -> int | None:
    name = model.get("name", "hofstadter")
    if "reference" in model:
        return int(model["reference"])
    if name == "hofstadter":
        return hofstadter_oracle(model.get("flux", "1/4"), energy, float(model.get("t", 1.0)))
    if name == "checkerboard":
        return 0
    return None


def build_sample(spec: dict, seed: int = 0) -> Sample:
    """Sample from a spec dict.

    ``{"model": {"name": "hofstadter", "size": 32, "flux": "1/4", "t": 1},
    "fermi": {"gap": 1} | {"energy": E}, "partition": {"kind": "sectors",
    "cuts_deg": [90, 210, 330], "center": [x, y]}}``.  Amorphous models take
    ``density``, ``box``, ``hop_range``, ``field`` and an optional integer
    ``reference``; their Fermi level defaults to the gap holding one Landau
    level.
    """
    model = spec.get("model", {"name": "hofstadter"})
    cloud = build_cloud(model, seed)
    H = _build_hamiltonian(model, cloud)
    energy = _fermi_energy(model, spec.get("fermi", {}), H)
    return Sample(H, build_partition(spec, cloud), energy, _oracle(model, energy), spec)


def with_size(spec: dict, size) -> dict:
    """Copy of ``spec`` with the lattice size or amorphous box replaced."""
    out = copy.deepcopy(spec)
    model = out.setdefault("model", {"name": "hofstadter"})
    if model.get("name", "hofstadter") == "amorphous":
        model["box"] = size
    else:
        model["size"] = size
    out.get("partition", {}).pop("center", None)
    return out


def sigma(sample: Sample, P, r: float) -> PairingResult:
    return bulk_conductance(sample.partition, sample.window(r), P)


# ---------------------------------------------------------------- quantization

QUANTIZATION_COLUMNS = [("kind", ""), ("E", "t"), ("r", "spacing"), ("w", "t"), ("seed", ""),
                        ("sigma", "e^2/h"), ("residual", ""), ("oracle", ""),
                        ("deviation", "e^2/h"), ("drift", "e^2/h"), ("gap_open", ""),
                        ("window_sites", ""), ("passed", ""), ("note", "")]


def bulk_gap_open(H: Hamiltonian, energy: float, margin: float = 4.0,
                  min_width: float = BULK_GAP_WIDTH) -> bool:
    """True if ``energy`` lies in a gap of the bulk-weighted spectrum."""
    info = spectrum(H, min_width, bulk=interior_mask(H.cloud, margin))
    return info.gap_containing(energy) is not None


def quantization_experiment(spec: dict, E_samples, r_samples, disorder: dict | None = None,
                            seed: int = 0, jobs: int = 1, tolerance: float = QUANTIZATION_TOL,
                            drift_tolerance: float = DRIFT_TOL) -> ExperimentTable:
    """sigma_K over (E, r), plus optional onsite-disorder drift rows.

    ``E_samples`` of None uses the sample's own Fermi energy.  ``disorder`` is
    ``{"strength": w_over_t, "seeds": [..]}``; each disordered Hamiltonian is
    checked for an open bulk gap at E before its sigma_K is compared with the
    clean value at the same (E, r).
    """
    sample = build_sample(spec, seed)
    energies = [sample.fermi_energy] if E_samples is None else [float(e) for e in E_samples]
    radii = [float(r) for r in r_samples]
    windows = {r: sample.window(r) for r in radii}
    table = ExperimentTable("quantization", list(QUANTIZATION_COLUMNS),
                            metadata={"seed": seed, "config_hash": config_hash(spec)})
    model = spec.get("model", {})
    t = float(model.get("t", 1.0))

    def clean(energy):
        # a finite sample can show a spurious gap inside a bulk band
        if not bulk_gap_open(sample.H, energy, min_width=BULK_GAP_WIDTH * t):
            return energy, None, "bulk gap closed at E"
        try:
            P = fermi_projection(sample.H, energy).matrix
        except GapError as exc:
            return energy, None, str(exc)
        oracle = _oracle(model, energy) if E_samples is not None else sample.oracle
        return energy, (P, oracle), None

    results = pmap(clean, energies, jobs)
    base: dict[tuple[float, float], float] = {}
    for energy, got, reason in results:
        if got is None:
            table.add("skipped", energy, None, None, None, None, None, None, None, None, False,
                      None, False, f"E not in a bulk gap: {reason}")
            continue
        P, oracle = got
        for r in radii:
            res = bulk_conductance(sample.partition, windows[r], P)
            ref = oracle if oracle is not None else round(res.normalized)
            dev = abs(res.normalized - ref)
            base[(energy, r)] = res.normalized
            note = "" if oracle is not None else "no oracle; deviation from nearest integer"
            table.add("clean", energy, r, 0.0, None, res.normalized, res.residual, oracle, dev,
                      None, True, windows[r].count, bool(dev <= tolerance), note)

    if disorder:
        w = float(disorder.get("strength", 0.05))
        seeds = disorder.get("seeds", list(range(int(disorder.get("n_seeds", 5)))))
        jobs_list = [(energy, s) for energy, got, _ in results if got is not None for s in seeds]

        def dirty(item):
            energy, s = item
            Hw = sample.H.with_onsite(onsite_disorder(sample.H.n_sites, w * t, int(s)))
            if not bulk_gap_open(Hw, energy, min_width=BULK_GAP_WIDTH * t):
                return item, None, "bulk gap closed at E"
            try:
                P = fermi_projection(Hw, energy).matrix
            except GapError as exc:
                return item, None, str(exc)
            return item, [bulk_conductance(sample.partition, windows[r], P) for r in radii], None

        for (energy, s), res_list, reason in pmap(dirty, jobs_list, jobs):
            for k, r in enumerate(radii):
                if res_list is None:
                    table.add("disorder", energy, r, w, int(s), None, None, None, None, None, False,
                              windows[r].count, False, reason)
                    continue
                res = res_list[k]
                drift = abs(res.normalized - base[(energy, r)])
                table.add("disorder", energy, r, w, int(s), res.normalized, res.residual, None, None,
                          drift, True, windows[r].count, bool(drift <= drift_tolerance), "")
    table.sort("kind", "E", "r", "seed")
    return table


# ---------------------------------------------------------------- additivity

ADDITIVITY_COLUMNS = [("quantity", ""), ("value", "e^2/h"), ("reference", "e^2/h"),
                      ("defect", ""), ("tolerance", ""), ("passed", "")]


def additivity_experiment(flux, gaps, size: int = 36, r: float | None = None, t: float = 1.0,
                          tolerance: float = ADDITIVITY_TOL) -> ExperimentTable:
    """sigma_K of P1, P2 = P12 - P1 and P12 for two gaps of a Hofstadter lattice.

    The gaps are sorted, so their order does not matter; equal gaps give
    P2 = 0 and a defect of exactly zero.
    """
    g_lo, g_hi = sorted(int(g) for g in gaps)
    r = size / 4 if r is None else float(r)
    phi = parse_flux(flux)
    spec = {"model": {"name": "hofstadter", "size": size, "flux": str(phi), "t": t}}
    sample = build_sample({**spec, "fermi": {"gap": g_lo}})
    P1 = sample.projection()
    P12 = sample.projection(hofstadter_gap_energy(phi, g_hi, t))
    P2 = P12 - P1
    overlap = _maxabs(P1 @ P2)
    if overlap > ORTHOGONALITY_TOL:
        raise ContractError(f"band projections are not orthogonal (max |P1 P2| = {overlap:.3e})")
    K = sample.window(r)
    s1, s2, s12 = (bulk_conductance(sample.partition, K, m).normalized for m in (P1, P2, P12))
    c1 = fhs_chern_oracle(phi, g_lo, t=t)
    c12 = fhs_chern_oracle(phi, g_hi, t=t)
    table = ExperimentTable("additivity", list(ADDITIVITY_COLUMNS),
                            metadata={"flux": str(phi), "gaps": [g_lo, g_hi], "size": size, "r": r})
    table.add("orthogonality", overlap, 0.0, overlap, ORTHOGONALITY_TOL, True)
    for name, val, ref in (("sigma(P1)", s1, c1), ("sigma(P2)", s2, c12 - c1), ("sigma(P1+P2)", s12, c12)):
        d = abs(val - ref)
        table.add(name, val, float(ref), d, tolerance, bool(d <= tolerance))
    d = abs(s12 - s1 - s2)
    table.add("additivity", s12, s1 + s2, d, tolerance, bool(d <= tolerance))
    return table


# ---------------------------------------------------------------- triviality

TRIVIALITY_CASES = ("real", "finite-rank", "half-space", "projection-compression", "mirror")
TRIVIALITY_COLUMNS = [("case", ""), ("quantity", ""), ("value", ""), ("reference", ""),
                      ("defect", ""), ("tolerance", ""), ("passed", "")]


def _embedded_projection(H: Hamiltonian, Z: RegionMask, energy: float) -> np.ndarray:
    """Fermi projection of H restricted to Z, as an operator on the whole cloud."""
    idx = Z.indices()
    sub = H.matrix[np.ix_(idx, idx)]
    w, v = np.linalg.eigh(sub)
    gap = np.abs(w - energy).min() if len(w) else math.inf
    if gap < 1e-6 * max(1.0, float(np.abs(w).max())):
        raise GapError(f"E={energy:.6g} touches the spectrum of the restricted Hamiltonian")
    vecs = np.zeros((H.n_sites, int(np.sum(w < energy))), dtype=complex)
    vecs[idx] = v[:, w < energy]
    return projection_from_vectors(vecs)


def _ground_state_projection(H: Hamiltonian, disks: list[RegionMask]) -> np.ndarray:
    """Rank-len(disks) projection onto the lowest state of H restricted to each disk."""
    vecs = np.zeros((H.n_sites, len(disks)), dtype=complex)
    for k, disk in enumerate(disks):
        idx = disk.indices()
        _, v = np.linalg.eigh(H.matrix[np.ix_(idx, idx)])
        vecs[idx, k] = v[:, 0]
    return projection_from_vectors(vecs)


def triviality_suite(cases=None, size: int = 24, flux="1/4", r: float = 6.0,
                     tolerance: float = 1e-6) -> ExperimentTable:
    """Cases that must give a trivial (or sign-reversed) pairing.

    The Hofstadter lattice has even ``size`` so that no site lies on a sector
    cut; the mirror case relies on that for an exact image partition.
    """
    cases = list(TRIVIALITY_CASES if cases is None else cases)
    unknown = set(cases) - set(TRIVIALITY_CASES)
    if unknown:
        raise ArgumentError(f"unknown triviality cases {sorted(unknown)}")
    spec = {"model": {"name": "hofstadter", "size": size, "flux": str(parse_flux(flux))},
            "fermi": {"gap": 1}}
    sample = build_sample(spec)
    cloud, H, E = sample.cloud, sample.H, sample.fermi_energy
    cx, cy = sample.center
    K = sample.window(r)
    table = ExperimentTable("triviality", list(TRIVIALITY_COLUMNS),
                            metadata={"size": size, "flux": str(parse_flux(flux)), "r": r})

    def add(case, quantity, value, reference, tol):
        d = abs(value - reference)
        table.add(case, quantity, value, reference, d, tol, bool(d <= tol))

    if "real" in cases:
        real = build_sample({"model": {"name": "checkerboard", "size": size}})
        P = real.projection()
        add("real", "sigma_K", sigma(real, P, r).normalized, 0.0, 1e-12)

    if "finite-rank" in cases:
        x, y = cloud.coords[:, 0] - cx, cloud.coords[:, 1] - cy
        disks = []
        for ang in (150.0, 270.0, 30.0):  # one disk inside each sector
            a = math.radians(ang)
            disks.append(RegionMask(np.hypot(x - 3 * math.cos(a), y - 3 * math.sin(a)) <= 2.0, cloud))
        P = _ground_state_projection(H, disks)
        add("finite-rank", "sigma_K", sigma(sample, P, r).normalized, 0.0, tolerance)

    hs = coordinate_halfspaces(cloud, cx, cy)
    if "half-space" in cases:
        X = RegionMask(cloud.coords[:, 0] >= cx + 2, cloud)
        P = _embedded_projection(H, X, E)
        enlarged = thicken(X, 1.0)
        add("half-space", "max|P X' P - P|",
            _maxabs(ops.as_matrix(ops.compress(P, enlarged)) - P), 0.0, tolerance)
        add("half-space", "sigma_K", sigma(sample, P, r).normalized, 0.0, tolerance)
        res = commutator_trace(HalfSpacePair(enlarged, hs.Y), P)
        add("half-space", "2 pi i Tr[P_X',P_Y]", res.normalized, 0.0, tolerance)

    if "projection-compression" in cases:
        X = hs.X
        P = _embedded_projection(H, X, E) + _embedded_projection(H, ~X, E)
        PX = ops.as_matrix(ops.compress(P, X))
        add("projection-compression", "idempotency of P_X", ops.idempotency_defect(PX), 0.0, tolerance)
        add("projection-compression", "2 pi i Tr[P_X,P_Y]", commutator_trace(hs, P).normalized,
            0.0, tolerance)

    if "mirror" in cases:
        P = sample.projection()
        s = sigma(sample, P, r).normalized
        mcloud = cloud.mirrored()
        # the same counterclockwise recipe on the mirrored sample; its parts are
        # the images of (C, B, A), an odd permutation of the original
        mpart = build_partition(spec, mcloud)
        image = sample.partition.swapped(0, 2)
        if not all(np.array_equal(a.bits, b.bits) for a, b in zip(mpart, image)):
            raise ContractError("mirrored sectors are not the image of the original sectors")
        mK = bulk_window(mpart, r)
        sm = bulk_conductance(mpart, mK, P).normalized
        add("mirror", "sigma_K + sigma_K(mirror)", s + sm, 0.0, 1e-10)
        table.add("mirror", "|sigma_K|", abs(s), None, None, None, bool(abs(s) > 0.5))
    return table


# ---------------------------------------------------------------- convergence

CONVERGENCE_COLUMNS = [("size", "spacing"), ("n_sites", ""), ("r", "spacing"), ("sigma", "e^2/h"),
                       ("reference", ""), ("deviation", "e^2/h"), ("boundary_contaminated", ""),
                       ("passed", "")]


def convergence_study(spec: dict, sizes, r_factor: float = 0.25, seed: int = 0, jobs: int = 1,
                      slack: float = CONVERGENCE_SLACK, r_schedule=None) -> ExperimentTable:
    """sigma_K deviation from the oracle as the sample grows, window radius r = r_factor * size.

    A row whose radius reaches the nearest edge of the bounding box (seen
    from the partition centre) is flagged boundary-contaminated and left out
    of the monotonicity check.  Without an oracle the reference is the
    rounded sigma_K of the largest sample.
    """
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ArgumentError("sizes must be ascending")
    radii = list(r_schedule) if r_schedule is not None else [r_factor * float(s) for s in sizes]

    def one(k):
        sample = build_sample(with_size(spec, sizes[k]), seed)
        P = sample.projection()
        r = radii[k]
        lo, hi = sample.cloud.coords.min(axis=0), sample.cloud.coords.max(axis=0)
        cx, cy = sample.center
        room = min(cx - lo[0], hi[0] - cx, cy - lo[1], hi[1] - cy)
        return sample, sigma(sample, P, r).normalized, bool(r >= room)

    got = pmap(one, range(len(sizes)), jobs)
    oracle = got[-1][0].oracle
    ref = oracle if oracle is not None else round(got[-1][1])
    table = ExperimentTable("convergence", list(CONVERGENCE_COLUMNS),
                            metadata={"seed": seed, "config_hash": config_hash(spec), "slack": slack})
    prev = None
    for k, (sample, s, dirty) in enumerate(got):
        dev = abs(s - ref)
        if dirty:
            passed = None
        else:
            passed = prev is None or dev <= (1 + slack) * prev
            prev = dev
        table.add(sizes[k], sample.cloud.n_sites, radii[k], s, ref, dev, dirty, passed)
    return table


# ---------------------------------------------------------------- decay

def decay_study(sample: Sample, r0: float = 2 * math.sqrt(2), bins=None, margin: float = 4.0):
    """Block trace-norm profile of the Fermi projection, restricted to the interior."""
    P = sample.projection()
    tiling = build_tiling(sample.cloud, r0)
    if bins is None:
        bins = np.arange(0.0, 13.0, 1.0)
    return ops.decay_profile(P, tiling, bins, restrict=interior_mask(sample.cloud, margin))


# ---------------------------------------------------------------- seminorm inequalities

SEMINORM_COLUMNS = [("instance", ""), ("nu", ""), ("inequality", ""), ("lhs", ""), ("rhs", ""),
                    ("passed", "")]


def random_local_operator(cloud: SiteCloud, reach: float, rng: np.random.Generator) -> np.ndarray:
    """Complex Gaussian entries on pairs at distance <= reach, zero elsewhere."""
    d = cloud.distance_matrix()
    n = cloud.n_sites
    m = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return np.where(d <= reach + 1e-9, m, 0.0) / math.sqrt(n)


def seminorm_inequality_suite(n_instances: int = 50, seed: int = 0, size: int = 10,
                              r0: float = 2.0, nus=(0.0, 1.0, 2.0, 4.0)) -> ExperimentTable:
    """Submultiplicativity and the ideal estimate for the sum seminorms.

    Checks ||L L'||_nu <= (1 + r0)^nu ||L||_nu ||L'||_nu and both
    ||L L'||_{nu,Z}, ||L' L||_{nu,Z} <= (1 + r0)^nu ||L||_nu ||L'||_{nu,Z}
    on random local operators, with Z a random coordinate half-plane.
    """
    cloud = build_square_lattice(size, size)
    tiling = build_tiling(cloud, r0)
    rng = np.random.default_rng(seed)
    table = ExperimentTable("seminorm", list(SEMINORM_COLUMNS),
                            metadata={"seed": seed, "r0": r0, "size": size})
    rel = 1e-12
    for k in range(n_instances):
        L = random_local_operator(cloud, float(rng.uniform(1.0, 3.0)), rng)
        Lp = random_local_operator(cloud, float(rng.uniform(1.0, 3.0)), rng)
        Z = RegionMask(cloud.coords[:, 0] >= rng.uniform(0, size - 1), cloud)
        norms = {name: ops.block_norms(m, tiling) for name, m in
                 (("L", L), ("Lp", Lp), ("LLp", L @ Lp), ("LpL", Lp @ L))}
        for nu in nus:
            s = lambda name, z=None: ops.seminorm(None, nu, tiling, "sum", z, norms=norms[name])
            c = (1.0 + r0) ** nu
            checks = (("submultiplicative", s("LLp"), c * s("L") * s("Lp")),
                      ("ideal(L L')", s("LLp", Z), c * s("L") * s("Lp", Z)),
                      ("ideal(L' L)", s("LpL", Z), c * s("L") * s("Lp", Z)))
            for name, lhs, rhs in checks:
                table.add(k, nu, name, lhs, rhs, bool(lhs <= rhs * (1 + rel)))
    return table


# ---------------------------------------------------------------- excisiveness examples

def sector_regions(size: int = 64, base: float = 1.5) -> list[RegionMask]:
    """Three 120 degree sectors of a square lattice, each thickened by ``base``."""
    cloud = build_square_lattice(size, size)
    p = sector_partition(cloud, cloud_center(cloud), [math.radians(a) for a in DEFAULT_CUTS_DEG])
    return [thicken(z, base) for z in p]


def exponential_curve_regions(x_max: float = 8.0, spacing: float = 1.0) -> list[RegionMask]:
    """The vertical axis {x = 0} and the curve y = e^x, sampled at ``spacing``.

    They share only the site (0, 1); at height y the curve is ln(y) away from
    the axis, so the thickened intersection grows like e^r.
    """
    top = math.exp(x_max)
    ys = np.arange(0.0, top, spacing)
    axis = np.column_stack([np.zeros_like(ys), ys])
    xs, x = [], 0.0
    while x < x_max:
        x += spacing / math.sqrt(1 + math.exp(2 * x))  # unit arc-length step
        xs.append(x)
    xs = np.array(xs)
    curve = np.column_stack([xs, np.exp(xs)])
    cloud = SiteCloud(np.vstack([axis, curve]), label="exponential-curve")
    on_axis = np.arange(cloud.n_sites) < len(axis)
    shared = on_axis & np.isclose(cloud.coords[:, 1], 1.0)
    return [RegionMask(on_axis, cloud), RegionMask(~on_axis | shared, cloud)]


EXCISIVENESS_COLUMNS = [("example", ""), ("mu_hat", ""), ("slope", ""), ("verdict", ""),
                        ("expected", ""), ("passed", "")]


def excisiveness_examples(sector_radii=(2, 3, 4, 6, 8, 11, 16),
                          curve_radii=(1, 2, 3, 4, 5, 6, 7)) -> ExperimentTable:
    """The convex-sector example (polynomial, exponent near 1) and the exponential curve."""
    from .geometry import NON_POLYNOMIAL, POLYNOMIAL, excisiveness_profile

    table = ExperimentTable("excisiveness", list(EXCISIVENESS_COLUMNS))
    rep = excisiveness_profile(sector_regions(), sector_radii)
    ok = rep.verdict == POLYNOMIAL and rep.mu_hat is not None and 0.8 <= rep.mu_hat <= 1.5
    table.add("sectors", rep.mu_hat, rep.slope, rep.verdict, "polynomial-like, mu_hat in [0.8, 1.5]", ok)
    rep = excisiveness_profile(exponential_curve_regions(), curve_radii)
    table.add("exponential-curve", rep.mu_hat, rep.slope, rep.verdict, NON_POLYNOMIAL,
              rep.verdict == NON_POLYNOMIAL)
    return table
