"""Dense operators over sites: compressions, generalized commutators,
block trace norms and decay seminorms.

Region masks act as diagonal 0/1 matrices; they are never materialized,
only applied as row/column scalings.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ArgumentError
from .geometry import RegionMask, SiteCloud, Tiling, same_cloud

NU_GRID = (0.0, 1.0, 2.0, 4.0, 8.0)


@dataclass(frozen=True, eq=False)
class SiteOperator:
    matrix: np.ndarray
    cloud: SiteCloud

    def __post_init__(self):
        m = np.asarray(self.matrix)
        n = self.cloud.n_sites
        if m.shape != (n, n):
            raise ArgumentError(f"operator shape {m.shape} does not match {n} sites")
        object.__setattr__(self, "matrix", m)

    def __matmul__(self, other):
        return SiteOperator(self.matrix @ as_matrix(other), self.cloud)

    def __add__(self, other):
        return SiteOperator(self.matrix + as_matrix(other), self.cloud)

    def __sub__(self, other):
        return SiteOperator(self.matrix - as_matrix(other), self.cloud)

    def adjoint(self) -> "SiteOperator":
        return SiteOperator(self.matrix.conj().T, self.cloud)

    @classmethod
    def identity(cls, cloud: SiteCloud) -> "SiteOperator":
        return cls(np.eye(cloud.n_sites, dtype=complex), cloud)

    @classmethod
    def zeros(cls, cloud: SiteCloud) -> "SiteOperator":
        return cls(np.zeros((cloud.n_sites,) * 2, dtype=complex), cloud)


def as_matrix(obj) -> np.ndarray:
    """The dense matrix behind a SiteOperator, FermiProjection, Hamiltonian or array."""
    return np.asarray(getattr(obj, "matrix", obj))


def _bits(z) -> np.ndarray:
    if isinstance(z, RegionMask):
        return z.as_float()
    return np.asarray(z, dtype=float)


def _cloud_of(*objs) -> SiteCloud | None:
    clouds = [o.cloud for o in objs if hasattr(o, "cloud")]
    for c in clouds[1:]:
        if not same_cloud(clouds[0], c):
            raise ArgumentError("operands live on different clouds")
    return clouds[0] if clouds else None


def _wrap(m: np.ndarray, cloud: SiteCloud | None):
    return SiteOperator(m, cloud) if cloud is not None else m


def op_norm(obj) -> float:
    """Spectral norm."""
    m = as_matrix(obj)
    return float(np.linalg.norm(m, 2)) if m.size else 0.0


def idempotency_defect(obj) -> float:
    m = as_matrix(obj)
    return float(np.abs(m @ m - m).max()) if m.size else 0.0


def commutator(x, y):
    a, b = as_matrix(x), as_matrix(y)
    return _wrap(a @ b - b @ a, _cloud_of(x, y))


def mask_times(z, p: np.ndarray) -> np.ndarray:
    """diag(z) @ p."""
    return _bits(z)[:, None] * p


def times_mask(p: np.ndarray, z) -> np.ndarray:
    """p @ diag(z)."""
    return p * _bits(z)[None, :]


def compress(P, Z):
    """P Z P."""
    p = as_matrix(P)
    return _wrap(times_mask(p, Z) @ p, _cloud_of(P, Z))


def mask_commutator(Z, P):
    """[Z, P] = ZP - PZ."""
    p = as_matrix(P)
    return _wrap(mask_times(Z, p) - times_mask(p, Z), _cloud_of(Z, P))


def _apbpcp(a, b, c, p):
    return mask_times(a, p) @ mask_times(b, p) @ mask_times(c, p)


def generalized_commutator(A, B, C, P):
    """APBPCP + BPCPAP + CPAPBP - CPBPAP - BPAPCP - APCPBP."""
    p = as_matrix(P)
    a, b, c = _bits(A), _bits(B), _bits(C)
    out = (_apbpcp(a, b, c, p) + _apbpcp(b, c, a, p) + _apbpcp(c, a, b, p)
           - _apbpcp(c, b, a, p) - _apbpcp(b, a, c, p) - _apbpcp(a, c, b, p))
    return _wrap(out, _cloud_of(A, B, C, P))


def _as_index(z):
    """Indices of a 0/1 mask, or None for a general diagonal weight."""
    w = _bits(z)
    if np.all((w == 0) | (w == 1)):
        return np.flatnonzero(w)
    return None


def triple_trace(P, a, b, c) -> complex:
    """Tr(a P b P c P) for diagonal masks a, b, c, without forming the product.

    For 0/1 masks only the blocks P[a, b], P[b, c], P[c, a] enter.
    """
    p = as_matrix(P)
    ia, ib, ic = _as_index(a), _as_index(b), _as_index(c)
    if ia is not None and ib is not None and ic is not None:
        return complex(np.sum((p[np.ix_(ia, ib)] @ p[np.ix_(ib, ic)]) * p[np.ix_(ic, ia)].T))
    ap, bp, cp = mask_times(a, p), mask_times(b, p), mask_times(c, p)
    return complex(np.sum((ap @ bp) * cp.T))


def _cyclic_class(P, x, y, z) -> complex:
    """Tr(xPyPzP) + its two cyclic rotations, summed independently of order.

    fsum rounds exactly, so any rotation of (x, y, z) gives the same bits;
    that makes a swap of two parts negate the full trace exactly.
    """
    terms = [triple_trace(P, x, y, z), triple_trace(P, y, z, x), triple_trace(P, z, x, y)]
    return complex(math.fsum(t.real for t in terms), math.fsum(t.imag for t in terms))


def generalized_commutator_trace(A, B, C, P) -> complex:
    """Tr [A, B, C]_P as the difference of its two orientation classes."""
    a, b, c = _bits(A), _bits(B), _bits(C)
    return _cyclic_class(P, a, b, c) - _cyclic_class(P, a, c, b)


# ---------------------------------------------------------------- trace norms

def trace_norm(m: np.ndarray) -> float:
    if m.size == 0:
        return 0.0
    return float(np.linalg.svd(m, compute_uv=False).sum())


def block_trace_norm(L, V: RegionMask, W: RegionMask) -> float:
    """Trace norm of the rows-in-V, columns-in-W block of L."""
    m = as_matrix(L)
    return trace_norm(m[np.ix_(V.bits, W.bits)])


def block_norms(L, tiling: Tiling, tiles: np.ndarray | None = None) -> np.ndarray:
    """(T, T) matrix of trace norms of tile blocks, optionally for a subset of tiles."""
    m = as_matrix(L)
    idx = tiling.padded if tiles is None else tiling.padded[np.asarray(tiles, dtype=int)]
    T, width = idx.shape
    if width == 1:
        flat = idx[:, 0]
        return np.abs(m[np.ix_(flat, flat)])
    valid = idx >= 0
    safe = np.where(valid, idx, 0)
    out = np.empty((T, T))
    step = max(1, 2_000_000 // max(1, T * width * width))
    for s in range(0, T, step):
        rows = safe[s:s + step]
        blk = m[rows[:, None, :, None], safe[None, :, None, :]]
        keep = valid[s:s + step, None, :, None] & valid[None, :, None, :]
        blk = np.where(keep, blk, 0)
        out[s:s + step] = np.linalg.svd(blk, compute_uv=False).sum(axis=-1)
    return out


def _weights(tiling: Tiling, nu: float, Z: RegionMask | None, tiles: np.ndarray | None):
    sel = slice(None) if tiles is None else np.asarray(tiles, dtype=int)
    if Z is None:
        d = tiling.distances[sel][:, sel] if tiles is not None else tiling.distances
        return (1.0 + d) ** nu
    dz = tiling.region_distances(Z)[sel]
    wz = (1.0 + dz) ** nu
    return wz[:, None] * wz[None, :]


def seminorm(L, nu: float, tiling: Tiling, kind: str = "bracket", Z: RegionMask | None = None,
             restrict: RegionMask | None = None, norms: np.ndarray | None = None) -> float:
    """Tile-indexed decay seminorm of L.

    ``bracket``: sup over tile pairs of ||V L W||_Tr times the weight;
    ``sum``: sup over V of the weighted sum over W.  The weight is
    (1 + d(V, W))^nu, or (1 + d(V, Z))^nu (1 + d(W, Z))^nu when Z is given.
    ``restrict`` limits both V and W to tiles lying inside that region.
    """
    if nu < 0:
        raise ArgumentError("nu must be nonnegative")
    tiles = tiling.tiles_within(restrict) if restrict is not None else None
    if tiles is not None and len(tiles) == 0:
        return 0.0
    if norms is None:
        norms = block_norms(L, tiling, tiles)
    weighted = norms * _weights(tiling, nu, Z, tiles)
    if kind == "bracket":
        return float(weighted.max())
    if kind == "sum":
        return float(weighted.sum(axis=1).max())
    raise ArgumentError(f"unknown seminorm kind {kind!r}")


@dataclass
class SeminormReport:
    entries: dict = field(default_factory=dict)  # (kind, nu, z_id) -> value
    r0: float | None = None

    def rows(self):
        return [(k, nu, z, v) for (k, nu, z), v in sorted(self.entries.items(),
                                                          key=lambda kv: (kv[0][0], kv[0][1], kv[0][2] or ""))]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "nu", "z_id", "value"])
            for k, nu, z, v in self.rows():
                w.writerow([k, repr(float(nu)), z or "", repr(float(v))])


def seminorm_report(L, tiling: Tiling, nus: Iterable[float] = NU_GRID,
                    zones: dict[str, RegionMask] | None = None,
                    restrict: RegionMask | None = None) -> SeminormReport:
    tiles = tiling.tiles_within(restrict) if restrict is not None else None
    norms = block_norms(L, tiling, tiles)
    rep = SeminormReport(r0=tiling.r0)
    for nu in nus:
        for kind in ("bracket", "sum"):
            rep.entries[(kind, float(nu), None)] = seminorm(L, nu, tiling, kind, None, restrict, norms)
            for zid, z in (zones or {}).items():
                rep.entries[(kind, float(nu), zid)] = seminorm(L, nu, tiling, kind, z, restrict, norms)
    return rep


# ---------------------------------------------------------------- propagation

def propagation_radius(L, threshold: float, cloud: SiteCloud | None = None) -> float:
    """Smallest r with |L_ij| <= threshold whenever d(i, j) > r."""
    if threshold <= 0:
        raise ArgumentError("threshold must be positive")
    cloud = cloud or getattr(L, "cloud", None)
    if cloud is None:
        raise ArgumentError("propagation_radius needs a cloud")
    m = np.abs(as_matrix(L))
    coords = cloud.coords
    best = 0.0
    step = max(1, 4_000_000 // max(1, len(coords)))
    for s in range(0, len(coords), step):
        big = m[s:s + step] > threshold
        if not big.any():
            continue
        diff = coords[s:s + step, None, :] - coords[None, :, :]
        d = np.hypot(diff[..., 0], diff[..., 1])
        best = max(best, float(d[big].max()))
    return best


@dataclass
class DecayProfile:
    bin_lo: np.ndarray
    bin_hi: np.ndarray
    value: np.ndarray  # max block trace norm per bin, nan if empty

    def slope(self) -> float | None:
        """Least-squares slope of log(value) vs bin centre, over nonempty positive bins."""
        ctr = 0.5 * (self.bin_lo + self.bin_hi)
        ok = np.isfinite(self.value) & (self.value > 0)
        if ok.sum() < 2:
            return None
        return float(np.polyfit(ctr[ok], np.log(self.value[ok]), 1)[0])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_lo", "bin_hi", "max_trace_norm"])
            for a, b, v in zip(self.bin_lo, self.bin_hi, self.value):
                w.writerow([repr(float(a)), repr(float(b)), repr(float(v))])


def decay_profile(L, tiling: Tiling, bins, restrict: RegionMask | None = None) -> DecayProfile:
    """Max tile-block trace norm per tile-distance bin [lo, hi)."""
    edges = np.asarray(bins, dtype=float)
    if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise ArgumentError("bins must be increasing edges")
    tiles = tiling.tiles_within(restrict) if restrict is not None else None
    norms = block_norms(L, tiling, tiles)
    d = tiling.distances if tiles is None else tiling.distances[np.ix_(tiles, tiles)]
    vals = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (d >= lo) & (d < hi)
        vals.append(float(norms[sel].max()) if sel.any() else math.nan)
    return DecayProfile(edges[:-1], edges[1:], np.array(vals))


# ---------------------------------------------------------------- dumps

def dump_operator_json(L, cloud: SiteCloud, path) -> None:
    """Row-major interleaved (re, im) values plus the cloud digest."""
    m = np.asarray(as_matrix(L), dtype=complex)
    data = np.column_stack([m.real.ravel(), m.imag.ravel()]).ravel()
    Path(path).write_text(json.dumps({
        "shape": list(m.shape), "cloud_hash": cloud.digest, "data": data.tolist()}))


def load_operator_json(path, cloud: SiteCloud | None = None) -> np.ndarray:
    obj = json.loads(Path(path).read_text())
    if cloud is not None and obj["cloud_hash"] != cloud.digest:
        raise ArgumentError("operator dump belongs to a different cloud")
    data = np.asarray(obj["data"], dtype=float)
    return (data[0::2] + 1j * data[1::2]).reshape(obj["shape"])


def dump_operator_binary(L, cloud: SiteCloud, path) -> None:
    """One JSON header line, then little-endian float64 interleaved (re, im) values."""
    m = np.asarray(as_matrix(L), dtype=complex)
    header = json.dumps({"shape": list(m.shape), "cloud_hash": cloud.digest, "dtype": "<f8"})
    body = np.column_stack([m.real.ravel(), m.imag.ravel()]).astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(header.encode() + b"\n")
        fh.write(body)


def load_operator_binary(path, cloud: SiteCloud | None = None) -> np.ndarray:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        body = fh.read()
    if cloud is not None and header["cloud_hash"] != cloud.digest:
        raise ArgumentError("operator dump belongs to a different cloud")
    data = np.frombuffer(body, dtype="<f8")
    return (data[0::2] + 1j * data[1::2]).reshape(header["shape"])
