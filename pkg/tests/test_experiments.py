import numpy as np
import pytest

from coarse_hall import experiments as ex
from coarse_hall import operators as ops
from coarse_hall.errors import ArgumentError
from coarse_hall.geometry import build_square_lattice
from coarse_hall.partitions import QPartition

HOF24 = {"model": {"name": "hofstadter", "size": 24, "flux": "1/4"}, "fermi": {"gap": 1}}


def _gated(table):
    return {r["identity"]: r for r in table.records() if r["gated"]}


def _ungated(table):
    return {r["identity"]: r for r in table.records() if not r["gated"]}


# ---------------------------------------------------------------- identity suite

def test_identity_batch_passes():
    t = ex.identity_batch(10, seed=0)
    assert t.all_passed
    assert len(set(t.column("instance"))) == 10


def test_identity_batch_deterministic():
    assert ex.identity_batch(4, seed=3).to_csv() == ex.identity_batch(4, seed=3).to_csv()


def test_identity_zero_projection():
    _, p, hs = ex.random_instance(2)
    t = ex.identity_suite(np.zeros((p.cloud.n_sites,) * 2), p, hs)
    assert t.all_passed
    assert all(v == 0 for v in t.column("defect"))


def test_identity_corrupted_projection_flagged():
    P, p, hs = ex.random_instance(4)
    rng = np.random.default_rng(0)
    m = ops.as_matrix(P) + 1e-3 * rng.standard_normal(P.matrix.shape)
    t = ex.identity_suite(m, p, hs)
    assert not _gated(t)["idempotency"]["passed"]
    assert all(r["passed"] for r in _ungated(t).values())


def test_identity_defects_linear_in_perturbation():
    # gated defects grow like eps; the algebraic rows stay at rounding level
    P, p, hs = ex.random_instance(3)
    m = ops.as_matrix(P)
    rng = np.random.default_rng(7)
    E = rng.standard_normal(m.shape) + 1j * rng.standard_normal(m.shape)
    E /= np.abs(E).max()
    ratios = {}
    for eps in (1e-6, 1e-4, 1e-2):
        t = ex.identity_suite(m + eps * E, p, hs)
        for name, r in _gated(t).items():
            ratios.setdefault(name, []).append(r["defect"] / eps)
        assert max(r["defect"] for r in _ungated(t).values()) <= 1e-12
    for name, vals in ratios.items():
        assert max(vals) <= 1.5 * min(vals), name
        assert min(vals) > 0, name


def test_identity_requires_three_parts():
    P, p, hs = ex.random_instance(1)
    two = QPartition((p[0] | p[1], p[2]))
    with pytest.raises(ArgumentError):
        ex.identity_suite(P, two, hs)


# ---------------------------------------------------------------- determinants

def _hermitian_case(n=64, seed=0):
    rng = np.random.default_rng(seed)
    c = build_square_lattice(8, n // 8)
    P = ex.random_idempotent(n, n // 3, rng, hermitian=True)
    return P, ex.random_halfspaces(c, rng)


def test_determinant_suite_passes():
    P, hs = _hermitian_case()
    t = ex.determinant_identity_suite(P, hs, extra_pairs=5, seed=1)
    assert t.all_passed
    assert len(t.rows) == 3 * 6


def test_determinant_zero_projection_exact():
    _, hs = _hermitian_case()
    t = ex.determinant_identity_suite(np.zeros((64, 64)), hs)
    for r in t.records():
        assert (r["value_re"], r["value_im"]) == (1.0, 0.0)


def test_determinant_size_limit():
    c = build_square_lattice(15, 15)
    hs = ex.random_halfspaces(c, np.random.default_rng(0))
    with pytest.raises(ArgumentError):
        ex.determinant_identity_suite(np.eye(225), hs)


# ---------------------------------------------------------------- quantization

def test_quantization_improves_with_radius():
    t = ex.quantization_experiment(HOF24, None, [2, 4, 6])
    dev = t.column("deviation")
    assert dev == sorted(dev, reverse=True)
    assert dev[-1] <= 0.05


def test_quantization_flux_third_second_gap():
    spec = {"model": {"name": "hofstadter", "size": 30, "flux": "1/3"}, "fermi": {"gap": 2}}
    t = ex.quantization_experiment(spec, None, [7])
    row = t.records()[0]
    assert row["oracle"] == -1
    assert abs(row["sigma"] - row["oracle"]) <= 0.1


def test_quantization_skips_energy_in_band():
    t = ex.quantization_experiment(HOF24, [0.0], [4])
    row = t.records()[0]
    assert row["kind"] == "skipped"
    assert row["passed"] is False


def test_quantization_disorder_rows():
    t = ex.quantization_experiment(HOF24, None, [6], disorder={"strength": 0.05, "seeds": [0, 1]})
    rows = [r for r in t.records() if r["kind"] == "disorder"]
    assert [r["seed"] for r in rows] == [0, 1]
    assert all(r["drift"] <= 0.05 for r in rows)


# ---------------------------------------------------------------- additivity

def test_additivity_equal_gaps_exact():
    t = ex.additivity_experiment("1/3", [1, 1], size=18)
    rec = {r["quantity"]: r for r in t.records()}
    assert rec["sigma(P2)"]["value"] == 0.0
    assert rec["additivity"]["defect"] == 0.0


def test_additivity_gap_order_irrelevant():
    a = ex.additivity_experiment("1/3", [1, 2], size=18)
    b = ex.additivity_experiment("1/3", [2, 1], size=18)
    assert a.rows == b.rows


# ---------------------------------------------------------------- triviality

def test_triviality_all_cases_pass():
    t = ex.triviality_suite()
    assert t.all_passed
    assert set(t.column("case")) == set(ex.TRIVIALITY_CASES)


def test_triviality_rejects_unknown_case():
    with pytest.raises(ArgumentError):
        ex.triviality_suite(["nonsense"])


# ---------------------------------------------------------------- convergence

def test_convergence_monotone_small():
    t = ex.convergence_study(HOF24, [16, 24])
    assert t.all_passed
    dev = t.column("deviation")
    assert dev[1] <= dev[0]


def test_convergence_flags_contaminated_rows():
    t = ex.convergence_study(HOF24, [16, 24], r_schedule=[9.0, 6.0])
    rec = t.records()
    assert rec[0]["boundary_contaminated"] is True
    assert rec[0]["passed"] is None


def test_convergence_needs_ascending_sizes():
    with pytest.raises(ArgumentError):
        ex.convergence_study(HOF24, [24, 16])


def test_convergence_amorphous_rounds_reference():
    spec = {"model": {"name": "amorphous", "box": 20, "seed": 0}}
    t = ex.convergence_study(spec, [16, 20])
    ref = t.column("reference")[-1]
    assert ref == round(t.column("sigma")[-1])


# ---------------------------------------------------------------- decay, seminorms, geometry

def test_decay_study_slope():
    s = ex.build_sample(HOF24)
    assert ex.decay_study(s).slope() <= -0.2


def test_seminorm_suite_passes():
    t = ex.seminorm_inequality_suite(n_instances=5, seed=2)
    assert t.all_passed
    assert len(t.rows) == 5 * 4 * 3


def test_excisiveness_examples():
    t = ex.excisiveness_examples()
    assert t.all_passed
    assert t.column("example") == ["sectors", "exponential-curve"]


def test_csv_bit_deterministic():
    a = ex.quantization_experiment(HOF24, None, [4, 6]).to_csv()
    b = ex.quantization_experiment(HOF24, None, [4, 6], jobs=2).to_csv()
    assert a == b
