"""coarse-hall command line.

    coarse-hall <command> --config PATH [--out DIR] [--seed N] [--jobs N]
                [--set key.path=value ...] [--no-figures]

Commands: model, spectrum, pairing, sweep, verify, decay, geometry.  Each run
writes ``<command>-<hash>.csv`` and ``<command>-<hash>.json`` (plus PNG
figures) into the output directory, where the hash covers the command, the
merged config and the seed.  ``--config builtin:NAME`` selects one of the
configs shipped with the package.

Exit codes: 0 all checks passed, 1 some check failed, 2 usage error,
3 numerical error.
"""
from __future__ import annotations

import argparse
import copy
import itertools
import json
import math
import os
import sys
import threading
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from . import experiments as ex
from . import operators as ops
from . import plotting
from .errors import ArgumentError, ContractError, GapError, NumericalError, UsageError
from .geometry import (RegionMask, build_square_lattice, build_tiling, excisiveness_profile, thicken,
                       transversality_profile, volume_growth_profile)
from .models import (HERMITIAN_RTOL, bulk_weights, fermi_projection, interior_mask,
                     onsite_disorder, spectrum)
from .pairing import (bulk_conductance, commutator_trace, partition_pairing, two_current_sum)
from .partitions import (coordinate_halfspaces, halfspaces_to_partition,
                         partition_to_halfspaces)
from .tables import ExperimentTable, config_hash

COMMANDS = ("model", "spectrum", "pairing", "sweep", "verify", "decay", "geometry")
EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3
GLOBAL_TRACE_RTOL = 1e-10
RESIDUAL_RTOL = 1e-9


# ---------------------------------------------------------------- config

@dataclass(frozen=True)
class RunConfig:
    command: str
    config_path: str
    output_dir: Path
    seed: int = 0
    overrides: dict = field(default_factory=dict)
    jobs: int = 1
    figures: bool = True


def _data_file(*parts) -> Path:
    return Path(str(resources.files("coarse_hall").joinpath("data", *parts)))


def builtin_configs() -> list[str]:
    return sorted(p.stem for p in _data_file("configs").glob("*.json"))


def load_config(path: str) -> dict:
    if path.startswith("builtin:"):
        name = path.split(":", 1)[1]
        target = _data_file("configs", f"{name}.json")
        if not target.is_file():
            raise UsageError(f"no bundled config {name!r}; choose from {', '.join(builtin_configs())}")
    else:
        target = Path(path)
        if not target.is_file():
            raise UsageError(f"config file not found: {path}")
    try:
        obj = json.loads(target.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(obj, dict):
        raise UsageError(f"{path}: top level must be an object")
    return obj


def parse_override(text: str) -> tuple[list[str], object]:
    """'a.b=1' -> (['a', 'b'], 1); values parse as JSON, falling back to strings."""
    key, sep, raw = text.partition("=")
    if not sep or not key.strip():
        raise UsageError(f"--set expects key=value, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def apply_overrides(config: dict, overrides: dict) -> dict:
    out = copy.deepcopy(config)
    for key, value in overrides.items():
        path = key.split(".")
        node = out
        for part in path[:-1]:
            nxt = node.setdefault(part, {})
            if not isinstance(nxt, dict):
                raise UsageError(f"--set {key}: {part!r} is not an object")
            node = nxt
        node[path[-1]] = value
    return out


def validate_config(config: dict) -> None:
    schema = json.loads(_data_file("config.schema.json").read_text())
    errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(config),
                    key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = ".".join(str(p) for p in err.absolute_path) or "<root>"
        raise UsageError(f"config error at {where}: {err.message}")


# ---------------------------------------------------------------- outcomes

@dataclass
class Outcome:
    table: ExperimentTable                      # written as the CSV artifact
    suites: list[ExperimentTable]               # pass/fail bookkeeping
    details: dict = field(default_factory=dict)
    figures: dict = field(default_factory=dict)  # suffix -> callable(path)


def _checks(suite: str) -> ExperimentTable:
    return ExperimentTable(suite, [("check", ""), ("value", ""), ("bound", ""), ("passed", "")])


def _window_radii(cfg: dict) -> list[float]:
    return [float(r) for r in cfg.get("window", {}).get("r", [8.0])]


def _tolerance(cfg: dict, key: str, default: float) -> float:
    return float(cfg.get("tolerance", {}).get(key, default))


# ---------------------------------------------------------------- commands

def cmd_model(cfg: dict, rc: RunConfig, stem: str) -> Outcome:
    sample = ex.build_sample(cfg, rc.seed)
    H, cloud = sample.H, sample.cloud
    r = _window_radii(cfg)[0]
    K = sample.window(r)
    labels = np.zeros(cloud.n_sites, dtype=int)
    for k, part in enumerate(sample.partition):
        labels[part.bits] = k
    table = ExperimentTable("sites", [("index", ""), ("x", "spacing"), ("y", "spacing"),
                                      ("part", ""), ("in_window", "")])
    for i, (x, y) in enumerate(cloud.coords):
        table.add(i, float(x), float(y), int(labels[i]), bool(K.bits[i]))
    checks = _checks("model")
    herm = H.hermiticity_defect()
    bound = HERMITIAN_RTOL * max(1.0, H.norm())
    checks.add("hermiticity defect", herm, bound, bool(herm <= bound))
    loc = H.locality_violation()
    checks.add("hopping beyond hop_range", loc, 0.0, bool(loc == 0))
    details = {"n_sites": cloud.n_sites, "params": H.params, "norm": H.norm(),
               "fermi_energy": sample.fermi_energy, "oracle": sample.oracle,
               "window_r": r, "window_sites": K.count, "part_sizes": list(sample.partition.sizes())}
    figs = {"sample": lambda p: plotting.plot_sample(cloud, sample.partition, K, p, f"window r={r:g}")}
    return Outcome(table, [checks], details, figs)


def cmd_spectrum(cfg: dict, rc: RunConfig, stem: str) -> Outcome:
    sample = ex.build_sample(cfg, rc.seed)
    H = sample.H
    opts = cfg.get("spectrum", {})
    t = abs(float(H.params.get("t", 1.0)))
    bulk = interior_mask(H.cloud, float(opts.get("bulk_margin", 4.0)))
    info = spectrum(H, float(opts.get("threshold", 0.1)) * t, bulk=bulk)
    weights = bulk_weights(H, bulk)
    table = ExperimentTable("spectrum", [("index", ""), ("energy", "t"), ("bulk_weight", "")])
    for i, (e, w) in enumerate(zip(info.eigenvalues, weights)):
        table.add(i, float(e), float(w))
    checks = _checks("spectrum")
    gap = info.gap_containing(sample.fermi_energy)
    checks.add("Fermi level in a bulk gap", sample.fermi_energy, None, gap is not None)
    details = {"gaps": [list(g) for g in info.gaps], "fermi_energy": sample.fermi_energy,
               "fermi_gap": list(gap) if gap else None}
    figs = {"spectrum": lambda p: plotting.plot_spectrum(info.eigenvalues, info.gaps,
                                                         sample.fermi_energy, p)}
    return Outcome(table, [checks], details, figs)


PAIRING_COLUMNS = [("quantity", ""), ("r", "spacing"), ("raw_re", ""), ("raw_im", ""),
                   ("normalized", ""), ("residual", ""), ("reference", ""), ("deviation", ""),
                   ("tolerance", ""), ("passed", "")]


def cmd_pairing(cfg: dict, rc: RunConfig, stem: str) -> Outcome:
    sample = ex.build_sample(cfg, rc.seed)
    P = sample.projection()
    n = sample.cloud.n_sites
    table = ExperimentTable("pairing", list(PAIRING_COLUMNS))
    results = {}

    opts = cfg.get("spectrum", {})
    t = abs(float(sample.H.params.get("t", 1.0)))
    width = float(opts.get("threshold", 0.1)) * t
    in_gap = ex.bulk_gap_open(sample.H, sample.fermi_energy, float(opts.get("bulk_margin", 4.0)), width)
    table.add("Fermi level in bulk gap", None, None, None, sample.fermi_energy, None, None, None,
              width, in_gap)

    glob = partition_pairing(sample.partition, P)
    tol = GLOBAL_TRACE_RTOL * n
    table.add("global pairing", None, glob.raw.real, glob.raw.imag, glob.normalized, glob.residual,
              0.0, abs(glob.raw), tol, bool(abs(glob.raw) <= tol))
    results["global"] = glob.to_json()
    tc = two_current_sum(sample.partition, P)
    table.add("2-current sum", None, tc.real, tc.imag, None, None, 0.0,
              abs(tc - glob.raw), tol, bool(abs(tc - glob.raw) <= tol))
    cx, cy = sample.center
    hs_res = commutator_trace(coordinate_halfspaces(sample.cloud, cx, cy), P)
    table.add("half-space commutator", None, hs_res.raw.real, hs_res.raw.imag, hs_res.normalized,
              hs_res.residual, 0.0, abs(hs_res.raw), tol, bool(abs(hs_res.raw) <= tol))
    results["half_space"] = hs_res.to_json()

    qtol = _tolerance(cfg, "quantization", ex.QUANTIZATION_TOL)
    radii = _window_radii(cfg)
    for r in radii:
        res = bulk_conductance(sample.partition, sample.window(r), P)
        ref = sample.oracle if sample.oracle is not None else round(res.normalized)
        dev = abs(res.normalized - ref)
        ok = dev <= qtol and res.residual <= RESIDUAL_RTOL * n
        table.add("sigma_K", r, res.raw.real, res.raw.imag, res.normalized, res.residual,
                  float(ref), dev, qtol, bool(ok))
        results[f"sigma_K(r={r:g})"] = res.to_json()
    details = {"results": results, "oracle": sample.oracle, "fermi_energy": sample.fermi_energy}
    figs = {"sample": lambda p: plotting.plot_sample(sample.cloud, sample.partition,
                                                     sample.window(max(radii)), p)}
    if len(radii) > 1:
        figs["sigma"] = lambda p: plotting.plot_columns(table, "r", "normalized", path=p)
    return Outcome(table, [table], details, figs)


SWEEP_COLUMNS = [("flux", ""), ("E", "t"), ("r", "spacing"), ("seed", ""), ("sigma", "e^2/h"),
                 ("residual", ""), ("oracle", ""), ("deviation", "e^2/h"), ("passed", ""),
                 ("note", "")]
SWEEP_PARTS = "sweep.parts"


def _row_key(flux, energy, r, seed) -> str:
    return config_hash({"flux": flux, "E": energy, "r": r, "seed": seed})


def cmd_sweep(cfg: dict, rc: RunConfig, stem: str) -> Outcome:
    grid = cfg["sweep"]["grid"]
    model = cfg.get("model", {"name": "hofstadter"})
    fluxes = [str(f) for f in grid.get("flux", [model.get("flux", "1/4")])]
    energies = [float(e) for e in grid["E"]] if "E" in grid else [None]
    radii = [float(r) for r in grid.get("r", _window_radii(cfg))]
    seeds = [int(s) for s in grid.get("seed", [rc.seed])]
    qtol = _tolerance(cfg, "quantization", ex.QUANTIZATION_TOL)
    w = float(cfg.get("disorder", {}).get("strength", 0.0))

    parts = rc.output_dir / SWEEP_PARTS
    manifest = parts / "manifest.json"
    chash = stem.split("-", 1)[1]
    if manifest.exists():
        old = json.loads(manifest.read_text()).get("config_hash")
        if old != chash:
            raise UsageError(f"{parts} holds rows of config {old}, not {chash}; "
                             "refusing to mix results (use a fresh --out)")
    parts.mkdir(parents=True, exist_ok=True)
    manifest.write_text(json.dumps({"config_hash": chash}, sort_keys=True))
    lock = threading.Lock()

    def marker(key: str) -> Path:
        return parts / f"row-{key}.json"

    def persist(key: str, row: tuple) -> None:
        with lock:
            tmp = marker(key).with_suffix(".tmp")
            tmp.write_text(json.dumps(list(row)))
            tmp.replace(marker(key))

    def work(item):
        flux, seed = item
        todo = [(e, r) for e in energies for r in radii
                if not marker(_row_key(flux, e, r, seed)).exists()]
        if not todo:
            return
        spec = copy.deepcopy(cfg)
        spec.pop("sweep", None)
        spec.setdefault("model", {})["flux"] = flux
        try:
            sample = ex.build_sample(spec, seed)
        except NumericalError as exc:
            for e, r in todo:
                persist(_row_key(flux, e, r, seed),
                        (flux, e, r, seed, None, None, None, None, False, str(exc)))
            return
        H = sample.H
        if w > 0:
            H = H.with_onsite(onsite_disorder(H.n_sites, w * abs(float(H.params.get("t", 1.0))), seed))
        for e in energies:
            energy = sample.fermi_energy if e is None else e
            try:
                P = fermi_projection(H, energy).matrix
            except GapError as exc:
                for r in radii:
                    persist(_row_key(flux, e, r, seed),
                            (flux, energy, r, seed, None, None, None, None, False, str(exc)))
                continue
            oracle = sample.oracle if e is None else ex._oracle(spec["model"], energy)
            for r in radii:
                key = _row_key(flux, e, r, seed)
                if marker(key).exists():
                    continue
                res = bulk_conductance(sample.partition, sample.window(r), P)
                ref = oracle if oracle is not None else round(res.normalized)
                dev = abs(res.normalized - ref)
                persist(key, (flux, energy, r, seed, res.normalized, res.residual, oracle, dev,
                              bool(dev <= qtol), "" if oracle is not None else "no oracle"))

    ex.pmap(work, list(itertools.product(fluxes, seeds)), rc.jobs)
    table = ExperimentTable("sweep", list(SWEEP_COLUMNS))
    for flux, e, r, seed in itertools.product(fluxes, energies, radii, seeds):
        m = marker(_row_key(flux, e, r, seed))
        if m.exists():
            table.add(*json.loads(m.read_text()))
    table.sort("flux", "E", "r", "seed")
    failing = [dict(zip(["flux", "E", "r", "seed", "note"], (rec["flux"], rec["E"], rec["r"],
                                                              rec["seed"], rec["note"])))
               for rec in table.records() if rec["passed"] is False]
    details = {"grid": {"flux": fluxes, "E": energies, "r": radii, "seed": seeds},
               "failing_rows": failing}
    figs = {}
    if table.rows:
        figs["sigma"] = lambda p: plotting.plot_columns(table, "r", "sigma", "flux", p)
    return Outcome(table, [table], details, figs)


VERIFY_COLUMNS = [("suite", ""), ("instance", ""), ("check", ""), ("value", ""), ("bound", ""),
                  ("passed", "")]


def cmd_verify(cfg: dict, rc: RunConfig, stem: str) -> Outcome:
    v = {"instances": 200, "n_min": 8, "n_max": 32, "det_instances": 10, "det_size": 8,
         "pairs": 10, "seminorm_instances": 50, **cfg.get("verify", {})}
    if v["n_max"] < v["n_min"]:
        raise UsageError("config error at verify.n_max: must be >= verify.n_min")
    identity = ex.identity_batch(v["instances"], rc.seed, rc.jobs, (v["n_min"], v["n_max"]))

    det = ExperimentTable("determinant", list(ex.DETERMINANT_COLUMNS))
    cloud = build_square_lattice(v["det_size"], v["det_size"])
    c = (v["det_size"] - 1) / 2
    hs = coordinate_halfspaces(cloud, c, c)
    for k in range(v["det_instances"]):
        rng = np.random.default_rng(rc.seed + k)
        P = ex.random_idempotent(cloud.n_sites, int(rng.integers(0, cloud.n_sites + 1)), rng,
                                 hermitian=True)
        t = ex.determinant_identity_suite(P, hs, v["pairs"] if k == 0 else 0, rc.seed + k)
        det.rows.extend((f"{row[0]}#{k}",) + row[1:] for row in t.rows)
    semi = ex.seminorm_inequality_suite(v["seminorm_instances"], rc.seed)

    table = ExperimentTable("verify", list(VERIFY_COLUMNS))
    for r in identity.records():
        table.add("identity", r["instance"], r["identity"], r["defect"], r["tolerance"], r["passed"])
    for r in det.records():
        table.add("determinant", r["case"], r["check"], r["defect"], r["tolerance"], r["passed"])
    for r in semi.records():
        table.add("seminorm", r["instance"], f"{r['inequality']} nu={r['nu']:g}", r["lhs"], r["rhs"],
                  r["passed"])
    figs = {"defects": lambda p: plotting.plot_check_values(table, p)}
    return Outcome(table, [identity, det, semi], {"verify": v}, figs)


def cmd_decay(cfg: dict, rc: RunConfig, stem: str) -> Outcome:
    sample = ex.build_sample(cfg, rc.seed)
    d = cfg.get("decay", {})
    r0 = float(d.get("r0", 2 * math.sqrt(2)))
    bins = d.get("bins", list(range(13)))
    margin = float(d.get("margin", 4.0))
    max_slope = float(d.get("max_slope", -0.2))
    P = sample.projection()
    tiling = build_tiling(sample.cloud, r0)
    bulk = interior_mask(sample.cloud, margin)
    prof = ops.decay_profile(P, tiling, bins, restrict=bulk)
    rep = ops.seminorm_report(P, tiling, d.get("nus", ops.NU_GRID), restrict=bulk)
    table = ExperimentTable("decay", [("bin_lo", "spacing"), ("bin_hi", "spacing"),
                                      ("max_trace_norm", "")])
    for a, b, val in zip(prof.bin_lo, prof.bin_hi, prof.value):
        table.add(float(a), float(b), float(val))
    checks = _checks("decay")
    slope = prof.slope()
    checks.add("log-linear slope", slope, max_slope, slope is not None and slope <= max_slope)
    details = {"slope": slope, "r0": r0, "tiles": tiling.n_tiles,
               "seminorms": [{"kind": k, "nu": nu, "value": val} for k, nu, _, val in rep.rows()]}
    figs = {"decay": lambda p: plotting.plot_decay(prof, p)}
    return Outcome(table, [checks], details, figs)


def cmd_geometry(cfg: dict, rc: RunConfig, stem: str) -> Outcome:
    g = cfg.get("geometry", {})
    r_samples = [float(r) for r in g.get("r_samples", [1, 2, 4, 8])]
    cloud = ex.build_cloud(cfg.get("model", {"name": "hofstadter", "size": 32}), rc.seed)
    p = ex.build_partition(cfg, cloud)
    table = ExperimentTable("geometry", [("profile", ""), ("r", "spacing"), ("value", "")])
    trans = transversality_profile(list(p), r_samples)
    vol = volume_growth_profile(cloud, r_samples)
    exc = excisiveness_profile([thicken(z, 1.5) for z in p], r_samples)
    for name, prof_r, vals in (("transversality_diameter", trans.r, trans.value),
                               ("volume_growth", vol.r, vol.value),
                               ("excisiveness_f_hat", exc.r_samples, exc.f_hat)):
        for a, b in zip(prof_r, vals):
            table.add(name, float(a), float(b))

    checks = _checks("geometry")
    rng = np.random.default_rng(rc.seed)
    for k in range(5):
        A = RegionMask(rng.random(cloud.n_sites) < 0.05, cloud)
        B = RegionMask(rng.random(cloud.n_sites) < 0.05, cloud)
        for r in r_samples:
            ok = thicken(A | B, r).equals(thicken(A, r) | thicken(B, r))
            checks.add(f"union law #{k} r={r:g}", None, None, ok)
    back = halfspaces_to_partition(partition_to_halfspaces(p))
    checks.add("partition -> half-spaces -> partition", None, None, back.equals(p))
    suites = [checks]
    details = {"excisiveness": {"verdict": exc.verdict, "mu_hat": exc.mu_hat, "base_thickening": 1.5},
               "volume_exponent": vol.exponent}
    if g.get("examples", False):
        examples = ex.excisiveness_examples()
        suites.append(examples)
        details["examples"] = examples.records()
    figs = {"profiles": lambda path: plotting.plot_profiles(
        {"transversality diameter": (trans.r, trans.value), "volume": (vol.r, vol.value),
         "excisiveness f_hat": (exc.r_samples, exc.f_hat)}, path),
            "partition": lambda path: plotting.plot_sample(cloud, p, None, path)}
    return Outcome(table, suites, details, figs)


HANDLERS = {"model": cmd_model, "spectrum": cmd_spectrum, "pairing": cmd_pairing,
            "sweep": cmd_sweep, "verify": cmd_verify, "decay": cmd_decay, "geometry": cmd_geometry}


# ---------------------------------------------------------------- driver

def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return str(obj)


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n"


def _summary_line(command: str, s: dict) -> str:
    worst = s["worst_defect"]
    tail = f", worst defect {worst:.3g}" if worst is not None else ""
    return f"{command}/{s['suite']}: {s['pass_count']} passed, {s['fail_count']} failed{tail}"


def run(rc: RunConfig) -> int:
    try:
        if rc.command not in HANDLERS:
            raise UsageError(f"unknown command {rc.command!r}")
        if not 0 <= rc.seed < 2 ** 64:
            raise UsageError("--seed must be an unsigned 64-bit integer")
        cfg = apply_overrides(load_config(rc.config_path), rc.overrides)
        validate_config(cfg)
        if rc.command == "sweep" and "sweep" not in cfg:
            raise UsageError("config error at sweep: the sweep command needs a 'sweep.grid' section")
        try:
            rc.output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise UsageError(f"cannot create output directory {rc.output_dir}: {exc}") from exc
        if not os.access(rc.output_dir, os.W_OK):
            raise UsageError(f"output directory {rc.output_dir} is not writable")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    chash = config_hash({"command": rc.command, "config": cfg, "seed": rc.seed})
    stem = f"{rc.command}-{chash}"
    meta = {"command": rc.command, "config_hash": chash, "seed": rc.seed, "version": __version__}
    try:
        outcome = HANDLERS[rc.command](cfg, rc, stem)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ArgumentError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, ContractError) as exc:
        diag = {**meta, "error": type(exc).__name__, "message": str(exc)}
        (rc.output_dir / f"{stem}.json").write_text(_dump(diag))
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    outcome.table.metadata.update(meta)
    outcome.table.write_csv(rc.output_dir / f"{stem}.csv")
    summaries = [s.summary() for s in outcome.suites]
    passed = all(s["fail_count"] == 0 for s in summaries)
    doc = {**meta, "passed": passed, "suites": summaries, "details": outcome.details}
    (rc.output_dir / f"{stem}.json").write_text(_dump(doc))
    if rc.figures:
        for suffix, draw in outcome.figures.items():
            draw(rc.output_dir / f"{stem}.{suffix}.png")
    for s in summaries:
        print(_summary_line(rc.command, s))
    return EXIT_OK if passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coarse-hall", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"coarse-hall {__version__}")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True,
                        help="JSON config path, or builtin:NAME for a bundled config")
    parser.add_argument("--out", default="out", help="output directory (default: ./out)")
    parser.add_argument("--seed", type=int, default=0, help="unsigned 64-bit seed (default 0)")
    parser.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                        help="worker threads (default: available CPUs)")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry by dotted path; repeatable")
    parser.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = {}
        for text in args.set:
            path, value = parse_override(text)
            overrides[".".join(path)] = value
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.jobs < 1:
        print("usage error: --jobs must be positive", file=sys.stderr)
        return EXIT_USAGE
    rc = RunConfig(args.command, args.config, Path(args.out), args.seed, overrides,
                   args.jobs, not args.no_figures)
    return run(rc)


if __name__ == "__main__":
    sys.exit(main())
