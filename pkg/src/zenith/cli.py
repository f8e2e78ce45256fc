"""Command-line interface: verify / search / simulate / sense.

Artifacts are JSON (reports, configs) and CSV (traces); every output
carries the master seed and a hash of the resolved configuration, and
reruns with identical manifests produce byte-identical files.  Exit
codes: 0 ok, 1 verification failure, 2 search failure, 3 bad config,
4 fit failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

from . import __version__
from .control import PulseSequence
from .dipole import (
    ClusterSpec,
    PairGeometry,
    pair_hamiltonian,
    sample_cluster,
    secular_consistency_check,
)
from .dynamics import (
    InsufficientHorizon,
    RunConfig,
    crossing_time,
    finite_size_study,
    fit_power_law,
    protection_factor,
    stroboscopic_run,
)
from .operators import SPIN_MATS, rotation, rotation_table_report
from .search import (
    aht_zeroth,
    enumerate_family,
    find_minimal_subsets,
    generate_group,
    probe_pair_hamiltonian,
    symmetrize,
)
from .sensing import (
    DELTA_LAMBDA,
    EstimationError,
    SequenceInconsistency,
    effective_hamiltonian,
    ramsey_run,
    spectral_range,
)

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_SEARCH = 2
EXIT_CONFIG = 3
EXIT_FIT = 4


@dataclass(frozen=True)
class RunManifest:
    command: str
    config_path: str | None
    out_dir: str
    master_seed: int
    threads: int
    tolerance: float | None

    def to_json(self) -> dict:
        return {
            "command": self.command,
            "config_path": self.config_path,
            "out_dir": self.out_dir,
            "master_seed": self.master_seed,
            "threads": self.threads,
            "tolerance": self.tolerance,
            "version": __version__,
        }


class ConfigError(ValueError):
    pass


def _load_config(path: str | None, default_preset: str | None = None) -> dict:
    if path is None:
        if default_preset is None:
            raise ConfigError("missing --config")
        with resources.files("zenith.presets").joinpath(default_preset).open() as f:
            cfg = json.load(f)
    else:
        try:
            with open(path) as f:
                cfg = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if cfg.get("schema") != 1:
        raise ConfigError("config field 'schema' must be 1")
    return cfg


def _config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _require(cfg: dict, key: str, types, where: str = "config"):
    if key not in cfg:
        raise ConfigError(f"{where}: missing required key '{key}'")
    if not isinstance(cfg[key], types):
        raise ConfigError(f"{where}: key '{key}' has wrong type "
                          f"({type(cfg[key]).__name__})")
    return cfg[key]


def _write_json(path, payload) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, indent=1, sort_keys=True)
        f.write("\n")


def _sequence_registry() -> dict[str, PulseSequence]:
    fam = enumerate_family(phase_choices=(1, 1, 1, 1, 1))
    return {z.label: z.sequence for z in fam}


def _resolve_sequence(sequence_id: str, symmetrized: bool) -> PulseSequence:
    reg = _sequence_registry()
    if sequence_id not in reg:
        raise ConfigError(f"unknown sequence_id '{sequence_id}'; "
                          f"known: {sorted(reg)}")
    seq = reg[sequence_id]
    return symmetrize(seq) if symmetrized else seq


def _cluster_spec(cfg: dict, n_spins: int) -> ClusterSpec:
    r0 = float(cfg.get("r0_nm", 1.0))
    if "density_ppm" in cfg:
        return ClusterSpec(n_spins, r0, density_ppm=float(cfg["density_ppm"]))
    edge = float(cfg.get("box_edge_r0", 2.0)) * r0
    return ClusterSpec(n_spins, r0, box_edge_nm=edge)


# ---------------------------------------------------------------------------
# verify


def _verify_checks(tolerance: float | None, seed: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    checks: list[dict] = []

    def add(name: str, residual: float, tol: float):
        tol = tolerance if tolerance is not None else tol
        checks.append({"check": name, "residual": float(residual),
                       "tolerance": tol, "passed": bool(residual < tol)})

    table = rotation_table_report()
    add("rotation-table-24-entries", max(e["residual"] for e in table), 1e-12)

    graph = generate_group()
    checks.append({"check": "group-order", "value": graph.order,
                   "expected": 96, "passed": graph.order == 96})

    result = find_minimal_subsets(graph)
    ok = (len(result.subsets) == 4
          and len(result.canonical_paths) == 8
          and result.no_smaller_subset)
    checks.append({"check": "minimal-subsets-4x2", "passed": bool(ok),
                   "subsets": len(result.subsets),
                   "paths": len(result.canonical_paths),
                   "census": len(result.census)})

    h_ec, h_nc = probe_pair_hamiltonian()
    fam = enumerate_family(phase_choices=(1, 1, 1, 1, 1), search=result)
    worst = 0.0
    for z in fam:
        for _ in range(5):
            geom = PairGeometry(rng.uniform(1.0, 2.0),
                                float(np.arccos(rng.uniform(-1, 1))),
                                rng.uniform(0, 2 * np.pi))
            h = pair_hamiltonian(geom).total
            worst = max(worst, np.linalg.norm(aht_zeroth(z.sequence, h))
                        / np.linalg.norm(h))
    add("family-aht-zeroth", worst, 1e-12)

    z2 = np.kron(rotation("Z").matrix, rotation("Z").matrix)
    worst = 0.0
    for _ in range(10):
        geom = PairGeometry(rng.uniform(1.0, 2.0),
                            float(np.arccos(rng.uniform(-1, 1))),
                            rng.uniform(0, 2 * np.pi))
        ph = pair_hamiltonian(geom)
        worst = max(worst,
                    np.abs(z2 @ ph.h_ec @ z2.conj().T - ph.h_ec).max(),
                    np.abs(z2 @ ph.h_nc @ z2.conj().T + ph.h_nc).max())
    add("z-parity", worst, 1e-12)

    worst = 0.0
    for z in fam:
        es = effective_hamiltonian(z.sequence)
        ev, delta, _ = spectral_range(es)
        h = es.unit_matrix
        worst = max(worst,
                    abs(np.trace(h).real),
                    abs(np.trace(h @ h).real - 12.0),
                    abs(abs(np.trace(h @ h @ h).real) - 12.0),
                    abs(delta - DELTA_LAMBDA))
    add("signal-identities", worst, 1e-10)

    geom = PairGeometry(1.3, 1.1, 0.7)
    rwa = secular_consistency_check(geom, splitting=1e4 * 1.0 / 1.3 ** 3)
    add("rwa-magnus-residual", rwa.magnus_residual, 1e-3)
    add("rwa-quadrature-residual", rwa.quadrature_residual, 1e-12)
    return checks


def _verify_sequence_files(paths, tolerance: float | None) -> list[dict]:
    checks = []
    tol = tolerance if tolerance is not None else 1e-12
    h_ec, h_nc = probe_pair_hamiltonian()
    h = h_ec + h_nc
    for path in paths:
        try:
            with open(path) as f:
                seq = PulseSequence.from_json(json.load(f))
            residual = float(np.linalg.norm(aht_zeroth(seq, h))
                             / np.linalg.norm(h))
            entry = {"check": f"sequence-file:{os.path.basename(path)}",
                     "residual": residual, "tolerance": tol,
                     "passed": bool(residual < tol)}
            try:
                effective_hamiltonian(seq)
            except SequenceInconsistency as exc:
                entry["signal_structure"] = f"failed: {exc}"
                entry["passed"] = False
            checks.append(entry)
        except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
            checks.append({"check": f"sequence-file:{os.path.basename(path)}",
                           "passed": False, "error": str(exc)})
    return checks


def cmd_verify(manifest: RunManifest, args) -> int:
    checks = _verify_checks(manifest.tolerance, manifest.master_seed)
    if args.sequences:
        checks += _verify_sequence_files(args.sequences, manifest.tolerance)
    n_failed = sum(not c["passed"] for c in checks)
    report = {
        "manifest": manifest.to_json(),
        "checks": checks,
        "failed": n_failed,
        "passed": len(checks) - n_failed,
    }
    os.makedirs(manifest.out_dir, exist_ok=True)
    _write_json(os.path.join(manifest.out_dir, "verify_report.json"), report)
    for c in checks:
        status = "ok" if c["passed"] else "FAIL"
        extra = f" residual={c['residual']:.3e}" if "residual" in c else ""
        print(f"[{status}] {c['check']}{extra}")
    print(f"{report['passed']}/{len(checks)} checks passed")
    return EXIT_OK if n_failed == 0 else EXIT_VERIFY


# ---------------------------------------------------------------------------
# search


def cmd_search(manifest: RunManifest, args) -> int:
    os.makedirs(manifest.out_dir, exist_ok=True)
    graph = generate_group()
    result = find_minimal_subsets(graph, max_order=args.max_order)

    report = {
        "manifest": manifest.to_json(),
        "group_order": graph.order,
        "n_edges": len(graph.edges),
        "solution_order": result.solution_order,
        "orders_without_solutions": list(result.orders_without_solutions),
        "no_smaller_subset": result.no_smaller_subset,
        "n_subsets": len(result.subsets),
        "n_canonical_paths": len(result.canonical_paths),
        "n_census_paths": len(result.census),
        "subsets": [
            {"initial_pulse": s.initial_pulse,
             "paths": [list(p.pulses) for p in s.paths]}
            for s in result.subsets
        ],
        "census": sorted("..".join(p.pulses) for p in result.census),
    }
    _write_json(os.path.join(manifest.out_dir, "search_report.json"), report)

    if result.solution_order is None:
        print(f"no decoupling solution of order <= {args.max_order}")
        if args.max_order >= 6:
            return EXIT_SEARCH
        return EXIT_OK

    fam = enumerate_family(phase_choices=(1, 1, 1, 1, 1), search=result)
    seq_dir = os.path.join(manifest.out_dir, "sequences")
    os.makedirs(seq_dir, exist_ok=True)
    for z in fam:
        _write_json(os.path.join(seq_dir, z.label + ".json"),
                    z.sequence.to_json())
    print(f"group order {graph.order}; {len(result.subsets)} subsets, "
          f"{len(result.canonical_paths)} canonical paths "
          f"({len(result.census)} total); wrote {len(fam)} sequences")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def _simulate_survival(cfg: dict, manifest: RunManifest, out: dict) -> None:
    n_spins = _require(cfg, "n_spins", int)
    jt_list = _require(cfg, "jt_list", list)
    n_periods = _require(cfg, "n_periods", int)
    n_profiles = int(cfg.get("n_profiles", 1))
    seq = _resolve_sequence(cfg.get("sequence_id", "zenith-Xa"),
                            bool(cfg.get("symmetrized", True)))
    spec = _cluster_spec(cfg, n_spins)
    fid_sub = int(cfg.get("fid_subdivisions", 24))
    q_table = []
    for jt in jt_list:
        run = RunConfig(jt=float(jt), n_periods=n_periods, cluster=spec,
                        n_profiles=n_profiles, sequence=seq,
                        master_seed=manifest.master_seed)
        ts = stroboscopic_run(run, threads=manifest.threads)
        fid = stroboscopic_run(replace(run, sequence=None,
                                       record_subdivisions=fid_sub),
                               threads=manifest.threads)
        tag = f"N{n_spins}_JT{jt:g}"
        ts.to_csv(os.path.join(manifest.out_dir, f"zenith_{tag}.csv"))
        fid.to_csv(os.path.join(manifest.out_dir, f"fid_{tag}.csv"))
        try:
            q = protection_factor(ts, fid)
            q_entry = {"jt": jt, **q}
        except InsufficientHorizon as exc:
            q_entry = {"jt": jt, "q_lower_bound": exc.q_lower_bound,
                       "note": str(exc)}
        q_table.append(q_entry)
    out["q_table"] = q_table


def _simulate_power_law(cfg: dict, manifest: RunManifest, out: dict) -> int:
    n_spins = _require(cfg, "n_spins", int)
    jt_list = _require(cfg, "jt_list", list)
    n_profiles = int(cfg.get("n_profiles", 1))
    max_periods = int(cfg.get("max_periods", 200000))
    seq = _resolve_sequence(cfg.get("sequence_id", "zenith-Xa"),
                            bool(cfg.get("symmetrized", True)))
    spec = _cluster_spec(cfg, n_spins)
    points = []
    for jt in jt_list:
        qs = []
        run = RunConfig(jt=float(jt), n_periods=max_periods, cluster=spec,
                        n_profiles=1, sequence=seq,
                        master_seed=manifest.master_seed)
        fid_run = RunConfig(jt=float(jt), n_periods=40, cluster=spec,
                            n_profiles=1, sequence=None,
                            record_subdivisions=24,
                            master_seed=manifest.master_seed)
        for k in range(n_profiles):
            ts = stroboscopic_run(replace(run, master_seed=manifest.master_seed + k))
            fid = stroboscopic_run(replace(fid_run, master_seed=manifest.master_seed + k))
            try:
                qs.append(protection_factor(ts, fid)["q"])
            except InsufficientHorizon:
                pass
        if qs:
            points.append((float(jt), float(np.mean(qs))))
    out["q_points"] = [{"jt": x, "q": q} for x, q in points]
    try:
        fit = fit_power_law(points)
    except ValueError as exc:
        out["fit_error"] = str(exc)
        return EXIT_FIT
    out["fit"] = {"alpha": fit.alpha, "prefactor": fit.prefactor,
                  "alpha_stderr": fit.alpha_stderr,
                  "extrapolated_q_at_jt_0.1": fit.extrapolate(0.1)}
    return EXIT_OK


def _simulate_finite_size(cfg: dict, manifest: RunManifest, out: dict) -> None:
    n_values = _require(cfg, "n_values", list)
    profiles_cfg = _require(cfg, "profiles", dict)
    window = tuple(cfg.get("window", (492.0, 500.0)))
    edge0 = float(cfg.get("box_edge_r0", 2.0))
    n_ref = int(cfg.get("density_reference_n", 4))
    specs = {}
    profiles = {}
    for n in n_values:
        n = int(n)
        edge = edge0 * (n / n_ref) ** (1.0 / 3.0)   # constant density
        specs[n] = ClusterSpec(n, 1.0, box_edge_nm=edge)
        profiles[n] = int(profiles_cfg[str(n)])
    res = finite_size_study(specs, profiles, window=window,
                            master_seed=manifest.master_seed,
                            threads=manifest.threads)
    out["finite_size"] = {
        "entries": [{"n": n, "p_s": p, "sem": s} for n, p, s in res.entries],
        "slope_vs_inverse_n": res.slope,
        "intercept": res.intercept,
        "r_squared": res.r_squared,
        "window": list(res.window),
        "window_warning": res.window_warning,
    }


def cmd_simulate(manifest: RunManifest, args) -> int:
    try:
        cfg = _load_config(args.config)
        mode = _require(cfg, "mode", str)
        os.makedirs(manifest.out_dir, exist_ok=True)
        out = {"manifest": manifest.to_json(), "config_hash": _config_hash(cfg),
               "config": cfg}
        code = EXIT_OK
        if mode == "survival":
            _simulate_survival(cfg, manifest, out)
        elif mode == "power_law":
            code = _simulate_power_law(cfg, manifest, out)
        elif mode == "finite_size":
            _simulate_finite_size(cfg, manifest, out)
        else:
            raise ConfigError(f"unknown simulate mode '{mode}'")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _write_json(os.path.join(manifest.out_dir, "simulate_report.json"), out)
    print(json.dumps({k: v for k, v in out.items() if k != "config"},
                     indent=1, sort_keys=True, default=str))
    return code


# ---------------------------------------------------------------------------
# sense


def cmd_sense(manifest: RunManifest, args) -> int:
    try:
        cfg = _load_config(args.config, default_preset="fig3d-desk.json")
        n_spins = _require(cfg, "n_spins", int)
        mu_t = _require(cfg, "mu_t", (int, float))
        jt_list = _require(cfg, "jt_list", list)
        n_periods = _require(cfg, "n_periods", int)
        n_profiles = int(cfg.get("n_profiles", 1))
        initial = cfg.get("initial", "optimal")
        seq = _resolve_sequence(cfg.get("sequence_id", "zenith-Xa"),
                                bool(cfg.get("symmetrized", True)))
        spec = _cluster_spec(cfg, n_spins)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    os.makedirs(manifest.out_dir, exist_ok=True)
    out = {"manifest": manifest.to_json(), "config_hash": _config_hash(cfg),
           "config": cfg, "runs": []}
    code = EXIT_OK
    for jt in jt_list:
        mu = float(mu_t) / float(jt)
        run = RunConfig(jt=float(jt), n_periods=n_periods, cluster=spec,
                        n_profiles=n_profiles, signal_mu=mu,
                        master_seed=manifest.master_seed)
        try:
            res = ramsey_run(run, seq, initial=initial,
                             threads=manifest.threads)
        except EstimationError as exc:
            out["runs"].append({"jt": jt, "error": str(exc)})
            code = EXIT_FIT
            continue
        tag = f"N{n_spins}_JT{jt:g}"
        res.protocol_trace.to_csv(
            os.path.join(manifest.out_dir, f"sense_zenith_{tag}.csv"))
        res.fid_trace.to_csv(
            os.path.join(manifest.out_dir, f"sense_fid_{tag}.csv"))
        out["runs"].append({
            "jt": jt, "mu": mu,
            "estimated_mu": res.estimated_mu,
            "relative_deviation": res.relative_deviation,
            "fit_stderr": res.fit_stderr,
            "delta_lambda": res.delta_lambda,
            "coefficients": res.coefficients,
            "fid_estimated_mu": res.fid_estimated_mu,
            "fid_relative_deviation": res.fid_relative_deviation,
            "fid_fit_stderr": (None if not np.isfinite(res.fid_fit_stderr)
                               else res.fid_fit_stderr),
        })
    _write_json(os.path.join(manifest.out_dir, "sense_report.json"), out)
    print(json.dumps(out["runs"], indent=1, sort_keys=True, default=str))
    return code


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zenith",
        description="zero-field dipolar decoupling: verify, search, "
                    "simulate, sense")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="JSON config path")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed (overrides ZENITH_SEED)")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: cpu count)")
        p.add_argument("--tolerance", type=float, default=None,
                       help="override verification tolerances")

    p_verify = sub.add_parser("verify", help="run the invariant suite")
    common(p_verify)
    p_verify.add_argument("--sequences", nargs="*", default=None,
                          help="extra sequence JSON files to verify")

    p_search = sub.add_parser("search", help="group + minimal subset search")
    common(p_search)
    p_search.add_argument("--max-order", type=int, default=6,
                          help="largest subset order to try")

    p_sim = sub.add_parser("simulate", help="survival / scaling studies")
    common(p_sim)

    p_sense = sub.add_parser("sense", help="DC magnetometry runs")
    common(p_sense)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    seed = args.seed
    if seed is None:
        seed = int(os.environ.get("ZENITH_SEED", "0"))
    threads = args.threads if args.threads else (os.cpu_count() or 1)
    manifest = RunManifest(args.command, args.config, args.out, seed,
                           threads, args.tolerance)
    handler = {"verify": cmd_verify, "search": cmd_search,
               "simulate": cmd_simulate, "sense": cmd_sense}[args.command]
    return handler(manifest, args)


if __name__ == "__main__":
    sys.exit(main())
