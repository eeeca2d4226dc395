"""Command-line interface: ``run``, ``localize`` and ``validate``.

Exit codes: 0 success, 1 runtime failure, 2 invalid input or usage,
3 infeasible localization constraints.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import os
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__, kernels
from .arce import ArceInput, InfeasibleConstraints, arce_localize
from .config import ConfigError, ExperimentConfig, load_config, parse_config, resolve_config_path
from .geom import BeamConstraint, NodeGeometry
from .metrics import (
    run_experiment,
    write_fusion_csv,
    write_results_csv,
    write_summary_csv,
    write_tracks_csv,
)
from .pipeline import VARIANTS
from .scenario import reference_beam, reference_geometry

OUT_DIR_ENV = "MPRNTRACK_OUT_DIR"
DEFAULT_OUT_DIR = "mprntrack-out"
MANIFEST_FORMAT = 1

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID, EXIT_INFEASIBLE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _err(msg: str) -> None:
    print(f"mprntrack: error: {msg}", file=sys.stderr)


def _sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _sha256_file(path: Path) -> str:
    return _sha256_bytes(path.read_bytes())


def _vec3(text: str) -> list[float]:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,z in metres, got {text!r}")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y,z in metres, got {text!r}") from None


# --- run ----------------------------------------------------------------------------


@dataclasses.dataclass
class RunPlan:
    """Everything that determines the outputs of ``run``."""

    config_text: str
    config_source: str
    variants: list[str]
    snr_db: list[float]
    runs: int
    seed: int
    n_particles: int | None
    c_tilde: float | None
    tracks: bool
    diagnostics: bool

    def overrides(self) -> dict:
        return {"n_particles": self.n_particles, "c_tilde": self.c_tilde}


def _apply(plan: RunPlan) -> ExperimentConfig:
    exp = parse_config(plan.config_text, plan.config_source)
    if plan.n_particles is not None:
        exp.tracker = exp.tracker.with_(n_particles=plan.n_particles)
    if plan.c_tilde is not None:
        exp.fusion = dataclasses.replace(exp.fusion, c_tilde=plan.c_tilde)
    return exp


def _execute(plan: RunPlan, out_dir: Path, jobs: int) -> dict[str, str]:
    exp = _apply(plan)
    results = []
    for snr in plan.snr_db:
        cfg = dataclasses.replace(exp.scenario, snr_ref_db=snr)
        for variant in plan.variants:
            results.extend(
                run_experiment(
                    cfg,
                    variant,
                    exp.fusion,
                    plan.runs,
                    plan.seed,
                    exp.tracker,
                    exp.gospa,
                    jobs=jobs,
                    record=plan.tracks or plan.diagnostics,
                )
            )
    # single writer after every run has been reduced
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {"results.csv": lambda p: write_results_csv(p, results, exp.gospa.order),
             "summary.csv": lambda p: write_summary_csv(p, results)}
    if plan.tracks:
        files["tracks.csv"] = lambda p: write_tracks_csv(p, results)
    if plan.diagnostics:
        files["fusion.csv"] = lambda p: write_fusion_csv(p, results)
    hashes = {}
    for name, writer in files.items():
        writer(out_dir / name)
        hashes[name] = _sha256_file(out_dir / name)
    return hashes


def _manifest(plan: RunPlan, hashes: dict[str, str]) -> dict:
    return {
        "format": MANIFEST_FORMAT,
        "config_source": plan.config_source,
        "config_sha256": _sha256_bytes(plan.config_text.encode()),
        "config_text": plan.config_text,
        "variants": plan.variants,
        "snr_db": plan.snr_db,
        "runs": plan.runs,
        "seed": plan.seed,
        "run_seeds": [[plan.seed, r] for r in range(plan.runs)],
        "overrides": plan.overrides(),
        "record_tracks": plan.tracks,
        "record_diagnostics": plan.diagnostics,
        "versions": {
            "mprntrack": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "kernel_backend": kernels.BACKEND,
        "outputs": hashes,
    }


def _plan_from_manifest(path: Path) -> tuple[RunPlan, dict]:
    try:
        m = json.loads(path.read_text())
        if m.get("format") != MANIFEST_FORMAT:
            raise ValueError(f"unsupported manifest format {m.get('format')!r}")
        if _sha256_bytes(m["config_text"].encode()) != m["config_sha256"]:
            raise ValueError("embedded config does not match its recorded hash")
        ov = m["overrides"]
        plan = RunPlan(
            m["config_text"],
            m["config_source"],
            list(m["variants"]),
            [float(v) for v in m["snr_db"]],
            int(m["runs"]),
            int(m["seed"]),
            ov["n_particles"],
            ov["c_tilde"],
            bool(m["record_tracks"]),
            bool(m["record_diagnostics"]),
        )
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"unreadable manifest: {exc}", None, str(path)) from None
    return plan, m


def cmd_run(args) -> int:
    out_dir = Path(args.out_dir or os.environ.get(OUT_DIR_ENV) or DEFAULT_OUT_DIR)
    reference = None
    if args.from_manifest:
        plan, reference = _plan_from_manifest(Path(args.from_manifest))
    else:
        if not args.config:
            raise UsageError("run: a config path or shipped scenario name is required (or --from-manifest)")
        try:
            path = resolve_config_path(args.config)
        except FileNotFoundError as exc:
            raise ConfigError(str(exc), None, args.config) from None
        exp = load_config(str(path))
        variants = args.variant.split(",") if args.variant else exp.variants
        for v in variants:
            if v not in VARIANTS:
                raise UsageError(f"run: unknown variant {v!r}; expected one of {', '.join(VARIANTS)}")
        if args.runs is not None and args.runs < 0:
            raise UsageError("run: --runs must be >= 0")
        if args.n_particles is not None and args.n_particles < 1:
            raise UsageError("run: --n-particles must be >= 1")
        if args.c_tilde is not None and not args.c_tilde > 0:
            raise UsageError("run: --c-tilde must be > 0")
        plan = RunPlan(
            exp.text,
            str(path),
            variants,
            [args.snr_db] if args.snr_db is not None else exp.snr_values(),
            exp.runs if args.runs is None else args.runs,
            exp.seed if args.seed is None else args.seed,
            args.n_particles,
            args.c_tilde,
            args.tracks,
            args.diagnostics,
        )
        _apply(plan)  # validates overrides against the schema before any run
    hashes = _execute(plan, out_dir, max(1, args.jobs))
    manifest = _manifest(plan, hashes)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {', '.join(sorted(hashes))} and manifest.json to {out_dir}")
    if reference is not None:
        if reference["outputs"] != hashes:
            diff = sorted(k for k in set(hashes) | set(reference["outputs"])
                          if hashes.get(k) != reference["outputs"].get(k))
            _err(f"outputs differ from the manifest: {', '.join(diff)} "
                 f"(recorded backend {reference.get('kernel_backend')}, current {kernels.BACKEND})")
            return EXIT_RUNTIME
        print("outputs reproduce the manifest byte-for-byte")
    return EXIT_OK


# --- localize -------------------------------------------------------------------------


def _read_measurements(path: str) -> tuple[np.ndarray, np.ndarray]:
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    except OSError as exc:
        raise UsageError(f"localize: cannot read {path}: {exc.strerror}") from None
    if not rows:
        raise UsageError(f"localize: {path} is empty; expected columns receiver,range_m")
    header = [h.strip() for h in rows[0]]
    if header[:2] != ["receiver", "range_m"]:
        raise UsageError(f"localize: {path}:1: expected header 'receiver,range_m', got {','.join(header)!r}")
    rec, rho = [], []
    for n, row in enumerate(rows[1:], start=2):
        try:
            rec.append(int(row[0]))
            rho.append(float(row[1]))
        except (ValueError, IndexError):
            raise UsageError(f"localize: {path}:{n}: malformed row {','.join(row)!r}") from None
    if not rec:
        raise UsageError(f"localize: {path} has no measurements")
    return np.array(rec), np.array(rho)


def cmd_localize(args) -> int:
    rec, rho = _read_measurements(args.measurements)
    if args.config:
        exp = load_config(args.config)
        geometry, beam = exp.scenario.geometry, exp.scenario.beam
    else:
        geometry, beam = reference_geometry(), reference_beam()
    if args.tx_m is not None or args.rx_m:
        tx = args.tx_m if args.tx_m is not None else list(geometry.tx_position)
        rx = args.rx_m if args.rx_m else geometry.rx_positions
        try:
            geometry = NodeGeometry(np.array(tx, float), np.array(rx, float))
        except ValueError as exc:
            raise UsageError(f"localize: {exc}") from None
    b = {
        "az_c": math.degrees(beam.azimuth_center),
        "az_hw": math.degrees(beam.azimuth_halfwidth),
        "el_c": math.degrees(beam.elevation_center),
        "el_hw": math.degrees(beam.elevation_halfwidth),
    }
    for key, attr in (("az_c", "azimuth_center_deg"), ("az_hw", "azimuth_halfwidth_deg"),
                      ("el_c", "elevation_center_deg"), ("el_hw", "elevation_halfwidth_deg")):
        if getattr(args, attr) is not None:
            b[key] = getattr(args, attr)
    lo = 0.0 if args.range_min_m is None else args.range_min_m
    hi = math.inf if args.range_max_m is None else args.range_max_m
    if lo > hi:
        _err(f"localize: infeasible constraints: range_min_m {lo} exceeds range_max_m {hi}")
        return EXIT_INFEASIBLE
    try:
        beam = BeamConstraint.from_degrees(b["az_c"], b["az_hw"], b["el_c"], b["el_hw"], lo, hi)
        inp = ArceInput(rec, rho, geometry, beam)
    except ValueError as exc:
        raise UsageError(f"localize: {exc}") from None
    try:
        est = arce_localize(inp)
    except InfeasibleConstraints as exc:
        _err(f"localize: infeasible constraints: {exc}")
        return EXIT_INFEASIBLE
    x, y, z = (float(v) for v in est.position)
    print(json.dumps({
        "x_m": x,
        "y_m": y,
        "z_m": z,
        "objective_m2": float(est.objective_value),
        "active_constraints": sorted(est.active_constraints),
        "converged": bool(est.converged),
        "n_measurements": int(len(rec)),
    }))
    return EXIT_OK


# --- validate -------------------------------------------------------------------------


def cmd_validate(args) -> int:
    try:
        path = resolve_config_path(args.config)
    except FileNotFoundError as exc:
        raise ConfigError(str(exc), None, args.config) from None
    exp = load_config(str(path))
    sc = exp.scenario
    print(f"ok: {path}: {sc.n_receivers} receivers, {len(sc.targets)} targets, {sc.n_scans} scans")
    return EXIT_OK


# --- entry point ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mprntrack", description="Multi-platform radar network localization and tracking.")
    p.add_argument("--version", action="version", version=f"mprntrack {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    r = sub.add_parser("run", help="run Monte Carlo tracking experiments")
    r.add_argument("config", nargs="?", help="config file or shipped scenario name")
    r.add_argument("--variant", help=f"comma-separated subset of {','.join(VARIANTS)}")
    r.add_argument("--runs", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--n-particles", type=int)
    r.add_argument("--c-tilde", type=float, help="virtual beam halfwidth factor (AD)")
    r.add_argument("--snr-db", type=float, help="single reference SNR instead of the config sweep")
    r.add_argument("--jobs", type=int, default=1, help="worker processes for the Monte Carlo runs")
    r.add_argument("--out-dir", help=f"output directory (default ${OUT_DIR_ENV} or ./{DEFAULT_OUT_DIR})")
    r.add_argument("--tracks", action="store_true", help="also write confirmed tracks per scan")
    r.add_argument("--diagnostics", action="store_true", help="also write per-belief fusion diagnostics")
    r.add_argument("--from-manifest", help="rerun a previous experiment and check its output hashes")
    r.set_defaults(func=cmd_run)

    lo = sub.add_parser("localize", help="one-shot ARCE localization from a CSV of bistatic ranges")
    lo.add_argument("measurements", help="CSV with header receiver,range_m (receivers numbered from 1)")
    lo.add_argument("--config", help="take geometry and beam from this config or shipped scenario")
    lo.add_argument("--tx-m", type=_vec3, help="transmitter position x,y,z")
    lo.add_argument("--rx-m", type=_vec3, action="append", help="receiver position x,y,z; repeat in order")
    lo.add_argument("--azimuth-center-deg", type=float)
    lo.add_argument("--azimuth-halfwidth-deg", type=float)
    lo.add_argument("--elevation-center-deg", type=float)
    lo.add_argument("--elevation-halfwidth-deg", type=float)
    lo.add_argument("--range-min-m", type=float)
    lo.add_argument("--range-max-m", type=float)
    lo.set_defaults(func=cmd_localize)

    v = sub.add_parser("validate", help="check a config file against the schema and physical sanity rules")
    v.add_argument("config", help="config file or shipped scenario name")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError("mprntrack: a subcommand is required (run, localize, validate)")
        return args.func(args)
    except UsageError as exc:
        _err(str(exc))
        return EXIT_INVALID
    except ConfigError as exc:
        _err(f"invalid config: {exc}")
        return EXIT_INVALID
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - report any runtime failure as exit 1
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
