"""TOML experiment configuration: schema validation and object construction.

Every numeric key carries its unit in its name.  Unknown sections or keys,
wrong types and physically invalid values are reported with the line they
appear on.
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np

from .fusion import FusionParams
from .geom import BeamConstraint, NodeGeometry
from .metrics import GospaParams
from .pipeline import VARIANTS
from .scenario import ScenarioConfig, TargetSpec
from .tracker import TrackerParams

SHIPPED = ("ideal-target1", "ideal-target2", "nonideal-two-targets")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.message = message
        self.line = line
        self.source = source
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


# --- schema -----------------------------------------------------------------

FLOAT, INT, BOOL, STR, VEC3, VEC3_LIST, FLOAT_OR_LIST, STR_LIST, FLOAT_LIST = (
    "float", "int", "bool", "str", "vec3", "vec3 list", "float or list", "str list", "float list"
)

SCHEMA: dict[str, dict[str, tuple[str, Any]]] = {
    "geometry": {"tx_position_m": (VEC3, None), "rx_positions_m": (VEC3_LIST, None)},
    "beam": {
        "azimuth_center_deg": (FLOAT, 0.0),
        "azimuth_halfwidth_deg": (FLOAT, 20.0),
        "elevation_center_deg": (FLOAT, 0.0),
        "elevation_halfwidth_deg": (FLOAT, 20.0),
    },
    "noise": {"snr_ref_db": (FLOAT_OR_LIST, 0.0), "ref_range_m": (FLOAT, 30_000.0), "bandwidth_hz": (FLOAT, 20e6)},
    "clutter": {
        "detection_prob": (FLOAT_OR_LIST, 1.0),
        "mean_count": (FLOAT, 0.0),
        "range_max_m": (FLOAT, 70_000.0),
        "law": (STR, "uniform"),
    },
    "tracker": {
        "n_particles": (INT, 500),
        "survival_prob": (FLOAT, 0.999),
        "birth_prob": (FLOAT, 0.01),
        "confirm_threshold": (FLOAT, 0.5),
        "prune_threshold": (FLOAT, 1e-3),
        "process_noise_accel_m_per_s2": (FLOAT, 0.05),
        "max_speed_m_per_s": (FLOAT, 15.0),
        "velocity_kappa": (FLOAT, 2.0),
        "resample": (STR, "always"),
        "ess_fraction": (FLOAT, 0.5),
        "spa_max_iters": (INT, 20),
        "spa_tol": (FLOAT, 1e-6),
        "min_clutter_rate": (FLOAT, 0.01),
        "regularization": (FLOAT, 0.0),
        "receiver_order": (STR, "sequential"),
    },
    "fusion": {
        "mode": (STR, None),
        "alpha_r": (FLOAT, 0.7),
        "sigma_arce_m": (FLOAT, 500.0),
        "c_tilde": (FLOAT, 1.0),
        "beam_rejection": (BOOL, False),
        "n_sigma_range": (FLOAT, 3.0),
        "weighted": (BOOL, False),
    },
    "gospa": {"cutoff_m": (FLOAT, 2000.0), "order_p": (FLOAT, 2.0)},
    "experiment": {
        "scan_period_s": (FLOAT, 10.0),
        "n_scans": (INT, 100),
        "runs": (INT, 20),
        "seed": (INT, 0),
        "variants": (STR_LIST, ["spa", "nad"]),
        "snr_sweep_db": (FLOAT_LIST, None),
    },
}

TARGET_SCHEMA = {
    "radial": {
        "start_range_m": (FLOAT, None),
        "azimuth_deg": (FLOAT, 0.0),
        "elevation_deg": (FLOAT, 0.0),
        "speed_m_per_s": (FLOAT, 0.0),
    },
    "cartesian": {"initial_position_m": (VEC3, None), "velocity_m_per_s": (VEC3, [0.0, 0.0, 0.0])},
}


@dataclass
class ExperimentConfig:
    scenario: ScenarioConfig
    tracker: TrackerParams
    fusion: FusionParams
    gospa: GospaParams
    runs: int
    seed: int
    variants: list[str]
    snr_sweep_db: list[float] | None
    source: str = "<config>"
    text: str = field(default="", repr=False)

    def snr_values(self) -> list[float]:
        if self.snr_sweep_db:
            return list(self.snr_sweep_db)
        return [float(self.scenario.snr_ref_db[0])]


# --- line lookup --------------------------------------------------------------

_HEADER = re.compile(r"^\s*(\[\[?)\s*([A-Za-z0-9_.\-\s\"]+?)\s*\]\]?")


def _key_lines(text: str) -> dict[tuple[str, int, str], int]:
    """Map (table path, occurrence, key) to 1-based line numbers; key "" is the header."""
    out: dict[tuple[str, int, str], int] = {}
    counts: dict[str, int] = {}
    section, occ = "", 0
    for n, line in enumerate(text.splitlines(), start=1):
        m = _HEADER.match(line)
        if m:
            section = m.group(2).replace(" ", "")
            occ = counts.get(section, 0)
            counts[section] = occ + 1
            out.setdefault((section, occ, ""), n)
            continue
        km = re.match(r"^\s*([A-Za-z0-9_\-]+)\s*=", line)
        if km:
            out.setdefault((section, occ, km.group(1)), n)
    return out


class _Reader:
    def __init__(self, text: str, source: str):
        self.text = text
        self.source = source
        self.lines = _key_lines(text)

    def line(self, section: str, key: str = "", occ: int = 0) -> int | None:
        return self.lines.get((section, occ, key)) or self.lines.get((section, occ, ""))

    def fail(self, msg: str, section: str = "", key: str = "", occ: int = 0):
        raise ConfigError(msg, self.line(section, key, occ), self.source)

    def coerce(self, section: str, key: str, kind: str, value, occ: int = 0):
        def bad(expect):
            self.fail(f"[{section}] {key}: expected {expect}, got {value!r}", section, key, occ)

        def num(v):
            return isinstance(v, (int, float)) and not isinstance(v, bool)

        if kind == FLOAT:
            if not num(value):
                bad("a number")
            return float(value)
        if kind == INT:
            if not isinstance(value, int) or isinstance(value, bool):
                bad("an integer")
            return int(value)
        if kind == BOOL:
            if not isinstance(value, bool):
                bad("true or false")
            return value
        if kind == STR:
            if not isinstance(value, str):
                bad("a string")
            return value
        if kind == VEC3:
            if not (isinstance(value, list) and len(value) == 3 and all(num(v) for v in value)):
                bad("a list of 3 numbers")
            return [float(v) for v in value]
        if kind == VEC3_LIST:
            if not (isinstance(value, list) and value and all(
                isinstance(r, list) and len(r) == 3 and all(num(v) for v in r) for r in value
            )):
                bad("a non-empty list of [x, y, z] triples")
            return [[float(v) for v in r] for r in value]
        if kind == FLOAT_OR_LIST:
            if num(value):
                return float(value)
            if isinstance(value, list) and value and all(num(v) for v in value):
                return [float(v) for v in value]
            bad("a number or a list of numbers")
        if kind == FLOAT_LIST:
            if isinstance(value, list) and all(num(v) for v in value):
                return [float(v) for v in value]
            bad("a list of numbers")
        if kind == STR_LIST:
            if isinstance(value, list) and all(isinstance(v, str) for v in value):
                return list(value)
            bad("a list of strings")
        raise AssertionError(kind)

    def table(self, section: str, data: dict, schema: dict, occ: int = 0) -> dict:
        out = {}
        for key, value in data.items():
            if key not in schema:
                self.fail(f"[{section}] unknown key {key!r}", section, key, occ)
            out[key] = self.coerce(section, key, schema[key][0], value, occ)
        for key, (_, default) in schema.items():
            if key not in out:
                if default is None and key not in ("mode", "snr_sweep_db"):
                    self.fail(f"[{section}] missing required key {key!r}", section, "", occ)
                out[key] = default
        return out


# --- construction ---------------------------------------------------------------


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Validate ``text`` and build the experiment objects; raises :class:`ConfigError`."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", int(m.group(1)) if m else None, source) from None
    rd = _Reader(text, source)
    for section in raw:
        if section not in SCHEMA and section != "targets":
            rd.fail(f"unknown section [{section}]", section)
    for required in ("geometry", "targets"):
        if required not in raw:
            raise ConfigError(f"missing required section [{required}]", None, source)
    sec = {name: rd.table(name, raw.get(name, {}), schema) for name, schema in SCHEMA.items()}

    targets_raw = raw["targets"]
    if not isinstance(targets_raw, dict):
        rd.fail("[targets] must hold [[targets.radial]] or [[targets.cartesian]] tables", "targets")
    targets: list[TargetSpec] = []
    for kind in targets_raw:
        if kind not in TARGET_SCHEMA:
            rd.fail(f"[targets] unknown target kind {kind!r}", "targets", kind)
    for kind in ("radial", "cartesian"):
        entries = targets_raw.get(kind, [])
        if not isinstance(entries, list):
            rd.fail(f"targets.{kind} must be an array of tables ([[targets.{kind}]])", "targets", kind)
        for occ, entry in enumerate(entries):
            t = rd.table(f"targets.{kind}", entry, TARGET_SCHEMA[kind], occ)
            if kind == "radial":
                if not t["start_range_m"] > 0:
                    rd.fail("start_range_m must be > 0", f"targets.{kind}", "start_range_m", occ)
                targets.append(
                    TargetSpec.radial(t["start_range_m"], t["azimuth_deg"], t["elevation_deg"], t["speed_m_per_s"])
                )
            else:
                targets.append(TargetSpec(np.array(t["initial_position_m"]), np.array(t["velocity_m_per_s"])))

    g = sec["geometry"]
    try:
        geometry = NodeGeometry(np.array(g["tx_position_m"]), np.array(g["rx_positions_m"]))
    except ValueError as exc:
        rd.fail(str(exc), "geometry", "rx_positions_m")
    b = sec["beam"]
    try:
        beam = BeamConstraint.from_degrees(
            b["azimuth_center_deg"], b["azimuth_halfwidth_deg"], b["elevation_center_deg"], b["elevation_halfwidth_deg"]
        )
    except ValueError as exc:
        rd.fail(f"empty beam: {exc}", "beam", "azimuth_halfwidth_deg")
    if not (b["azimuth_halfwidth_deg"] > 0 and b["elevation_halfwidth_deg"] > 0):
        rd.fail("beam must be nonempty: halfwidths must be > 0", "beam", "azimuth_halfwidth_deg")
    if max(b["azimuth_halfwidth_deg"], b["elevation_halfwidth_deg"]) >= 90:
        rd.fail("beam halfwidths must be < 90 deg", "beam", "azimuth_halfwidth_deg")

    n_s = geometry.n_receivers
    for section, key in (("noise", "snr_ref_db"), ("clutter", "detection_prob")):
        v = sec[section][key]
        if isinstance(v, list) and len(v) != n_s:
            rd.fail(f"{key} lists {len(v)} values for {n_s} receivers", section, key)
    n, c, e = sec["noise"], sec["clutter"], sec["experiment"]
    if not n["bandwidth_hz"] > 0:
        rd.fail("bandwidth_hz must be > 0", "noise", "bandwidth_hz")
    if not n["ref_range_m"] > 0:
        rd.fail("ref_range_m must be > 0", "noise", "ref_range_m")
    if not e["scan_period_s"] > 0:
        rd.fail("scan_period_s must be > 0", "experiment", "scan_period_s")
    if not c["range_max_m"] > float(np.max(geometry.baselines())):
        rd.fail("range_max_m must exceed every receiver baseline", "clutter", "range_max_m")
    if e["runs"] < 0:
        rd.fail("runs must be >= 0", "experiment", "runs")
    for v in e["variants"]:
        if v not in VARIANTS:
            rd.fail(f"unknown variant {v!r}; expected one of {VARIANTS}", "experiment", "variants")
    try:
        scenario = ScenarioConfig(
            geometry=geometry,
            beam=beam,
            targets=targets,
            scan_period=e["scan_period_s"],
            n_scans=e["n_scans"],
            snr_ref_db=n["snr_ref_db"],
            ref_range=n["ref_range_m"],
            bandwidth=n["bandwidth_hz"],
            pd=c["detection_prob"],
            clutter_mean=c["mean_count"],
            clutter_range_max=c["range_max_m"],
            clutter_law=c["law"],
            seed=e["seed"],
        )
    except ValueError as exc:
        key = {"n_scans": ("experiment", "n_scans"), "detection": ("clutter", "detection_prob"),
               "clutter_mean": ("clutter", "mean_count"), "clutter law": ("clutter", "law")}
        where = next((v for k, v in key.items() if k in str(exc)), ("", ""))
        rd.fail(str(exc), *where)

    t = sec["tracker"]
    try:
        tracker = TrackerParams(
            n_particles=t["n_particles"],
            p_s=t["survival_prob"],
            p_b=t["birth_prob"],
            confirm_threshold=t["confirm_threshold"],
            prune_threshold=t["prune_threshold"],
            process_noise_accel=t["process_noise_accel_m_per_s2"],
            max_speed=t["max_speed_m_per_s"],
            velocity_kappa=t["velocity_kappa"],
            scan_period=e["scan_period_s"],
            resample=t["resample"],
            ess_fraction=t["ess_fraction"],
            spa_max_iters=t["spa_max_iters"],
            spa_tol=t["spa_tol"],
            min_clutter_rate=t["min_clutter_rate"],
            regularization=t["regularization"],
            receiver_order=t["receiver_order"],
        )
    except ValueError as exc:
        rd.fail(str(exc), "tracker")
    f = sec["fusion"]
    try:
        fusion = FusionParams(
            mode=f["mode"],
            alpha_r=f["alpha_r"],
            sigma_arce=f["sigma_arce_m"],
            c_tilde=f["c_tilde"],
            beam_rejection=f["beam_rejection"],
            n_sigma_range=f["n_sigma_range"],
            weighted=f["weighted"],
        )
    except ValueError as exc:
        rd.fail(str(exc), "fusion")
    gs = sec["gospa"]
    try:
        gospa = GospaParams(cutoff=gs["cutoff_m"], order=gs["order_p"])
    except ValueError as exc:
        rd.fail(str(exc), "gospa")
    return ExperimentConfig(
        scenario, tracker, fusion, gospa, e["runs"], e["seed"], list(e["variants"]), e["snr_sweep_db"], source, text
    )


def shipped_path(name: str) -> Path:
    if name not in SHIPPED:
        raise KeyError(name)
    return Path(str(resources.files("mprntrack") / "scenarios" / f"{name}.toml"))


def resolve_config_path(name_or_path: str) -> Path:
    """A filesystem path, or the name of a shipped scenario."""
    p = Path(name_or_path)
    if p.exists():
        return p
    stem = name_or_path[:-5] if name_or_path.endswith(".toml") else name_or_path
    if stem in SHIPPED:
        return shipped_path(stem)
    raise FileNotFoundError(f"no such config file or shipped scenario: {name_or_path}")


def load_config(name_or_path: str) -> ExperimentConfig:
    path = resolve_config_path(name_or_path)
    return parse_config(path.read_text(), str(path))


__all__ = ["ConfigError", "ExperimentConfig", "SHIPPED", "load_config", "parse_config", "resolve_config_path"]

