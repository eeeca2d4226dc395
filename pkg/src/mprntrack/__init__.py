"""Constrained bistatic localization and SPA-based particle tracking for multi-platform radar networks."""

from .arce import ArceEstimate, ArceInput, InfeasibleConstraints, arce_localize, grid_oracle_localize
from .fusion import FusionParams, arce_resample, fusion_step, select_replacement_count, virtual_beam
from .geom import BeamConstraint, NodeGeometry
from .kernels import BACKEND
from .metrics import GospaParams, RunResult, gospa, mgospa, run_experiment
from .pipeline import ArceStandalone, MultiTargetTracker, make_tracker
from .scenario import ScenarioConfig, TargetSpec, reference_beam, reference_geometry, simulate
from .tracker import Belief, TrackerParams

__version__ = "0.1.0"

__all__ = [
    "ArceEstimate",
    "ArceInput",
    "ArceStandalone",
    "BACKEND",
    "BeamConstraint",
    "Belief",
    "FusionParams",
    "GospaParams",
    "InfeasibleConstraints",
    "MultiTargetTracker",
    "NodeGeometry",
    "RunResult",
    "ScenarioConfig",
    "TargetSpec",
    "TrackerParams",
    "arce_localize",
    "arce_resample",
    "fusion_step",
    "gospa",
    "grid_oracle_localize",
    "make_tracker",
    "mgospa",
    "reference_beam",
    "reference_geometry",
    "run_experiment",
    "select_replacement_count",
    "simulate",
    "virtual_beam",
]
