"""System-level simulator for downlink/uplink decoupled cell association in HetNets."""

from .association import Association, Coupled, Dude, RangeExtension, associate, parse_policy
from .engine import CampaignMetrics, SnapshotResult, coverage_raster, run_campaign, run_snapshot
from .scenario import Cell, DemandProfile, Layer, Scenario, ScenarioError, Ue, load_scenario

__all__ = [
    "Association",
    "CampaignMetrics",
    "Cell",
    "Coupled",
    "DemandProfile",
    "Dude",
    "Layer",
    "RangeExtension",
    "Scenario",
    "ScenarioError",
    "SnapshotResult",
    "Ue",
    "associate",
    "coverage_raster",
    "load_scenario",
    "parse_policy",
    "run_campaign",
    "run_snapshot",
]
