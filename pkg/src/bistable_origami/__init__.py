"""Bar-and-hinge surrogate of the compliant-crease waterbomb base and a MADS optimizer
for its bistability ratio."""
from .engine import (BistabilityMetrics, EnergyLandscape, HiddenFailure, SweepOptions,
                     actuation_sweep, extract_metrics, forming, solve_equilibrium,
                     stress_proxy, total_energy, trapezoid_energy)
from .mads import (Bounds, EvaluationResult, MadsConfig, MadsState, NoFeasiblePoint,
                   OptimizationReport, Outcome, Status, evaluate_with_cache, initialize,
                   propose_poll, run, update)
from .model import (DEFAULT_BOUNDS, DESIGN_I, DESIGN_II, DESIGN_III, RELAXED_BOUNDS,
                    DesignBounds, DesignVector, GeometryParams, MaterialPair, SectorLayout,
                    WaterbombMesh, build_layout, build_mesh, crease_hinge_stiffness,
                    validate_design)
from .orchestrator import (ScenarioConfig, compare_designs, emit_landscape, evaluate_design,
                           run_scenario)
from .spring import SpringModelParams, build_spring_mesh, spring_energy_curve

__all__ = [
    "BistabilityMetrics", "EnergyLandscape", "HiddenFailure", "SweepOptions", "actuation_sweep",
    "extract_metrics", "forming", "solve_equilibrium", "stress_proxy", "total_energy",
    "trapezoid_energy", "Bounds", "EvaluationResult", "MadsConfig", "MadsState",
    "NoFeasiblePoint", "OptimizationReport", "Outcome", "Status", "evaluate_with_cache",
    "initialize", "propose_poll", "run", "update", "DEFAULT_BOUNDS", "DESIGN_I", "DESIGN_II",
    "DESIGN_III", "RELAXED_BOUNDS", "DesignBounds", "DesignVector", "GeometryParams",
    "MaterialPair", "SectorLayout", "WaterbombMesh", "build_layout", "build_mesh",
    "crease_hinge_stiffness", "validate_design", "ScenarioConfig", "compare_designs",
    "emit_landscape", "evaluate_design", "run_scenario", "SpringModelParams",
    "build_spring_mesh", "spring_energy_curve",
]
