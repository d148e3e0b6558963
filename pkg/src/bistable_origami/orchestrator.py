"""Scenario configs, the surrogate blackbox, and the report artifacts around a MADS run."""
from __future__ import annotations

import configparser
import dataclasses
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import mads
from .engine import (BistabilityMetrics, HiddenFailure, SweepOptions,
                     actuation_sweep, extract_metrics, forming)
from .model import (DEFAULT_BOUNDS, DESIGN_I, DESIGN_NAMES, RELAXED_BOUNDS, DesignBounds,
                    DesignError, DesignVector, GeometryParams, MaterialPair, build_mesh,
                    validate_design, width_limited_bounds)


class ConfigError(ValueError):
    pass


BOUND_PRESETS = {"default": DEFAULT_BOUNDS, "relaxed": RELAXED_BOUNDS}
H_INDEX = DESIGN_NAMES.index("h_ratio")

# name -> (bounds preset, frozen values, energy floor)
SCENARIOS = {
    "a": ("default", {}, False),
    "b": ("default", {H_INDEX: 0.6}, False),
    "c": ("relaxed", {}, False),
    "d": ("relaxed", {H_INDEX: 0.6}, False),
    "e": ("default", {}, True),
}


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "a"
    bounds_preset: str = "default"
    frozen: Mapping[int, float] = field(default_factory=dict)
    energy_floor: bool = False
    budget: int = 1000
    seed: int = 0
    x0: tuple = DESIGN_I
    materials: MaterialPair = field(default_factory=MaterialPair)
    geometry: GeometryParams = field(default_factory=GeometryParams)
    sweep: SweepOptions = field(default_factory=SweepOptions)
    out_dir: str = "out"
    workers: int = 0                  # 0: every available core

    def __post_init__(self):
        if self.bounds_preset not in BOUND_PRESETS:
            raise ConfigError(f"unknown bounds preset {self.bounds_preset!r}")
        if self.budget < 1:
            raise ConfigError("budget must be at least 1")
        if self.workers < 0:
            raise ConfigError("workers must be non-negative")
        if len(self.x0) != 5:
            raise ConfigError("x0 needs five values")
        try:
            self.bounds
        except ValueError as err:
            raise ConfigError(str(err)) from err

    @property
    def bounds(self) -> DesignBounds:
        """Preset bounds, tightened for the minimum crease width, with frozen values."""
        base = BOUND_PRESETS[self.bounds_preset]
        return width_limited_bounds(DesignBounds(base.lower, base.upper, dict(self.frozen)),
                                    self.geometry)

    @classmethod
    def preset(cls, name: str, **overrides) -> "ScenarioConfig":
        if name not in SCENARIOS:
            raise ConfigError(f"unknown scenario {name!r} (choose from {sorted(SCENARIOS)})")
        preset, frozen, floor = SCENARIOS[name]
        kw = dict(name=name, bounds_preset=preset, frozen=dict(frozen), energy_floor=floor)
        kw.update(overrides)
        return cls(**kw)


def _floats(text: str, n: int | None = None) -> tuple:
    try:
        vals = tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError as err:
        raise ConfigError(f"cannot parse numbers from {text!r}") from err
    if n is not None and len(vals) != n:
        raise ConfigError(f"expected {n} values, got {len(vals)} in {text!r}")
    return vals


def _typed(cls, section: configparser.SectionProxy):
    """Build dataclass `cls` from a section, casting each key to its field's default type."""
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kw = {}
    for key, raw in section.items():
        if key not in fields:
            raise ConfigError(f"unknown key {key!r} in [{section.name}]")
        default = fields[key].default
        try:
            kw[key] = type(default)(raw) if not isinstance(default, bool) else \
                section.getboolean(key)
        except ValueError as err:
            raise ConfigError(f"bad value for {key}: {raw!r}") from err
    try:
        return cls(**kw)
    except (ValueError, TypeError) as err:
        raise ConfigError(str(err)) from err


def parse_config(text: str, **overrides) -> ScenarioConfig:
    """Key/value config: [scenario], [frozen], [materials], [geometry], [sweep] sections.

    Every key is optional; an empty file is scenario "a" with all defaults.
    Keyword overrides (e.g. from CLI flags) win over the file.
    """
    cp = configparser.ConfigParser()
    cp.optionxform = str              # keys keep their case (E_c, Sy_f, ...)
    try:
        cp.read_string(text)
    except configparser.Error as err:
        raise ConfigError(str(err)) from err
    known = {"scenario", "frozen", "materials", "geometry", "sweep"}
    extra = set(cp.sections()) - known
    if extra:
        raise ConfigError(f"unknown sections {sorted(extra)}")
    sc = cp["scenario"] if cp.has_section("scenario") else {}
    allowed = {"name", "bounds", "energy_floor", "budget", "seed", "x0", "out", "workers"}
    bad = set(sc) - allowed
    if bad:
        raise ConfigError(f"unknown keys {sorted(bad)} in [scenario]")
    kw = {}
    try:
        if "bounds" in sc:
            kw["bounds_preset"] = sc["bounds"].strip()
        if "energy_floor" in sc:
            kw["energy_floor"] = cp.getboolean("scenario", "energy_floor")
        for key in ("budget", "seed", "workers"):
            if key in sc:
                kw[key] = int(sc[key])
    except ValueError as err:
        raise ConfigError(str(err)) from err
    if "x0" in sc:
        kw["x0"] = _floats(sc["x0"], 5)
    if "out" in sc:
        kw["out_dir"] = sc["out"].strip()
    if cp.has_section("frozen"):
        frozen = {}
        for key, raw in cp["frozen"].items():
            if key not in DESIGN_NAMES:
                raise ConfigError(f"cannot freeze unknown variable {key!r}")
            frozen[DESIGN_NAMES.index(key)] = _floats(raw, 1)[0]
        kw["frozen"] = frozen
    for sec, cls, name in (("materials", MaterialPair, "materials"),
                           ("geometry", GeometryParams, "geometry"),
                           ("sweep", SweepOptions, "sweep")):
        if cp.has_section(sec):
            kw[name] = _typed(cls, cp[sec])
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return ScenarioConfig.preset(sc.get("name", "a").strip() if sc else "a", **kw)


def load_config(path, **overrides) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    return parse_config(text, **overrides)


def evaluate_design(x, geometry: GeometryParams, materials: MaterialPair,
                    sweep: SweepOptions = SweepOptions()):
    """build_mesh -> forming -> actuation_sweep -> extract_metrics for one design."""
    xv = x if isinstance(x, DesignVector) else DesignVector.from_array(x)
    h = xv.h_ratio * geometry.r_o
    formed = forming(build_mesh(xv, geometry, materials), h, sweep)
    land = actuation_sweep(formed, h, sweep,
                           norm_factor=materials.E_f * materials.nu_f * geometry.r_o)
    return extract_metrics(land, materials), land


@dataclass(frozen=True)
class SurrogateBlackbox:
    """phi to maximize with c = [sigma_ratio - 1, optional (U0 - U_max) / U0]."""
    geometry: GeometryParams
    materials: MaterialPair
    sweep: SweepOptions
    umax_floor: float | None = None

    def __call__(self, x) -> mads.Outcome:
        x = np.asarray(x, float)
        order = max(x[0] - x[1], x[1] - x[2])
        if order > 0:
            return mads.Outcome(None, (float(order),))
        try:
            met, _ = evaluate_design(x, self.geometry, self.materials, self.sweep)
        except (HiddenFailure, DesignError) as err:
            raise mads.BlackboxFailure(str(err)) from err
        cons = [met.sigma_ratio - 1.0]
        if self.umax_floor is not None:
            cons.append((self.umax_floor - met.U_max) / self.umax_floor)
        extras = {"sigma_ratio": met.sigma_ratio, "umax_Nmm": met.U_max, "dU_Nmm": met.dU,
                  "delta_state2": met.delta_state2}
        return mads.Outcome(met.phi, tuple(cons), extras)


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    report: mads.OptimizationReport
    phi0: float | None
    umax0: float | None
    files: dict


def mads_bounds(b: DesignBounds) -> mads.Bounds:
    return mads.Bounds(np.array(b.lower, float), np.array(b.upper, float), dict(b.frozen))


def _executor(workers: int):
    n = workers or default_workers()
    return ProcessPoolExecutor(max_workers=n) if n > 1 else None


def run_scenario(cfg: ScenarioConfig, write: bool = True) -> ScenarioResult:
    """Optimize phi under the scenario's bounds and constraints; writes history,
    champion landscape and report.txt into cfg.out_dir when `write`."""
    bounds = cfg.bounds
    try:
        x0 = validate_design(cfg.x0, bounds).as_array()
    except DesignError as err:
        raise ConfigError(f"x0 is not valid for scenario {cfg.name}: {err}") from err
    phi0 = umax0 = None
    try:
        met0, _ = evaluate_design(x0, cfg.geometry, cfg.materials, cfg.sweep)
        phi0, umax0 = met0.phi, met0.U_max
    except HiddenFailure:
        if cfg.energy_floor:
            raise
    floor = umax0 if cfg.energy_floor else None
    if floor is not None and not floor > 0:
        raise ConfigError("the energy floor needs U_max > 0 at x0")
    bb = SurrogateBlackbox(cfg.geometry, cfg.materials, cfg.sweep, floor)
    mcfg = mads.MadsConfig(budget=cfg.budget, seed=cfg.seed)
    ex = _executor(cfg.workers)
    try:
        report = mads.run(bb, x0, mads_bounds(bounds), mcfg, executor=ex)
    finally:
        if ex is not None:
            ex.shutdown()
    files = {}
    if write:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files["history"] = out / "history.csv"
        mads.write_history(report, files["history"])
        if report.champion is not None:
            _, land = evaluate_design(np.array(report.champion.x), cfg.geometry, cfg.materials,
                                      cfg.sweep)
            files["landscape"] = out / f"landscape_{cfg.name}.csv"
            land.to_csv(files["landscape"])
        files["report"] = out / "report.txt"
        files["report"].write_text(format_report(cfg, report, phi0, umax0))
    return ScenarioResult(cfg, report, phi0, umax0, files)


def _vec(x) -> str:
    return "(" + ", ".join(f"{v:.4f}" for v in x) + ")"


def format_report(cfg: ScenarioConfig, report: mads.OptimizationReport,
                  phi0: float | None, umax0: float | None) -> str:
    b = cfg.bounds
    lines = [f"scenario: {cfg.name}",
             f"seed: {cfg.seed}",
             f"budget: {cfg.budget}",
             f"bounds: {cfg.bounds_preset} lower={_vec(b.lower)} upper={_vec(b.upper)}",
             "frozen: " + (", ".join(f"{DESIGN_NAMES[i]}={v}" for i, v in sorted(b.frozen.items()))
                           or "none"),
             f"energy floor: {'on' if cfg.energy_floor else 'off'}",
             f"x0: {_vec(cfg.x0)}",
             f"phi(x0): {'FAILED' if phi0 is None else f'{phi0:.6f}'}",
             f"U_max(x0): {'FAILED' if umax0 is None else f'{umax0:.6g} N mm'}",
             f"evaluations: {len(report.history)}",
             "counts: " + ", ".join(f"{k}={v}" for k, v in report.counts.items()),
             f"iterations: {report.iterations}",
             f"final frame size: {report.final_frame_size:.6g}"]
    c = report.champion
    if c is None:
        lines.append("champion: none (no feasible point)")
    else:
        lines += [f"champion x: {_vec(c.x)}",
                  f"champion phi: {c.phi:.6f}",
                  f"champion sigma_ratio: {c.extras.get('sigma_ratio', float('nan')):.6f}",
                  f"champion U_max: {c.extras.get('umax_Nmm', float('nan')):.6g} N mm"]
        if phi0:
            lines.append(f"phi gain over x0: {c.phi / phi0:.3f}x")
        lines.append(f"champion index: {report.history.index(c)}")
    return "\n".join(lines) + "\n"


def emit_landscape(x, cfg: ScenarioConfig, tag: str = "x"):
    """Evaluate one design and write landscape_<tag>.csv; returns (metrics, landscape, path)."""
    xv = validate_design(x, cfg.bounds)
    met, land = evaluate_design(xv, cfg.geometry, cfg.materials, cfg.sweep)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"landscape_{tag}.csv"
    land.to_csv(path)
    return met, land, path


def metrics_line(met: BistabilityMetrics, norm_factor: float) -> str:
    return (f"bistable={met.bistable} phi={met.phi:.6f} U_max={met.U_max:.6g} N mm "
            f"U_max_norm={met.U_max / norm_factor:.6g} dU={met.dU:.6g} N mm "
            f"delta_state2={met.delta_state2:.4g} mm sigma_ratio={met.sigma_ratio:.4f}")


@dataclass(frozen=True)
class CompareRow:
    x: tuple
    status: str
    metrics: BistabilityMetrics | None = None
    U_max_norm: float = float("nan")
    message: str = ""


COMPARE_HEADER = ["th1", "th2", "th3", "omega", "h_ratio", "status", "phi", "umax_Nmm",
                  "umax_normalized", "dU_Nmm", "delta_state2_mm", "sigma_ratio"]


def compare_designs(designs: Sequence, cfg: ScenarioConfig) -> list[CompareRow]:
    """One row per design; failures become FAILED rows instead of aborting."""
    norm = cfg.materials.E_f * cfg.materials.nu_f * cfg.geometry.r_o
    rows = []
    for x in designs:
        x = tuple(float(v) for v in x)
        try:
            met, _ = evaluate_design(validate_design(x, cfg.bounds), cfg.geometry,
                                     cfg.materials, cfg.sweep)
        except (HiddenFailure, DesignError) as err:
            rows.append(CompareRow(x, "FAILED", message=str(err)))
            continue
        rows.append(CompareRow(x, "OK", met, met.U_max / norm))
    return rows


def compare_table(rows: Sequence[CompareRow]) -> list[list[str]]:
    out = [COMPARE_HEADER]
    for r in rows:
        xs = [f"{v:.4f}" for v in r.x]
        if r.metrics is None:
            out.append(xs + ["FAILED"] + [""] * 6)
            continue
        m = r.metrics
        out.append(xs + ["OK", f"{m.phi:.6f}", f"{m.U_max:.6g}", f"{r.U_max_norm:.6g}",
                         f"{m.dU:.6g}", f"{m.delta_state2:.4g}", f"{m.sigma_ratio:.4f}"])
    return out


def default_workers() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity")
               else (os.cpu_count() or 1))


def grid_search(cfg: ScenarioConfig, points_per_dim: int = 4) -> list[mads.EvaluationResult]:
    """Exhaustive evaluation of a uniform grid over the scenario's free variables.

    Grid points violating the angle ordering come back Infeasible without a run.
    """
    import itertools

    b = cfg.bounds
    axes = [np.array([b.frozen[i]]) if i in b.frozen else
            np.linspace(b.lower[i], b.upper[i], points_per_dim) for i in range(5)]
    bb = SurrogateBlackbox(cfg.geometry, cfg.materials, cfg.sweep)
    pts = [np.array(p) for p in itertools.product(*axes)]
    ex = _executor(cfg.workers)
    try:
        if ex is None:
            return [mads.evaluate_blackbox(bb, p) for p in pts]
        return list(ex.map(mads.evaluate_blackbox, [bb] * len(pts), pts))
    finally:
        if ex is not None:
            ex.shutdown()
