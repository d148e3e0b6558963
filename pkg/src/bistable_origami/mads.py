"""Mesh Adaptive Direct Search (poll only, extreme barrier) for bounded maximization.

Variables are handled in box-normalized units u = (x - l) / (b - l).  Poll
points are x_c + mesh_size * d * (b - l) for integer directions d whose
infinity norm is frame_size / mesh_size, so every trial point sits on the mesh
lattice anchored at the poll center and within one frame of it.
"""
from __future__ import annotations

import csv
import enum
import math
import time
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np


class Status(str, enum.Enum):
    VALID = "Valid"
    HIDDEN_FAIL = "HiddenFail"
    INFEASIBLE = "Infeasible"


class NoFeasiblePoint(RuntimeError):
    """The budget ran out before any Valid, feasible evaluation."""


class DegenerateBasis(RuntimeError):
    pass


@dataclass(frozen=True)
class Outcome:
    """What a blackbox returns: objective to maximize, c_j <= 0 residuals, extra columns.

    phi may be None when a violated constraint made evaluating it pointless.
    """
    phi: float | None
    constraints: tuple = ()
    extras: Mapping[str, float] = field(default_factory=dict)


class BlackboxFailure(RuntimeError):
    """Raise from a blackbox to report a hidden failure (no objective available)."""


@dataclass(frozen=True)
class EvaluationResult:
    x: tuple
    status: Status
    phi: float | None = None
    constraint_values: tuple = ()
    wall_time: float = 0.0
    extras: Mapping[str, float] = field(default_factory=dict)
    message: str = ""

    def __post_init__(self):
        if self.status is Status.VALID:
            if self.phi is None or not math.isfinite(self.phi):
                raise ValueError("a Valid result needs a finite phi")
            if any(c > 0 for c in self.constraint_values):
                raise ValueError("a Valid result cannot violate a constraint")
        if self.status is Status.INFEASIBLE and not any(c > 0 for c in self.constraint_values):
            raise ValueError("an Infeasible result needs a violated constraint")

    @property
    def feasible(self) -> bool:
        return self.status is Status.VALID

    @property
    def violation(self) -> float:
        """Squared constraint violation.

        inf for hidden failures and for points whose objective was skipped: their
        constraint list is incomplete, so they cannot be ranked against full ones.
        """
        if self.status is Status.HIDDEN_FAIL or self.phi is None:
            return math.inf
        return float(sum(max(c, 0.0) ** 2 for c in self.constraint_values))


@dataclass(frozen=True)
class MadsConfig:
    budget: int = 1000
    frame_size0: float = 1.0 / 8.0
    expand: float = 2.0
    shrink: float = 0.5
    seed: int = 0
    opportunistic: bool = False
    min_frame_size: float = 1e-9
    use_cache: bool = True
    cache_quantum: float = 1e-12      # box-normalized units
    max_basis_retries: int = 10

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be at least 1")
        if not 0 < self.shrink < 1 < self.expand:
            raise ValueError("need 0 < shrink < 1 < expand")
        if not 0 < self.frame_size0 <= 1:
            raise ValueError("frame_size0 must lie in (0, 1]")


@dataclass(frozen=True)
class Bounds:
    lower: np.ndarray
    upper: np.ndarray
    frozen: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        lo, up = np.asarray(self.lower, float), np.asarray(self.upper, float)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)
        if lo.shape != up.shape or np.any(lo > up):
            raise ValueError("bounds need lower <= upper componentwise")
        for i, v in self.frozen.items():
            if not lo[i] <= v <= up[i]:
                raise ValueError(f"frozen value {v} of dimension {i} is out of bounds")

    @property
    def free(self) -> np.ndarray:
        return np.array([i for i in range(len(self.lower))
                         if i not in self.frozen and self.upper[i] > self.lower[i]], dtype=int)

    @property
    def span(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, x) -> bool:
        x = np.asarray(x, float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def apply_frozen(self, x) -> np.ndarray:
        x = np.array(x, float)
        for i, v in self.frozen.items():
            x[i] = v
        return x


@dataclass
class MadsState:
    bounds: Bounds
    cfg: MadsConfig
    rng: np.random.Generator
    frame_size: float
    center: EvaluationResult
    champion: EvaluationResult | None = None
    history: list = field(default_factory=list)
    cache: dict = field(default_factory=dict)
    iterations: int = 0
    failed_iterations: int = 0
    best_so_far: list = field(default_factory=list)
    last_directions: np.ndarray | None = None

    @property
    def mesh_size(self) -> float:
        return min(self.frame_size, self.frame_size ** 2)

    @property
    def n_evaluations(self) -> int:
        return len(self.history)

    @property
    def dimension(self) -> int:
        return len(self.bounds.free)


@dataclass
class OptimizationReport:
    champion: EvaluationResult | None
    history: list
    counts: dict
    convergence: np.ndarray           # best-so-far phi per evaluation, nan before the first feasible
    iterations: int
    final_frame_size: float

    @property
    def feasible(self) -> bool:
        return self.champion is not None

    def require_champion(self) -> EvaluationResult:
        if self.champion is None:
            raise NoFeasiblePoint(f"no feasible point in {len(self.history)} evaluations")
        return self.champion


Blackbox = Callable[[np.ndarray], Outcome]


def evaluate_blackbox(blackbox: Blackbox, x: np.ndarray) -> EvaluationResult:
    """Run one blackbox call and classify it; failures are recorded, never raised."""
    t0 = time.perf_counter()
    try:
        out = blackbox(np.asarray(x, float))
    except BlackboxFailure as err:
        return EvaluationResult(tuple(map(float, x)), Status.HIDDEN_FAIL,
                                wall_time=time.perf_counter() - t0, message=str(err))
    wall = time.perf_counter() - t0
    cons = tuple(float(c) for c in out.constraints)
    xs = tuple(map(float, x))
    if any(c > 0 for c in cons):
        phi = None if out.phi is None else float(out.phi)
        return EvaluationResult(xs, Status.INFEASIBLE, phi, cons, wall, dict(out.extras))
    if out.phi is None or not math.isfinite(out.phi):
        return EvaluationResult(xs, Status.HIDDEN_FAIL, wall_time=wall, extras=dict(out.extras),
                                message="non-finite objective")
    return EvaluationResult(xs, Status.VALID, float(out.phi), cons, wall, dict(out.extras))


def cache_key(x, bounds: Bounds, quantum: float) -> tuple:
    u = (np.asarray(x, float) - bounds.lower) / np.where(bounds.span > 0, bounds.span, 1.0)
    return tuple(np.round(u / quantum).astype(np.int64).tolist())


def evaluate_with_cache(blackbox: Blackbox, x, cache: dict | None, bounds: Bounds,
                        quantum: float = 1e-12) -> tuple[EvaluationResult, bool]:
    """Result for x and whether the blackbox ran.  Hidden failures are cached too."""
    if cache is None:
        return evaluate_blackbox(blackbox, x), True
    key = cache_key(x, bounds, quantum)
    if key in cache:
        return cache[key], False
    res = evaluate_blackbox(blackbox, x)
    cache[key] = res
    return res, True


def _record(state: MadsState, res: EvaluationResult) -> None:
    state.history.append(res)
    prev = state.best_so_far[-1] if state.best_so_far else math.nan
    if res.feasible and (math.isnan(prev) or res.phi > prev):
        prev = res.phi
    state.best_so_far.append(prev)


def _better(res: EvaluationResult, ref: EvaluationResult | None) -> bool:
    """Feasible beats infeasible, phi decides among feasible, violation otherwise."""
    if ref is None:
        return True
    if res.feasible != ref.feasible:
        return res.feasible
    if res.feasible:
        return res.phi > ref.phi
    return res.violation < ref.violation


def initialize(x0, bounds: Bounds, cfg: MadsConfig, blackbox: Blackbox) -> MadsState:
    x0 = bounds.apply_frozen(x0)
    if not bounds.contains(x0):
        raise ValueError(f"x0 = {x0} lies outside the bounds")
    state = MadsState(bounds, cfg, np.random.default_rng(cfg.seed), cfg.frame_size0,
                      center=None)  # type: ignore[arg-type]
    cache = state.cache if cfg.use_cache else None
    res, _ = evaluate_with_cache(blackbox, x0, cache, bounds, cfg.cache_quantum)
    _record(state, res)
    state.center = res
    state.champion = res if res.feasible else None
    return state


def poll_directions(n: int, ratio: int, rng: np.random.Generator, retries: int = 10) -> np.ndarray:
    """N+1 integer directions (rows): a permuted lower-triangular basis and its negated sum.

    Diagonal entries are +-ratio, entries below it uniform in (-ratio, ratio),
    so each basis direction has infinity norm exactly ratio.
    """
    for _ in range(retries):
        L = np.zeros((n, n), dtype=np.int64)
        for i in range(n):
            L[i, i] = ratio * rng.choice((-1, 1))
            if i and ratio > 1:
                L[i, :i] = rng.integers(-ratio + 1, ratio, size=i)
        rows, cols = rng.permutation(n), rng.permutation(n)
        B = L[rows][:, cols]
        if np.linalg.matrix_rank(B.astype(float)) == n:
            D = B.T                                   # directions are the basis columns
            return np.vstack([D, -D.sum(axis=0)])
    raise DegenerateBasis(f"no full-rank basis after {retries} tries")


def propose_poll(state: MadsState) -> list[np.ndarray]:
    b = state.bounds
    free = b.free
    ratio = max(1, int(round(state.frame_size / state.mesh_size)))
    D = poll_directions(len(free), ratio, state.rng, state.cfg.max_basis_retries)
    state.last_directions = D
    c = np.asarray(state.center.x, float)
    out = []
    for d in D:
        x = c.copy()
        x[free] = c[free] + state.mesh_size * d * b.span[free]
        out.append(np.clip(b.apply_frozen(x), b.lower, b.upper))
    return out


def update(state: MadsState, results: Sequence[EvaluationResult]) -> bool:
    """Apply one poll's results (in candidate order); returns whether it succeeded."""
    best = None
    for r in results:
        if _better(r, best):
            best = r
    success = False
    if best is not None and best.feasible and _better(best, state.champion):
        state.champion = best
        state.center = best
        success = True
    elif state.champion is None and best is not None and best.status is Status.INFEASIBLE \
            and _better(best, state.center):
        state.center = best          # no feasible point yet: chase the least violation
        success = True
    state.iterations += 1
    if success:
        state.frame_size *= state.cfg.expand
        state.failed_iterations = 0
    else:
        state.frame_size *= state.cfg.shrink
        state.failed_iterations += 1
    return success


def _counts(history) -> dict:
    c = {s.value: 0 for s in Status}
    for r in history:
        c[r.status.value] += 1
    return c


def run(blackbox: Blackbox, x0, bounds: Bounds, cfg: MadsConfig = MadsConfig(),
        executor: Executor | None = None) -> OptimizationReport:
    """Poll until the budget is spent or the frame falls below cfg.min_frame_size."""
    state = initialize(x0, bounds, cfg, blackbox)
    cache = state.cache if cfg.use_cache else None
    while state.n_evaluations < cfg.budget and state.frame_size >= cfg.min_frame_size:
        if len(bounds.free) == 0:
            break
        cands = propose_poll(state)
        results: list = [None] * len(cands)
        pending = []
        seen = {}
        for i, x in enumerate(cands):
            key = cache_key(x, bounds, cfg.cache_quantum)
            if cache is not None and key in cache:
                results[i] = cache[key]
            elif cache is not None and key in seen:
                pending.append((i, x, seen[key]))
            else:
                seen[key] = i
                pending.append((i, x, None))
        fresh = [(i, x) for i, x, dup in pending if dup is None]
        fresh = fresh[:cfg.budget - state.n_evaluations]
        if cfg.opportunistic:
            for i, x in fresh:
                res, _ = evaluate_with_cache(blackbox, x, cache, bounds, cfg.cache_quantum)
                results[i] = res
                _record(state, res)
                if res.feasible and _better(res, state.champion):
                    break
        else:
            xs = [x for _, x in fresh]
            if executor is not None and len(xs) > 1:
                outs = list(executor.map(evaluate_blackbox, [blackbox] * len(xs), xs))
            else:
                outs = [evaluate_blackbox(blackbox, x) for x in xs]
            for (i, x), res in zip(fresh, outs):     # candidate order, not completion order
                results[i] = res
                if cache is not None:
                    cache[cache_key(x, bounds, cfg.cache_quantum)] = res
                _record(state, res)
        for i, _, dup in pending:
            if dup is not None:
                results[i] = results[dup]
        update(state, [r for r in results if r is not None])
    hist = state.history
    return OptimizationReport(state.champion, hist, _counts(hist), np.array(state.best_so_far),
                              state.iterations, state.frame_size)


HISTORY_HEADER = ["eval_index", "th1", "th2", "th3", "omega", "h_ratio", "status", "phi",
                  "sigma_ratio", "umax_Nmm", "is_champion"]


def _fmt(v) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def write_history(report: OptimizationReport, path) -> None:
    """One row per blackbox evaluation; is_champion marks the reported champion."""
    champ = report.champion
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HISTORY_HEADER)
        for k, r in enumerate(report.history):
            mark = int(champ is not None and r is champ)
            w.writerow([k, *[repr(float(v)) for v in r.x], r.status.value, _fmt(r.phi),
                        _fmt(r.extras.get("sigma_ratio")), _fmt(r.extras.get("umax_Nmm")), mark])


def read_history(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and list(rows[0].keys()) != HISTORY_HEADER:
        raise ValueError("unexpected history header")
    return rows
