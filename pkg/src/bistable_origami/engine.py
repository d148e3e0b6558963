"""Equilibrium engine: energy, displacement-controlled solves and the forming/actuation protocol."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from . import kernels
from .model import (FACE, MIRROR_START, MOUNTAIN, NO_MIRROR, ON_AXIS, VALLEY, MaterialPair,
                    WaterbombMesh, bar_lengths, reflection_matrices)

log = logging.getLogger(__name__)


class HiddenFailure(RuntimeError):
    """The structural solve did not converge; the evaluation yields no value."""

    def __init__(self, msg: str, delta: float | None = None):
        super().__init__(msg)
        self.delta = delta


class DegenerateHinge(HiddenFailure):
    pass


class EmptyLandscape(ValueError):
    pass


@dataclass(frozen=True)
class SweepOptions:
    steps: int = 200
    newton_tol: float = 1e-8          # relative to the mesh force scale
    max_newton_iters: int = 50
    max_step_halvings: int = 8
    forming_steps: int = 40

    def __post_init__(self):
        if self.steps < 10 or self.forming_steps < 1:
            raise ValueError("steps must be >= 10")
        if not self.newton_tol > 0 or self.max_newton_iters < 1 or self.max_step_halvings < 0:
            raise ValueError("solver tolerances must be positive")


class Structure:
    """Reduced-coordinate view of a mesh: mirror-plane nodes keep two coordinates."""

    def __init__(self, mesh: WaterbombMesh):
        self.mesh = mesh
        n = mesh.n_nodes
        a = mesh.alpha
        ray_end = np.array([np.cos(a), np.sin(a), 0.0])
        self.refl = reflection_matrices(a)
        self.dof = -np.ones((n, 3), dtype=np.int64)
        self.basis = np.zeros((n, 3, 3))
        self.zdof = np.empty(n, dtype=np.int64)
        nq = 0
        for i, plane in enumerate(mesh.node_plane):
            if plane == NO_MIRROR:
                self.basis[i] = np.eye(3)
                self.dof[i] = (nq, nq + 1, nq + 2)
                self.zdof[i] = nq + 2
                nq += 3
            elif plane == ON_AXIS:
                self.basis[i][2, 0] = 1.0
                self.dof[i, 0] = nq
                self.zdof[i] = nq
                nq += 1
            else:
                ray = np.array([1.0, 0.0, 0.0]) if plane == MIRROR_START else ray_end
                self.basis[i][:, 0] = ray
                self.basis[i][2, 1] = 1.0
                self.dof[i, :2] = (nq, nq + 1)
                self.zdof[i] = nq + 1
                nq += 2
        self.nq = nq
        if len(mesh.hinge_k) and np.max(mesh.hinge_k) > 0:
            k_scale = float(np.max(mesh.hinge_k))
        else:
            k_scale = float(np.max(mesh.bar_k, initial=0.0)) * mesh.r_o**2
        self.force_scale = max(k_scale, 1e-12) / mesh.r_o

    def to_q(self, X: np.ndarray) -> np.ndarray:
        q = np.zeros(self.nq)
        for i in range(len(X)):
            P = self.basis[i]
            for c in range(3):
                d = self.dof[i, c]
                if d >= 0:
                    q[d] = P[:, c] @ X[i]
        return q

    def constrained(self, driven, pin) -> np.ndarray:
        """Fixed coordinates: driven z first, then the pinned z (one node or several), then the hub.

        The hole edge acts as a rigid hub (the bolted attachment), so driven nodes
        only move along z.
        """
        hub = [d for i in driven for d in self.dof[i] if d >= 0 and d != self.zdof[i]]
        pins = self.zdof[np.atleast_1d(pin)]
        return np.concatenate([self.zdof[driven], pins, hub]).astype(np.int64)

    def positions(self, q: np.ndarray) -> np.ndarray:
        return kernels.positions(q, self.dof, self.basis)

    def evaluate(self, q: np.ndarray, hess: bool = True, mesh: WaterbombMesh | None = None):
        m = self.mesh if mesh is None else mesh
        return kernels.evaluate(q, self.dof, self.basis, self.refl, m.bars, m.bar_k, m.bar_L0,
                                m.hinges, m.hinge_mirror, m.hinge_k, m.hinge_rest,
                                m.triangles, m.tri_k, m.tri_A0, hess)

    def hinge_angles(self, X: np.ndarray) -> np.ndarray:
        m = self.mesh
        return kernels.hinge_angles(X, m.hinges, m.hinge_mirror, self.refl)


def total_energy(mesh: WaterbombMesh, X: np.ndarray):
    """Energy (N mm) and gradient (N) per node coordinate of a full configuration.

    The configuration must keep mirror-plane nodes in their plane; the returned
    gradient is the Cartesian gradient, whose out-of-plane component on mirror
    nodes is the reaction of the symmetry constraint.
    """
    X = np.asarray(X, dtype=float)
    st = Structure(mesh)
    refl = st.refl
    free = np.zeros((mesh.n_nodes, 3, 3))
    dof = np.arange(3 * mesh.n_nodes, dtype=np.int64).reshape(-1, 3)
    free[:] = np.eye(3)
    e, g, _ = kernels.evaluate(X.reshape(-1).copy(), dof, free, refl, mesh.bars, mesh.bar_k,
                               mesh.bar_L0, mesh.hinges, mesh.hinge_mirror, mesh.hinge_k,
                               mesh.hinge_rest, mesh.triangles, mesh.tri_k, mesh.tri_A0, False)
    _check_hinges(mesh, X, refl)
    return e, g.reshape(-1, 3)


def _check_hinges(mesh, X, refl, tol=1e-10):
    p = np.stack([np.einsum("hij,hj->hi", refl[mesh.hinge_mirror[:, v]], X[mesh.hinges[:, v]])
                  for v in range(4)], axis=1)
    rkj = p[:, 2] - p[:, 1]
    m = np.cross(p[:, 0] - p[:, 1], rkj)
    n = np.cross(rkj, p[:, 2] - p[:, 3])
    scale = np.sum(rkj**2, axis=1)
    bad = (np.linalg.norm(m, axis=1) < tol * scale) | (np.linalg.norm(n, axis=1) < tol * scale)
    if np.any(bad):
        raise DegenerateHinge(f"collapsed hinge triangles: {np.flatnonzero(bad)[:5]}")


class _Factor:
    """Solver for H s = -r from one Hessian: Cholesky, or an eigen-decomposition for
    indefinite H that uses |eigenvalues| and adds a push along the most negative
    curvature direction (plain diagonal shifting stalls on saddles)."""

    def __init__(self, H: np.ndarray):
        self.chol = None
        try:
            self.chol = cho_factor(H, check_finite=False)
            return
        except LinAlgError:
            pass
        if not np.all(np.isfinite(H)):
            raise HiddenFailure("non-finite Hessian")
        lam, self.V = np.linalg.eigh(H)
        floor = 1e-10 * max(np.max(np.abs(lam)), 1e-300)
        self.inv = 1.0 / np.maximum(np.abs(lam), floor)
        self.negative = lam[0] < -floor

    @property
    def definite(self) -> bool:
        return self.chol is not None

    def step(self, r: np.ndarray) -> np.ndarray:
        if self.chol is not None:
            return -cho_solve(self.chol, r, check_finite=False)
        step = -self.V @ (self.inv * (self.V.T @ r))
        if self.negative:
            v = self.V[:, 0]
            step += (-1.0 if v @ r > 0 else 1.0) * v * max(np.linalg.norm(step), 1e-6)
        return step


def solve_equilibrium(st: Structure, q0: np.ndarray, fixed: np.ndarray, values: np.ndarray,
                      opts: SweepOptions = SweepOptions(), mesh: WaterbombMesh | None = None,
                      cache: dict | None = None):
    """Minimize the energy over the free coordinates with `fixed` coordinates set to `values`.

    Modified Newton: a factorized Hessian is reused (also across calls sharing
    `cache`) while the residual keeps dropping fast, and refreshed otherwise.
    Every step goes through an Armijo backtracking line search.  Raises
    HiddenFailure when the projected gradient does not fall below tolerance.
    """
    q = np.array(q0, dtype=float)
    q[fixed] = values
    mask = np.ones(st.nq, dtype=bool)
    mask[fixed] = False
    free = np.flatnonzero(mask)
    if free.size == 0:
        raise ValueError("no free coordinates")
    cache = {} if cache is None else cache
    tol = opts.newton_tol * st.force_scale
    E, g, _ = st.evaluate(q, False, mesh)
    if not np.isfinite(E):
        raise HiddenFailure("non-finite energy at start")
    E_start = E
    fac = cache.get("factor")
    reuse = fac is not None      # a stale factor is only trusted while it converges fast
    last = np.inf
    it = 0
    while it < opts.max_newton_iters:
        r = g[free]
        rnorm = np.max(np.abs(r))
        if rnorm <= tol:
            return q, E, g
        if not (reuse and rnorm <= 0.25 * last):
            if not (reuse and last == np.inf):
                fac = cache["factor"] = _Factor(st.evaluate(q, True, mesh)[2][np.ix_(free, free)])
                fresh = True
            else:
                fresh = False   # first iteration with a factor carried over
        else:
            fresh = False
        step = fac.step(r)
        slope = r @ step
        t = 1.0
        ok = slope < 0
        if ok:
            for _ in range(30):
                trial = q.copy()
                trial[free] += t * step
                E_t, g_t, _ = st.evaluate(trial, False, mesh)
                if np.isfinite(E_t) and (
                        E_t <= E + 1e-4 * t * slope
                        # energy differences vanish below round-off near convergence;
                        # fall back to the residual norm there
                        or (abs(E_t - E) <= 1e-12 * max(abs(E), 1.0)
                            and np.max(np.abs(g_t[free])) < rnorm)):
                    break
                t *= 0.5
            else:
                ok = False
        if not ok:
            if fresh:
                raise HiddenFailure(f"line search stalled at residual {rnorm:.3g}")
            reuse, last = False, np.inf
            continue
        it += 1
        reuse = fac.definite and t == 1.0
        last = rnorm
        q, E, g = trial, E_t, g_t
    if np.max(np.abs(g[free])) <= tol:
        return q, E, g
    raise HiddenFailure(f"Newton did not converge (residual {np.max(np.abs(g[free])):.3g},"
                        f" start energy {E_start:.3g})")


def _continuation(st, q, fixed, start, stop, n_steps, opts, record=None, mesh=None):
    """Move `fixed` coordinates linearly from start to stop, warm starting each solve.

    Each step starts from a secant prediction off the last two equilibria and
    falls back to the last equilibrium, then to step halving.
    """
    q = q.copy()
    q_prev = None
    cache: dict = {}
    for k in range(1, n_steps + 1):
        lo, hi = (k - 1) / n_steps, k / n_steps
        q_new = None
        if q_prev is not None:
            try:
                q_new, _, _ = solve_equilibrium(st, 2.0 * q - q_prev, fixed,
                                                start + hi * (stop - start), opts, mesh, cache)
            except HiddenFailure:
                q_new = None
        if q_new is None:
            cache.clear()
            q_new = _substep(st, q, fixed, start, stop, lo, hi, opts, 0, mesh)
        q_prev, q = q, q_new
        if record is not None:
            record(k, q)
    return q


def _substep(st, q, fixed, start, stop, lo, hi, opts, depth, mesh):
    try:
        vals = start + hi * (stop - start)
        q_new, _, _ = solve_equilibrium(st, q, fixed, vals, opts, mesh)
        return q_new
    except HiddenFailure as err:
        if depth >= opts.max_step_halvings:
            raise
        mid = 0.5 * (lo + hi)
        log.debug("halving step %g-%g (%s)", lo, hi, err)
        q_mid = _substep(st, q, fixed, start, stop, lo, mid, opts, depth + 1, mesh)
        return _substep(st, q_mid, fixed, start, stop, mid, hi, opts, depth + 1, mesh)


def prefold(mesh: WaterbombMesh, amplitude: float) -> WaterbombMesh:
    """Stress-free copy of the flat mesh tilted from the mountain ridge down to the valley.

    Breaks the flat-state bifurcation so that forming follows the folding branch
    instead of the in-plane compression branch.
    """
    X = mesh.nodes.copy()
    r = np.hypot(X[:, 0], X[:, 1])
    theta = np.arctan2(X[:, 1], X[:, 0])
    X[:, 2] = -amplitude * (r - r.min()) * theta / mesh.alpha
    X[:, 2] -= X[np.atleast_1d(mesh.pin_forming)[0], 2]     # rim pin stays at z = 0
    st = Structure(mesh)
    L = bar_lengths(X, mesh.bars)
    return mesh.with_rest_state(X, L, st.hinge_angles(X))


def forming(mesh: WaterbombMesh, h: float, opts: SweepOptions = SweepOptions(),
            imperfection: float = 0.1) -> WaterbombMesh:
    """Lift the hole by h with the interior-ray rim node z-locked, then relax all stress."""
    if h == 0:
        return mesh
    if imperfection:
        mesh = prefold(mesh, imperfection)
    st = Structure(mesh)
    q = st.to_q(mesh.nodes)
    fixed = st.constrained(mesh.driven, mesh.pin_forming)
    start = q[fixed].copy()
    stop = start.copy()
    nd = len(mesh.driven)
    stop[:nd] = start[nd] + h          # hole lifted to h above the rim pin
    try:
        q = _continuation(st, q, fixed, start, stop, opts.forming_steps, opts)
    except HiddenFailure as err:
        raise HiddenFailure(f"forming failed: {err}") from err
    X = st.positions(q)
    _check_hinges(mesh, X, st.refl)
    L = bar_lengths(X, mesh.bars)
    return mesh.with_rest_state(X, L, st.hinge_angles(X))


@dataclass
class EnergyLandscape:
    delta: np.ndarray
    force: np.ndarray
    energy: np.ndarray
    stress_face: np.ndarray
    stress_crease: np.ndarray
    norm_factor: float = 1.0          # E_f * nu_f * r_o
    stored_energy: np.ndarray | None = field(default=None, repr=False)
    configurations: list | None = field(default=None, repr=False)

    @property
    def normalized_energy(self) -> np.ndarray:
        return self.energy / self.norm_factor

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(LANDSCAPE_HEADER)
            for row in zip(self.delta, self.force, self.energy, self.normalized_energy,
                           self.stress_face, self.stress_crease):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "EnergyLandscape":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if rows[0] != LANDSCAPE_HEADER:
            raise ValueError(f"unexpected header {rows[0]}")
        a = np.array([[float(v) for v in r] for r in rows[1:]]).reshape(-1, 6)
        nz = np.flatnonzero(a[:, 2])
        norm = a[nz[0], 2] / a[nz[0], 3] if len(nz) else 1.0
        return cls(a[:, 0], a[:, 1], a[:, 2], a[:, 4], a[:, 5], norm_factor=norm)


LANDSCAPE_HEADER = ["delta_mm", "force_N", "energy_Nmm", "energy_normalized",
                    "stress_face_MPa", "stress_crease_MPa"]


def trapezoid_energy(delta, force) -> np.ndarray:
    delta, force = np.asarray(delta, float), np.asarray(force, float)
    out = np.zeros_like(force)
    out[1:] = np.cumsum(0.5 * (force[1:] + force[:-1]) * np.diff(delta))
    return out


def stress_proxy(mesh: WaterbombMesh, X: np.ndarray, angles: np.ndarray | None = None):
    """Max bar axial stress E|eps| and hinge surface bending stress per region (MPa)."""
    L = bar_lengths(X, mesh.bars)
    eps = np.abs(L - mesh.bar_L0) / mesh.bar_L0
    if angles is None:
        angles = kernels.hinge_angles(X, mesh.hinges, mesh.hinge_mirror,
                                      reflection_matrices(mesh.alpha))
    rot = np.abs(angles - mesh.hinge_rest)
    face = crease = 0.0
    for side in range(2):
        sb = mesh.bar_E[:, side] * eps
        sh = mesh.hinge_stress[:, side] * rot
        rb, rh = mesh.bar_region[:, side], mesh.hinge_region[:, side]
        face = max(face, _masked_max(sb, rb == FACE), _masked_max(sh, rh == FACE))
        crease = max(crease, _masked_max(sb, (rb == MOUNTAIN) | (rb == VALLEY)),
                     _masked_max(sh, (rh == MOUNTAIN) | (rh == VALLEY)))
    return face, crease


def _masked_max(v, mask):
    return float(np.max(v[mask])) if np.any(mask) else 0.0


def actuation_sweep(formed: WaterbombMesh, h: float, opts: SweepOptions = SweepOptions(),
                    norm_factor: float = 1.0, keep_configurations: bool = False) -> EnergyLandscape:
    """Drive the hole from +h down to -h (delta in [0, 2h]) with the th3-ray rim node z-locked."""
    st = Structure(formed)
    q = st.to_q(formed.nodes)
    fixed = st.constrained(formed.driven, formed.pin_actuation)
    start = q[fixed].copy()
    stop = start.copy()
    stop[:len(formed.driven)] -= 2.0 * h
    n = opts.steps
    delta = np.linspace(0.0, 2.0 * h, n + 1)
    force = np.zeros(n + 1)
    stored = np.zeros(n + 1)
    s_face = np.zeros(n + 1)
    s_crease = np.zeros(n + 1)
    configs = [st.positions(q)] if keep_configurations else None
    driven_z = st.zdof[formed.driven]

    done = [0]

    def record(k, qk):
        done[0] = k
        E, g, _ = st.evaluate(qk, False)
        force[k] = -np.sum(g[driven_z])
        stored[k] = E
        X = st.positions(qk)
        s_face[k], s_crease[k] = stress_proxy(formed, X, st.hinge_angles(X))
        if configs is not None:
            configs.append(X)

    try:
        _continuation(st, q, fixed, start, stop, n, opts, record)
    except HiddenFailure as err:
        k = min(done[0] + 1, n)
        raise HiddenFailure(f"actuation failed near delta={delta[k]:.4g} mm: {err}",
                            delta=float(delta[k])) from err
    return EnergyLandscape(delta, force, trapezoid_energy(delta, force), s_face, s_crease,
                           norm_factor=norm_factor, stored_energy=stored, configurations=configs)


@dataclass(frozen=True)
class BistabilityMetrics:
    U_max: float
    dU: float
    phi: float
    delta_state2: float
    sigma_ratio: float
    bistable: bool
    U_state2: float = float("nan")
    delta_max: float = float("nan")


def _refine_min(delta, U, k):
    """Vertex of the parabola through samples k-1, k, k+1 (clamped to the bracket)."""
    if k <= 0 or k >= len(U) - 1:
        return delta[k], U[k]
    x0, x1, x2 = delta[k - 1], delta[k], delta[k + 1]
    y0, y1, y2 = U[k - 1], U[k], U[k + 1]
    den = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / den
    b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / den
    if a <= 0:
        return x1, y1
    xv = float(np.clip(-b / (2 * a), x0, x2))
    c = y1 - a * x1 * x1 - b * x1
    return xv, min(y1, a * xv * xv + b * xv + c)


def extract_metrics(land: EnergyLandscape, m: MaterialPair) -> BistabilityMetrics:
    """Barrier, well depth and bistability ratio of a landscape.

    Candidate second states are force zero crossings from negative to
    non-negative (refined by a parabola through U) and the endpoint when the
    force there still pulls back.  The lowest candidate is the second state and
    U_max is the largest energy before it, so a sweep that overshoots the
    second state does not inflate the barrier.
    """
    U = np.asarray(land.energy, float)
    if U.size == 0:
        raise EmptyLandscape("landscape has no samples")
    delta = np.asarray(land.delta, float)
    F = np.asarray(land.force, float) if land.force is not None else np.gradient(U, delta)
    sface = np.max(land.stress_face) if len(land.stress_face) else 0.0
    screase = np.max(land.stress_crease) if len(land.stress_crease) else 0.0
    sigma_ratio = float(max(sface / m.Sy_f, screase / m.Sy_c))

    candidates = []
    for k in range(1, len(U)):
        if F[k - 1] < 0 <= F[k]:
            j = k if U[k] <= U[k - 1] else k - 1
            d, u = _refine_min(delta, U, j)
            candidates.append((u, d, j))
    if len(U) > 1 and F[-1] < 0:
        candidates.append((float(U[-1]), float(delta[-1]), len(U) - 1))
    best = None
    for u, d, j in candidates:
        U_max = float(np.max(U[:j + 1]))
        if U_max > 0 and U_max - u > 0 and (best is None or u < best[0]):
            best = (u, d, U_max, int(np.argmax(U[:j + 1])))
    if best is None:
        kmax = int(np.argmax(U))
        return BistabilityMetrics(float(U[kmax]), 0.0, 0.0, float("nan"), sigma_ratio, False,
                                  delta_max=float(delta[kmax]))
    U2, d2, U_max, kmax = best
    dU = min(U_max - U2, U_max)        # a well below the start energy counts as full depth
    phi = dU / U_max
    return BistabilityMetrics(U_max, dU, phi, d2, sigma_ratio, True, U_state2=U2,
                              delta_max=float(delta[kmax]))
