"""Parameterized bar-and-hinge mesh of one 1/(2n) sector of the waterbomb base.

The sector spans the polar angles [0, alpha] with alpha = pi/n.  It holds half
of a mountain crease on the theta = 0 mirror plane, a stiff face in the middle,
and half of a valley crease on the theta = alpha mirror plane.  Every quad cell
of a polar grid is split into two triangles; triangle edges become axial bars
and interior edges (including those across the mirror planes) become
rotational hinges.  The second diagonal of each cell is an extra bar so that
the in-plane shear response does not depend on the split direction, and each
triangle carries an areal barrier against collapse.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import kernels

MOUNTAIN, FACE, VALLEY = 0, 1, 2
REGION_NAMES = ("mountain", "face", "valley")
NO_REGION = -1

# reflection ids used by hinge vertices that live in the neighbouring sector;
# ON_AXIS marks a node on both mirror planes (it can only move along z)
NO_MIRROR, MIRROR_START, MIRROR_END = 0, 1, 2
ON_AXIS = 3

DESIGN_NAMES = ("th1", "th2", "th3", "omega", "h_ratio")


class DesignError(ValueError):
    """Raised for design vectors that cannot be turned into a geometry."""


class OrderingViolation(DesignError):
    pass


class OutOfBounds(DesignError):
    def __init__(self, dimension: str, value: float, lower: float, upper: float):
        self.dimension = dimension
        super().__init__(f"{dimension}={value:g} outside [{lower:g}, {upper:g}]")


class ZeroWidth(DesignError):
    pass


class DegenerateMesh(DesignError):
    pass


@dataclass(frozen=True)
class MaterialPair:
    """Face (f) and crease (c) materials. Moduli and limits in MPa."""

    E_f: float = 2600.0
    E_c: float = 120.0
    nu_f: float = 0.35
    nu_c: float = 0.45
    Sy_f: float = 50.0
    Sy_c: float = 50.0

    def __post_init__(self):
        for name in ("E_f", "E_c", "Sy_f", "Sy_c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("nu_f", "nu_c"):
            if not 0 < getattr(self, name) < 0.5:
                raise ValueError(f"{name} must lie in (0, 0.5)")


@dataclass(frozen=True)
class GeometryParams:
    n: int = 4
    r_o: float = 50.0
    r_i_ratio: float = 1.0 / 6.0
    t_f: float = 1.0
    resolution: int = 2
    min_crease_width: float = 0.4

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("n must be >= 3")
        if not 0 < self.r_i_ratio < 1:
            raise ValueError("r_i_ratio must lie in (0, 1)")
        if not (self.t_f > 0 and self.r_o > 0):
            raise ValueError("r_o and t_f must be positive")
        if self.resolution < 1:
            raise ValueError("resolution must be >= 1")

    @property
    def alpha(self) -> float:
        return np.pi / self.n

    @property
    def r_i(self) -> float:
        return self.r_o * self.r_i_ratio


@dataclass(frozen=True)
class DesignVector:
    th1: float
    th2: float
    th3: float
    omega: float
    h_ratio: float

    def as_array(self) -> np.ndarray:
        return np.array([self.th1, self.th2, self.th3, self.omega, self.h_ratio])

    @classmethod
    def from_array(cls, x: Sequence[float]) -> "DesignVector":
        return cls(*(float(v) for v in x))


@dataclass(frozen=True)
class DesignBounds:
    lower: tuple = (0.1, 0.1, 0.1, 0.5, 0.3)
    upper: tuple = (0.9, 0.9, 0.9, 1.5, 0.9)
    frozen: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        lo, up = np.asarray(self.lower, float), np.asarray(self.upper, float)
        if lo.shape != (5,) or up.shape != (5,):
            raise ValueError("bounds need five entries")
        if np.any(lo > up):
            raise ValueError("lower bound exceeds upper bound")
        for i, v in self.frozen.items():
            if not lo[i] <= v <= up[i]:
                raise ValueError(f"frozen {DESIGN_NAMES[i]}={v} outside bounds")

    @property
    def free_dims(self) -> list[int]:
        return [i for i in range(5) if i not in self.frozen]


DEFAULT_BOUNDS = DesignBounds()
RELAXED_BOUNDS = DesignBounds(lower=(0.02, 0.02, 0.02, 0.5, 0.3),
                              upper=(0.98, 0.98, 0.98, 1.5, 0.9))

DESIGN_I = (0.1, 0.5, 0.9, 1.0, 0.6)
DESIGN_II = (0.5, 0.6, 0.7, 0.5, 0.704)
DESIGN_III = (0.31, 0.46, 0.9, 1.5, 0.374)


def width_limited_bounds(bounds: DesignBounds, g: GeometryParams) -> DesignBounds:
    """Tighten the angle bounds so both creases keep g.min_crease_width.

    The full crease (both mirror halves) is narrowest at the hole, where the
    mountain crease is 2 r_i th1 alpha wide and the valley 2 r_i (1 - th3) alpha.
    """
    if g.min_crease_width <= 0:
        return bounds
    frac = g.min_crease_width / (2.0 * g.r_i * g.alpha)
    lo, up = list(bounds.lower), list(bounds.upper)
    for i in range(3):
        lo[i] = min(max(lo[i], frac), up[i])
        up[i] = max(min(up[i], 1.0 - frac), lo[i])
    frozen = {i: min(max(v, lo[i]), up[i]) for i, v in bounds.frozen.items()}
    return DesignBounds(tuple(lo), tuple(up), frozen)


def validate_design(x: Sequence[float], bounds: DesignBounds = DEFAULT_BOUNDS) -> DesignVector:
    x = np.array(x, dtype=float)
    if x.shape != (5,) or not np.all(np.isfinite(x)):
        raise DesignError("design vector needs five finite values")
    for i, v in bounds.frozen.items():
        x[i] = v
    if x[0] > x[1] or x[1] > x[2]:
        raise OrderingViolation(f"angles must satisfy th1 <= th2 <= th3, got {x[:3]}")
    for i in range(5):
        if not bounds.lower[i] <= x[i] <= bounds.upper[i]:
            raise OutOfBounds(DESIGN_NAMES[i], x[i], bounds.lower[i], bounds.upper[i])
    if not (x[0] > 0 and x[2] < 1):
        raise OutOfBounds("th1" if x[0] <= 0 else "th3", x[0] if x[0] <= 0 else x[2], 0.0, 1.0)
    return DesignVector.from_array(x)


@dataclass(frozen=True)
class SectorLayout:
    alpha: float
    mountain: tuple
    face: tuple
    valley: tuple
    interior_ray: float

    @property
    def widths(self) -> tuple:
        return tuple(b - a for a, b in (self.mountain, self.face, self.valley))

    def region_at(self, theta: float) -> int:
        """Region of a point strictly inside a band (boundaries go to the face)."""
        if theta < self.mountain[1]:
            return MOUNTAIN
        if theta > self.valley[0]:
            return VALLEY
        return FACE


def build_layout(x: DesignVector, g: GeometryParams) -> SectorLayout:
    a = g.alpha
    t1, t2, t3 = x.th1 * a, x.th2 * a, x.th3 * a
    return SectorLayout(alpha=a, mountain=(0.0, t1), face=(t1, t3), valley=(t3, a),
                        interior_ray=t2)


def hinge_surface_stress(E, nu, t, w, rotation):
    """Surface bending stress (MPa) of a strip of width w rotated by `rotation` rad.

    Equals 6 M / (t^2 L) with M = crease_hinge_stiffness(E, nu, t, w, L) * rotation.
    """
    return E * t * np.abs(rotation) / (2.0 * (1.0 - nu**2) * w)


def crease_hinge_stiffness(E, nu, t, w, L, min_width=1e-9):
    """Rotational stiffness (N mm/rad) of a plate strip of width w bent about a line of length L."""
    w = np.asarray(w, dtype=float)
    if np.any(w < min_width):
        raise ZeroWidth(f"hinge strip width {np.min(w):g} mm below {min_width:g} mm")
    return E * t**3 * L / (12.0 * (1.0 - nu**2) * w)


@dataclass(frozen=True, eq=False)
class WaterbombMesh:
    """Sector mesh. Arrays are read-only by convention; use with_rest_state to update."""

    nodes: np.ndarray            # (n, 3) rest positions, mm
    node_region: np.ndarray      # (n,) band tag
    node_plane: np.ndarray       # (n,) NO_MIRROR / MIRROR_START / MIRROR_END / ON_AXIS
    triangles: np.ndarray        # (nt, 3)
    tri_region: np.ndarray       # (nt,)
    tri_k: np.ndarray            # (nt,) areal barrier modulus, N/mm
    tri_A0: np.ndarray           # (nt,) rest areas, mm^2
    bars: np.ndarray             # (nb, 2)
    bar_k: np.ndarray            # N/mm
    bar_L0: np.ndarray           # mm
    bar_E: np.ndarray            # (nb, 2) modulus per side for the stress proxy, 0 if absent
    bar_region: np.ndarray       # (nb, 2)
    hinges: np.ndarray           # (nh, 4) i, j, k, l with axis j-k
    hinge_mirror: np.ndarray     # (nh, 4) reflection id applied to each vertex
    hinge_k: np.ndarray          # N mm/rad
    hinge_rest: np.ndarray       # rad, flat = pi
    hinge_region: np.ndarray     # (nh, 2)
    hinge_stress: np.ndarray     # (nh, 2) MPa per rad of rotation, per side
    driven: np.ndarray           # node ids on the hole
    pin_forming: int | tuple     # rim node(s) z-locked while forming (th2 ray)
    pin_actuation: int | tuple   # rim node(s) z-locked while actuating (th3 ray)
    alpha: float
    r_o: float

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def with_rest_state(self, positions: np.ndarray, bar_L0: np.ndarray,
                        hinge_rest: np.ndarray) -> "WaterbombMesh":
        from dataclasses import replace
        X = np.array(positions)
        return replace(self, nodes=X, bar_L0=np.array(bar_L0), hinge_rest=np.array(hinge_rest),
                       tri_A0=triangle_areas(X, self.triangles))

    def scale_hinges(self, regions: Sequence[int], factor: float) -> "WaterbombMesh":
        """Multiply the stiffness of hinges whose sides all lie in `regions`."""
        from dataclasses import replace
        sel = np.all(np.isin(self.hinge_region, list(regions) + [NO_REGION]), axis=1)
        k = self.hinge_k.copy()
        k[sel] *= factor
        return replace(self, hinge_k=k)

    def crease_hinges(self) -> np.ndarray:
        """Boolean mask of hinges lying entirely inside a crease band."""
        r = self.hinge_region
        crease = (r == MOUNTAIN) | (r == VALLEY) | (r == NO_REGION)
        return np.all(crease, axis=1) & np.any(r != NO_REGION, axis=1)


def triangle_areas(X: np.ndarray, tri: np.ndarray) -> np.ndarray:
    tri = np.asarray(tri, dtype=np.int64).reshape(-1, 3)
    return kernels.triangle_areas(np.ascontiguousarray(X, dtype=float), tri)


def bar_lengths(X: np.ndarray, bars: np.ndarray) -> np.ndarray:
    bars = np.asarray(bars, dtype=np.int64).reshape(-1, 2)
    return kernels.bar_lengths(np.ascontiguousarray(X, dtype=float), bars)


def reflection_matrices(alpha: float) -> np.ndarray:
    """Stack of reflections indexed by NO_MIRROR, MIRROR_START, MIRROR_END."""
    n = np.array([-np.sin(alpha), np.cos(alpha), 0.0])
    return np.stack([np.eye(3), np.diag([1.0, -1.0, 1.0]), np.eye(3) - 2.0 * np.outer(n, n)])


def _ray_angles(x: DesignVector, g: GeometryParams, tol: float = 1e-12):
    """Angular ray positions with the band of each cell between consecutive rays."""
    a = g.alpha
    cuts = [0.0, x.th1 * a, x.th2 * a, x.th3 * a, a]
    bands = [MOUNTAIN, FACE, FACE, VALLEY]
    rays, cell_region = [0.0], []
    for lo, hi, band in zip(cuts[:-1], cuts[1:], bands):
        if hi - lo <= tol * a:
            continue
        for s in range(1, g.resolution + 1):
            rays.append(lo + (hi - lo) * s / g.resolution)
            cell_region.append(band)
    rays[-1] = a
    return np.array(rays), np.array(cell_region, dtype=int), cuts


def _radii(g: GeometryParams) -> np.ndarray:
    # geometric spacing keeps the cell aspect ratio roughly constant from hole to rim
    m = 2 * g.resolution + 1
    return g.r_i * (1.0 / g.r_i_ratio) ** (np.arange(m + 1) / m)


def mesh_counts(n_rays: int, resolution: int) -> dict:
    """Closed-form element counts for a grid with n_rays rays."""
    m = 2 * resolution + 1
    na, nr = n_rays - 1, m
    nodes = n_rays * (m + 1)
    tris = 2 * na * nr
    bars = n_rays * m + na * (m + 1) + 2 * na * nr
    interior = (n_rays - 2) * nr + na * (m - 1) + na * nr
    return {"nodes": nodes, "triangles": tris, "bars": bars, "hinges": interior + 2 * nr}


def _assemble(pos, tri, tri_region, tri_mat, node_plane, alpha, min_edge, diagonals=frozenset()):
    """Bars and hinges from a triangulation with per-triangle (E, nu, t).

    Edges listed in `diagonals` split a quad cell; their hinge measures the cell's
    twist and gets k = 2 D A_cell / d^2 instead of the strip formula, which
    would lock skinny cells.
    """
    nt = len(tri)
    area = np.empty(nt)
    for e, (a, b, c) in enumerate(tri):
        area[e] = 0.5 * np.linalg.norm(np.cross(pos[b] - pos[a], pos[c] - pos[a]))
    edge_map: dict = {}
    for e, t in enumerate(tri):
        for s in range(3):
            i, j, opp = t[s], t[(s + 1) % 3], t[(s + 2) % 3]
            key = (min(i, j), max(i, j))
            edge_map.setdefault(key, []).append((e, opp))

    bars, bar_k, bar_L0, bar_E, bar_reg = [], [], [], [], []
    hinges, mirrors, hk, hreg, hstress = [], [], [], [], []
    for (i, j), sides in edge_map.items():
        L = float(np.linalg.norm(pos[j] - pos[i]))
        if L < min_edge:
            raise DegenerateMesh(f"edge {i}-{j} of length {L:g} mm")
        heights = [2.0 * area[e] / L for e, _ in sides]
        if min(heights) < min_edge:
            raise DegenerateMesh(f"sliver triangle next to edge {i}-{j}")
        k_ax = sum(tri_mat[e][0] * tri_mat[e][2] * h / 3.0 / L for (e, _), h in zip(sides, heights))
        bars.append((i, j))
        bar_k.append(k_ax)
        bar_L0.append(L)
        E2 = [tri_mat[e][0] for e, _ in sides] + [0.0] * (2 - len(sides))
        R2 = [tri_region[e] for e, _ in sides] + [NO_REGION] * (2 - len(sides))
        bar_E.append(E2)
        bar_reg.append(R2)

        if len(sides) == 2 and (i, j) in diagonals:
            (e1, p), (e2, q) = sides
            E, nu, t = tri_mat[e1]
            w_twist = L**3 / (2.0 * (area[e1] + area[e2]))
            k = k_moment = crease_hinge_stiffness(E, nu, t, w_twist, L)
            hinges.append((p, i, j, q))
            mirrors.append((0, 0, 0, 0))
            ts = (t, t)
            hreg.append((tri_region[e1], tri_region[e2]))
        elif len(sides) == 2:
            (e1, p), (e2, q) = sides
            side_k = [crease_hinge_stiffness(tri_mat[e][0], tri_mat[e][1], tri_mat[e][2], h / 2.0, L)
                      for e, h in ((e1, heights[0]), (e2, heights[1]))]
            k = k_moment = 1.0 / (1.0 / side_k[0] + 1.0 / side_k[1])
            hinges.append((p, i, j, q))
            mirrors.append((0, 0, 0, 0))
            ts = (tri_mat[e1][2], tri_mat[e2][2])
            hreg.append((tri_region[e1], tri_region[e2]))
        else:
            plane = node_plane[i]
            if plane == NO_MIRROR or node_plane[j] != plane:
                continue
            (e1, p), = sides
            # the mirror image of the same triangle sits on the other side; this
            # sector stores half of the hinge energy
            k_moment = crease_hinge_stiffness(tri_mat[e1][0], tri_mat[e1][1], tri_mat[e1][2], heights[0], L)
            k = 0.5 * k_moment
            hinges.append((p, i, j, p))
            mirrors.append((0, 0, 0, plane))
            ts = (tri_mat[e1][2], tri_mat[e1][2])
            hreg.append((tri_region[e1], tri_region[e1]))
        # surface stress of each side from the hinge moment M = k_moment * drot
        hk.append(k)
        hstress.append([6.0 * k_moment / (t**2 * L) for t in ts])

    return dict(
        bars=np.array(bars, dtype=np.int64), bar_k=np.array(bar_k), bar_L0=np.array(bar_L0),
        bar_E=np.array(bar_E), bar_region=np.array(bar_reg, dtype=np.int64),
        hinges=np.array(hinges, dtype=np.int64).reshape(-1, 4),
        hinge_mirror=np.array(mirrors, dtype=np.int64).reshape(-1, 4),
        hinge_k=np.array(hk), hinge_region=np.array(hreg, dtype=np.int64).reshape(-1, 2),
        hinge_stress=np.array(hstress).reshape(-1, 2),
    )


# areal barrier modulus as a fraction of the membrane stiffness E t
AREA_BARRIER = 0.1


def _cross_brace(parts, pos, cross):
    """Add the second diagonal of every cell as a bar, sharing the first diagonal's stiffness."""
    bars = parts["bars"]
    index = {(min(a, b), max(a, b)): e for e, (a, b) in enumerate(bars.tolist())}
    new_bars, new_k, new_L, new_E, new_R = [], [], [], [], []
    k = parts["bar_k"].copy()
    for n00, n10, n11, n01 in cross:
        e = index[(min(n00, n11), max(n00, n11))]
        L1 = parts["bar_L0"][e]
        L2 = float(np.linalg.norm(pos[n01] - pos[n10]))
        # equal shear stiffness contribution: k L^2 shared between the diagonals
        kl2 = 0.5 * k[e] * L1**2
        k[e] = kl2 / L1**2
        new_bars.append((n10, n01))
        new_k.append(kl2 / L2**2)
        new_L.append(L2)
        new_E.append(parts["bar_E"][e])
        new_R.append(parts["bar_region"][e])
    parts["bars"] = np.vstack([bars, np.array(new_bars, dtype=np.int64).reshape(-1, 2)])
    parts["bar_k"] = np.concatenate([k, new_k])
    parts["bar_L0"] = np.concatenate([parts["bar_L0"], new_L])
    parts["bar_E"] = np.vstack([parts["bar_E"], np.array(new_E).reshape(-1, 2)])
    parts["bar_region"] = np.vstack([parts["bar_region"], np.array(new_R, dtype=np.int64).reshape(-1, 2)])


def polar_grid(rays: np.ndarray, radii: np.ndarray, alpha: float):
    """Nodes, triangles and plane flags for a ray x ring grid. Node id = ray * n_rings + ring."""
    nr = len(radii)
    th, rr = np.meshgrid(rays, radii, indexing="ij")
    pos = np.stack([rr * np.cos(th), rr * np.sin(th), np.zeros_like(rr)], axis=-1).reshape(-1, 3)
    # exact zeros on the mirror planes
    pos[:nr, 1] = 0.0
    end = slice((len(rays) - 1) * nr, len(rays) * nr)
    pos[end, 0] = radii * np.cos(alpha)
    pos[end, 1] = radii * np.sin(alpha)
    plane = np.zeros(len(pos), dtype=np.int64)
    plane[:nr] = MIRROR_START
    plane[end] = MIRROR_END
    tri, diag, cross = [], set(), []
    for a in range(len(rays) - 1):
        for b in range(nr - 1):
            n00, n01 = a * nr + b, a * nr + b + 1
            n10, n11 = (a + 1) * nr + b, (a + 1) * nr + b + 1
            tri.append((n00, n10, n11))
            tri.append((n00, n11, n01))
            diag.add((n00, n11))
            cross.append((n00, n10, n11, n01))
    return pos, np.array(tri, dtype=np.int64), plane, frozenset(diag), np.array(cross, dtype=np.int64)


def build_mesh(x: DesignVector, g: GeometryParams = GeometryParams(),
               m: MaterialPair = MaterialPair(), min_edge: float = 1e-3,
               area_barrier: float = AREA_BARRIER) -> WaterbombMesh:
    rays, cell_region, cuts = _ray_angles(x, g)
    radii = _radii(g)
    pos, tri, plane, diag, cross = polar_grid(rays, radii, g.alpha)
    nr = len(radii)
    tri_region = np.repeat(cell_region, 2 * (nr - 1))
    t_c = x.omega * g.t_f
    props = {MOUNTAIN: (m.E_c, m.nu_c, t_c), VALLEY: (m.E_c, m.nu_c, t_c),
             FACE: (m.E_f, m.nu_f, g.t_f)}
    tri_mat = [props[r] for r in tri_region]
    parts = _assemble(pos, tri, tri_region, tri_mat, plane, g.alpha, min_edge, diag)
    _cross_brace(parts, pos, cross)
    parts["bar_L0"] = bar_lengths(pos, parts["bars"])

    node_theta = np.repeat(rays, nr)
    layout = build_layout(x, g)
    node_region = np.array([layout.region_at(t) for t in node_theta], dtype=np.int64)
    ray_of = lambda ang: int(np.argmin(np.abs(rays - ang)))
    rim = lambda a: a * nr + nr - 1
    return WaterbombMesh(
        nodes=pos, node_region=node_region, node_plane=plane, triangles=tri,
        tri_region=tri_region, tri_A0=triangle_areas(pos, tri),
        tri_k=np.array([area_barrier * E * t for E, _, t in tri_mat]),
        hinge_rest=np.full(len(parts["hinges"]), np.pi),
        driven=np.arange(len(rays)) * nr, pin_forming=rim(ray_of(cuts[2])),
        pin_actuation=rim(ray_of(cuts[3])), alpha=g.alpha, r_o=g.r_o, **parts,
    )


def export_mesh(mesh: WaterbombMesh, path) -> None:
    """Plain-text tables of nodes, bars and hinges (diagnostic only)."""
    flags = {NO_MIRROR: "-", MIRROR_START: "sym0", MIRROR_END: "symA", ON_AXIS: "axis"}
    driven = set(mesh.driven.tolist())
    with open(path, "w") as fh:
        fh.write("# nodes: id x y z region flags\n")
        for i, (p, r, pl) in enumerate(zip(mesh.nodes, mesh.node_region, mesh.node_plane)):
            f = [flags[pl]] + (["driven"] if i in driven else [])
            if i in np.atleast_1d(mesh.pin_forming):
                f.append("pin_forming")
            if i in np.atleast_1d(mesh.pin_actuation):
                f.append("pin_actuation")
            fh.write(f"{i} {p[0]:.12g} {p[1]:.12g} {p[2]:.12g} {REGION_NAMES[r]} {','.join(f)}\n")
        fh.write("# bars: i j k_axial L0\n")
        for (i, j), k, L in zip(mesh.bars, mesh.bar_k, mesh.bar_L0):
            fh.write(f"{i} {j} {k:.12g} {L:.12g}\n")
        fh.write("# hinges: i j k l mirror_l k_rot rest_angle region_a region_b\n")
        for h, mi, k, a, (ra, rb) in zip(mesh.hinges, mesh.hinge_mirror, mesh.hinge_k,
                                          mesh.hinge_rest, mesh.hinge_region):
            fh.write(f"{h[0]} {h[1]} {h[2]} {h[3]} {mi[3]} {k:.12g} {a:.12g} "
                     f"{REGION_NAMES[ra]} {REGION_NAMES[rb]}\n")
