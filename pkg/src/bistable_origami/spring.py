"""Rigid-panel waterbomb with torsion springs on the folds.

One sector is a single triangular panel between the mountain fold (theta = 0)
and the valley fold (theta = alpha), split along its bisector by a facet
bending hinge.  Bars are near rigid, so the energy lives in the fold springs
K_M, K_V and in the facet hinge K_f.  The rim corners of both folds rest on a
frictionless support (z locked, free to slide), which leaves the apex height
as the only rigid mode: the panel must flatten its bisector as the apex passes
the rim plane, which is the facet-bending barrier.  The mesh runs through the
same forming and actuation protocol as the compliant-crease model.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import EnergyLandscape, SweepOptions, actuation_sweep, forming
from .model import (FACE, MIRROR_END, MIRROR_START, MOUNTAIN, NO_MIRROR, ON_AXIS, VALLEY,
                    GeometryParams, WaterbombMesh, bar_lengths, reflection_matrices,
                    triangle_areas)
from . import kernels


@dataclass(frozen=True)
class SpringModelParams:
    K_M: float = 0.0                 # mountain fold, N mm/rad (this sector's share)
    K_V: float = 0.0                 # valley fold
    K_f: float = 1.0                 # facet bending along the panel bisector
    bar_stiffness_scale: float = 1e4  # bar k (N/mm) per unit rotational stiffness per mm^2
    geometry: GeometryParams = field(default_factory=GeometryParams)
    h_ratio: float = 0.5

    def __post_init__(self):
        if self.K_M < 0 or self.K_V < 0:
            raise ValueError("fold stiffnesses must be non-negative")
        if not self.K_f > 0:
            raise ValueError("K_f must be positive")
        if not self.bar_stiffness_scale > 1:
            raise ValueError("bar_stiffness_scale must be much larger than 1")
        if not 0 < self.h_ratio < 1:
            raise ValueError("h_ratio must lie in (0, 1)")


def build_spring_mesh(p: SpringModelParams) -> WaterbombMesh:
    """Apex (0) on the axis, rim nodes on the mountain fold (1), bisector (2), valley fold (3)."""
    g = p.geometry
    a, r = g.alpha, g.r_o
    nodes = np.array([
        [0.0, 0.0, 0.0],
        [r, 0.0, 0.0],
        [r * np.cos(a / 2), r * np.sin(a / 2), 0.0],
        [r * np.cos(a), r * np.sin(a), 0.0],
    ])
    plane = np.array([ON_AXIS, MIRROR_START, NO_MIRROR, MIRROR_END], dtype=np.int64)
    tri = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int64)
    bars = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [2, 3]], dtype=np.int64)
    L0 = bar_lengths(nodes, bars)
    # near rigid: k = scale * K / (1 mm^2), so k L^2 dwarfs every rotational stiffness
    k_rot = max(p.K_M, p.K_V, p.K_f)
    bar_k = np.full(len(bars), p.bar_stiffness_scale * k_rot)
    # mirror hinges use the reflected opposite vertex as their fourth node
    hinges = np.array([[2, 0, 1, 2], [1, 0, 2, 3], [2, 3, 0, 2]], dtype=np.int64)
    mirror = np.array([[0, 0, 0, MIRROR_START], [0, 0, 0, 0], [0, 0, 0, MIRROR_END]],
                      dtype=np.int64)
    hinge_k = np.array([p.K_M, p.K_f, p.K_V])
    refl = reflection_matrices(a)
    rest = kernels.hinge_angles(nodes, hinges, mirror, refl)
    nh, nb = len(hinges), len(bars)
    return WaterbombMesh(
        nodes=nodes, node_region=np.array([FACE] * 4, dtype=np.int64), node_plane=plane,
        triangles=tri, tri_region=np.array([FACE, FACE], dtype=np.int64),
        tri_k=np.zeros(2), tri_A0=triangle_areas(nodes, tri),
        bars=bars, bar_k=bar_k, bar_L0=L0, bar_E=np.zeros((nb, 2)),
        bar_region=np.full((nb, 2), FACE, dtype=np.int64),
        hinges=hinges, hinge_mirror=mirror, hinge_k=hinge_k, hinge_rest=rest,
        hinge_region=np.array([[MOUNTAIN] * 2, [FACE] * 2, [VALLEY] * 2], dtype=np.int64),
        hinge_stress=np.zeros((nh, 2)), driven=np.array([0], dtype=np.int64),
        # both fold rim corners sit on the support in both steps
        pin_forming=(1, 3), pin_actuation=(1, 3), alpha=a, r_o=r,
    )


SEED_DIP = 1e-3   # stress-free bisector dip (fraction of r_o) picking the facet branch


def _dip_bisector(mesh: WaterbombMesh, dip: float) -> WaterbombMesh:
    X = mesh.nodes.copy()
    X[2, 2] = -dip * mesh.r_o
    L = bar_lengths(X, mesh.bars)
    rest = kernels.hinge_angles(X, mesh.hinges, mesh.hinge_mirror, reflection_matrices(mesh.alpha))
    return mesh.with_rest_state(X, L, rest)


def spring_energy_curve(p: SpringModelParams, sweep: SweepOptions = SweepOptions(),
                        keep_configurations: bool = False) -> EnergyLandscape:
    """Forming to h = h_ratio r_o followed by the actuation sweep over [0, 2h]."""
    formed = formed_spring_mesh(p, sweep)
    h = p.h_ratio * p.geometry.r_o
    return actuation_sweep(formed, h, sweep, keep_configurations=keep_configurations)


def max_bar_strain(formed: WaterbombMesh, landscape: EnergyLandscape) -> float:
    """Largest axial strain over a sweep run with keep_configurations=True."""
    if not landscape.configurations:
        raise ValueError("landscape carries no configurations")
    b = formed.bars
    return max(float(np.max(np.abs(bar_lengths(X, b) / formed.bar_L0 - 1.0)))
               for X in landscape.configurations)


def formed_spring_mesh(p: SpringModelParams, sweep: SweepOptions = SweepOptions()) -> WaterbombMesh:
    return forming(_dip_bisector(build_spring_mesh(p), SEED_DIP),
                   p.h_ratio * p.geometry.r_o, sweep, imperfection=0.0)
