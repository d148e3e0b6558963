import numpy as np
import pytest

from bistable_origami.model import (FACE, NO_MIRROR, NO_REGION, WaterbombMesh, bar_lengths,
                                    triangle_areas)
from bistable_origami import kernels
from bistable_origami.model import reflection_matrices

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def make_mesh(nodes, bars=(), bar_k=None, hinges=(), hinge_k=None, tris=(), tri_k=None,
              planes=None, bar_E=None, driven=(0,), pin=0, alpha=np.pi / 4, r_o=1.0):
    """Hand-built mesh with rest state = `nodes`."""
    X = np.asarray(nodes, float)
    bars = np.asarray(bars, dtype=np.int64).reshape(-1, 2)
    hinges = np.asarray(hinges, dtype=np.int64).reshape(-1, 4)
    tris = np.asarray(tris, dtype=np.int64).reshape(-1, 3)
    nb, nh, nt = len(bars), len(hinges), len(tris)
    L0 = bar_lengths(X, bars) if nb else np.zeros(0)
    mirror = np.zeros((nh, 4), dtype=np.int64)
    refl = reflection_matrices(alpha)
    rest = kernels.hinge_angles(X, hinges, mirror, refl) if nh else np.zeros(0)
    E = np.zeros((nb, 2)) if bar_E is None else np.column_stack([bar_E, np.zeros(nb)])
    return WaterbombMesh(
        nodes=X, node_region=np.full(len(X), FACE, dtype=np.int64),
        node_plane=np.full(len(X), NO_MIRROR, dtype=np.int64) if planes is None
        else np.asarray(planes, dtype=np.int64),
        triangles=tris, tri_region=np.full(nt, FACE, dtype=np.int64),
        tri_k=np.zeros(nt) if tri_k is None else np.asarray(tri_k, float),
        tri_A0=triangle_areas(X, tris) if nt else np.zeros(0),
        bars=bars, bar_k=np.ones(nb) if bar_k is None else np.asarray(bar_k, float), bar_L0=L0,
        bar_E=E, bar_region=np.column_stack([np.full(nb, FACE), np.full(nb, NO_REGION)]).astype(np.int64),
        hinges=hinges, hinge_mirror=mirror,
        hinge_k=np.ones(nh) if hinge_k is None else np.asarray(hinge_k, float),
        hinge_rest=rest, hinge_region=np.full((nh, 2), FACE, dtype=np.int64),
        hinge_stress=np.zeros((nh, 2)), driven=np.asarray(driven, dtype=np.int64),
        pin_forming=pin, pin_actuation=pin, alpha=alpha, r_o=r_o)


def random_patch(rng, n_cols=None):
    """Small random triangulated strip (2 x n_cols nodes) with bars, hinges and areal barriers."""
    n_cols = n_cols or int(rng.integers(2, 5))
    xs = np.arange(n_cols, dtype=float)
    X = np.vstack([np.column_stack([xs, np.zeros(n_cols), np.zeros(n_cols)]),
                   np.column_stack([xs, np.ones(n_cols), np.zeros(n_cols)])])
    X += 0.2 * rng.standard_normal(X.shape)
    top = lambda c: n_cols + c
    tris = []
    for c in range(n_cols - 1):
        tris += [(c, c + 1, top(c + 1)), (c, top(c + 1), top(c))]
    edges = {}
    for t, tri in enumerate(tris):
        for s in range(3):
            i, j, o = tri[s], tri[(s + 1) % 3], tri[(s + 2) % 3]
            edges.setdefault((min(i, j), max(i, j)), []).append(o)
    bars = list(edges)
    hinges = [(v[0], i, j, v[1]) for (i, j), v in edges.items() if len(v) == 2]
    mesh = make_mesh(X, bars, rng.uniform(0.5, 5.0, len(bars)), hinges,
                     rng.uniform(0.1, 2.0, len(hinges)), tris, rng.uniform(0.1, 1.0, len(tris)))
    # random rest state so the perturbed configuration is loaded everywhere
    from dataclasses import replace
    mesh = replace(mesh, bar_L0=mesh.bar_L0 * rng.uniform(0.9, 1.1, len(bars)),
                   hinge_rest=mesh.hinge_rest + rng.uniform(-0.3, 0.3, len(hinges)),
                   tri_A0=mesh.tri_A0 * rng.uniform(0.9, 1.1, len(tris)))
    return mesh
