from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bistable_origami import kernels
from bistable_origami.engine import (EmptyLandscape, EnergyLandscape, HiddenFailure, Structure,
                                     SweepOptions, actuation_sweep, extract_metrics, forming,
                                     solve_equilibrium, stress_proxy, total_energy,
                                     trapezoid_energy)
from bistable_origami.model import (DESIGN_I, DesignVector, GeometryParams, MaterialPair,
                                    build_mesh)
from bistable_origami.orchestrator import evaluate_design

from conftest import make_mesh, random_patch

G = GeometryParams()
M = MaterialPair()


def fd_gradient(mesh, X, h):
    g = np.zeros(X.size)
    flat = X.reshape(-1)
    for i in range(flat.size):
        for s in (1, -1):
            Y = flat.copy()
            Y[i] += s * h
            g[i] += s * total_energy(mesh, Y.reshape(X.shape))[0]
    return g / (2 * h)


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


# total_energy

def test_rest_state_zero_energy():
    mesh = build_mesh(DesignVector(*DESIGN_I), G, M)
    E, g = total_energy(mesh, mesh.nodes)
    assert E == 0.0
    assert np.max(np.abs(g)) < 1e-9


def test_single_bar_energy():
    mesh = make_mesh([[0, 0, 0], [1, 0, 0]], [(0, 1)], [2.0])
    E, g = total_energy(mesh, np.array([[0, 0, 0], [2, 0, 0.0]]))
    assert E == pytest.approx(1.0, rel=1e-15)
    assert g[1] == pytest.approx([2.0, 0, 0])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    mesh = random_patch(rng)
    X = mesh.nodes + 0.05 * rng.standard_normal(mesh.nodes.shape)
    _, g = total_energy(mesh, X)
    assert rel_err(g.reshape(-1), fd_gradient(mesh, X, 1e-6 * 1.0)) < 1e-6


def test_sector_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    mesh = build_mesh(DesignVector(*DESIGN_I), replace(G, resolution=1), M)
    st_ = Structure(mesh)
    q = st_.to_q(mesh.nodes) + 0.5 * rng.standard_normal(st_.nq)
    _, g, H = st_.evaluate(q, True)
    h = 1e-6 * G.r_o
    fd = np.array([(st_.evaluate(q + h * e, False)[0] - st_.evaluate(q - h * e, False)[0]) / (2 * h)
                   for e in np.eye(st_.nq)])
    assert rel_err(g, fd) < 1e-6
    fdH = np.array([(st_.evaluate(q + h * e, False)[1] - st_.evaluate(q - h * e, False)[1]) / (2 * h)
                    for e in np.eye(st_.nq)])
    assert rel_err(H, fdH) < 1e-5


def test_dihedral_hessian_symmetric_and_consistent():
    rng = np.random.default_rng(0)
    p = rng.standard_normal((4, 3))
    H = kernels.dihedral_hessian(p)
    assert np.allclose(H, H.T, atol=1e-10)
    h = 1e-6
    fd = np.zeros((12, 12))
    for c in range(12):
        d = np.zeros(12)
        d[c] = h
        fd[:, c] = (kernels.dihedral_grad(p + d.reshape(4, 3)) -
                    kernels.dihedral_grad(p - d.reshape(4, 3))).reshape(-1) / (2 * h)
    assert rel_err(H, fd) < 1e-6


def test_dihedral_flat_is_pi():
    p = np.array([[0, -1, 0], [0, 0, 0], [1, 0, 0], [0.5, 1, 0.0]])
    assert kernels.dihedral(p) == pytest.approx(np.pi)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 2 * np.pi))
def test_frame_objectivity(seed, angle):
    rng = np.random.default_rng(seed)
    mesh = random_patch(rng)
    X = mesh.nodes + 0.05 * rng.standard_normal(mesh.nodes.shape)
    c, s = np.cos(angle), np.sin(angle)
    R = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])
    rotated = replace(mesh, nodes=mesh.nodes @ R.T)
    E0 = total_energy(mesh, X)[0]
    E1 = total_energy(rotated, X @ R.T)[0]
    assert E1 == pytest.approx(E0, rel=1e-10, abs=1e-14)


# solve_equilibrium

def _series_bars(k1=1.0, k2=3.0):
    return make_mesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [(0, 1), (1, 2)], [k1, k2])


def test_zero_displacement_returns_rest():
    mesh = build_mesh(DesignVector(*DESIGN_I), G, M)
    st_ = Structure(mesh)
    q0 = st_.to_q(mesh.nodes)
    fixed = st_.constrained(mesh.driven, mesh.pin_forming)
    q, E, _ = solve_equilibrium(st_, q0, fixed, q0[fixed])
    assert E == 0.0
    assert np.array_equal(q, q0)


def test_series_bars_closed_form():
    k1, k2, D = 1.0, 3.0, 2.6
    mesh = _series_bars(k1, k2)
    st_ = Structure(mesh)
    q0 = st_.to_q(mesh.nodes)
    fixed = np.array([0, 1, 2, 4, 5, 6, 7, 8])       # only x of the middle node is free
    vals = q0[fixed].copy()
    vals[fixed == 6] = D                              # end node x
    q, _, _ = solve_equilibrium(st_, q0, fixed, vals)
    x1 = (k1 * 1.0 + k2 * (D - 1.0)) / (k1 + k2)
    assert q[3] == pytest.approx(x1, abs=1e-10)


def test_solver_energy_not_above_start():
    rng = np.random.default_rng(5)
    mesh = random_patch(rng, 4)
    st_ = Structure(mesh)
    q0 = st_.to_q(mesh.nodes) + 0.05 * rng.standard_normal(st_.nq)
    fixed = np.arange(3)
    E0 = st_.evaluate(q0, False)[0]
    q, E, g = solve_equilibrium(st_, q0, fixed, q0[fixed])
    assert E <= E0
    free = np.setdiff1d(np.arange(st_.nq), fixed)
    assert np.max(np.abs(g[free])) <= SweepOptions().newton_tol * st_.force_scale


def test_pathological_mesh_hidden_failure():
    # an almost free hinge and a prescribed jump that drives a triangle through
    # zero area: the areal barrier makes the path infinite, never a crash
    X = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]]
    mesh = make_mesh(X, [(0, 1), (1, 3), (3, 2), (2, 0), (1, 2)], [1, 1, 1, 1, 1],
                     [(0, 1, 2, 3)], [1e-12], [(0, 1, 2), (1, 3, 2)], [1.0, 1.0])
    st_ = Structure(mesh)
    q0 = st_.to_q(mesh.nodes)
    fixed = np.array([0, 1, 2, 3, 4, 5, 6, 7, 8])      # nodes 0, 1, 2 held
    vals = q0[fixed].copy()
    vals[3] = 1e3                                       # node 1 thrown far along x
    vals[6] = -1e3
    with pytest.raises(HiddenFailure):
        solve_equilibrium(st_, q0, fixed, vals, SweepOptions(max_newton_iters=3))


# forming

def test_forming_zero_height_identity():
    mesh = build_mesh(DesignVector(*DESIGN_I), G, M)
    assert forming(mesh, 0.0) is mesh


@pytest.fixture(scope="module")
def formed_i():
    x = DesignVector(*DESIGN_I)
    return forming(build_mesh(x, G, M), x.h_ratio * G.r_o)


def test_formed_mesh_stress_free(formed_i):
    E, _ = total_energy(formed_i, formed_i.nodes)
    assert E == 0.0


def test_formed_apex_height(formed_i):
    z = formed_i.nodes[formed_i.driven, 2]
    assert np.allclose(z, 0.6 * G.r_o, atol=1e-9)
    pin = formed_i.pin_forming
    assert formed_i.nodes[pin, 2] == pytest.approx(0.0, abs=1e-12)


# actuation sweep

@pytest.fixture(scope="module")
def landscape_i(formed_i):
    return actuation_sweep(formed_i, 0.6 * G.r_o, norm_factor=M.E_f * M.nu_f * G.r_o)


def test_landscape_shape(landscape_i):
    d = landscape_i.delta
    assert d[0] == 0 and d[-1] == pytest.approx(2 * 0.6 * G.r_o)
    assert np.all(np.diff(d) > 0)
    assert len(d) == SweepOptions().steps + 1
    assert landscape_i.energy[0] == 0.0


def test_energy_force_consistency(landscape_i):
    U = trapezoid_energy(landscape_i.delta, landscape_i.force)
    assert np.allclose(landscape_i.energy, U, rtol=1e-10, atol=0)


def test_integrated_energy_tracks_stored_energy(landscape_i):
    # the reaction force is the exact energy derivative, so the integral follows
    # the stored elastic energy up to trapezoid error until the snap-through;
    # after it the work done exceeds the stored energy by what the jump released
    U, S = landscape_i.energy, landscape_i.stored_energy
    scale = np.max(S)
    k = int(np.argmax(U))
    assert np.max(np.abs(U[:k + 1] - S[:k + 1])) < 0.02 * scale
    assert np.all(U - S > -0.02 * scale)


def test_trapezoid_example():
    assert np.array_equal(trapezoid_energy([0, 1, 2], [0, 1, 1]), [0, 0.5, 1.5])


@settings(max_examples=50)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=30))
def test_trapezoid_definition(force):
    d = np.cumsum(np.r_[0.0, np.ones(len(force) - 1)])
    U = trapezoid_energy(d, force)
    assert U[0] == 0.0
    for k in range(1, len(U)):
        assert U[k] == pytest.approx(U[k - 1] + 0.5 * (force[k] + force[k - 1]), abs=1e-9)


def test_sweep_determinism(formed_i, landscape_i):
    again = actuation_sweep(formed_i, 0.6 * G.r_o, norm_factor=M.E_f * M.nu_f * G.r_o)
    for f in ("delta", "force", "energy", "stress_face", "stress_crease"):
        assert np.array_equal(getattr(again, f), getattr(landscape_i, f))


def test_csv_round_trip(tmp_path, landscape_i):
    p = tmp_path / "land.csv"
    landscape_i.to_csv(p)
    back = EnergyLandscape.from_csv(p)
    for f in ("delta", "force", "energy", "stress_face", "stress_crease"):
        assert np.array_equal(getattr(back, f), getattr(landscape_i, f))
    assert np.array_equal(back.normalized_energy, landscape_i.normalized_energy)
    assert p.read_text().splitlines()[0] == \
        "delta_mm,force_N,energy_Nmm,energy_normalized,stress_face_MPa,stress_crease_MPa"


# stress proxy

def test_stress_proxy_rest_is_zero(formed_i):
    assert stress_proxy(formed_i, formed_i.nodes) == (0.0, 0.0)


def test_stress_proxy_single_bar():
    mesh = make_mesh([[0, 0, 0], [1, 0, 0]], [(0, 1)], [1.0], bar_E=[2600.0])
    face, crease = stress_proxy(mesh, np.array([[0, 0, 0], [1.01, 0, 0.0]]))
    assert face == pytest.approx(26.0, rel=1e-9)
    assert crease == 0.0


# extract_metrics

def _double_well(U_max, U2, n=301):
    """Smooth curve rising to U_max at 1, falling to U2 at 2 and rising past it."""
    d = np.linspace(0, 2.5, n)
    U = np.where(d <= 1, U_max * (1 - np.cos(np.pi * d)) / 2,
                 U2 + (U_max - U2) * (1 + np.cos(np.pi * (d - 1))) / 2)
    F = np.where(d <= 1, U_max * np.pi * np.sin(np.pi * d) / 2,
                 -(U_max - U2) * np.pi * np.sin(np.pi * (d - 1)) / 2)
    z = np.zeros_like(d)
    return EnergyLandscape(d, F, U, z, z)


def test_metrics_design_i_reference_values():
    met = extract_metrics(_double_well(5.41e-3, 5.41e-3 - 1.56e-3), M)
    assert met.bistable
    assert met.phi == pytest.approx(0.2885, abs=0.002)
    assert met.U_max == pytest.approx(5.41e-3, rel=1e-4)
    assert met.delta_state2 == pytest.approx(2.0, abs=1e-3)


def test_metrics_monostable():
    d = np.linspace(0, 1, 50)
    z = np.zeros_like(d)
    met = extract_metrics(EnergyLandscape(d, 2 * d, d**2, z, z), M)
    assert not met.bistable and met.phi == 0.0


def test_metrics_symmetric_double_well():
    met = extract_metrics(_double_well(2.0, 0.0), M)
    assert met.phi == pytest.approx(1.0, abs=1e-9)


def test_metrics_endpoint_state():
    d = np.linspace(0, 2, 201)
    U = np.sin(np.pi * d / 2.5) ** 2
    F = np.gradient(U, d)
    z = np.zeros_like(d)
    met = extract_metrics(EnergyLandscape(d, F, U, z, z), M)
    assert met.bistable and met.delta_state2 == 2.0


def test_metrics_sigma_ratio():
    land = _double_well(1.0, 0.5)
    land.stress_face[:] = 25.0
    land.stress_crease[10] = 75.0
    assert extract_metrics(land, M).sigma_ratio == pytest.approx(max(25 / M.Sy_f, 75 / M.Sy_c))


def test_metrics_empty():
    e = np.zeros(0)
    with pytest.raises(EmptyLandscape):
        extract_metrics(EnergyLandscape(e, e, e, e, e), M)


@settings(max_examples=100)
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=40))
def test_metrics_invariants(force):
    d = np.arange(len(force), dtype=float)
    U = trapezoid_energy(d, force)
    z = np.zeros_like(d)
    met = extract_metrics(EnergyLandscape(d, np.array(force), U, z, z), M)
    if met.bistable:
        assert 0 <= met.phi <= 1
        assert met.dU <= met.U_max
    else:
        assert met.phi == 0


# surrogate designs

def test_design_i_bistable():
    met, _ = evaluate_design(DESIGN_I, G, M)
    assert met.bistable and 0 < met.phi < 1


@pytest.mark.slow
def test_resolution_convergence():
    """Doubling the resolution moves U_max and phi by less than 2% (Design I)."""
    a, _ = evaluate_design(DESIGN_I, G, M)
    b, _ = evaluate_design(DESIGN_I, replace(G, resolution=2 * G.resolution), M)
    assert abs(b.U_max - a.U_max) / a.U_max < 0.02
    assert abs(b.phi - a.phi) / a.phi < 0.02
