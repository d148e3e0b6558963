import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bistable_origami.engine import extract_metrics, total_energy
from bistable_origami.model import MOUNTAIN, VALLEY, MaterialPair
from bistable_origami.spring import (SpringModelParams, build_spring_mesh, formed_spring_mesh,
                                     max_bar_strain, spring_energy_curve)

M = MaterialPair()


def second_minimum(p):
    return extract_metrics(spring_energy_curve(p), M)


@pytest.fixture(scope="module")
def free_curve():
    p = SpringModelParams()
    return p, spring_energy_curve(p, keep_configurations=True)


# build_spring_mesh

def test_zero_springs_leave_facet_and_bars():
    mesh = build_spring_mesh(SpringModelParams())
    region = mesh.hinge_region[:, 0]
    assert np.all(mesh.hinge_k[(region == MOUNTAIN) | (region == VALLEY)] == 0)
    assert np.count_nonzero(mesh.hinge_k) == 1 and np.all(mesh.bar_k > 0)


def test_mountain_double_valley():
    mesh = build_spring_mesh(SpringModelParams(K_M=2.0, K_V=1.0))
    km = mesh.hinge_k[mesh.hinge_region[:, 0] == MOUNTAIN]
    kv = mesh.hinge_k[mesh.hinge_region[:, 0] == VALLEY]
    assert np.array_equal(km, 2 * kv) and kv.size == 1


@pytest.mark.parametrize("kw", [dict(K_M=-1.0), dict(K_V=-0.1), dict(K_f=0.0),
                                dict(bar_stiffness_scale=1.0), dict(h_ratio=1.0)])
def test_invalid_params(kw):
    with pytest.raises(ValueError):
        SpringModelParams(**kw)


def test_bar_strain_bound(free_curve):
    p, land = free_curve
    assert p.K_f == 1 and p.bar_stiffness_scale == 1e4
    assert max_bar_strain(formed_spring_mesh(p), land) < 1e-4


@pytest.mark.parametrize("km,kv", [(1.0, 1.0), (2.0, 1.0)])
def test_bar_strain_bound_with_springs(km, kv):
    p = SpringModelParams(K_M=km, K_V=kv)
    land = spring_energy_curve(p, keep_configurations=True)
    assert max_bar_strain(formed_spring_mesh(p), land) < 1e-4


# spring_energy_curve

def test_formed_state_stress_free():
    formed = formed_spring_mesh(SpringModelParams(K_M=1.0, K_V=1.0))
    assert total_energy(formed, formed.nodes)[0] == 0.0


def test_zero_springs_two_zero_energy_states(free_curve):
    _, land = free_curve
    met = extract_metrics(land, M)
    assert land.energy[0] == 0.0
    assert met.U_max > 0 and 0 < met.delta_max < land.delta[-1]
    assert land.energy[-1] / met.U_max < 0.01
    assert met.bistable and met.U_state2 < 0.01 * met.U_max


def test_zero_springs_force_crossings(free_curve):
    p, land = free_curve
    h = p.h_ratio * p.geometry.r_o
    F = land.force[1:]
    d = land.delta[1:]
    cross = d[1:][np.diff(np.sign(F)) != 0]
    assert np.any(np.abs(cross - h) < 0.05 * h)
    # the second zero sits at the end of the sweep (U' = 0 at the mirrored state)
    assert np.any(np.abs(cross - 2 * h) < 0.05 * h) or abs(F[-1]) < 1e-3 * np.max(np.abs(F))


def test_zero_springs_mirror_symmetry(free_curve):
    p, land = free_curve
    h = p.h_ratio * p.geometry.r_o
    U_max = np.max(land.energy)
    d = np.linspace(0, 0.8 * h, 41)
    up = np.interp(h + d, land.delta, land.energy)
    down = np.interp(h - d, land.delta, land.energy)
    assert np.max(np.abs(up - down)) < 0.02 * U_max


def test_valley_spring_lifts_second_minimum():
    met = second_minimum(SpringModelParams(K_M=1.0, K_V=1.0))
    assert met.bistable and met.U_state2 > 0


def test_stiffer_mountain_raises_second_minimum():
    a = second_minimum(SpringModelParams(K_M=1.0, K_V=1.0))
    b = second_minimum(SpringModelParams(K_M=2.0, K_V=1.0))
    assert b.U_state2 > a.U_state2


@settings(max_examples=8, deadline=None)
@given(st.floats(0.0, 2.0), st.floats(0.05, 2.0), st.floats(0.05, 1.0))
def test_second_minimum_monotone_in_valley(km, kv, extra):
    a = second_minimum(SpringModelParams(K_M=km, K_V=kv))
    b = second_minimum(SpringModelParams(K_M=km, K_V=kv + extra))
    assert b.U_state2 >= a.U_state2 - 1e-9 * b.U_max
