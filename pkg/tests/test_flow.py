import numpy as np
import pytest

from mhsets.errors import FlowExtinct, InvalidSetup, InvalidStep, NestingFault
from mhsets.fields import Grid, ScalarField, gradient_array, signed_distance
from mhsets.fixtures import segment_set, sphere_set
from mhsets.flow import (
    FlowState,
    HMeanConvexRegion,
    avoidance_monitor,
    evolve,
    flow_to_limit,
    h_mean_convex_region,
    initial_state,
    interface_displacement,
    max_stable_dt,
    reinitialize,
    region_radius,
    step,
)
from mhsets.shapes import Sphere


@pytest.fixture(scope="module")
def g2():
    return Grid.cube(2, 1.0, 101)


def test_shrinking_circle_rate(g2):
    rho0 = 0.5
    run = evolve(initial_state(Sphere((0, 0), rho0), g2), 1000, record_every=100)
    t = np.array([s.t for s in run.states])
    rho = np.array([region_radius(s.phi) for s in run.states])
    np.testing.assert_allclose(rho, np.sqrt(rho0**2 - 2 * t), rtol=5e-3)
    rate = np.diff(rho) / np.diff(t)
    mid = 0.5 * (rho[1:] + rho[:-1])
    assert np.all(rho >= 10 * g2.dx)
    np.testing.assert_allclose(rate, -1 / mid, rtol=0.02)


def test_plane_is_stationary(g2):
    phi = ScalarField.from_function(g2, lambda x: x[:, 1] - 0.013)
    s = FlowState(phi)
    for _ in range(5):
        s2 = step(s)
        assert np.max(np.abs(s2.values - s.values)) <= 1e-6
        s = s2


def test_forced_circle_equilibrium(g2):
    rho0 = 0.5
    s0 = initial_state(Sphere((0, 0), rho0), g2, h=1 / rho0)
    run = evolve(s0, 1000, record_every=250)
    for s in run.states:
        assert abs(region_radius(s.phi) - rho0) <= g2.dx
    assert interface_displacement(run.states[0].phi, run.states[-1].phi) <= g2.dx


def test_step_rejects_bad_dt(g2):
    s = initial_state(Sphere((0, 0), 0.5), g2, h=1.0)
    limit = max_stable_dt(g2, 1.0)
    step(s, limit)
    for dt in (2 * limit, 0.0, -1e-5):
        with pytest.raises(InvalidStep):
            step(s, dt)


def _band_gradient(state, cells=3):
    gn = np.linalg.norm(gradient_array(state.values, state.grid.spacing), axis=-1)
    return gn[np.abs(state.values) <= cells * state.grid.dx]


def test_reinitialize_rescales_without_moving(g2):
    d = signed_distance(Sphere((0.03, -0.01), 0.45), g2)
    s = FlowState(ScalarField(g2, 2 * d.values))
    r = reinitialize(s)
    assert interface_displacement(s.phi, r.phi) <= 0.1 * g2.dx
    gb = _band_gradient(r)
    assert gb.min() >= 0.9 and gb.max() <= 1.1
    assert r.since_reinit == 0


def test_reinitialize_after_steps(g2):
    s = initial_state(Sphere((0, 0), 0.5), g2)
    for _ in range(40):
        s = step(s)
    r = reinitialize(s)
    assert interface_displacement(s.phi, r.phi) <= 0.1 * g2.dx
    gb = _band_gradient(r)
    assert gb.min() >= 0.9 and gb.max() <= 1.1


def test_reinitialize_extinct(g2):
    s = FlowState(ScalarField(g2, np.ones(g2.shape)), t=0.3)
    with pytest.raises(FlowExtinct):
        reinitialize(s)


def test_avoidance_external_line(g2):
    Z = segment_set((0.8, -1.0), (0.8, 1.0), 0.005)
    run = evolve(initial_state(Sphere((0, 0), 0.5), g2), 600, record_every=100, Z=Z)
    rep = avoidance_monitor(run, Z)
    assert rep.passed
    exact = 0.8 - np.sqrt(0.25 - 2 * rep.times)
    np.testing.assert_allclose(rep.distances, exact, atol=0.5 * g2.dx)
    assert np.all(np.diff(rep.distances) > 0)
    assert rep.to_dict()["verdict"] == "pass"
    assert run.to_csv().splitlines()[0] == "t,interface_measure,min_distance_to_Z,max_abs_kappa"


def test_avoidance_tangent_line(g2):
    Z = segment_set((0.5 + 2 * g2.dx, -1.0), (0.5 + 2 * g2.dx, 1.0), 0.005)
    run = evolve(initial_state(Sphere((0, 0), 0.5), g2), 300, record_every=50)
    rep = avoidance_monitor(run, Z)
    assert rep.d0 == pytest.approx(2 * g2.dx, abs=1e-3 * g2.dx)
    assert rep.passed
    assert np.all(np.diff(rep.distances) >= -g2.dx)


def test_avoidance_rejects_crossing_set(g2):
    Z = segment_set((-1.0, 0.0), (1.0, 0.0), 0.005)
    run = evolve(initial_state(Sphere((0, 0), 0.5), g2), 20, record_every=10)
    with pytest.raises(InvalidSetup):
        avoidance_monitor(run, Z)
    near = segment_set((0.5 + g2.dx, -1.0), (0.5 + g2.dx, 1.0), 0.005)
    with pytest.raises(InvalidSetup):
        avoidance_monitor(run, near)


def test_h_mean_convex_gate(g2):
    assert h_mean_convex_region(Sphere((0, 0), 0.5), g2, 2.0).verified
    bad = h_mean_convex_region(Sphere((0, 0), 0.5), g2, 3.0)
    assert not bad.verified
    with pytest.raises(InvalidSetup):
        flow_to_limit(bad)
    ok = h_mean_convex_region(Sphere((0, 0), 0.5), g2, 1.0)
    with pytest.raises(InvalidSetup):
        flow_to_limit(ok, h=1.5)
    with pytest.raises(InvalidSetup):
        flow_to_limit(ok, Z=segment_set((0.2, 0.0), (0.9, 0.0)))


def test_limit_equilibrium_2d(g2):
    h = 2.0
    res = flow_to_limit(h_mean_convex_region(Sphere((0, 0), 1 / h), g2, h))
    assert res.converged and not res.extinct
    assert abs(res.radius - 1 / h) <= max(0.02 / h, 2 * g2.dx)
    assert res.radius == pytest.approx(1 / h, rel=0.02)
    assert res.curvature_residual < 0.02 * h
    assert res.nested


def test_limit_extinction(g2):
    rho0 = 0.4
    res = flow_to_limit(h_mean_convex_region(Sphere((0, 0), rho0), g2, 0.0))
    assert res.extinct and res.region is None and len(res.surface) == 0
    assert res.t == pytest.approx(rho0**2 / 2, rel=0.05)
    assert res.nested


def test_limit_equilibrium_3d():
    g = Grid.cube(3, 1.0, 41)
    R = 0.5
    h = 2 / R
    res = flow_to_limit(h_mean_convex_region(Sphere((0, 0, 0), R), g, h))
    assert res.converged
    assert res.radius == pytest.approx(2 / h, rel=0.02)
    assert res.nested


def test_strong_barrier_contact_is_stationary(g2):
    R = 0.5
    Z = sphere_set(R, dim=2)
    res = flow_to_limit(h_mean_convex_region(Sphere((0, 0), R), g2, 1 / R), Z=Z)
    assert res.converged and res.z_contained
    assert np.max(Z.exact_distance(res.surface)) <= g2.dx
    assert np.max(np.abs(res.region.value_at(Z.points))) <= g2.dx


def test_nesting_fault_on_expanding_region(g2):
    # An undersized ball with a forged certificate: h exceeds its curvature, so it grows.
    u = signed_distance(Sphere((0, 0), 0.3), g2)
    fake = HMeanConvexRegion(u, 5.0, np.zeros((1, 2)), np.zeros(1), 0.1)
    with pytest.raises(NestingFault):
        flow_to_limit(fake)


def test_constrained_run_is_labelled():
    g = Grid.cube(2, 1.0, 81)
    Z = segment_set((-0.3, 0.0), (0.3, 0.0), 0.005)
    N0 = h_mean_convex_region(Sphere((0, 0), 0.6), g, 0.0)
    free = flow_to_limit(N0, Z=Z)
    # A segment is not a (1, 0)-set, so the free flow sweeps through it.
    assert free.extinct and free.z_contained is False and not free.constrained
    held = flow_to_limit(N0, Z=Z, constrained=True)
    d = held.to_dict()
    assert d["constrained"] is True and d["z_contained"] is True and not d["extinct"]
    assert np.max(Z.exact_distance(held.surface)) <= 4 * g.dx
