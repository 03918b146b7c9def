import numpy as np
import pytest

from mhsets import tolerances as tol
from mhsets.curvature import SpaceFormAmbient
from mhsets.errors import EmptySet, InvalidInput, OutOfDomain, SearchExhausted
from mhsets.fields import Grid
from mhsets.fixtures import half_plane_set, plane_set, segment_set, singleton_set, sphere_set
from mhsets.predicate import (
    ClosedSet,
    ExpBarrierProbe,
    Quadratic,
    concavify,
    critical_h,
    distance_enlargement_check,
    mh_test,
    perturb_to_nonvanishing_gradient,
    probe_search,
    restricted_max,
)
from mhsets.shapes import Sphere


def sq(dim, scale=1.0, center=None):
    c = np.zeros(dim) if center is None else np.asarray(center, float)
    return Quadratic(c, np.zeros(dim), 2 * scale * np.eye(dim))


def test_restricted_max_examples():
    S = sphere_set(1.0)
    neg = Quadratic(np.zeros(3), np.zeros(3), -2 * np.eye(3))
    idx, vals = restricted_max(neg, S)
    assert len(idx) == len(S)
    np.testing.assert_allclose(vals, -1.0, atol=1e-12)

    lin = Quadratic(np.zeros(3), np.array([1.0, 0, 0]), np.zeros((3, 3)))
    idx, _ = restricted_max(lin, S)
    pts = S.points[idx]
    assert np.all(np.linalg.norm(pts - [1, 0, 0], axis=1) < 3 * S.resolution)
    assert np.all(np.diff(lin.values(pts)) <= 0)

    hp = half_plane_set()
    f = Quadratic(np.zeros(3), np.array([1.0, 0, 0]), np.diag([2.0, 0, 2.0]))
    idx, _ = restricted_max(f, hp)
    assert np.all(hp.points[idx, 0] == 0.0)
    assert any(np.allclose(hp.points[i], 0) for i in idx)

    with pytest.raises(EmptySet):
        restricted_max(lin, ClosedSet(np.zeros((0, 3)), 0.1))


@pytest.mark.parametrize("m", [1, 2, 3])
def test_singleton_margin_exact(m):
    Z = singleton_set(3)
    cert = mh_test(Z, sq(3), m, 0.0)
    assert cert.violated and cert.margin == 2.0 * m
    assert cert.grad_norm == 0.0


def test_plane_passes_with_proper_tail():
    Z = plane_set()
    f = Quadratic(np.zeros(3), np.zeros(3), np.diag([-2e-6, -2e-6, -2 - 2e-6]))
    rep = mh_test(Z, f, 2, 0.0)
    assert not rep.violated and rep.falsifier_only
    assert rep.worst_margin <= tol.TOL_MARGIN


def test_sphere_exp_barrier_violation_margin():
    r = 1.0
    S = sphere_set(r)
    f = ExpBarrierProbe(Sphere((0, 0, 0), r), 10 / r)
    cert = mh_test(S, f, 2, 2 / r - 0.1 / r)
    assert cert.violated
    assert cert.margin / cert.grad_norm == pytest.approx(0.1 / r, rel=0.1)


def test_certificates_recompute_independently():
    S = sphere_set(1.0)
    f = ExpBarrierProbe(Sphere((0, 0, 0), 1.0), 10.0)
    for cert in (mh_test(S, f, 2, 1.5), mh_test(singleton_set(3), sq(3), 2, 0.0)):
        p = cert.point
        H = f.hessian(p) if cert.probe["kind"] == "exp-barrier" else sq(3).hessian(p)
        D = f.gradient(p) if cert.probe["kind"] == "exp-barrier" else sq(3).gradient(p)
        w = np.sort(np.linalg.eigvalsh(H))
        margin = w[:2].sum() - cert.h * np.linalg.norm(D)
        assert margin > tol.TOL_MARGIN
        assert margin == pytest.approx(cert.margin, rel=1e-9, abs=1e-12)


def test_scaling_covariance():
    Z = singleton_set(3)
    base = mh_test(Z, sq(3), 2, 0.0).margin
    for c in (0.5, 3.0):
        assert mh_test(Z, sq(3).scaled(c), 2, 0.0).margin == pytest.approx(c * base, rel=1e-14)
    S = sphere_set(1.0)
    f = ExpBarrierProbe(Sphere((0, 0, 0), 1.0), 10.0)
    m1 = mh_test(S, f, 2, 1.2).margin
    assert mh_test(S, f.scaled(2.5), 2, 1.2).margin == pytest.approx(2.5 * m1, rel=1e-12)


@pytest.mark.parametrize("lam", [0.5, 2.0])
def test_dilation_covariance(lam):
    Z = singleton_set(3)
    f = sq(3)
    a = mh_test(Z, f, 2, 0.0)
    b = mh_test(Z.dilated(lam), f.dilated(lam), 2, 0.0)
    assert b.violated and b.margin == pytest.approx(a.margin / lam**2, rel=1e-12)

    S = sphere_set(1.0)
    g = ExpBarrierProbe(Sphere((0, 0, 0), 1.0), 10.0)
    a = mh_test(S, g, 2, 1.5)
    b = mh_test(S.dilated(lam), g.dilated(lam), 2, 1.5 / lam)
    assert b.violated
    np.testing.assert_allclose(b.point, lam * a.point, atol=1e-12)
    assert b.margin == pytest.approx(a.margin / lam**2, rel=1e-9)


def test_monotone_in_h():
    S = sphere_set(1.0)
    f = ExpBarrierProbe(Sphere((0, 0, 0), 1.0), 10.0)
    passed = [not mh_test(S, f, 2, h).violated for h in np.linspace(0, 4, 41)]
    first = passed.index(True)
    assert all(passed[first:])


def test_input_validation():
    Z = singleton_set(3)
    with pytest.raises(InvalidInput):
        mh_test(Z, sq(3), 0, 0.0)
    with pytest.raises(InvalidInput):
        mh_test(Z, sq(3), 2, -1.0)
    with pytest.raises(InvalidInput):
        probe_search(Z, 2, 0.0, budget=0)


def test_perturb_singleton():
    Z = singleton_set(3)
    f = sq(3)
    m, h = 2, 1.0
    f2, p2, cert = perturb_to_nonvanishing_gradient(f, Z, np.zeros(3), m, h)
    assert np.allclose(p2, 0)
    delta = cert.grad_norm / (2 * (1 - 1e-6 * 2))
    assert cert.grad_norm > 0
    assert cert.margin == pytest.approx(2 * m * (1 - 2e-6) - h * cert.grad_norm, rel=1e-9)
    assert delta < Z.resolution


def test_perturb_noop_when_gradient_nonzero():
    S = sphere_set(1.0)
    f = ExpBarrierProbe(Sphere((0, 0, 0), 1.0), 10.0)
    cert = mh_test(S, f, 2, 1.5)
    g, p, c2 = perturb_to_nonvanishing_gradient(f, S, cert.point, 2, 1.5)
    assert g is f and np.array_equal(p, cert.point)


def test_perturb_exhausted():
    # A constant function never violates: no admissible translate exists.
    Z = singleton_set(2)
    zero = Quadratic(np.zeros(2), np.zeros(2), np.zeros((2, 2)))
    with pytest.raises(SearchExhausted):
        perturb_to_nonvanishing_gradient(zero, Z, np.zeros(2), 1, 0.0, budget=8)


def test_concavified_max_is_strict():
    S = sphere_set(1.0)
    f = Quadratic(np.zeros(3), np.array([1.0, 0, 0]), np.zeros((3, 3)))
    idx, _ = restricted_max(f, S)
    p = S.points[idx[0]]
    g = concavify(f, p, 1e-3)
    near = np.linalg.norm(S.points - p, axis=1) <= 3 * S.resolution
    idx2, vals = restricted_max(g, S, subset=near)
    assert len(idx2) == 1 and np.allclose(S.points[idx2[0]], p)
    assert np.sum(vals[near] >= vals[idx2[0]]) == 1


def test_probe_search_plane_passes():
    rep = probe_search(plane_set(), 2, 0.0, budget=500)
    assert not rep.violated and rep.falsifier_only
    assert rep.worst_margin <= tol.TOL_MARGIN


def test_probe_search_segment_endpoint():
    seg = segment_set()
    cert = probe_search(seg, 1, 0.0, budget=50)
    assert cert.violated
    assert min(np.linalg.norm(cert.point - [-1, 0]), np.linalg.norm(cert.point - [1, 0])) == 0
    assert cert.margin == pytest.approx(2.0, rel=1e-12)  # |x-c|^2 / R with R = 1


def test_sphere_threshold_bisection():
    r = 0.8
    S = sphere_set(r)
    lo, hi = critical_h(S, 2, 0.5 / r, 4 / r, budget=20)
    assert lo <= 2 / r * 1.1 and hi >= 2 / r * 0.9
    assert abs(0.5 * (lo + hi) - 2 / r) <= 0.1 * 2 / r


def test_probe_search_deterministic_and_parallel():
    S = sphere_set(1.0)
    a = probe_search(S, 2, 1.8, budget=30, seed=3)
    b = probe_search(S, 2, 1.8, budget=30, seed=3, workers=3)
    assert a.to_dict() == b.to_dict()


def test_distance_sets_flat():
    grid = Grid.cube(3, 1.0, 41)
    rep = distance_enlargement_check(plane_set(), 0.2, 2, 0.0, grid, budget=100)
    assert not rep.violated and rep.result.worst_margin <= tol.TOL_MARGIN

    grid = Grid.cube(3, 0.6, 49)
    s = 0.3
    rep = distance_enlargement_check(singleton_set(), s, 2, 0.0, grid, budget=30)
    assert rep.violated and rep.result.margin >= 0.9 * 2 * 2 / s

    with pytest.raises(OutOfDomain):
        distance_enlargement_check(singleton_set(), 0.59, 2, 0.0, grid)


def test_distance_set_shell_passes():
    r, s = 0.6, 0.15
    grid = Grid.cube(3, 1.0, 51)
    rep = distance_enlargement_check(sphere_set(r), s, 2, 2 / r, grid, budget=60,
                                     families=("distance", "exp"))
    assert not rep.violated
    # The outer boundary has radius r + s, so the threshold drops to 2 / (r + s).
    rep = distance_enlargement_check(sphere_set(r), s, 2, 2.5, grid, budget=60,
                                     families=("distance", "exp"))
    assert rep.violated
    assert rep.result.margin / rep.result.grad_norm == pytest.approx(2 / (r + s) - 2.5, rel=0.05)


def test_distance_set_curved_delegates_to_comparison():
    Z = singleton_set(3)
    rep = distance_enlargement_check(Z, 0.3, 2, 1.0, Grid.cube(3, 1, 9), ambient=SpaceFormAmbient(3, 1.0))
    assert rep.h_adjusted == pytest.approx(1.0 - 2 * 1.0 * 0.3)
    assert not rep.violated
    rep = distance_enlargement_check(Z, 0.3, 2, 1.0, Grid.cube(3, 1, 9), ambient={"ricci": 2.0, "n": 3})
    assert rep.h_adjusted == pytest.approx(1.0 - 0.6)
