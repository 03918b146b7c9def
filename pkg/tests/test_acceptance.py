"""Acceptance criteria 1-10, each checked against an independent oracle.

Every criterion prints one ``criterion N: PASS|FAIL (...)`` line; the lines
are also collected into the pytest terminal summary.  Run directly with
``python tests/test_acceptance.py`` for the lines alone.
"""
import math
import time

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.spatial import cKDTree

from mhsets import tolerances as tol
from mhsets.curvature import SpaceFormAmbient, comparison_check, riccati_closed_form, riccati_propagate
from mhsets.fields import Grid, exp_barrier, signed_distance
from mhsets.fixtures import half_plane_set, plane_set, segment_set, singleton_set, sphere_set
from mhsets.flow import (
    avoidance_monitor,
    evolve,
    flow_to_limit,
    h_mean_convex_region,
    initial_state,
    region_radius,
)
from mhsets.io import dumps
from mhsets.linalg import dominance_check, trace_m, trace_m_batch
from mhsets.predicate import (
    Quadratic,
    critical_h,
    distance_enlargement_check,
    evaluate_margins,
    mh_test,
    probe_search,
    restricted_max,
)
from mhsets.scenarios import bundled_dir, run_suite
from mhsets.shapes import Sphere
from mhsets.varifold import (
    Ball,
    blowup_set,
    counterexample_sequence,
    declared_density,
    density,
    disk_mesh,
    first_variation,
    linear_schedule,
    mass,
    plane_patch,
    sphere_mesh,
    tangent_angle_jump,
)

RESULTS = {}


def _record(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})"
    RESULTS[n] = line
    print(line)
    return ok


def _hausdorff(A, B):
    if len(A) == 0 or len(B) == 0:
        return math.inf
    return max(cKDTree(B).query(A)[0].max(), cKDTree(A).query(B)[0].max())


# ---------------------------------------------------------------- 1


def criterion_1():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_rel, worst_aff = 0.0, 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 7))
        A = rng.normal(size=(n, n)) * 10 ** rng.uniform(-3, 3)
        S = 0.5 * (A + A.T)
        m = int(rng.integers(1, n + 1))
        brute = float(np.sum(np.sort(np.linalg.eigvalsh(S))[:m]))
        got = trace_m(S, m)
        scale = max(abs(brute), np.linalg.norm(S, 2))
        worst_rel = max(worst_rel, abs(got - brute) / scale)
        t = float(rng.normal())
        shifted = trace_m(S + t * np.eye(n), m)
        worst_aff = max(worst_aff, abs(shifted - got - m * t) / max(1.0, abs(got), abs(m * t), np.linalg.norm(S, 2)))
    stack = 0.5 * (lambda B: B + np.swapaxes(B, 1, 2))(rng.normal(size=(200, 6, 6)))
    batch = trace_m_batch(stack, 3)
    brute = np.sort(np.linalg.eigvalsh(stack), axis=1)[:, :3].sum(axis=1)
    worst_rel = max(worst_rel, float(np.max(np.abs(batch - brute) / np.maximum(1, np.abs(brute)))))
    dt = time.perf_counter() - t0
    ok = worst_rel <= 1e-9 and worst_aff <= 1e-12 and dt < 5
    return ok, f"max rel err {worst_rel:.2e}, affine err {worst_aff:.2e}, {dt:.2f} s"


# ---------------------------------------------------------------- 2


def criterion_2():
    Z = half_plane_set()
    f = Quadratic(np.zeros(3), np.array([1.0, 0, 0]), np.diag([2.0, 0, 2.0]))
    margin, tm, gn = evaluate_margins(f, np.zeros((1, 3)), 2, 0.0)
    cert = mh_test(Z, f, 2, 0.0)
    idx, _ = restricted_max(f, Z)
    origin_is_max = any(np.array_equal(Z.points[i], np.zeros(3)) for i in idx)
    ok = tm[0] == 2.0 and gn[0] == 1.0 and cert.violated and cert.trace_m == 2.0 and cert.grad_norm == 1.0
    ok = ok and origin_is_max and margin[0] == 2.0
    return ok, f"Trace_2 = {float(tm[0])!r}, |Df| = {float(gn[0])!r}, violated = {cert.violated}, margin {float(cert.margin)!r}"


# ---------------------------------------------------------------- 3


def criterion_3():
    r, dx, alpha = 1.0, 1.0 / 64, 10.0
    # A box around the north pole at spacing 1/64; the field is the grid
    # signed distance, not the analytic one.
    n = 41
    half = (n - 1) * dx / 2
    grid = Grid((-half, -half, r - half), (half, half, r + half), (n, n, n))
    u = signed_distance(Sphere((0, 0, 0), r), grid)
    f = exp_barrier(u, alpha)
    pts = sphere_set(r).points
    pts = pts[(grid.margin(pts) >= 6)][:40]
    worst_eig, worst_ratio = 0.0, 0.0
    for p in pts:
        H = f.hessian(p)
        e = math.exp(alpha * float(u.value_at(p)))
        expect = np.sort([alpha * e / r, alpha * e / r, alpha**2 * e])
        worst_eig = max(worst_eig, float(np.max(np.abs(H.eigenvalues - expect) / expect)))
        ratio = trace_m(H, 2) / np.linalg.norm(f.gradient(p))
        worst_ratio = max(worst_ratio, abs(ratio - 2 / r) / (2 / r))
    ok = len(pts) >= 10 and worst_eig <= 0.05 and worst_ratio <= 0.02
    return ok, f"{len(pts)} points, eigenvalue rel err {worst_eig:.2e}, Trace_2/|Df| rel err {worst_ratio:.2e}"


# ---------------------------------------------------------------- 4


def criterion_4():
    err = 0.0
    for K, k0s, exact in ((0.0, (0.0, 0.5, -1.0, 1.5), lambda k, s: k / (1 - s * k)),
                          (1.0, (0.0, 0.5, -1.0, 1.5), lambda k, s: math.tan(s + math.atan(k)))):
        for k0 in k0s:
            s = 0.3
            res = riccati_propagate(np.diag([k0, k0]), SpaceFormAmbient(3, K), s)
            err = max(err, float(np.max(np.abs(res.form.eigenvalues - exact(k0, s)))),
                      float(abs(riccati_closed_form(np.array([k0]), K, s)[0] - exact(k0, s))))
    rng = np.random.default_rng(7)
    worst = math.inf
    dominance = True
    amb = SpaceFormAmbient(4, 1.0)
    for _ in range(200):
        A = rng.uniform(-0.5, 0.5, (3, 3))
        Bp = 0.5 * (A + A.T)
        P = rng.uniform(-0.3, 0.3, (3, 3))
        Bq0 = Bp + P @ P.T
        d = float(rng.uniform(0.05, 0.4))
        m = int(rng.integers(1, 4))
        Bd = riccati_propagate(Bp, amb, d, record=False).form
        comp = comparison_check(Bp, Bd, amb, d, m)
        worst = min(worst, *(sl for _, sl in comp.as_tuple()))
        Bqd = riccati_propagate(Bq0, amb, d, record=False).form
        dominance &= dominance_check(Bd, Bqd).holds
    ok = err <= 1e-8 and worst >= -1e-12 and dominance
    return ok, f"closed-form err {err:.2e}, min comparison slack {worst:.3e}, ordering kept {dominance}"


# ---------------------------------------------------------------- 5


def criterion_5():
    r = 0.8
    lo, hi = critical_h(sphere_set(r), 2, 0.5 / r, 4 / r, budget=20)
    mid = 0.5 * (lo + hi)
    single = [mh_test(singleton_set(), Quadratic(np.zeros(3), np.zeros(3), 2 * np.eye(3)), m, 0.0).margin
              for m in (1, 2, 3)]
    seg = probe_search(segment_set(), 1, 0.0, budget=50)
    at_end = seg.violated and min(np.linalg.norm(seg.point - [-1, 0]), np.linalg.norm(seg.point - [1, 0])) == 0
    ok = abs(mid - 2 / r) <= 0.1 * 2 / r and lo <= 2 / r * 1.1 and single == [2.0, 4.0, 6.0] and at_end
    return ok, f"bracket [{lo:.4f}, {hi:.4f}] vs 2/r = {2 / r:.4f}; singleton margins {single}; endpoint {at_end}"


# ---------------------------------------------------------------- 6


def criterion_6():
    slab = distance_enlargement_check(plane_set(), 0.2, 2, 0.0, Grid.cube(3, 1.0, 41), budget=100)
    s = 0.3
    ball = distance_enlargement_check(singleton_set(), s, 2, 0.0, Grid.cube(3, 0.6, 49), budget=30)
    ok = (not slab.violated and slab.result.worst_margin <= tol.TOL_MARGIN
          and ball.violated and ball.result.margin >= 0.9 * 2 * 2 / s)
    return ok, (f"slab worst margin {slab.result.worst_margin:.2e}; "
                f"ball margin {ball.result.margin:.3f} vs 0.9*2m/s = {0.9 * 4 / s:.3f}")


# ---------------------------------------------------------------- 7


def criterion_7():
    disk = disk_mesh(1.0, rings=32)
    half = mass(disk, Ball((0, 0, 0), 0.5))
    e_disk = abs(half - math.pi / 4) / (math.pi / 4)

    r, m = 0.5, 2
    S = sphere_mesh(r, level=4)

    def val(P):
        g = 1 + P[:, 2] ** 2
        return g[:, None] * P / np.linalg.norm(P, axis=1, keepdims=True)

    def jac(P):
        rr = np.linalg.norm(P, axis=1)
        u = P / rr[:, None]
        g = 1 + P[:, 2] ** 2
        dg = np.zeros_like(P)
        dg[:, 2] = 2 * P[:, 2]
        return u[:, :, None] * dg[:, None, :] + g[:, None, None] * (np.eye(3) - u[:, :, None] * u[:, None, :]) / rr[:, None, None]

    # X = g nu with g = 1 + x3^2; the mean curvature vector is -(m/r) nu, so
    # the first variation equals (m/r) * int g dA = (m/r) * area * (1 + r^2/3).
    area = 4 * math.pi * r**2
    fv = first_variation(S, (val, jac), levels=2)
    expect = (m / r) * area * (1 + r**2 / 3)
    e_fv = abs(fv - expect) / expect

    e_dens = 0.0
    jumps_ok = True
    for n in (1, 2, 3, 5, 8):
        V = counterexample_sequence(n)
        for b in V.meta["branch_points"]:
            jumps_ok &= tangent_angle_jump(V, b) > 0.1 * math.atan(2.0 / n)
        if n == 3:
            for x in (0.0, 0.5, -0.5, 1.5, -1.5, 4.0):
                est = density(V, (x, 0.0), [0.2, 0.1])
                e_dens = max(e_dens, float(np.max(np.abs(est - declared_density(x)) / declared_density(x))))
    ok = e_disk <= 0.01 and e_fv <= 0.02 and e_dens <= 0.02 and jumps_ok
    return ok, (f"disk rel err {e_disk:.2e}; first variation rel err {e_fv:.2e}; "
                f"density rel err {e_dens:.2e}; corner at both branch points for n in 1..8: {jumps_ok}")


# ---------------------------------------------------------------- 8


def criterion_8():
    grid = Grid.cube(3, 0.5, 21)
    nodes = grid.nodes()
    r = grid.dx
    sched = linear_schedule(2, r)
    planes = [plane_patch(1.0, 40, theta=float(i)) for i in range(1, 7)]
    Zp = blowup_set(planes, r, sched, nodes).closed_set.points
    d_plane = _hausdorff(Zp, nodes[np.abs(nodes[:, 2]) < 1e-12])
    bounded = blowup_set([disk_mesh(0.4) for _ in range(6)], r, sched, nodes).closed_set
    halves = [plane_patch(1.0, 40, theta_fn=lambda c, i=i: np.where(c[:, 0] <= 0, float(i), 1.0))
              for i in range(1, 7)]
    Zh = blowup_set(halves, r, sched, nodes).closed_set.points
    d_half = _hausdorff(Zh, nodes[(np.abs(nodes[:, 2]) < 1e-12) & (nodes[:, 0] <= 1e-12)])
    ok = d_plane <= grid.dx and len(bounded) == 0 and d_half <= grid.dx
    return ok, (f"plane Hausdorff {d_plane:.3f}, bounded family marks {len(bounded)}, "
                f"half-plane Hausdorff {d_half:.3f} (cell {grid.dx:.3f})")


# ---------------------------------------------------------------- 9


def _track(rho0, h, grid):
    run = evolve(initial_state(Sphere((0, 0), rho0), grid, h), 2000, record_every=100)
    t = np.array([s.t for s in run.states])
    rho = np.array([region_radius(s.phi) for s in run.states])
    ode = solve_ivp(lambda _, y: -(1 / y - h), (0, t[-1]), [rho0], t_eval=t, rtol=1e-10, atol=1e-12).y[0]
    keep = (rho >= 10 * grid.dx) & (np.abs(ode - 1 / h if h else ode) >= 3 * grid.dx)
    return float(np.max(np.abs(rho[keep] - ode[keep]) / ode[keep]))


def criterion_9():
    g2 = Grid.cube(2, 1.0, 101)
    track = max(_track(0.5, 0.0, g2), _track(0.6, 1.0, g2), _track(0.35, 2.0, g2))

    eq2 = flow_to_limit(h_mean_convex_region(Sphere((0, 0), 0.5), g2, 2.0))
    g3 = Grid.cube(3, 1.0, 96)
    eq3 = flow_to_limit(h_mean_convex_region(Sphere((0, 0, 0), 0.5), g3, 4.0))
    e2 = abs(eq2.radius - 0.5)
    e3 = abs(eq3.radius - 0.5)
    radius_ok = e2 <= max(0.02 * 0.5, 2 * g2.dx) and e3 <= max(0.02 * 0.5, 2 * g3.dx)

    avoid = []
    circle = evolve(initial_state(Sphere((0, 0), 0.5), g2), 600, record_every=100)
    for x in (0.8, 0.5 + 2 * g2.dx):
        avoid.append(avoidance_monitor(circle, segment_set((x, -1.0), (x, 1.0), 0.005)).passed)
    g3s = Grid.cube(3, 1.0, 41)
    ball = evolve(initial_state(Sphere((0, 0, 0), 0.5), g3s), 200, record_every=50)
    avoid.append(avoidance_monitor(ball, plane_set(offset=0.7, resolution=0.05)).passed)

    ext = flow_to_limit(h_mean_convex_region(Sphere((0, 0), 0.4), g2, 0.0))
    nested = all(r.nested for r in (eq2, eq3, ext))
    ok = track <= 0.02 and radius_ok and all(avoid) and nested
    return ok, (f"ODE tracking rel err {track:.2e}; K_inf radius err {e2:.4f} (2D), {e3:.4f} (3D, 96^3); "
                f"avoidance {avoid}; nesting rates "
                f"{[round(r.nesting_max_rate / r.nesting_tolerance, 3) for r in (eq2, eq3, ext)]} of tolerance")


# ---------------------------------------------------------------- 10


def criterion_10():
    first = run_suite(bundled_dir(), seed=0)
    second = run_suite(bundled_dir(), seed=0)
    a = [dumps(o.report) for o in first[1]]
    b = [dumps(o.report) for o in second[1]]
    ok = a == b and dumps(first[0]) == dumps(second[0]) and first[0]["counts"]["error"] == 0
    return ok, f"{len(a)} verdict JSONs byte-identical: {a == b}"


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 11)}


def _evaluate(n):
    try:
        ok, detail = CRITERIA[n]()
    except Exception as exc:  # an error is a failed criterion, still reported
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    return _record(n, ok, detail)


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n):
    assert _evaluate(n), RESULTS[n]


if __name__ == "__main__":
    for n in sorted(CRITERIA):
        _evaluate(n)
