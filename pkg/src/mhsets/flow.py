"""Forced mean-curvature flow of a codimension-one interface by level sets.

The region is ``K(t) = {phi <= 0}`` and the interface moves with normal
velocity ``H - h`` (inward where the mean curvature exceeds ``h``):

    phi_t = (kappa - h) |grad phi|,    kappa = div(grad phi / |grad phi|).

Explicit Euler steps under a parabolic CFL bound, periodic
reinitialisation by fast sweeping, an avoidance monitor against a fixed
closed set and a driver that runs the flow to a stationary limit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from . import tolerances as tol
from .errors import FlowExtinct, InvalidInput, InvalidSetup, InvalidStep, NestingFault
from .fields import Grid, ScalarField, gradient_array, hessian_array, interface_nodes, signed_distance, zero_crossings
from .shapes import Shape

OMEGA_N = {1: 2.0, 2: math.pi, 3: 4.0 * math.pi / 3.0, 4: math.pi**2 / 2.0}


@dataclass(frozen=True, eq=False)
class FlowState:
    phi: ScalarField
    t: float = 0.0
    h: float = 0.0
    since_reinit: int = 0

    @property
    def grid(self) -> Grid:
        return self.phi.grid

    @property
    def values(self):
        return self.phi.values

    def with_values(self, v, dt=0.0, reset=False):
        return FlowState(ScalarField(self.grid, v, self.phi.policy), self.t + dt, self.h,
                         0 if reset else self.since_reinit + 1)


def initial_state(region, grid: Grid, h=0.0) -> FlowState:
    """Signed distance of a shape (or any ``signed_distance`` input) as a flow state."""
    if h < 0:
        raise InvalidInput("forcing h must be nonnegative")
    return FlowState(signed_distance(region, grid), 0.0, float(h), 0)


def max_stable_dt(grid: Grid, h):
    dx = float(min(grid.spacing))
    return dx * dx / (2 * grid.dim * (1 + h * dx))


def default_dt(grid: Grid, h):
    return tol.CFL_FRACTION * max_stable_dt(grid, h) * (1 + h * float(min(grid.spacing)))


def level_set_curvature(values, spacing):
    """``div(grad phi / |grad phi|)`` and ``|grad phi|`` by central differences."""
    g = gradient_array(values, spacing)
    H = hessian_array(values, spacing)
    gn2 = np.sum(g * g, axis=-1)
    gn = np.maximum(np.sqrt(gn2), tol.GRAD_FLOOR)
    tr = np.trace(H, axis1=-2, axis2=-1)
    gHg = np.einsum("...i,...ij,...j->...", g, H, g)
    kappa = (gn2 * tr - gHg) / gn**3
    return kappa, gn


def step(state: FlowState, dt=None) -> FlowState:
    """One explicit step; curvature clamped to ``+-1/dx``."""
    grid = state.grid
    limit = max_stable_dt(grid, state.h)
    if dt is None:
        dt = min(default_dt(grid, state.h), limit)
    if not 0 < dt <= limit * (1 + 1e-12):
        raise InvalidStep(f"dt = {dt:.3g} outside (0, {limit:.3g}]")
    kappa, gn = level_set_curvature(state.values, grid.spacing)
    cap = 1.0 / float(min(grid.spacing))
    kappa = np.clip(kappa, -cap, cap)
    return state.with_values(state.values + dt * (kappa - state.h) * gn, dt)


def reinitialize(state: FlowState) -> FlowState:
    """Replace ``phi`` by the signed distance to its zero set."""
    v = state.values
    if not interface_nodes(v).any():
        raise FlowExtinct(state.t)
    d = signed_distance(state.phi, state.grid)
    return replace(state, phi=d, since_reinit=0)


# ------------------------------------------------------------- measures


def _heaviside(phi, eps):
    x = np.clip(phi / eps, -1.0, 1.0)
    return 0.5 * (1 + x + np.sin(np.pi * x) / np.pi)


def enclosed_volume(phi: ScalarField):
    """Volume of ``{phi <= 0}`` with a smoothed Heaviside (width 1.5 dx)."""
    grid = phi.grid
    return float(np.sum(_heaviside(-phi.values, 1.5 * grid.dx)) * np.prod(grid.spacing))


def interface_measure(phi: ScalarField):
    """Length / area of ``{phi = 0}`` as ``int delta(phi) |grad phi|``."""
    grid = phi.grid
    eps = 1.5 * grid.dx
    x = phi.values / eps
    delta = np.where(np.abs(x) < 1, 0.5 * (1 + np.cos(np.pi * x)) / eps, 0.0)
    gn = np.linalg.norm(gradient_array(phi.values, grid.spacing), axis=-1)
    return float(np.sum(delta * gn) * np.prod(grid.spacing))


def region_radius(phi: ScalarField):
    """Radius of the ball with the same volume as ``{phi <= 0}``."""
    n = phi.grid.dim
    return (enclosed_volume(phi) / OMEGA_N[n]) ** (1.0 / n)


def interface_points(phi: ScalarField):
    return zero_crossings(phi)


def interface_displacement(a: ScalarField, b: ScalarField):
    """Symmetric estimate of the Hausdorff distance between two zero sets,
    reading each interface's points in the other (distance-like) field."""
    pa, pb = zero_crossings(a), zero_crossings(b)
    if not len(pa) or not len(pb):
        return math.inf
    return float(max(np.max(np.abs(b.value_at(pa))), np.max(np.abs(a.value_at(pb)))))


# ------------------------------------------------------------- runs


@dataclass
class FlowRun:
    states: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    extinct_at: float | None = None

    def to_csv(self):
        head = "t,interface_measure,min_distance_to_Z,max_abs_kappa"
        lines = [head] + [",".join("" if v is None else f"{v:.17g}" for v in r) for r in self.rows]
        return "\n".join(lines) + "\n"


def _record(run, state, Zdist=None):
    kappa, _ = level_set_curvature(state.values, state.grid.spacing)
    band = np.abs(state.values) <= 2 * state.grid.dx
    kmax = float(np.max(np.abs(kappa[band]))) if band.any() else 0.0
    d = None
    if Zdist is not None:
        pts = zero_crossings(state.phi)
        d = float(np.min(Zdist(pts))) if len(pts) else math.inf
    run.states.append(state)
    run.rows.append((state.t, interface_measure(state.phi), d, kmax))


def _zdist(Z):
    if Z is None:
        return None
    if getattr(Z, "exact_distance", None) is not None:
        return Z.exact_distance
    tree = cKDTree(Z.points)
    return lambda P: tree.query(P)[0]


def evolve(state: FlowState, n_steps, dt=None, record_every=10, reinit_every=tol.REINIT_EVERY, Z=None,
           stop_on_extinction=True) -> FlowRun:
    """Advance ``n_steps``; keep every ``record_every``-th state."""
    run = FlowRun()
    zd = _zdist(Z)
    _record(run, state, zd)
    for k in range(1, n_steps + 1):
        state = step(state, dt)
        if not (state.values <= 0).any():
            run.extinct_at = state.t
            if stop_on_extinction:
                break
            raise FlowExtinct(state.t)
        if reinit_every and state.since_reinit >= reinit_every:
            state = reinitialize(state)
        if k % record_every == 0 or k == n_steps:
            _record(run, state, zd)
    return run


# ------------------------------------------------------------- avoidance


@dataclass(frozen=True)
class AvoidanceReport:
    times: np.ndarray
    distances: np.ndarray
    d0: float
    slack: float

    @property
    def passed(self):
        return bool(np.all(self.distances >= self.d0 - self.slack))

    def to_dict(self):
        return {"d0": self.d0, "min_distance": float(np.min(self.distances)), "slack": self.slack,
                "verdict": "pass" if self.passed else "approach",
                "series": [[float(t), float(d)] for t, d in zip(self.times, self.distances)]}


def avoidance_monitor(run, Z) -> AvoidanceReport:
    """Minimum distance from each recorded interface to ``Z``."""
    states = run.states if isinstance(run, FlowRun) else list(run)
    if not states:
        raise InvalidSetup("empty flow history")
    zd = _zdist(Z)
    dx = states[0].grid.dx
    ts, ds = [], []
    for s in states:
        pts = zero_crossings(s.phi)
        ts.append(s.t)
        ds.append(float(np.min(zd(pts))) if len(pts) else math.inf)
    d0 = ds[0]
    inside0 = (states[0].phi.value_at(Z.points) <= 0).any() and (states[0].phi.value_at(Z.points) > 0).any()
    if d0 < 2 * dx or inside0:
        raise InvalidSetup(f"initial interface within {d0:.3g} of Z (need >= 2 cells = {2 * dx:.3g})")
    return AvoidanceReport(np.array(ts), np.array(ds), d0, dx)


# ------------------------------------------------------------- h-mean-convex regions


@dataclass(frozen=True, eq=False)
class HMeanConvexRegion:
    u: ScalarField
    h: float
    samples: np.ndarray = field(repr=False)
    excess: np.ndarray = field(repr=False)
    tolerance: float
    shape: object = None

    @property
    def verified(self):
        return bool(np.min(self.excess) >= -self.tolerance)

    def to_dict(self):
        return {"h": self.h, "samples": int(len(self.samples)), "min_excess": float(np.min(self.excess)),
                "tolerance": self.tolerance, "verified": self.verified}


def h_mean_convex_region(region, grid: Grid, h) -> HMeanConvexRegion:
    """Signed distance of ``region`` plus a check of ``H >= h`` on its boundary.

    ``H`` is the sum of principal curvatures for the inward normal (a ball
    of radius R has ``H = (n - 1) / R``); exact for :class:`Shape` inputs,
    from the grid field otherwise.
    """
    from .curvature import tangential_forms

    u = signed_distance(region, grid)
    P = zero_crossings(u)
    if not len(P):
        raise InvalidSetup("region has no boundary inside the grid")
    if isinstance(region, Shape):
        g, Hs = region.gradient(P), region.hessian(P)
    else:
        m = grid.margin(P) >= 2
        P = P[m]
        g, Hs = u.gradient_at(P), u.hessian_at(P)
    B, _, _, _ = tangential_forms(g, Hs)
    Hm = np.trace(B, axis1=1, axis2=2)
    tol_ = tol.BARRIER_REL_TOL * max(abs(h), float(np.max(np.abs(Hm))), 1e-12)
    return HMeanConvexRegion(u, float(h), P, Hm - h, tol_, region if isinstance(region, Shape) else None)


# ------------------------------------------------------------- limit


@dataclass(frozen=True, eq=False)
class LimitResult:
    region: ScalarField | None
    surface: np.ndarray = field(repr=False)
    extinct: bool
    t: float
    steps: int
    converged: bool
    radius: float
    nesting_max_rate: float
    nesting_tolerance: float
    z_contained: bool | None
    z_max_phi: float | None
    constrained: bool
    curvature_residual: float | None
    run: FlowRun = field(repr=False, default=None)

    @property
    def nested(self):
        return self.nesting_max_rate <= self.nesting_tolerance

    def to_dict(self):
        return {"extinct": self.extinct, "t": self.t, "steps": self.steps, "converged": self.converged,
                "radius": self.radius, "nesting_max_rate": self.nesting_max_rate,
                "nesting_tolerance": self.nesting_tolerance, "nested": self.nested,
                "z_contained": self.z_contained, "z_max_phi": self.z_max_phi, "constrained": self.constrained,
                "curvature_residual": self.curvature_residual, "surface_points": int(len(self.surface))}


def flow_to_limit(N0: HMeanConvexRegion, h=None, Z=None, stop_cells=tol.LIMIT_DISPLACEMENT_CELLS,
                  window=tol.LIMIT_WINDOW, max_steps=200_000, dt=None, constrained=False,
                  record_every=50) -> LimitResult:
    """Run the forced flow from ``N0`` until the interface stops or vanishes.

    Stops when the interface moves less than ``stop_cells * dx`` over
    ``window`` steps.  Nesting is monitored twice: every ``window`` steps
    the outward speed of the interface (the old field read at the new
    zero set) is folded into ``nesting_max_rate``, and after every step a
    node that was more than one cell outside and later falls inside raises
    :class:`NestingFault`.  With
    ``constrained=True`` the region is kept from releasing ``Z``
    (``phi <= dist(., Z) - 2 dx``); such runs are labelled in the result.
    """
    h = N0.h if h is None else float(h)
    if not N0.verified:
        raise InvalidSetup(f"N0 is not {h:g}-mean-convex (min excess {np.min(N0.excess):.3g})")
    if h > N0.h + 1e-12:
        raise InvalidSetup("flow forcing exceeds the verified h")
    grid = N0.u.grid
    dx = grid.dx
    zd = _zdist(Z)
    clip = None
    if Z is not None:
        # One cell of slack admits the contact configuration Z = boundary of N0.
        if np.any(N0.u.value_at(Z.points) > dx):
            raise InvalidSetup("Z is not inside N0")
        if constrained:
            # Two-cell collar so Z stays strictly inside a resolved region.
            clip = zd(grid.nodes()).reshape(grid.shape) - 2 * dx
    # Speed scale for the nesting tolerance: curvature plus forcing on the initial boundary.
    speed = tol.NESTING_RATE * (h + float(np.max(N0.excess + N0.h)))
    state = FlowState(N0.u, 0.0, h, 0)
    run = FlowRun()
    _record(run, state, zd)
    far_out = state.values > dx
    checkpoint = state.phi
    rate = 0.0
    converged = False
    extinct = False
    k = 0
    dt = min(default_dt(grid, h), max_stable_dt(grid, h)) if dt is None else dt
    while k < max_steps:
        old = state.values
        state = step(state, dt)
        k += 1
        v = state.values
        if clip is not None:
            v = np.minimum(v, clip)
            state = FlowState(ScalarField(grid, v), state.t, h, state.since_reinit)
        if not (v < -tol.EXTINCTION_DEPTH_CELLS * dx * (1 + 1e-9)).any():
            # Inradius at most one cell: the region is below grid resolution.
            extinct = True
            break
        if np.any(far_out & (v < 0)):
            raise NestingFault(f"region re-expanded by more than one cell at t = {state.t:.4g}")
        if state.since_reinit >= tol.REINIT_EVERY:
            try:
                state = reinitialize(state)
            except FlowExtinct:
                extinct = True
                break
        far_out |= state.values > dx
        if k % record_every == 0:
            _record(run, state, zd)
        if k % window == 0:
            pts = zero_crossings(state.phi)
            if len(pts):
                # Outward motion of the interface since the checkpoint.
                grow = float(np.max(checkpoint.value_at(pts)))
                rate = max(rate, grow / (window * dt))
            if interface_displacement(checkpoint, state.phi) < stop_cells * dx:
                converged = True
                break
            checkpoint = state.phi
    if extinct:
        run.extinct_at = state.t
        return LimitResult(None, np.zeros((0, grid.dim)), True, state.t, k, False, 0.0, rate, speed,
                           False if Z is not None else None, None, constrained, None, run)
    final = reinitialize(state)
    _record(run, final, zd)
    surface = zero_crossings(final.phi)
    z_in = zmax = None
    if Z is not None:
        zv = final.phi.value_at(Z.points)
        zmax = float(np.max(zv))
        z_in = bool(zmax <= dx)
    kappa, _ = level_set_curvature(final.values, grid.spacing)
    inner = surface[grid.margin(surface) >= 3]
    res = None
    if len(inner):
        from .fields import interpolate

        res = float(np.median(np.abs(interpolate(grid, kappa, inner) - h)))
    return LimitResult(final.phi, surface, False, final.t, k, converged, region_radius(final.phi), rate, speed,
                       z_in, zmax, constrained, res, run)
