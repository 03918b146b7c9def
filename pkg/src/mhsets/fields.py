"""Grid-sampled fields on boxes and their finite-difference derivatives.

Sign convention for signed distance: ``u < 0`` inside the region, so
``grad u`` points out of it and the inward unit normal is ``-grad u``.

Derivatives use second-order central differences (one-sided second-order
stencils on the outermost layer) and are evaluated off-node by
multilinear interpolation of the nodal derivative arrays.  Whole-grid
derivative arrays are cached on first bulk use; isolated queries on big
grids difference a small patch with the same stencils.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from . import tolerances as tol
from ._sweep import sweep
from .errors import InvalidInput, InvalidMetric, OutOfDomain
from .linalg import SymBilinearForm
from .shapes import Shape, TriangleMesh


@dataclass(frozen=True)
class Grid:
    lower: tuple
    upper: tuple
    shape: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        sh = tuple(int(v) for v in self.shape)
        if not (len(lo) == len(hi) == len(sh)) or not 1 <= len(sh) <= 4:
            raise InvalidInput("grid corners and shape must share a dimension between 1 and 4")
        if any(n < tol.MIN_NODES_PER_AXIS for n in sh):
            raise InvalidInput(f"need at least {tol.MIN_NODES_PER_AXIS} nodes per axis, got {sh}")
        if any(b <= a for a, b in zip(lo, hi)):
            raise InvalidInput("upper corner must exceed lower corner on every axis")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "shape", sh)

    @classmethod
    def from_spacing(cls, lower, upper, spacing):
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        n = np.rint((upper - lower) / spacing).astype(int) + 1
        return cls(tuple(lower), tuple(lower + (n - 1) * spacing), tuple(n))

    @classmethod
    def cube(cls, dim, half_width, nodes):
        return cls((-half_width,) * dim, (half_width,) * dim, (nodes,) * dim)

    @property
    def dim(self):
        return len(self.shape)

    @property
    def spacing(self):
        return tuple((b - a) / (n - 1) for a, b, n in zip(self.lower, self.upper, self.shape))

    @property
    def dx(self):
        return max(self.spacing)

    def axes(self):
        return [np.linspace(a, b, n) for a, b, n in zip(self.lower, self.upper, self.shape)]

    def mesh(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def nodes(self):
        """All node coordinates as a ``(N, n)`` array in C order."""
        return np.stack([m.ravel() for m in self.mesh()], axis=1)

    def scaled(self, lam):
        return Grid(tuple(lam * v for v in self.lower), tuple(lam * v for v in self.upper), self.shape)

    def margin(self, points):
        """Distance (in cells, per point) from each point to the box boundary."""
        p = np.atleast_2d(points)
        lo = (p - np.asarray(self.lower)) / np.asarray(self.spacing)
        hi = (np.asarray(self.upper) - p) / np.asarray(self.spacing)
        return np.minimum(lo, hi).min(axis=1)

    def header(self):
        return {"dims": list(self.shape), "spacing": list(self.spacing),
                "corners": [list(self.lower), list(self.upper)]}


def interpolate(grid: Grid, arr, points, extrapolate=True):
    """Multilinear interpolation of ``arr`` (shape ``grid.shape + tail``)."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    n = grid.dim
    h = np.asarray(grid.spacing)
    s = (p - np.asarray(grid.lower)) / h
    shape = np.asarray(grid.shape)
    if not extrapolate:
        s = np.clip(s, 0, shape - 1)
    i0 = np.clip(np.floor(s).astype(int), 0, shape - 2)
    t = s - i0
    tail = arr.shape[n:]
    out = np.zeros((len(p),) + tail)
    for corner in itertools.product((0, 1), repeat=n):
        c = np.asarray(corner)
        w = np.prod(np.where(c == 1, t, 1.0 - t), axis=1)
        idx = tuple((i0 + c).T)
        out += w.reshape((-1,) + (1,) * len(tail)) * arr[idx]
    return out


def _second_diff(v, axis, h):
    """Compact second difference along one axis, one-sided at the ends."""
    out = np.empty_like(v)
    sl = lambda a, b: tuple(slice(a, b) if k == axis else slice(None) for k in range(v.ndim))
    out[sl(1, -1)] = (v[sl(2, None)] - 2 * v[sl(1, -1)] + v[sl(None, -2)]) / h**2
    out[sl(0, 1)] = (2 * v[sl(0, 1)] - 5 * v[sl(1, 2)] + 4 * v[sl(2, 3)] - v[sl(3, 4)]) / h**2
    out[sl(-1, None)] = (2 * v[sl(-1, None)] - 5 * v[sl(-2, -1)] + 4 * v[sl(-3, -2)] - v[sl(-4, -3)]) / h**2
    return out


def gradient_array(values, spacing):
    n = values.ndim
    if n == 1:
        return np.gradient(values, spacing[0], edge_order=2)[..., None]
    return np.stack(np.gradient(values, *spacing, edge_order=2), axis=-1)


def hessian_array(values, spacing):
    n = values.ndim
    g = gradient_array(values, spacing)
    H = np.empty(values.shape + (n, n))
    for i in range(n):
        H[..., i, i] = _second_diff(values, i, spacing[i])
        for j in range(i + 1, n):
            a = np.gradient(g[..., i], spacing[j], axis=j, edge_order=2)
            b = np.gradient(g[..., j], spacing[i], axis=i, edge_order=2)
            H[..., i, j] = H[..., j, i] = 0.5 * (a + b)
    return H


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray = field(repr=False)
    policy: str = "extrapolate-linear"

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise InvalidInput(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidInput("field values must be finite")
        if self.policy not in ("extrapolate-linear", "clamp"):
            raise InvalidInput(f"unknown boundary policy {self.policy!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid, fn, policy="extrapolate-linear"):
        return cls(grid, np.asarray(fn(grid.nodes()), dtype=float).reshape(grid.shape), policy)

    @cached_property
    def gradient_field(self):
        return gradient_array(self.values, self.grid.spacing)

    @cached_property
    def hessian_field(self):
        return hessian_array(self.values, self.grid.spacing)

    def value_at(self, points):
        out = interpolate(self.grid, self.values, points, extrapolate=self.policy == "extrapolate-linear")
        return out if np.ndim(points) > 1 else float(out[0])

    def gradient_at(self, points):
        _check_margin(self.grid, points, 1)
        return self._derivative_at(points, "gradient_field", gradient_array)

    def hessian_at(self, points):
        _check_margin(self.grid, points, 2)
        return self._derivative_at(points, "hessian_field", hessian_array)

    def _derivative_at(self, points, cached, fn):
        # Few queries on a large grid: difference a small patch around each
        # point instead of the whole grid.  The patch reaches at least two
        # nodes past the interpolation cell (or the true box edge), so the
        # stencils used are the same ones.
        points = np.atleast_2d(points)
        if cached in self.__dict__ or len(points) > 32 or self.values.size <= 4096:
            return interpolate(self.grid, getattr(self, cached), points)
        out = []
        shape = np.asarray(self.grid.shape)
        h = np.asarray(self.grid.spacing)
        for p in points:
            i0 = np.clip(np.floor((p - np.asarray(self.grid.lower)) / h).astype(int), 0, shape - 2)
            w = tol.MIN_NODES_PER_AXIS
            lo = np.clip(i0 - 3, 0, shape - w)
            hi = lo + w
            sub = self.values[tuple(slice(a, b) for a, b in zip(lo, hi))]
            sub_grid = Grid(tuple(np.asarray(self.grid.lower) + lo * h),
                            tuple(np.asarray(self.grid.lower) + (hi - 1) * h), tuple(hi - lo))
            out.append(interpolate(sub_grid, fn(sub, self.grid.spacing), p[None])[0])
        return np.stack(out)

    def dilated(self, lam):
        return ScalarField(self.grid.scaled(lam), self.values, self.policy)

    def header(self):
        return dict(self.grid.header(), policy=self.policy)


def _check_margin(grid, points, cells):
    m = grid.margin(points)
    if np.any(m < cells - 1e-9):
        raise OutOfDomain(f"evaluation point lies within {cells} cell(s) of the box boundary")


@dataclass(frozen=True, eq=False)
class MetricField:
    grid: Grid
    g: np.ndarray = field(repr=False)

    def __post_init__(self):
        g = np.array(self.g, dtype=float)
        n = self.grid.dim
        if g.shape != self.grid.shape + (n, n):
            raise InvalidInput("metric array must have shape grid.shape + (n, n)")
        if not np.all(np.isfinite(g)):
            raise InvalidMetric("metric entries must be finite")
        if np.max(np.abs(g - np.swapaxes(g, -1, -2))) > tol.SYMMETRY * max(1.0, np.max(np.abs(g))):
            raise InvalidMetric("metric is not symmetric")
        g = 0.5 * (g + np.swapaxes(g, -1, -2))
        if np.min(np.linalg.eigvalsh(g)) < tol.METRIC_MIN_EIG:
            raise InvalidMetric("metric is not positive definite at every node")
        g.setflags(write=False)
        object.__setattr__(self, "g", g)

    @classmethod
    def flat(cls, grid):
        return cls(grid, np.broadcast_to(np.eye(grid.dim), grid.shape + (grid.dim, grid.dim)))

    @classmethod
    def from_function(cls, grid, fn):
        nodes = grid.nodes()
        g = np.asarray(fn(nodes), dtype=float).reshape(grid.shape + (grid.dim, grid.dim))
        return cls(grid, g)

    @cached_property
    def derivative_field(self):
        # dg[..., k, i, j] = d_k g_ij
        n = self.grid.dim
        out = np.empty(self.grid.shape + (n, n, n))
        for i in range(n):
            for j in range(n):
                out[..., :, i, j] = gradient_array(np.ascontiguousarray(self.g[..., i, j]), self.grid.spacing)
        return out

    def at(self, p):
        return interpolate(self.grid, self.g, p)[0]

    def christoffel(self, p):
        """Gamma[k, i, j] of the second kind at ``p``."""
        _check_margin(self.grid, p, 1)
        g = self.at(p)
        dg = interpolate(self.grid, self.derivative_field, p)[0]
        ginv = np.linalg.inv(g)
        # lower[l, i, j] = d_i g_jl + d_j g_il - d_l g_ij
        lower = np.einsum("ijl->lij", dg) + np.einsum("jil->lij", dg) - dg
        return 0.5 * np.einsum("kl,lij->kij", ginv, lower)


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: Grid
    vectors: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.vectors, dtype=float)
        if v.shape != self.grid.shape + (self.grid.dim,):
            raise InvalidInput("vector array must have shape grid.shape + (n,)")
        if not np.all(np.isfinite(v)):
            raise InvalidInput("vector field must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)

    @classmethod
    def from_function(cls, grid, fn):
        return cls(grid, np.asarray(fn(grid.nodes()), dtype=float).reshape(grid.shape + (grid.dim,)))

    @cached_property
    def jacobian_field(self):
        # J[..., a, b] = d_b X_a
        n = self.grid.dim
        return np.stack([gradient_array(np.ascontiguousarray(self.vectors[..., a]), self.grid.spacing)
                         for a in range(n)], axis=-2)

    def value_at(self, points):
        return interpolate(self.grid, self.vectors, points)

    def jacobian_at(self, points):
        return interpolate(self.grid, self.jacobian_field, points)

    def __call__(self, points):
        return self.value_at(points), self.jacobian_at(points)


def gradient(f: ScalarField, p):
    """Gradient of ``f`` at a single point (must be one cell inside the box)."""
    return f.gradient_at(np.asarray(p, dtype=float)[None])[0]


def hessian(f: ScalarField, p, g: MetricField | None = None) -> SymBilinearForm:
    """Covariant Hessian ``d2f - Gamma^k df_k`` at ``p`` (flat when ``g`` is None)."""
    p = np.asarray(p, dtype=float)
    H = f.hessian_at(p[None])[0]
    if g is not None:
        if g.grid.dim != f.grid.dim:
            raise InvalidInput("metric and field dimensions differ")
        gam = g.christoffel(p[None])
        H = H - np.einsum("kij,k->ij", gam, gradient(f, p))
    return SymBilinearForm(H)


# ------------------------------------------------------------ signed distance


def _sign_from_inside(inside):
    return np.where(inside, -1.0, 1.0)


def _finish(grid, absd, frozen, inside, exact=None):
    if grid.dim in (2, 3):
        d = np.where(frozen, absd, np.inf)
        d = sweep(d, frozen, grid.spacing)
    elif exact is not None:
        d = exact
    else:
        raise InvalidInput("region-indicator distance requires a 2D or 3D grid")
    return ScalarField(grid, _sign_from_inside(inside) * d)


def signed_distance(surface, grid: Grid, inside=None, band_cells=tol.EXACT_BAND_CELLS) -> ScalarField:
    """Signed distance (negative inside) to a surface on ``grid``.

    ``surface`` may be an analytic :class:`Shape`, a :class:`TriangleMesh`,
    a boolean node mask, a callable region indicator, or a
    :class:`ScalarField` level-set function whose zero set is the surface.
    Distances are exact (geometric) within ``band_cells`` cells of the
    surface and extended by fast sweeping elsewhere.
    """
    band = band_cells * grid.dx
    nodes = grid.nodes()
    if isinstance(surface, Shape):
        exact = np.abs(surface.distance(nodes)).reshape(grid.shape)
        ins = surface.inside(nodes).reshape(grid.shape)
        frozen = exact <= band
        if not frozen.any():
            return ScalarField(grid, _sign_from_inside(ins) * exact)
        return _finish(grid, exact, frozen, ins, exact)
    if isinstance(surface, TriangleMesh):
        if len(surface.faces) == 0:
            raise InvalidInput("empty surface mesh")
        verts = surface.vertices
        edge = np.max(np.linalg.norm(verts[surface.faces] - verts[np.roll(surface.faces, 1, axis=1)], axis=-1))
        near, _ = cKDTree(verts).query(nodes, distance_upper_bound=band + edge)
        cand = np.isfinite(near)
        absd = np.full(len(nodes), np.inf)
        absd[cand] = surface.unsigned_distance(nodes[cand])
        ins = (inside(nodes) if callable(inside) else surface.inside(nodes)).reshape(grid.shape)
        absd = absd.reshape(grid.shape)
        frozen = absd <= band
        if not frozen.any():
            raise InvalidInput("surface does not come within the exact band of any node")
        return _finish(grid, absd, frozen, ins)
    if isinstance(surface, ScalarField):
        return _from_level_set(surface)
    if callable(surface):
        mask = np.asarray(surface(nodes), dtype=bool).reshape(grid.shape)
    else:
        mask = np.asarray(surface, dtype=bool)
    if mask.shape != grid.shape:
        raise InvalidInput("region mask shape does not match grid")
    pts = _mask_crossings(grid, mask)
    if len(pts) == 0:
        raise InvalidInput("region indicator has no boundary inside the box")
    absd, _ = cKDTree(pts).query(nodes, distance_upper_bound=band)
    absd = absd.reshape(grid.shape)
    frozen = np.isfinite(absd)
    return _finish(grid, absd, frozen, mask)


def _mask_crossings(grid, mask):
    pts = []
    axes = grid.axes()
    mesh = grid.mesh()
    for ax in range(grid.dim):
        a = [slice(None)] * grid.dim
        b = [slice(None)] * grid.dim
        a[ax] = slice(None, -1)
        b[ax] = slice(1, None)
        flip = mask[tuple(a)] != mask[tuple(b)]
        if flip.any():
            coords = [m[tuple(a)][flip] for m in mesh]
            coords[ax] = coords[ax] + 0.5 * grid.spacing[ax]
            pts.append(np.stack(coords, axis=1))
    del axes
    return np.concatenate(pts) if pts else np.zeros((0, grid.dim))


def zero_crossings(phi: ScalarField):
    """Points where ``phi`` changes sign along grid edges (linear interpolation)."""
    grid = phi.grid
    v = phi.values
    mesh = grid.mesh()
    pts = []
    for ax in range(grid.dim):
        a = [slice(None)] * grid.dim
        b = [slice(None)] * grid.dim
        a[ax] = slice(None, -1)
        b[ax] = slice(1, None)
        va, vb = v[tuple(a)], v[tuple(b)]
        flip = (va <= 0) != (vb <= 0)
        if flip.any():
            t = va[flip] / (va[flip] - vb[flip])
            coords = [m[tuple(a)][flip] for m in mesh]
            coords[ax] = coords[ax] + t * grid.spacing[ax]
            pts.append(np.stack(coords, axis=1))
    return np.concatenate(pts) if pts else np.zeros((0, grid.dim))


def interface_nodes(values):
    """Nodes with at least one axis neighbour of opposite sign (``<= 0`` counts as inside)."""
    ins = values <= 0
    out = np.zeros(values.shape, dtype=bool)
    for ax in range(values.ndim):
        a = [slice(None)] * values.ndim
        b = [slice(None)] * values.ndim
        a[ax] = slice(None, -1)
        b[ax] = slice(1, None)
        flip = ins[tuple(a)] != ins[tuple(b)]
        out[tuple(a)] |= flip
        out[tuple(b)] |= flip
    return out


def _from_level_set(phi: ScalarField, band_cells=tol.EXACT_BAND_CELLS) -> ScalarField:
    """Sub-cell redistancing: band nodes are projected onto the zero set of a
    cubic-spline interpolant of ``phi`` (closest-point iteration), the rest
    is filled by fast sweeping."""
    grid = phi.grid
    v = phi.values
    iface = interface_nodes(v)
    if not iface.any():
        raise InvalidInput("level-set function has an empty zero set")
    g = phi.gradient_field
    gnorm = np.maximum(np.linalg.norm(g, axis=-1), tol.GRAD_FLOOR)
    sel = iface | (np.abs(v) / gnorm <= band_cells * grid.dx)
    X = grid.nodes()[sel.ravel()]
    d, resid = _closest_point_distance(grid, v, g, X)
    # Reject projections that wandered off or did not land on the zero set
    # (near critical points of phi); interface nodes fall back to |phi|/|grad phi|.
    ok = np.isfinite(d) & (d <= (band_cells + 1) * grid.dx) & (resid <= 1e-3 * grid.dx)
    fallback = np.minimum(np.abs(v[sel]) / gnorm[sel], grid.dx)
    d = np.where(ok, d, np.where(iface[sel], fallback, np.inf))
    absd = np.full(grid.shape, np.inf)
    absd[sel] = d
    frozen = np.isfinite(absd)
    return _finish(grid, absd, frozen, v <= 0)


def _closest_point_distance(grid, v, g, X, iterations=8):
    lower = np.asarray(grid.lower)
    h = np.asarray(grid.spacing)
    cv = ndimage.spline_filter(v, order=3, mode="nearest")
    cg = [ndimage.spline_filter(g[..., k], order=3, mode="nearest") for k in range(grid.dim)]

    def at(coef, P):
        c = ((P - lower) / h).T
        return ndimage.map_coordinates(coef, c, order=3, mode="nearest", prefilter=False)

    def project(P):
        G = np.stack([at(c, P) for c in cg], axis=1)
        g2 = np.maximum(np.sum(G * G, axis=1), tol.GRAD_FLOOR**2)
        return P - (at(cv, P) / g2)[:, None] * G, G / np.sqrt(g2)[:, None]

    P = X.copy()
    for _ in range(iterations):
        P, nrm = project(P)
        q = X - P
        P = P + q - np.sum(q * nrm, axis=1)[:, None] * nrm
    P, _ = project(P)
    P, nrm = project(P)
    G = np.stack([at(c, P) for c in cg], axis=1)
    resid = np.abs(at(cv, P)) / np.maximum(np.linalg.norm(G, axis=1), tol.GRAD_FLOOR)
    with np.errstate(invalid="ignore"):
        return np.linalg.norm(X - P, axis=1), np.where(np.isfinite(resid), resid, np.inf)


# ------------------------------------------------------------ exp barrier


@dataclass(frozen=True, eq=False)
class ExpBarrier:
    """``f = exp(alpha * u)`` with derivatives composed from those of ``u``.

    ``u`` is a signed-distance :class:`ScalarField` or an analytic
    :class:`Shape`.  If ``band`` is given, derivative queries with
    ``|u(p)| > band`` raise :class:`OutOfDomain` (smoothness of ``u`` is
    only claimed inside the declared band).
    """

    u: object
    alpha: float
    band: float | None = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise InvalidInput("alpha must be positive")

    def _u(self, p):
        return self.u.distance(p) if isinstance(self.u, Shape) else self.u.value_at(p)

    def _du(self, p):
        p = np.asarray(p, dtype=float)
        if isinstance(self.u, Shape):
            return self.u.gradient(p), self.u.hessian(p)
        return gradient(self.u, p), self.u.hessian_at(p[None])[0]

    def _check(self, p):
        if self.band is not None and abs(float(self._u(p))) > self.band:
            raise OutOfDomain("point outside the declared smooth band of u")

    def value(self, points):
        return np.exp(self.alpha * np.asarray(self._u(points)))

    def gradient(self, p):
        self._check(p)
        du, _ = self._du(p)
        return self.alpha * np.exp(self.alpha * float(self._u(p))) * du

    def hessian(self, p) -> SymBilinearForm:
        self._check(p)
        du, d2u = self._du(p)
        a = self.alpha
        e = np.exp(a * float(self._u(p)))
        return SymBilinearForm(a * a * e * np.outer(du, du) + a * e * d2u)

    def field(self, grid):
        return ScalarField(grid, self.value(grid.nodes()).reshape(grid.shape))


def exp_barrier(u, alpha, band=None) -> ExpBarrier:
    return ExpBarrier(u, float(alpha), band)


def dilate(obj, lam):
    """Apply ``x -> lam * x`` to a point set, field, shape or test function."""
    if not lam > 0:
        raise InvalidInput("dilation factor must be positive")
    if lam == 1:
        return obj
    if hasattr(obj, "dilated"):
        return obj.dilated(lam)
    if isinstance(obj, Shape):
        return obj.scaled(lam)
    return lam * np.asarray(obj, dtype=float)
