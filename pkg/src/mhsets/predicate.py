"""The (m,h) maximum-principle predicate on discretised closed sets.

A closed set is a point sample with a resolution radius.  At every
discrete local maximum ``p`` of a test function ``f`` restricted to the
sample, the inequality

    Trace_m(D^2 f(p)) <= h |Df(p)|

is evaluated.  Search routines only ever *falsify*: a pass report is
calibration evidence (the worst margin seen), never a proof that the set
has the property, since the property quantifies over all C^2 functions.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from . import tolerances as tol
from .curvature import SpaceFormAmbient, comparison_check, riccati_propagate
from .errors import EmptySet, InvalidInput, OutOfDomain, SearchExhausted
from .fields import Grid, MetricField, ScalarField, interpolate, zero_crossings
from .linalg import SymBilinearForm, trace_m_batch
from .shapes import HalfSpace, Shape, Sphere


# ------------------------------------------------------------------ sets


@dataclass(frozen=True, eq=False)
class ClosedSet:
    """Point sample of a closed set.

    ``candidates`` marks points allowed to be reported as local maxima;
    points next to an artificial truncation window are sampled (they
    still act as neighbours) but never reported.  ``exact_distance`` is
    an optional callable giving the unsigned distance to the true set.
    """

    points: np.ndarray = field(repr=False)
    resolution: float
    candidates: np.ndarray | None = field(default=None, repr=False)
    bounded: bool = True
    name: str = "Z"
    exact_distance: object = field(default=None, repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[None, :] if pts.size else pts.reshape(0, 1)
        if not self.resolution > 0:
            raise InvalidInput("resolution radius must be positive")
        cand = np.ones(len(pts), dtype=bool) if self.candidates is None else np.asarray(self.candidates, bool)
        if cand.shape != (len(pts),):
            raise InvalidInput("candidate mask length differs from the number of points")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "candidates", cand)

    @classmethod
    def from_points(cls, points, resolution, window=None, **kw):
        """Sample; with ``window=(lower, upper)`` points within the
        neighbourhood radius of the window faces are not candidates."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        cand = None
        if window is not None:
            lo, hi = (np.asarray(w, dtype=float) for w in window)
            gap = np.minimum(pts - lo, hi - pts).min(axis=1)
            cand = gap > tol.NEIGHBORHOOD_FACTOR * resolution
            kw.setdefault("bounded", False)
        return cls(pts, float(resolution), cand, **kw)

    @classmethod
    def from_mask(cls, grid: Grid, mask, edge_cells=tol.NEIGHBORHOOD_FACTOR, **kw):
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != grid.shape:
            raise InvalidInput("mask does not match grid")
        pts = grid.nodes()[mask.ravel()]
        cand = grid.margin(pts) > edge_cells if len(pts) else np.zeros(0, bool)
        return cls(pts, grid.dx, cand, **kw)

    @property
    def dim(self):
        return self.points.shape[1]

    def __len__(self):
        return len(self.points)

    @cached_property
    def tree(self):
        return cKDTree(self.points)

    @cached_property
    def neighbours(self):
        """Symmetric neighbour lists as (src, dst, starts, has) sorted by src."""
        r = tol.NEIGHBORHOOD_FACTOR * self.resolution
        pairs = self.tree.query_pairs(r, output_type="ndarray")
        src = np.concatenate([pairs[:, 0], pairs[:, 1]]) if len(pairs) else np.zeros(0, int)
        dst = np.concatenate([pairs[:, 1], pairs[:, 0]]) if len(pairs) else np.zeros(0, int)
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        counts = np.bincount(src, minlength=len(self.points))
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        return src, dst, starts, counts > 0

    def distance_to(self, x):
        x = np.atleast_2d(x)
        if self.exact_distance is not None:
            return np.abs(np.asarray(self.exact_distance(x), dtype=float))
        return self.tree.query(x)[0]

    def dilated(self, lam):
        ed = None
        if self.exact_distance is not None:
            base = self.exact_distance
            ed = lambda x: lam * np.asarray(base(np.asarray(x) / lam))
        return ClosedSet(lam * self.points, lam * self.resolution, self.candidates, self.bounded,
                         self.name, ed)

    def describe(self):
        return {"name": self.name, "n_points": int(len(self.points)), "dim": int(self.dim),
                "resolution": float(self.resolution), "bounded": bool(self.bounded)}


# --------------------------------------------------------- test functions


class TestFunction:
    """C^2 test function with batched value/derivative evaluation."""

    __test__ = False  # not a pytest class

    def values(self, X):
        raise NotImplementedError

    def gradients(self, P):
        raise NotImplementedError

    def hessians(self, P):
        raise NotImplementedError

    def describe(self):
        raise NotImplementedError

    def gradient(self, p):
        return self.gradients(np.asarray(p, dtype=float)[None])[0]

    def hessian(self, p):
        return self.hessians(np.asarray(p, dtype=float)[None])[0]

    def translate(self, q):
        return Translated(self, np.asarray(q, dtype=float))

    def scaled(self, c):
        return Scaled(self, float(c))

    def __add__(self, other):
        return Sum(self, other)

    def offset(self, c):
        return Sum(self, Quadratic(np.zeros(self.dim), np.zeros(self.dim), np.zeros((self.dim, self.dim)), c))

    def dilated(self, lam):
        return Dilated(self, float(lam))


@dataclass(frozen=True, eq=False)
class Quadratic(TestFunction):
    """``c0 + b.(x-c) + (x-c)^T A (x-c) / 2 - tail |x-c|^4`` (evaluated exactly)."""

    center: np.ndarray
    linear: np.ndarray
    matrix: np.ndarray
    constant: float = 0.0
    tail: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        b = np.asarray(self.linear, dtype=float)
        A = np.asarray(self.matrix, dtype=float)
        if A.shape != (len(c), len(c)) or b.shape != c.shape:
            raise InvalidInput("inconsistent quadratic dimensions")
        if self.tail < 0:
            raise InvalidInput("tail weight must be nonnegative")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "linear", b)
        object.__setattr__(self, "matrix", 0.5 * (A + A.T))

    @property
    def dim(self):
        return len(self.center)

    def values(self, X):
        Y = np.atleast_2d(X) - self.center
        v = self.constant + Y @ self.linear + 0.5 * np.einsum("ki,ij,kj->k", Y, self.matrix, Y)
        if self.tail:
            v = v - self.tail * np.einsum("ki,ki->k", Y, Y) ** 2
        return v

    def gradients(self, P):
        Y = np.atleast_2d(P) - self.center
        g = self.linear + Y @ self.matrix
        if self.tail:
            g = g - 4 * self.tail * np.einsum("ki,ki->k", Y, Y)[:, None] * Y
        return g

    def hessians(self, P):
        P = np.atleast_2d(P)
        H = np.broadcast_to(self.matrix, (len(P),) + self.matrix.shape).copy()
        if self.tail:
            Y = P - self.center
            r2 = np.einsum("ki,ki->k", Y, Y)
            H -= self.tail * (8 * Y[:, :, None] * Y[:, None, :] + 4 * r2[:, None, None] * np.eye(self.dim))
        return H

    def translate(self, q):
        return Quadratic(self.center + np.asarray(q, float), self.linear, self.matrix, self.constant, self.tail)

    def offset(self, c):
        return Quadratic(self.center, self.linear, self.matrix, self.constant + c, self.tail)

    def scaled(self, c):
        return Quadratic(self.center, c * self.linear, c * self.matrix, c * self.constant, c * self.tail)

    def dilated(self, lam):
        return Quadratic(lam * self.center, self.linear / lam, self.matrix / lam**2, self.constant,
                         self.tail / lam**4)

    def describe(self):
        return {"kind": "quadratic", "center": self.center.tolist(), "linear": self.linear.tolist(),
                "matrix": self.matrix.tolist(), "constant": float(self.constant), "tail": float(self.tail)}


@dataclass(frozen=True, eq=False)
class ExpBarrierProbe(TestFunction):
    """``scale * exp(alpha * u)`` for a signed distance ``u`` (shape or field)."""

    u: object
    alpha: float
    scale: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise InvalidInput("alpha must be positive")

    @property
    def dim(self):
        return self.u.dim if isinstance(self.u, Shape) else self.u.grid.dim

    def _uvals(self, X):
        X = np.atleast_2d(X)
        return self.u.distance(X) if isinstance(self.u, Shape) else self.u.value_at(X)

    def _du(self, P):
        P = np.atleast_2d(P)
        if isinstance(self.u, Shape):
            return self.u.gradient(P), self.u.hessian(P)
        return self.u.gradient_at(P), self.u.hessian_at(P)

    def values(self, X):
        return self.scale * np.exp(self.alpha * self._uvals(X))

    def gradients(self, P):
        du, _ = self._du(P)
        e = self.values(P)
        return (self.alpha * e)[:, None] * du

    def hessians(self, P):
        du, d2u = self._du(P)
        e = self.values(P)[:, None, None]
        a = self.alpha
        return a * a * e * du[:, :, None] * du[:, None, :] + a * e * d2u

    def describe(self):
        u = self.u.describe() if isinstance(self.u, Shape) else {"field": self.u.header()}
        return {"kind": "exp-barrier", "u": u, "alpha": float(self.alpha), "scale": float(self.scale)}


@dataclass(frozen=True, eq=False)
class Gridded(TestFunction):
    field: ScalarField

    @property
    def dim(self):
        return self.field.grid.dim

    def values(self, X):
        return self.field.value_at(np.atleast_2d(X))

    def gradients(self, P):
        return self.field.gradient_at(np.atleast_2d(P))

    def hessians(self, P):
        return self.field.hessian_at(np.atleast_2d(P))

    def describe(self):
        return {"kind": "gridded", "field": self.field.header()}


@dataclass(frozen=True, eq=False)
class Translated(TestFunction):
    base: TestFunction
    shift: np.ndarray

    @property
    def dim(self):
        return self.base.dim

    def values(self, X):
        return self.base.values(np.atleast_2d(X) - self.shift)

    def gradients(self, P):
        return self.base.gradients(np.atleast_2d(P) - self.shift)

    def hessians(self, P):
        return self.base.hessians(np.atleast_2d(P) - self.shift)

    def describe(self):
        return {"kind": "translated", "shift": self.shift.tolist(), "base": self.base.describe()}


@dataclass(frozen=True, eq=False)
class Scaled(TestFunction):
    base: TestFunction
    factor: float

    @property
    def dim(self):
        return self.base.dim

    def values(self, X):
        return self.factor * self.base.values(X)

    def gradients(self, P):
        return self.factor * self.base.gradients(P)

    def hessians(self, P):
        return self.factor * self.base.hessians(P)

    def describe(self):
        return {"kind": "scaled", "factor": self.factor, "base": self.base.describe()}


@dataclass(frozen=True, eq=False)
class Sum(TestFunction):
    a: TestFunction
    b: TestFunction

    @property
    def dim(self):
        return self.a.dim

    def values(self, X):
        return self.a.values(X) + self.b.values(X)

    def gradients(self, P):
        return self.a.gradients(P) + self.b.gradients(P)

    def hessians(self, P):
        return self.a.hessians(P) + self.b.hessians(P)

    def describe(self):
        return {"kind": "sum", "terms": [self.a.describe(), self.b.describe()]}


@dataclass(frozen=True, eq=False)
class Dilated(TestFunction):
    """``f(x / lam)``."""

    base: TestFunction
    lam: float

    @property
    def dim(self):
        return self.base.dim

    def values(self, X):
        return self.base.values(np.atleast_2d(X) / self.lam)

    def gradients(self, P):
        return self.base.gradients(np.atleast_2d(P) / self.lam) / self.lam

    def hessians(self, P):
        return self.base.hessians(np.atleast_2d(P) / self.lam) / self.lam**2

    def describe(self):
        return {"kind": "dilated", "lam": self.lam, "base": self.base.describe()}


def concavify(f: TestFunction, p, eps):
    """``f - eps |x - p|^2``: turns a local max at ``p`` into a strict one."""
    n = f.dim
    return f + Quadratic(np.asarray(p, float), np.zeros(n), -2.0 * eps * np.eye(n))


# -------------------------------------------------------------- reports


@dataclass(frozen=True)
class ViolationCertificate:
    point: np.ndarray
    probe: dict
    margin: float
    grad_norm: float
    trace_m: float
    m: int
    h: float
    set_id: str = "Z"
    violated: bool = True

    def to_dict(self):
        return {"set_id": self.set_id, "m": int(self.m), "h": float(self.h), "probe": self.probe,
                "point": [float(v) for v in self.point], "margin": float(self.margin),
                "grad_norm": float(self.grad_norm), "trace_m": float(self.trace_m),
                "tolerances": {"tol_margin": tol.TOL_MARGIN, "tol_max": tol.TOL_MAX, "tol_grad": tol.TOL_GRAD}}


@dataclass(frozen=True)
class PassReport:
    """No violation found.  Falsifier-only: this is evidence, not proof."""

    worst_margin: float
    point: np.ndarray | None
    n_maxima: int
    n_probes: int = 1
    m: int = 0
    h: float = 0.0
    set_id: str = "Z"
    falsifier_only: bool = True
    violated: bool = False

    def to_dict(self):
        return {"set_id": self.set_id, "m": int(self.m), "h": float(self.h), "verdict": "pass",
                "falsifier_only": True, "worst_margin": float(self.worst_margin),
                "point": None if self.point is None else [float(v) for v in self.point],
                "n_maxima": int(self.n_maxima), "n_probes": int(self.n_probes),
                "tolerances": {"tol_margin": tol.TOL_MARGIN, "tol_max": tol.TOL_MAX, "tol_grad": tol.TOL_GRAD}}


# -------------------------------------------------------------- predicate


def _lex_first(points, idx):
    """Index among ``idx`` whose point is lexicographically smallest."""
    sub = points[idx]
    order = np.lexsort(sub.T[::-1])
    return idx[order[0]]


def restricted_max(f: TestFunction, Z: ClosedSet, tol_max=None, subset=None):
    """Indices of sample points that are local maxima of ``f`` on ``Z``.

    ``p`` qualifies when ``f(p) >= f(q) - tol_max`` for every sample ``q``
    within ``NEIGHBORHOOD_FACTOR * resolution``.  Returned in descending
    order of ``f`` (ties broken lexicographically on the point).
    """
    if len(Z) == 0:
        raise EmptySet("closed set is empty")
    vals = f.values(Z.points)
    if tol_max is None:
        tol_max = tol.TOL_MAX * max(float(np.max(np.abs(vals))), 1e-300)
    src, dst, starts, has = Z.neighbours
    nb = np.full(len(vals), -np.inf)
    if len(dst):
        red = np.maximum.reduceat(vals[dst], starts[has])
        nb[has] = red
    ok = (vals >= nb - tol_max) & Z.candidates
    if subset is not None:
        ok &= subset
    idx = np.nonzero(ok)[0]
    keys = [Z.points[idx, k] for k in range(Z.dim - 1, -1, -1)] + [-vals[idx]]
    return idx[np.lexsort(keys)], vals


def _metric_terms(f, P, H, D, g: MetricField | None):
    if g is None:
        return H, np.linalg.norm(D, axis=1)
    Hc = np.empty_like(H)
    gn = np.empty(len(P))
    for k, p in enumerate(P):
        gam = g.christoffel(p[None])
        Hk = H[k] - np.einsum("kij,k->ij", gam, D[k])
        G = g.at(p[None])
        L = np.linalg.cholesky(G)
        Li = np.linalg.inv(L)
        Hc[k] = Li @ Hk @ Li.T
        gn[k] = np.sqrt(D[k] @ np.linalg.solve(G, D[k]))
    return Hc, gn


def evaluate_margins(f: TestFunction, P, m, h, g=None):
    """(margin, trace_m, |Df|) at each point of ``P``."""
    P = np.atleast_2d(P)
    H = f.hessians(P)
    D = f.gradients(P)
    H, gn = _metric_terms(f, P, H, D, g)
    tm = trace_m_batch(H, m)
    return tm - h * gn, tm, gn


def _check_mh(m, h, n):
    if not (1 <= int(m) <= n) or int(m) != m:
        raise InvalidInput(f"m={m} must be an integer in [1, {n}]")
    if h < 0:
        raise InvalidInput("h must be nonnegative")


def mh_test(Z: ClosedSet, f: TestFunction, m, h, g=None, length_scale=1.0, tol_max=None):
    """Evaluate the (m,h) inequality at every restricted local max of ``f``.

    Returns the largest-margin :class:`ViolationCertificate` when some
    margin exceeds ``TOL_MARGIN / length_scale``, otherwise a
    :class:`PassReport` carrying the worst (largest) margin seen.
    """
    _check_mh(m, h, Z.dim)
    idx, _ = restricted_max(f, Z, tol_max)
    if len(idx) == 0:
        return PassReport(-np.inf, None, 0, m=m, h=h, set_id=Z.name)
    P = Z.points[idx]
    margin, tm, gn = evaluate_margins(f, P, m, h, g)
    best = np.max(margin)
    ties = np.nonzero(margin == best)[0]
    k = ties[np.lexsort(P[ties].T[::-1])[0]]
    if best > tol.TOL_MARGIN / length_scale:
        return ViolationCertificate(P[k].copy(), f.describe(), float(best), float(gn[k]), float(tm[k]),
                                    int(m), float(h), Z.name)
    return PassReport(float(best), P[k].copy(), len(idx), m=m, h=h, set_id=Z.name)


def perturb_to_nonvanishing_gradient(f: TestFunction, Z: ClosedSet, p, m, h, budget=64, seed=0,
                                     eps=None, length_scale=1.0):
    """Make the gradient at a violating maximum nonzero.

    The max at ``p`` is first made strict by subtracting ``eps |x-p|^2``,
    then ``f`` is translated, ``f'(x) = f(x - q)``, for small ``q`` (axis
    directions first, then seeded random ones, over a growing step
    schedule) until the local max ``p'`` of ``f'`` near ``p`` has a
    nonzero gradient and still violates the inequality.

    Returns ``(f', p', certificate)``; if ``|Df(p)|`` already exceeds
    ``TOL_GRAD`` the input is returned unchanged with its certificate.
    """
    p = np.asarray(p, dtype=float)
    _check_mh(m, h, Z.dim)
    margin, tm, gn = evaluate_margins(f, p[None], m, h)
    if gn[0] > tol.TOL_GRAD:
        cert = ViolationCertificate(p, f.describe(), float(margin[0]), float(gn[0]), float(tm[0]), m, h, Z.name)
        return f, p, cert
    scale = max(1.0, float(np.max(np.abs(f.hessian(p)))))
    eps = 1e-6 * scale if eps is None else eps
    f1 = concavify(f, p, eps)
    n = Z.dim
    rng = np.random.default_rng(seed)
    dirs = [s * e for e in np.eye(n) for s in (1.0, -1.0)]
    while len(dirs) < budget:
        d = rng.normal(size=n)
        dirs.append(d / np.linalg.norm(d))
    dirs = dirs[:budget]
    radius = 4 * tol.NEIGHBORHOOD_FACTOR * Z.resolution
    local = np.linalg.norm(Z.points - p, axis=1) <= radius
    for delta in Z.resolution * np.array([1e-2, 1e-1, 0.5, 1.0]):
        for d in dirs:
            q = delta * d
            if Z.tree.query(p + q)[0] <= 1e-12 * max(1.0, Z.resolution):
                continue  # the translate must move p off Z
            fq = f1.translate(q)
            idx, _ = restricted_max(fq, Z, subset=local)
            if len(idx) == 0:
                continue
            cand = Z.points[idx]
            k = int(np.argmin(np.linalg.norm(cand - p, axis=1)))
            pp = cand[k]
            mg, t2, g2 = evaluate_margins(fq, pp[None], m, h)
            if g2[0] > tol.TOL_GRAD and mg[0] > tol.TOL_MARGIN / length_scale:
                cert = ViolationCertificate(pp.copy(), fq.describe(), float(mg[0]), float(g2[0]), float(t2[0]),
                                            m, h, Z.name)
                return fq, pp.copy(), cert
    raise SearchExhausted("no violating translate with nonvanishing gradient within the search budget")


# ----------------------------------------------------------- probe search

FAMILIES = ("distance", "quadratic", "exp", "halfplane")


def _boundary_like(Z: ClosedSet, limit):
    """Candidate samples that look like boundary points of a manifold with
    boundary: the mean of their neighbours is displaced inward."""
    src, dst, starts, has = Z.neighbours
    out = []
    if not len(dst):
        return out
    P = Z.points
    counts = np.bincount(src, minlength=len(P))
    sums = np.zeros_like(P)
    np.add.at(sums, src, P[dst])
    mean = sums / np.maximum(counts, 1)[:, None]
    e = P - mean
    en = np.linalg.norm(e, axis=1)
    ok = has & Z.candidates & (en >= 0.1 * Z.resolution)
    idx = np.nonzero(ok)[0]
    if len(idx) == 0:
        return out
    order = idx[np.lexsort([P[idx, k] for k in range(Z.dim - 1, -1, -1)] + [-np.round(en[idx] / Z.resolution, 6)])]
    step = max(1, len(order) // max(1, limit))
    for i in order[::step][:limit]:
        nb = P[dst[starts[i]:starts[i] + counts[i]]]
        X = np.vstack([nb, P[i]]) - P[i]
        w, V = np.linalg.eigh(X.T @ X / len(X))
        tangent = V[:, w > 1e-2 * w.max()]
        normal = V[:, w <= 1e-2 * w.max()]
        e1 = tangent @ (tangent.T @ e[i])
        if np.linalg.norm(e1) < 0.1 * Z.resolution:
            continue
        out.append((i, e1 / np.linalg.norm(e1), normal))
    return out


def halfplane_probe(p, e1, normals):
    """``t + t^2 + sum_nu (x-p).nu^2`` with ``t = (x-p).e1`` (boundary probe)."""
    A = 2.0 * np.outer(e1, e1) + 2.0 * sum((np.outer(v, v) for v in np.asarray(normals).T), np.zeros((len(p), len(p))))
    return Quadratic(np.asarray(p, float), np.asarray(e1, float), A)


def generate_probes(Z: ClosedSet, budget, seed=0, families=FAMILIES):
    """Deterministic list of normalised probes (max value 0 on Z)."""
    rng = np.random.default_rng(seed)
    n = Z.dim
    P = Z.points
    cand = P[Z.candidates] if Z.candidates.any() else P
    centroid = P.mean(axis=0)
    R0 = max(float(np.max(np.linalg.norm(P - centroid, axis=1))), Z.resolution)
    probes = []

    def dist_probe(c):
        R = max(float(np.max(np.linalg.norm(P - c, axis=1))), Z.resolution)
        return Quadratic(c, np.zeros(n), (2.0 / R) * np.eye(n))

    def exp_ball(c):
        R = max(float(np.max(np.linalg.norm(P - c, axis=1))), Z.resolution)
        alpha = 10.0 / R
        return ExpBarrierProbe(Sphere(tuple(c), R), alpha, 1.0 / alpha)

    def exp_half(v):
        off = float(np.max(P @ v))
        alpha = 10.0 / R0
        return ExpBarrierProbe(HalfSpace(tuple(v), off), alpha, 1.0 / alpha)

    first, rest = [], []
    if "distance" in families:
        first.append(dist_probe(centroid))
    if "exp" in families:
        if Z.bounded:
            first.append(exp_ball(centroid))
        first.append(exp_half(np.eye(n)[0]))
    if "halfplane" in families:
        for i, e1, nu in _boundary_like(Z, max(1, budget // 4)):
            first.append(halfplane_probe(P[i], e1, nu))
    kinds = [k for k in ("distance", "quadratic", "exp") if k in families]
    k = 0
    while kinds and len(first) + len(rest) < budget:
        kind = kinds[k % len(kinds)]
        k += 1
        c = cand[rng.integers(len(cand))] + rng.normal(size=n) * Z.resolution
        if kind == "distance":
            c = centroid + rng.normal(size=n) * 0.5 * R0
            rest.append(dist_probe(c))
        elif kind == "quadratic":
            A = rng.normal(size=(n, n))
            A = (A + A.T) / (2 * R0)
            b = rng.normal(size=n)
            rest.append(Quadratic(c, b, A, 0.0, 1e-6 / R0**3))
        else:
            if Z.bounded and rng.random() < 0.5:
                rest.append(exp_ball(centroid + rng.normal(size=n) * 0.1 * R0))
            else:
                v = rng.normal(size=n)
                rest.append(exp_half(v / np.linalg.norm(v)))
    probes = (first + rest)[:budget]
    out = []
    for f in probes:
        top = float(np.max(f.values(P)))
        out.append(f.offset(-top))
    return out


def probe_search(Z: ClosedSet, m, h, budget=200, seed=0, workers=1, families=FAMILIES,
                 length_scale=1.0, g=None):
    """Sweep the probe families for a violation of the (m,h) inequality.

    Families: ``distance`` (|x-c|^2 / R, gradient norm 2 at the farthest
    point), ``quadratic`` (random centre and orientation with a small
    quartic proper tail), ``exp`` (exp-barriers of enclosing balls and
    supporting half-spaces, scaled so |Df| = 1 on contact) and
    ``halfplane`` (the boundary probe ``t + t^2 + |normal part|^2`` at
    samples that look like manifold-boundary points).

    Returns the max-margin :class:`ViolationCertificate` or a
    :class:`PassReport` (falsifier-only) with the worst margin.
    """
    if budget < 1:
        raise InvalidInput("budget must be at least 1")
    _check_mh(m, h, Z.dim)
    probes = generate_probes(Z, budget, seed, families)

    def run(f):
        return mh_test(Z, f, m, h, g, length_scale)

    if workers > 1:
        Z.neighbours  # build shared caches once before fanning out
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(run, probes))
    else:
        results = [run(f) for f in probes]
    best = None
    worst = None
    for res in results:
        if res.violated:
            if best is None or res.margin > best.margin or (
                    res.margin == best.margin and tuple(res.point) < tuple(best.point)):
                best = res
        elif res.point is not None and (worst is None or res.worst_margin > worst.worst_margin):
            worst = res
    if best is not None:
        return best
    if worst is None:
        return PassReport(-np.inf, None, 0, len(probes), m, h, Z.name)
    return PassReport(worst.worst_margin, worst.point, worst.n_maxima, len(probes), m, h, Z.name)


def critical_h(Z: ClosedSet, m, lo, hi, rel_tol=0.01, budget=50, seed=0, families=("exp",), max_iter=60):
    """Bisect for the smallest h at which the probe family finds nothing.

    Returns ``(lo, hi)`` with a violation at ``lo`` and a pass at ``hi``.
    """
    if probe_search(Z, m, hi, budget, seed, families=families).violated:
        raise InvalidInput("upper bracket still violated; raise hi")
    if not probe_search(Z, m, lo, budget, seed, families=families).violated:
        return lo, lo
    for _ in range(max_iter):
        if hi - lo <= rel_tol * hi:
            break
        mid = 0.5 * (lo + hi)
        if probe_search(Z, m, mid, budget, seed, families=families).violated:
            lo = mid
        else:
            hi = mid
    return lo, hi


# ---------------------------------------------------------- distance sets


@dataclass(frozen=True)
class DistanceSetReport:
    s: float
    h: float
    h_adjusted: float
    ambient: str
    result: object
    comparison: object = None

    @property
    def violated(self):
        if self.result is not None:
            return self.result.violated
        return not all(ok for ok, _ in self.comparison.as_tuple())

    def to_dict(self):
        d = {"s": self.s, "h": self.h, "h_adjusted": self.h_adjusted, "ambient": self.ambient,
             "verdict": "violation" if self.violated else "pass"}
        if self.result is not None:
            d["result"] = self.result.to_dict()
        if self.comparison is not None:
            d["comparison"] = self.comparison.to_dict()
        return d


def enlarged_set(Z: ClosedSet, s, grid: Grid) -> ClosedSet:
    """Node sample of ``Z(s) = {x : dist(x, Z) <= s}`` on ``grid``."""
    if s <= 0:
        raise InvalidInput("s must be positive")
    extent = min(b - a for a, b in zip(grid.lower, grid.upper))
    if Z.bounded:
        if np.any(grid.margin(Z.points) * grid.dx < s + 2 * grid.dx):
            raise OutOfDomain("Z(s) does not fit inside the grid box")
    elif s + 3 * grid.dx > 0.5 * extent:
        raise OutOfDomain("s exceeds the box margin")
    d = Z.distance_to(grid.nodes()).reshape(grid.shape) - s
    inside = d <= 1e-12 * grid.dx
    # Node samples alone leave a staircase whose corners show up as spurious
    # local maxima; the sub-cell crossings of d = s put points on the boundary.
    pts = np.concatenate([grid.nodes()[inside.ravel()], zero_crossings(ScalarField(grid, d))])
    cand = grid.margin(pts) > tol.NEIGHBORHOOD_FACTOR
    return ClosedSet(pts, grid.dx, cand, bounded=Z.bounded, name=f"{Z.name}({s:g})")


def distance_enlargement_check(Z: ClosedSet, s, m, h, grid: Grid, ambient=None, budget=100, seed=0,
                               families=FAMILIES, initial_form=None, length_scale=1.0):
    """Test the distance-set statement: ``Z(s)`` is an (m, h') set.

    ``ambient`` is ``None`` (flat), a :class:`SpaceFormAmbient` or a dict
    ``{"ricci": rho, "n": n}`` for the codimension-one Ricci bound.  The
    flat case samples ``Z(s)`` on ``grid`` and runs :func:`probe_search`.
    Curved cases use ``h' = h - m K s`` (or ``h - rho s``) and delegate to
    the Riccati comparison of the tube geometry, starting from
    ``initial_form`` (default: the zero form).
    """
    _check_mh(m, h, Z.dim)
    if ambient is None or (isinstance(ambient, SpaceFormAmbient) and ambient.K == 0):
        Zs = enlarged_set(Z, s, grid)
        res = probe_search(Zs, m, h, budget, seed, families=families, length_scale=length_scale)
        return DistanceSetReport(float(s), float(h), float(h), "flat", res)
    if isinstance(ambient, SpaceFormAmbient):
        h2 = h - m * ambient.K * s
        label = f"space-form(K={ambient.K:g})"
    else:
        rho = float(ambient["ricci"])
        ambient = SpaceFormAmbient(int(ambient.get("n", Z.dim)), rho / (int(ambient.get("n", Z.dim)) - 1))
        h2 = h - rho * s
        label = f"codim1-Ricci(rho={rho:g})"
    B0 = initial_form if initial_form is not None else SymBilinearForm(np.zeros((ambient.n - 1,) * 2))
    Bs = riccati_propagate(B0, ambient, s).form
    comp = comparison_check(B0, Bs, ambient, s, m)
    return DistanceSetReport(float(s), float(h), float(h2), label, None, comp)
