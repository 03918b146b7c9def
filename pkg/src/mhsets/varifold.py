"""Discrete rectifiable varifolds: simplicial m-surfaces with multiplicity.

A :class:`DiscreteVarifold` is a list of m-simplices in R^n, each carrying a
multiplicity ``theta >= 0``, together with an oriented (m-1)-chain for its
boundary.  Region integrals are computed by splitting every simplex into
``(2**levels)**m`` congruent pieces and classifying piece centroids, so
disjoint regions add up exactly.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import tolerances as tol
from .errors import InvalidInput, ResolutionLimit
from .linalg import trace_m_batch
from .predicate import ClosedSet

OMEGA = {0: 1.0, 1: 2.0, 2: math.pi, 3: 4.0 * math.pi / 3.0, 4: math.pi**2 / 2.0}


# --------------------------------------------------------------- regions


class Region:
    """Membership predicate over R^n."""

    def contains(self, points) -> np.ndarray:
        raise NotImplementedError

    def __or__(self, other):
        return UnionRegion((self, other))

    def describe(self):
        return {"kind": type(self).__name__.lower()}


@dataclass(frozen=True)
class Everything(Region):
    def contains(self, points):
        return np.ones(len(points), dtype=bool)


@dataclass(frozen=True)
class Ball(Region):
    center: tuple
    radius: float

    def contains(self, points):
        c = np.asarray(self.center, float)
        return np.sum((points - c) ** 2, axis=1) < self.radius**2

    def describe(self):
        return {"kind": "ball", "center": [float(v) for v in self.center], "radius": float(self.radius)}


@dataclass(frozen=True)
class Box(Region):
    lower: tuple
    upper: tuple

    def contains(self, points):
        return np.all((points >= np.asarray(self.lower)) & (points < np.asarray(self.upper)), axis=1)

    def describe(self):
        return {"kind": "box", "lower": [float(v) for v in self.lower], "upper": [float(v) for v in self.upper]}


@dataclass(frozen=True)
class Sublevel(Region):
    """``{x : phi(x) <= level}`` for a shape, field or plain callable ``phi``."""

    phi: object
    level: float = 0.0

    def contains(self, points):
        phi = self.phi
        if hasattr(phi, "distance"):
            v = phi.distance(points)
        elif hasattr(phi, "value_at"):
            v = phi.value_at(points)
        else:
            v = np.asarray(phi(points), dtype=float)
        return v <= self.level

    def describe(self):
        inner = self.phi.describe() if hasattr(self.phi, "describe") else repr(self.phi)
        return {"kind": "sublevel", "phi": inner, "level": float(self.level)}


@dataclass(frozen=True)
class UnionRegion(Region):
    parts: tuple

    def contains(self, points):
        out = np.zeros(len(points), dtype=bool)
        for p in self.parts:
            out |= p.contains(points)
        return out

    def describe(self):
        return {"kind": "union", "parts": [p.describe() for p in self.parts]}


def region_from_dict(d) -> Region:
    kind = d.get("kind")
    if kind == "ball":
        return Ball(tuple(d["center"]), float(d["radius"]))
    if kind == "box":
        return Box(tuple(d["lower"]), tuple(d["upper"]))
    if kind in ("everything", "all"):
        return Everything()
    if kind == "union":
        return UnionRegion(tuple(region_from_dict(p) for p in d["parts"]))
    if kind == "sublevel":
        from .shapes import shape_from_dict

        return Sublevel(shape_from_dict(d["phi"]), float(d.get("level", 0.0)))
    raise InvalidInput(f"unknown region kind {kind!r}")


# --------------------------------------------------------------- simplices


def simplex_volumes(corners):
    """Volumes of k-simplices given corners of shape ``(F, k+1, n)``."""
    E = corners[:, 1:] - corners[:, :1]
    k = E.shape[1]
    if k == 0:
        return np.ones(len(corners))
    G = E @ np.swapaxes(E, 1, 2)
    det = np.linalg.det(G)
    return np.sqrt(np.maximum(det, 0.0)) / math.factorial(k)


def subdivision_barycentrics(m, levels):
    """Barycentric centroids of the ``k**m`` pieces (``k = 2**levels``) of
    the Freudenthal subdivision of an m-simplex; all pieces have equal
    volume."""
    if m == 0:
        return np.ones((1, 1))
    k = 2**levels
    weights = (m - np.arange(m)) / (m + 1.0)
    cents = []
    for perm in itertools.permutations(range(m)):
        offs = np.zeros(m)
        offs[list(perm)] = weights
        base = np.array(list(itertools.product(range(k), repeat=m)), dtype=float)
        y = base + offs
        ok = np.all(np.diff(-y, axis=1) > 0, axis=1) if m > 1 else np.ones(len(y), bool)
        cents.append(y[ok & (y[:, 0] < k)])
    y = np.concatenate(cents) / k
    lam = np.empty((len(y), m + 1))
    lam[:, 0] = 1.0 - y[:, 0]
    lam[:, 1:m] = y[:, :-1] - y[:, 1:]
    lam[:, m] = y[:, -1]
    return lam


def _facets(simplices):
    """All (m-1)-facets with induced orientation sign."""
    m1 = simplices.shape[1]
    out, signs, owner = [], [], []
    for j in range(m1):
        keep = [i for i in range(m1) if i != j]
        out.append(simplices[:, keep])
        signs.append(np.full(len(simplices), (-1) ** j))
        owner.append(np.arange(len(simplices)))
    return np.concatenate(out), np.concatenate(signs), np.concatenate(owner)


def topological_boundary(faces, theta):
    """Facets with a single incident face, oriented, weighted by that face's
    multiplicity.  Returns ``(facets, weights, owners)``; facets with a
    negative induced orientation are stored with two vertices swapped."""
    facets, signs, owner = _facets(faces)
    if faces.shape[1] == 2:
        key = facets[:, 0:1]
    else:
        key = np.sort(facets, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    single = counts[inv] == 1
    fac, sg, own = facets[single].copy(), signs[single], owner[single]
    if fac.shape[1] >= 2:
        flip = sg < 0
        fac[flip, 0], fac[flip, 1] = fac[flip, 1].copy(), fac[flip, 0].copy()
        w = theta[own].astype(float)
    else:
        w = theta[own] * sg
    return fac, w, own


# --------------------------------------------------------------- varifold


@dataclass(frozen=True)
class DiscreteVarifold:
    vertices: np.ndarray
    faces: np.ndarray
    theta: np.ndarray
    boundary: np.ndarray = None
    boundary_weights: np.ndarray = None
    name: str = "varifold"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        V = np.asarray(self.vertices, dtype=float)
        F = np.asarray(self.faces, dtype=np.int64)
        th = np.broadcast_to(np.asarray(self.theta, dtype=float), (len(F),)).copy()
        if V.ndim != 2 or F.ndim != 2:
            raise InvalidInput("vertices must be (V, n) and faces (F, m+1)")
        n, m = V.shape[1], F.shape[1] - 1
        if not 1 <= m < n:
            raise InvalidInput(f"surface dimension {m} must satisfy 1 <= m < n = {n}")
        if len(F) and (F.min() < 0 or F.max() >= len(V)):
            raise InvalidInput("face index out of range")
        if np.any(th < 0) or not np.all(np.isfinite(th)):
            raise InvalidInput("multiplicities must be finite and nonnegative")
        vol = simplex_volumes(V[F]) if len(F) else np.zeros(0)
        scale = float(np.ptp(V, axis=0).max()) if len(V) else 1.0
        if np.any(vol <= tol.DEGENERATE_FACE * max(scale, 1e-300) ** m):
            raise InvalidInput("degenerate face")
        if self.boundary is None:
            B, w, _ = topological_boundary(F, th) if len(F) else (np.zeros((0, m), np.int64), np.zeros(0), None)
        else:
            B = np.asarray(self.boundary, dtype=np.int64).reshape(-1, m)
            w = (np.ones(len(B)) if self.boundary_weights is None
                 else np.asarray(self.boundary_weights, dtype=float))
        object.__setattr__(self, "vertices", V)
        object.__setattr__(self, "faces", F)
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "boundary", B)
        object.__setattr__(self, "boundary_weights", w)

    @property
    def n(self):
        return self.vertices.shape[1]

    @property
    def m(self):
        return self.faces.shape[1] - 1

    def __len__(self):
        return len(self.faces)

    @cached_property
    def areas(self):
        return simplex_volumes(self.vertices[self.faces])

    @cached_property
    def centroids(self):
        return self.vertices[self.faces].mean(axis=1)

    @cached_property
    def tangent_bases(self):
        """Orthonormal bases of the face planes, shape ``(F, n, m)``."""
        E = self.vertices[self.faces[:, 1:]] - self.vertices[self.faces[:, :1]]
        Q, _ = np.linalg.qr(np.swapaxes(E, 1, 2))
        return Q

    @cached_property
    def edge_lengths(self):
        C = self.vertices[self.faces]
        out = [np.linalg.norm(C[:, i] - C[:, j], axis=1) for i, j in itertools.combinations(range(self.m + 1), 2)]
        return np.max(out, axis=0)

    def with_theta(self, theta, name=None):
        """Same simplices with new multiplicities (boundary recomputed)."""
        return DiscreteVarifold(self.vertices, self.faces, theta, name=name or self.name, meta=dict(self.meta))

    def scaled_theta(self, c):
        """Multiplicity scaled by ``c`` (boundary weights follow)."""
        if c < 0:
            raise InvalidInput("multiplicity scale must be nonnegative")
        return DiscreteVarifold(self.vertices, self.faces, self.theta * c, self.boundary,
                                self.boundary_weights * c, f"{c:g}*{self.name}", dict(self.meta))

    def samples(self, levels=tol.SUBDIVISION_LEVELS):
        """Sub-simplex centroids and their weights ``theta * vol / k**m``."""
        return _samples(self.vertices, self.faces, self.theta * self.areas, self.m, levels)

    def boundary_samples(self, levels=tol.SUBDIVISION_LEVELS):
        if not len(self.boundary):
            return np.zeros((0, self.n)), np.zeros(0)
        vol = simplex_volumes(self.vertices[self.boundary])
        return _samples(self.vertices, self.boundary, np.abs(self.boundary_weights) * vol, self.m - 1, levels)

    def describe(self):
        return {"name": self.name, "n": self.n, "m": self.m, "faces": len(self),
                "boundary_facets": len(self.boundary),
                "theta_range": [float(self.theta.min()), float(self.theta.max())] if len(self) else [0.0, 0.0]}


def _samples(vertices, simplices, weights, k, levels):
    lam = subdivision_barycentrics(k, levels)
    C = vertices[simplices]
    pts = np.einsum("sj,fjn->fsn", lam, C).reshape(-1, vertices.shape[1])
    w = np.repeat(weights / len(lam), len(lam))
    return pts, w


# --------------------------------------------------------------- functionals


def mass(V: DiscreteVarifold, U: Region = None, levels=tol.SUBDIVISION_LEVELS) -> float:
    """``sum theta_f * area(f cap U)`` by sub-simplex centroid classification."""
    pts, w = V.samples(levels)
    if U is None or isinstance(U, Everything):
        return float(np.sum(V.theta * V.areas))
    return float(np.sum(w[U.contains(pts)]))


def boundary_mass(V: DiscreteVarifold, U: Region = None, levels=tol.SUBDIVISION_LEVELS) -> float:
    pts, w = V.boundary_samples(levels)
    if U is None:
        return float(np.sum(w))
    return float(np.sum(w[U.contains(pts)]))


def _jacobians(X, P):
    if hasattr(X, "jacobian_at"):
        return X.jacobian_at(P)
    if isinstance(X, tuple) and len(X) == 2:
        return np.asarray(X[1](P), dtype=float)
    raise InvalidInput("vector field needs jacobian_at or a (value, jacobian) pair")


def _values(X, P):
    if hasattr(X, "value_at"):
        return X.value_at(P)
    if isinstance(X, tuple) and len(X) == 2:
        return np.asarray(X[0](P), dtype=float)
    raise InvalidInput("vector field needs value_at or a (value, jacobian) pair")


def tangential_divergence(V: DiscreteVarifold, X, levels=1):
    """Per-face average of ``div_M X`` (projected Jacobian trace)."""
    lam = subdivision_barycentrics(V.m, levels)
    C = V.vertices[V.faces]
    P = np.einsum("sj,fjn->fsn", lam, C).reshape(-1, V.n)
    J = _jacobians(X, P).reshape(len(V), len(lam), V.n, V.n)
    T = V.tangent_bases
    div = np.einsum("fna,fsnk,fka->fs", T, J, T)
    return div.mean(axis=1)


def first_variation(V: DiscreteVarifold, X, levels=1) -> float:
    """``delta V(X) = int div_M X d||V||`` with theta weighting."""
    return float(np.sum(V.theta * V.areas * tangential_divergence(V, X, levels)))


def boundary_conormals(V: DiscreteVarifold):
    """Outward unit conormals of the boundary facets (in the owner face's plane)."""
    F = V.faces
    _, _, own = topological_boundary(F, V.theta)
    if len(own) != len(V.boundary):
        raise InvalidInput("conormals need the topological boundary chain")
    B = V.boundary
    out = np.empty((len(B), V.n))
    for i, (b, f) in enumerate(zip(B, own)):
        opp = [v for v in F[f] if v not in set(b)][0]
        base = V.vertices[b]
        x = V.vertices[opp] - base[0]
        E = (base[1:] - base[0]).T
        if E.shape[1]:
            Q, _ = np.linalg.qr(E)
            x = x - Q @ (Q.T @ x)
        out[i] = -x / np.linalg.norm(x)
    return out


def boundary_flux(V: DiscreteVarifold, X, levels=2) -> float:
    """``int_{boundary} X . nu`` over the topological boundary with weights."""
    if not len(V.boundary):
        return 0.0
    nu = boundary_conormals(V)
    k = V.m - 1
    lam = subdivision_barycentrics(k, levels)
    P = np.einsum("sj,fjn->fsn", lam, V.vertices[V.boundary])
    Xv = _values(X, P.reshape(-1, V.n)).reshape(len(V.boundary), len(lam), V.n)
    vol = simplex_volumes(V.vertices[V.boundary])
    flux = np.einsum("fsn,fn->fs", Xv, nu).mean(axis=1)
    return float(np.sum(np.abs(V.boundary_weights) * vol * flux))


@dataclass(frozen=True)
class DivergenceAudit:
    div_M: np.ndarray
    trace_m_DX: np.ndarray
    f_trace_m_D2f: np.ndarray
    f: np.ndarray
    ok: np.ndarray
    tolerance: float

    @property
    def fraction_ok(self):
        return float(np.mean(self.ok)) if len(self.ok) else 1.0

    def to_dict(self):
        return {"faces": int(len(self.ok)), "fraction_ok": self.fraction_ok, "tolerance": self.tolerance,
                "flagged": [int(i) for i in np.flatnonzero(~self.ok)]}


def divergence_bound_audit(V: DiscreteVarifold, f, tolerance=None) -> DivergenceAudit:
    """Check ``div_M X >= Trace_m(DX) >= f Trace_m(D^2 f)`` for ``X = f grad f``.

    Everything is evaluated at face centroids from ``f``'s exact batched
    derivatives; the second inequality is only asserted where ``f >= 0``.
    """
    P = V.centroids
    fv = f.values(P)
    g = f.gradients(P)
    H = f.hessians(P)
    DX = fv[:, None, None] * H + g[:, :, None] * g[:, None, :]
    T = V.tangent_bases
    div = np.einsum("fna,fnk,fka->f", T, DX, T)
    tmx = trace_m_batch(DX, V.m)
    ftm = fv * trace_m_batch(H, V.m)
    scale = max(1.0, float(np.max(np.abs(DX))) if len(DX) else 1.0)
    t = 1e-9 * scale if tolerance is None else tolerance
    ok = (div >= tmx - t) & ((fv < 0) | (tmx >= ftm - t))
    return DivergenceAudit(div, tmx, ftm, fv, ok, float(t))


def local_mesh_size(V: DiscreteVarifold, x, r):
    near = np.linalg.norm(V.centroids - x, axis=1) <= r + V.edge_lengths
    e = V.edge_lengths[near] if near.any() else V.edge_lengths
    return float(np.max(e))


def density(V: DiscreteVarifold, x, radii, levels=tol.SUBDIVISION_LEVELS):
    """Mass ratios ``||V||(B(x, r)) / (omega_m r^m)`` for each radius."""
    x = np.asarray(x, dtype=float)
    radii = [float(r) for r in radii]
    if V.m not in OMEGA:
        raise InvalidInput(f"omega_m tabulated for m <= 4 only (m = {V.m})")
    h = local_mesh_size(V, x, max(radii))
    small = [r for r in radii if r < tol.DENSITY_MIN_RADIUS_FACTOR * h]
    if small:
        raise ResolutionLimit(f"radius {min(small):g} below {tol.DENSITY_MIN_RADIUS_FACTOR:g} x mesh size {h:.3g}")
    pts, w = V.samples(levels)
    d2 = np.sum((pts - x) ** 2, axis=1)
    return np.array([np.sum(w[d2 < r * r]) / (OMEGA[V.m] * r**V.m) for r in radii])


@dataclass(frozen=True)
class GapReport:
    ok: bool
    alpha: float
    offenders: np.ndarray

    def __bool__(self):
        return self.ok

    def to_dict(self):
        return {"ok": self.ok, "alpha": self.alpha, "offenders": [int(i) for i in self.offenders]}


def gap_alpha_check(V: DiscreteVarifold, alpha) -> GapReport:
    """Every multiplicity in ``{1} cup [alpha, inf)`` up to ``GAP_TOL``."""
    if not alpha > 1:
        raise InvalidInput("alpha must exceed 1")
    th = V.theta
    good = (np.abs(th - 1.0) <= tol.GAP_TOL) | (th >= alpha - tol.GAP_TOL)
    bad = np.flatnonzero(~good)
    return GapReport(not len(bad), float(alpha), bad)


# --------------------------------------------------------------- blow-up set


def linear_schedule(m, r, factor=0.5):
    """``T_i = factor * omega_m r^m * i``: a ball of radius r meeting a flat
    piece of multiplicity i through its centre has mass ``omega_m r^m i``."""
    c = factor * OMEGA[m] * r**m
    return lambda i: c * i


@dataclass(frozen=True)
class BlowupEstimate:
    closed_set: ClosedSet
    masses: np.ndarray = field(repr=False)
    thresholds: np.ndarray
    i0: int
    indices: tuple

    def to_dict(self):
        return {"marked": int(len(self.closed_set)), "i0": self.i0, "indices": list(self.indices),
                "thresholds": [float(t) for t in self.thresholds], "resolution": self.closed_set.resolution}


def ball_masses(V: DiscreteVarifold, nodes, r, levels=2):
    """``||V||(B(x, r))`` for many centres at once."""
    pts, w = V.samples(levels)
    tn = cKDTree(nodes)
    ts = cKDTree(pts)
    D = tn.sparse_distance_matrix(ts, r, output_type="coo_matrix")
    inside = D.data < r
    return np.bincount(D.row[inside], weights=w[D.col[inside]], minlength=len(nodes))


def blowup_set(family, r, schedule, nodes, indices=None, levels=2) -> BlowupEstimate:
    """Nodes where the ball mass reaches ``schedule(i)`` for every sampled
    ``i >= i0`` (``i0`` is the middle of the family)."""
    family = list(family)
    if len(family) < 3:
        raise InvalidInput("need at least three members")
    idx = tuple(range(1, len(family) + 1)) if indices is None else tuple(indices)
    nodes = np.asarray(nodes.nodes() if hasattr(nodes, "nodes") else nodes, dtype=float)
    T = np.array([float(schedule(i)) for i in idx])
    if np.any(np.diff(T) <= 0):
        raise InvalidInput("threshold schedule must be increasing")
    start = len(family) // 2
    masses = np.stack([ball_masses(V, nodes, r, levels) for V in family])
    mark = np.all(masses[start:] >= T[start:, None], axis=0)
    Z = ClosedSet(nodes[mark], float(r), name="blowup-set")
    return BlowupEstimate(Z, masses, T, idx[start], idx)


def excess_curvature_integral(V: DiscreteVarifold, H_abs, h, U: Region = None, levels=2) -> float:
    """``int_{V cap U} (|H| - h)^+ d||V||`` with ``|H|`` from an analytic oracle."""
    pts, w = V.samples(levels)
    keep = np.ones(len(pts), bool) if U is None else U.contains(pts)
    return float(np.sum(w[keep] * np.maximum(np.asarray(H_abs(pts[keep])) - h, 0.0)))


def integral_bound_audit(family, H_abs, hs, U, cap):
    """Excess-curvature integrals along a family against a declared cap."""
    vals = np.array([excess_curvature_integral(V, H_abs, h, U) for V, h in zip(family, hs)])
    return {"values": [float(v) for v in vals], "cap": float(cap), "bounded": bool(np.all(vals <= cap))}


# --------------------------------------------------------------- meshes


def polyline(points, theta=1.0, closed=False, name="polyline"):
    P = np.asarray(points, dtype=float)
    k = len(P)
    F = np.stack([np.arange(k - 1), np.arange(1, k)], axis=1)
    if closed:
        F = np.vstack([F, [k - 1, 0]])
    return DiscreteVarifold(P, F, theta, name=name)


def square_mesh(side=1.0, theta=1.0, n=1, origin=(0.0, 0.0), dim=2):
    """Axis-aligned square ``[0, side]^2`` split into ``2 n^2`` triangles."""
    t = np.linspace(0.0, side, n + 1)
    X, Y = np.meshgrid(t, t, indexing="ij")
    V = np.zeros(((n + 1) ** 2, dim))
    V[:, 0] = X.ravel() + origin[0]
    V[:, 1] = Y.ravel() + origin[1]
    F = _grid_triangles(n, n)
    if dim == 2:
        V = np.hstack([V, np.zeros((len(V), 1))])
    return DiscreteVarifold(V, F, theta, name="square")


def _grid_triangles(nx, ny):
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    a = (i * (ny + 1) + j).ravel()
    b = a + (ny + 1)
    return np.concatenate([np.stack([a, b, b + 1], 1), np.stack([a, b + 1, a + 1], 1)])


def plane_patch(half_width=1.0, n=40, theta=1.0, dim=3, height=0.0, theta_fn=None, name="plane"):
    """Square piece of ``{x_n = height}``; ``theta_fn`` maps centroids to multiplicities."""
    t = np.linspace(-half_width, half_width, n + 1)
    X, Y = np.meshgrid(t, t, indexing="ij")
    V = np.zeros(((n + 1) ** 2, dim))
    V[:, 0], V[:, 1] = X.ravel(), Y.ravel()
    V[:, dim - 1] = height
    F = _grid_triangles(n, n)
    th = theta if theta_fn is None else theta_fn(V[F].mean(axis=1))
    return DiscreteVarifold(V, F, th, name=name)


def disk_mesh(radius=1.0, rings=16, theta=1.0, center=(0.0, 0.0, 0.0)):
    """Flat disk with ``8 j`` vertices on ring j; ``8 rings^2`` triangles
    (2048 for the default)."""
    verts = [np.zeros(2)]
    start = [0]
    for j in range(1, rings + 1):
        start.append(len(verts))
        a = 2 * np.pi * np.arange(8 * j) / (8 * j)
        verts.extend(radius * j / rings * np.stack([np.cos(a), np.sin(a)], 1))
    V2 = np.array(verts)
    F = []
    for j in range(1, rings + 1):
        outer = start[j] + np.arange(8 * j)
        if j == 1:
            F.extend([[0, outer[k], outer[(k + 1) % 8]] for k in range(8)])
            continue
        ni, no = 8 * (j - 1), 8 * j
        inner = start[j - 1] + np.arange(ni)
        # Walk both rings by angle, emitting a triangle at each advance.
        a, b = 0, 0
        while a < ni or b < no:
            ta = (a + 1) / ni if a < ni else 2.0
            tb = (b + 1) / no if b < no else 2.0
            if tb <= ta:
                F.append([inner[a % ni], outer[b], outer[(b + 1) % no]])
                b += 1
            else:
                F.append([inner[a % ni], outer[b % no], inner[(a + 1) % ni]])
                a += 1
    V = np.hstack([V2, np.zeros((len(V2), 1))]) + np.asarray(center, float)
    return DiscreteVarifold(V, np.array(F), theta, name=f"disk(r={radius:g})")


def sphere_mesh(radius=1.0, level=5, theta=1.0, center=(0.0, 0.0, 0.0)):
    """Octahedron refined ``level`` times and projected (``8 * 4**level`` faces)."""
    V = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], float)
    F = np.array([[0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4], [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5]])
    for _ in range(level):
        V, F = _refine(V, F)
        V /= np.linalg.norm(V, axis=1, keepdims=True)
    return DiscreteVarifold(radius * V + np.asarray(center, float), F, theta, name=f"sphere(r={radius:g})")


def _refine(V, F):
    edges = np.sort(np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]]), axis=1)
    uniq, inv = np.unique(edges, axis=0, return_inverse=True)
    inv = inv.ravel()
    mids = 0.5 * (V[uniq[:, 0]] + V[uniq[:, 1]])
    k = len(F)
    a, b, c = (inv[:k] + len(V), inv[k:2 * k] + len(V), inv[2 * k:] + len(V))
    F2 = np.concatenate([np.stack([F[:, 0], a, c], 1), np.stack([a, F[:, 1], b], 1),
                         np.stack([c, b, F[:, 2]], 1), np.stack([a, b, c], 1)])
    return np.vstack([V, mids]), F2


# --------------------------------------------------------------- counterexample


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)

    def s(x):
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = np.exp(-1.0 / x[pos])
        return out

    a, b = s(t), s(1.0 - t)
    return a / (a + b)


def plateau_profile(t):
    """``phi`` on ``[1, inf)``: 2 on [1, 2], 1 from 3 on, smooth and monotone between."""
    return 2.0 - smooth_step(np.asarray(t, dtype=float) - 2.0)


def cap_bump(x):
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) < 1, 1.0 - x * x, 0.0)


def smooth_bump(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - x[inside] ** 2))
    return out


BUMPS = {"cap": cap_bump, "smooth": smooth_bump}


def counterexample_sequence(n_index, resolution=0.01, bump="cap", half_length=5.0) -> DiscreteVarifold:
    """Support: graph of ``g / n`` over [-1, 1] together with the x-axis over
    ``[-L, L]``.  Multiplicity 1 on the graph and on the axis for ``|x| < 1``,
    ``phi(|x|)`` on the axis elsewhere."""
    if n_index < 1:
        raise InvalidInput("n_index must be at least 1")
    g = BUMPS[bump] if isinstance(bump, str) else bump
    knots = [-half_length, -3.0, -2.0, -1.0, 1.0, 2.0, 3.0, half_length]
    xs = [np.linspace(a, b, max(2, int(math.ceil((b - a) / resolution)) + 1)) for a, b in zip(knots, knots[1:])]
    x = np.unique(np.concatenate(xs))
    axis = np.stack([x, np.zeros_like(x)], 1)
    k = max(2, int(math.ceil(2.0 / resolution)) + 1)
    gx = np.linspace(-1.0, 1.0, k)[1:-1]
    graph = np.stack([gx, g(gx) / n_index], 1)
    V = np.vstack([axis, graph])
    na = len(axis)
    left = int(np.flatnonzero(x == -1.0)[0])
    right = int(np.flatnonzero(x == 1.0)[0])
    Fa = np.stack([np.arange(na - 1), np.arange(1, na)], 1)
    gidx = np.concatenate([[left], na + np.arange(len(gx)), [right]])
    Fg = np.stack([gidx[:-1], gidx[1:]], 1)
    mid = 0.5 * (x[:-1] + x[1:])
    th_axis = np.where(np.abs(mid) < 1, 1.0, plateau_profile(np.maximum(np.abs(mid), 1.0)))
    F = np.vstack([Fa, Fg])
    th = np.concatenate([th_axis, np.ones(len(Fg))])
    meta = {"n": int(n_index), "bump": bump if isinstance(bump, str) else "custom", "branch_points": [left, right]}
    return DiscreteVarifold(V, F, th, name=f"counterexample(n={n_index})", meta=meta)


def declared_density(x):
    """Density prescribed by the construction at points of the x-axis."""
    x = np.abs(np.asarray(x, dtype=float))
    return np.where(x < 1, 1.0, plateau_profile(np.maximum(x, 1.0)))


def vertex_star(V: DiscreteVarifold, vertex):
    """Unit directions of the edges leaving ``vertex`` (1-dimensional varifolds)."""
    if V.m != 1:
        raise InvalidInput("vertex stars are defined for curves")
    rows = np.flatnonzero(np.any(V.faces == vertex, axis=1))
    other = np.where(V.faces[rows, 0] == vertex, V.faces[rows, 1], V.faces[rows, 0])
    d = V.vertices[other] - V.vertices[vertex]
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def tangent_angle_jump(V: DiscreteVarifold, vertex):
    """Largest angle between two edges leaving ``vertex`` on the same side.

    Zero at a C^1 point of an embedded curve (two opposite edges); positive
    where branches meet at an angle."""
    U = vertex_star(V, vertex)
    best = 0.0
    for i, j in itertools.combinations(range(len(U)), 2):
        c = float(U[i] @ U[j])
        if c > 0:
            best = max(best, math.acos(min(1.0, c)))
    return best


def branch_count(V: DiscreteVarifold, vertex):
    return int(np.sum(np.any(V.faces == vertex, axis=1)))


# --------------------------------------------------------------- I/O


def save_varifold(V: DiscreteVarifold, path):
    """OFF file (vertices padded to 3 coordinates) plus a JSON sidecar."""
    path = Path(path)
    P = V.vertices if V.n >= 3 else np.hstack([V.vertices, np.zeros((len(V.vertices), 3 - V.n))])
    with open(path, "w") as fh:
        fh.write(f"OFF\n{len(P)} {len(V.faces)} 0\n")
        for v in P:
            fh.write(" ".join(f"{c:.17g}" for c in v) + "\n")
        for f in V.faces:
            fh.write(f"{len(f)} " + " ".join(str(int(i)) for i in f) + "\n")
    side = {"n": V.n, "m": V.m, "name": V.name, "theta": [float(t) for t in V.theta],
            "boundary": V.boundary.tolist(), "boundary_weights": [float(w) for w in V.boundary_weights]}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(side, sort_keys=True, indent=1))


def load_varifold(path) -> DiscreteVarifold:
    path = Path(path)
    tokens = []
    for line in path.read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            tokens.extend(line.split())
    if not tokens or tokens[0] != "OFF":
        raise InvalidInput(f"{path}: missing OFF header")
    nv, nf = int(tokens[1]), int(tokens[2])
    pos = 4
    verts = np.array(tokens[pos:pos + 3 * nv], dtype=float).reshape(nv, 3)
    pos += 3 * nv
    faces = []
    for _ in range(nf):
        k = int(tokens[pos])
        faces.append([int(t) for t in tokens[pos + 1:pos + 1 + k]])
        pos += 1 + k
    side_path = path.with_suffix(path.suffix + ".json")
    side = json.loads(side_path.read_text()) if side_path.exists() else {}
    n = int(side.get("n", 3))
    theta = side.get("theta", 1.0)
    B = side.get("boundary")
    W = side.get("boundary_weights")
    return DiscreteVarifold(verts[:, :n], np.array(faces, dtype=np.int64), theta,
                            None if B is None else np.array(B, dtype=np.int64).reshape(len(B), -1),
                            None if W is None else np.array(W), side.get("name", path.stem))
