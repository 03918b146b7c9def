"""Analytic shape descriptors.

Every shape exposes a signed distance ``distance(x)`` that is negative on
the inside, together with its gradient and Hessian.  Points are given as
``(k, n)`` arrays (a single point may be passed as a length-n vector).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput


def _pts(x):
    x = np.asarray(x, dtype=float)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


def _unit(v):
    v = np.asarray(v, dtype=float)
    nv = np.linalg.norm(v)
    if nv == 0:
        raise InvalidInput("direction must be nonzero")
    return v / nv


class Shape:
    """Base class; subclasses implement the batched ``_d``, ``_g`` and ``_h``."""

    dim: int

    def distance(self, x):
        p, single = _pts(x)
        d = self._d(p)
        return float(d[0]) if single else d

    def gradient(self, x):
        p, single = _pts(x)
        g = self._g(p)
        return g[0] if single else g

    def hessian(self, x):
        p, single = _pts(x)
        h = self._h(p)
        return h[0] if single else h

    def inside(self, x):
        d = self.distance(x)
        return d <= 0 if np.ndim(d) else bool(d <= 0)

    def complement(self):
        return Complement(self)

    def scaled(self, lam):
        raise NotImplementedError

    def describe(self):
        raise NotImplementedError


@dataclass(frozen=True)
class Sphere(Shape):
    """Ball of the given radius; its boundary is the sphere."""

    center: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise InvalidInput("radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def dim(self):
        return len(self.center)

    def _rel(self, p):
        r = p - np.asarray(self.center)
        return r, np.linalg.norm(r, axis=1)

    def _d(self, p):
        return self._rel(p)[1] - self.radius

    def _g(self, p):
        r, nr = self._rel(p)
        return r / np.maximum(nr, 1e-300)[:, None]

    def _h(self, p):
        r, nr = self._rel(p)
        nr = np.maximum(nr, 1e-300)
        u = r / nr[:, None]
        eye = np.eye(self.dim)
        return (eye[None] - u[:, :, None] * u[:, None, :]) / nr[:, None, None]

    def scaled(self, lam):
        return Sphere(tuple(lam * np.asarray(self.center)), lam * self.radius)

    def describe(self):
        return {"shape": "sphere", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Cylinder(Shape):
    """Solid round cylinder around the line ``point + t*axis``."""

    point: tuple
    axis: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise InvalidInput("radius must be positive")
        object.__setattr__(self, "point", tuple(float(c) for c in self.point))
        object.__setattr__(self, "axis", tuple(_unit(self.axis)))

    @property
    def dim(self):
        return len(self.point)

    def _rel(self, p):
        a = np.asarray(self.axis)
        r = p - np.asarray(self.point)
        r = r - (r @ a)[:, None] * a
        return r, np.linalg.norm(r, axis=1)

    def _d(self, p):
        return self._rel(p)[1] - self.radius

    def _g(self, p):
        r, nr = self._rel(p)
        return r / np.maximum(nr, 1e-300)[:, None]

    def _h(self, p):
        r, nr = self._rel(p)
        nr = np.maximum(nr, 1e-300)
        u = r / nr[:, None]
        a = np.asarray(self.axis)
        proj = np.eye(self.dim) - np.outer(a, a)
        return (proj[None] - u[:, :, None] * u[:, None, :]) / nr[:, None, None]

    def scaled(self, lam):
        return Cylinder(tuple(lam * np.asarray(self.point)), self.axis, lam * self.radius)

    def describe(self):
        return {"shape": "cylinder", "point": list(self.point), "axis": list(self.axis), "radius": self.radius}


@dataclass(frozen=True)
class HalfSpace(Shape):
    """``{x : x.normal <= offset}``; the normal points out of the region."""

    normal: tuple
    offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "normal", tuple(_unit(self.normal)))

    @property
    def dim(self):
        return len(self.normal)

    def _d(self, p):
        return p @ np.asarray(self.normal) - self.offset

    def _g(self, p):
        return np.broadcast_to(np.asarray(self.normal), p.shape).copy()

    def _h(self, p):
        return np.zeros((p.shape[0], self.dim, self.dim))

    def scaled(self, lam):
        return HalfSpace(self.normal, lam * self.offset)

    def describe(self):
        return {"shape": "halfspace", "normal": list(self.normal), "offset": self.offset}


@dataclass(frozen=True)
class Slab(Shape):
    """``{x : |x.normal - center| <= half_width}``."""

    normal: tuple
    half_width: float
    center: float = 0.0

    def __post_init__(self):
        if self.half_width <= 0:
            raise InvalidInput("half_width must be positive")
        object.__setattr__(self, "normal", tuple(_unit(self.normal)))

    @property
    def dim(self):
        return len(self.normal)

    def _t(self, p):
        return p @ np.asarray(self.normal) - self.center

    def _d(self, p):
        return np.abs(self._t(p)) - self.half_width

    def _g(self, p):
        s = np.where(self._t(p) >= 0, 1.0, -1.0)
        return s[:, None] * np.asarray(self.normal)

    def _h(self, p):
        return np.zeros((p.shape[0], self.dim, self.dim))

    def scaled(self, lam):
        return Slab(self.normal, lam * self.half_width, lam * self.center)

    def describe(self):
        return {"shape": "slab", "normal": list(self.normal), "half_width": self.half_width, "center": self.center}


@dataclass(frozen=True)
class Union(Shape):
    """Union of regions; distance is the pointwise minimum."""

    parts: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if len(self.parts) == 0:
            raise InvalidInput("union needs at least one part")
        object.__setattr__(self, "parts", tuple(self.parts))

    @property
    def dim(self):
        return self.parts[0].dim

    def _stack(self, p):
        return np.stack([s._d(p) for s in self.parts])

    def _d(self, p):
        return self._stack(p).min(axis=0)

    def _pick(self, p, attr):
        which = np.argmin(self._stack(p), axis=0)
        vals = np.stack([getattr(s, attr)(p) for s in self.parts])
        return vals[which, np.arange(p.shape[0])]

    def _g(self, p):
        return self._pick(p, "_g")

    def _h(self, p):
        return self._pick(p, "_h")

    def scaled(self, lam):
        return Union(tuple(s.scaled(lam) for s in self.parts))

    def describe(self):
        return {"shape": "union", "parts": [s.describe() for s in self.parts]}


@dataclass(frozen=True)
class Complement(Shape):
    """Closure of the complement: the signed distance changes sign."""

    base: Shape

    @property
    def dim(self):
        return self.base.dim

    def _d(self, p):
        return -self.base._d(p)

    def _g(self, p):
        return -self.base._g(p)

    def _h(self, p):
        return -self.base._h(p)

    def complement(self):
        return self.base

    def scaled(self, lam):
        return Complement(self.base.scaled(lam))

    def describe(self):
        return {"shape": "complement", "base": self.base.describe()}


def shape_from_dict(d) -> Shape:
    kind = d.get("shape")
    if kind == "sphere":
        return Sphere(tuple(d["center"]), float(d["radius"]))
    if kind == "cylinder":
        return Cylinder(tuple(d["point"]), tuple(d["axis"]), float(d["radius"]))
    if kind == "halfspace":
        return HalfSpace(tuple(d["normal"]), float(d.get("offset", 0.0)))
    if kind == "slab":
        return Slab(tuple(d["normal"]), float(d["half_width"]), float(d.get("center", 0.0)))
    if kind == "union":
        return Union(tuple(shape_from_dict(p) for p in d["parts"]))
    if kind == "complement":
        return Complement(shape_from_dict(d["base"]))
    raise InvalidInput(f"unknown shape {kind!r}")


# ---------------------------------------------------------------- meshes


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        f = np.asarray(self.faces, dtype=np.int64)
        if v.ndim != 2 or f.ndim != 2 or f.shape[1] != 3:
            raise InvalidInput("mesh needs (k, n) vertices and (F, 3) faces")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise InvalidInput("face index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def dim(self):
        return self.vertices.shape[1]

    def triangles(self):
        return self.vertices[self.faces]

    def unsigned_distance(self, x, candidates=None):
        """Exact distance from each point to the triangle set."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        tri = self.triangles()
        out = np.full(len(x), np.inf)
        chunk = max(1, 200000 // max(1, len(tri)))
        for s in range(0, len(x), chunk):
            xs = x[s:s + chunk]
            d = point_triangle_distance(xs[:, None, :], tri[None, :, 0], tri[None, :, 1], tri[None, :, 2])
            out[s:s + chunk] = d.min(axis=1)
        return out

    def winding_number(self, x):
        """Generalised winding number of a closed, consistently oriented 3D mesh."""
        if self.dim != 3:
            raise InvalidInput("winding number implemented for meshes in R^3")
        x = np.atleast_2d(np.asarray(x, dtype=float))
        tri = self.triangles()
        total = np.zeros(len(x))
        chunk = max(1, 200000 // max(1, len(tri)))
        for s in range(0, len(x), chunk):
            a = tri[None, :, 0] - x[s:s + chunk, None]
            b = tri[None, :, 1] - x[s:s + chunk, None]
            c = tri[None, :, 2] - x[s:s + chunk, None]
            la, lb, lc = (np.linalg.norm(v, axis=-1) for v in (a, b, c))
            num = np.einsum("ijk,ijk->ij", a, np.cross(b, c))
            den = (la * lb * lc + np.einsum("ijk,ijk->ij", a, b) * lc
                   + np.einsum("ijk,ijk->ij", b, c) * la + np.einsum("ijk,ijk->ij", c, a) * lb)
            total[s:s + chunk] = (2.0 * np.arctan2(num, den)).sum(axis=1) / (4.0 * np.pi)
        return total

    def inside(self, x):
        return self.winding_number(x) > 0.5


def point_triangle_distance(p, a, b, c):
    """Broadcasting exact point-to-triangle distance (closest-point regions)."""
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("...k,...k->...", ab, ap)
    d2 = np.einsum("...k,...k->...", ac, ap)
    bp = p - b
    d3 = np.einsum("...k,...k->...", ab, bp)
    d4 = np.einsum("...k,...k->...", ac, bp)
    cp = p - c
    d5 = np.einsum("...k,...k->...", ab, cp)
    d6 = np.einsum("...k,...k->...", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v = np.where(denom != 0, vb / denom, 0.0)
        w = np.where(denom != 0, vc / denom, 0.0)
        closest = a + v[..., None] * ab + w[..., None] * ac
        # vertex regions
        closest = np.where(((d1 <= 0) & (d2 <= 0))[..., None], a, closest)
        closest = np.where(((d3 >= 0) & (d4 <= d3))[..., None], b, closest)
        closest = np.where(((d6 >= 0) & (d5 <= d6))[..., None], c, closest)
        # edge regions
        t_ab = np.where(d1 - d3 != 0, d1 / (d1 - d3), 0.0)
        m_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        closest = np.where(m_ab[..., None], a + t_ab[..., None] * ab, closest)
        t_ac = np.where(d2 - d6 != 0, d2 / (d2 - d6), 0.0)
        m_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        closest = np.where(m_ac[..., None], a + t_ac[..., None] * ac, closest)
        t_bc = np.where((d4 - d3) + (d5 - d6) != 0, (d4 - d3) / ((d4 - d3) + (d5 - d6)), 0.0)
        m_bc = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
        closest = np.where(m_bc[..., None], b + t_bc[..., None] * (c - b), closest)
    return np.linalg.norm(p - closest, axis=-1)


def read_off(path) -> TriangleMesh:
    """Read an ASCII OFF file (triangles only; comments with '#')."""
    with open(path) as fh:
        tokens = []
        for line in fh:
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
        if k != 3:
            raise InvalidInput("only triangular faces are supported")
        faces.append([int(t) for t in tokens[pos + 1:pos + 4]])
        pos += 1 + k
    return TriangleMesh(verts, np.array(faces, dtype=np.int64).reshape(-1, 3))


def write_off(path, mesh: TriangleMesh):
    with open(path, "w") as fh:
        fh.write(f"OFF\n{len(mesh.vertices)} {len(mesh.faces)} 0\n")
        for v in mesh.vertices:
            fh.write(" ".join(f"{c:.17g}" for c in v) + "\n")
        for f in mesh.faces:
            fh.write(f"3 {f[0]} {f[1]} {f[2]}\n")
