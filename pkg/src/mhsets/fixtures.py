"""Registry of named geometric fixtures used by tests and scenarios."""
from __future__ import annotations

import numpy as np

from .errors import InvalidInput
from .predicate import ClosedSet
from .shapes import Cylinder, HalfSpace, Slab, Sphere


def fibonacci_sphere(k, radius=1.0, center=None):
    i = np.arange(k) + 0.5
    z = 1 - 2 * i / k
    rho = np.sqrt(1 - z * z)
    th = np.pi * (1 + 5**0.5) * i
    pts = radius * np.stack([rho * np.cos(th), rho * np.sin(th), z], axis=1)
    return pts if center is None else pts + np.asarray(center, float)


def sphere_set(radius=1.0, dim=3, resolution=None, center=None) -> ClosedSet:
    """Round sphere of the given radius (circle when ``dim == 2``)."""
    center = np.zeros(dim) if center is None else np.asarray(center, float)
    if dim == 2:
        res = resolution or radius / 64
        k = int(np.ceil(2 * np.pi * radius / res))
        t = 2 * np.pi * np.arange(k) / k
        pts = center + radius * np.stack([np.cos(t), np.sin(t)], axis=1)
        res = 2 * np.pi * radius / k
    elif dim == 3:
        res = resolution or radius / 24
        k = int(np.ceil(4 * np.pi * radius**2 / res**2))
        pts = fibonacci_sphere(k, radius, center)
        res = np.sqrt(4 * np.pi * radius**2 / k) * 1.1
    else:
        raise InvalidInput("sphere fixture available in dimensions 2 and 3")
    shape = Sphere(tuple(center), radius)
    return ClosedSet(pts, float(res), name=f"sphere(r={radius:g})", exact_distance=shape.distance)


def plane_set(dim=3, normal_axis=None, half_width=1.0, resolution=0.05, offset=0.0) -> ClosedSet:
    """Window of the hyperplane ``x_k = offset`` (k defaults to the last axis)."""
    k = dim - 1 if normal_axis is None else normal_axis
    n = int(round(2 * half_width / resolution)) + 1
    axes = [np.linspace(-half_width, half_width, n)] * (dim - 1)
    grids = np.meshgrid(*axes, indexing="ij")
    tang = np.stack([g.ravel() for g in grids], axis=1)
    pts = np.insert(tang, k, offset, axis=1)
    lo, hi = np.full(dim, -half_width), np.full(dim, half_width)
    lo[k], hi[k] = offset - half_width, offset + half_width
    nrm = np.eye(dim)[k]
    return ClosedSet.from_points(pts, resolution, window=(lo, hi), name="plane",
                                 exact_distance=lambda x: np.abs(np.atleast_2d(x) @ nrm - offset))


def half_plane_set(half_width=1.0, resolution=0.05) -> ClosedSet:
    """``{x1 <= 0, x3 = 0}`` in R^3, truncated to a window (true edge kept)."""
    n = int(round(half_width / resolution)) + 1
    x1 = np.linspace(-half_width, 0.0, n)
    x2 = np.linspace(-half_width, half_width, 2 * n - 1)
    g1, g2 = np.meshgrid(x1, x2, indexing="ij")
    pts = np.stack([g1.ravel(), g2.ravel(), np.zeros(g1.size)], axis=1)
    window = (np.array([-half_width, -half_width, -half_width]), np.array([half_width, half_width, half_width]))

    def dist(x):
        x = np.atleast_2d(x)
        return np.hypot(np.maximum(x[:, 0], 0.0), x[:, 2])

    return ClosedSet.from_points(pts, resolution, window=window, name="half-plane", exact_distance=dist)


def segment_set(a=(-1.0, 0.0), b=(1.0, 0.0), resolution=0.01) -> ClosedSet:
    """Closed segment including both endpoints."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    L = float(np.linalg.norm(b - a))
    k = int(np.ceil(L / resolution)) + 1
    t = np.linspace(0, 1, k)
    pts = a + t[:, None] * (b - a)
    d = (b - a) / L

    def dist(x):
        x = np.atleast_2d(x)
        s = np.clip((x - a) @ d, 0, L)
        return np.linalg.norm(x - (a + s[:, None] * d), axis=1)

    return ClosedSet(pts, L / (k - 1), name="segment", exact_distance=dist)


def singleton_set(dim=3, point=None, resolution=0.01) -> ClosedSet:
    p = np.zeros(dim) if point is None else np.asarray(point, float)
    return ClosedSet(p[None], resolution, name="singleton",
                     exact_distance=lambda x: np.linalg.norm(np.atleast_2d(x) - p, axis=1))


def slab_set(dim=3, half_thickness=0.2, half_width=1.0, resolution=0.05) -> ClosedSet:
    """Solid slab ``|x_n| <= d`` sampled on a lattice inside a window."""
    n = int(round(2 * half_width / resolution)) + 1
    m = int(round(2 * half_thickness / resolution)) + 1
    axes = [np.linspace(-half_width, half_width, n)] * (dim - 1) + [np.linspace(-half_thickness, half_thickness, m)]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    lo, hi = np.full(dim, -half_width), np.full(dim, half_width)
    return ClosedSet.from_points(pts, resolution, window=(lo, hi), name="slab")


def cylinder_set(radius=0.5, half_length=1.0, resolution=0.03) -> ClosedSet:
    k = int(np.ceil(2 * np.pi * radius / resolution))
    t = 2 * np.pi * np.arange(k) / k
    z = np.linspace(-half_length, half_length, int(round(2 * half_length / resolution)) + 1)
    T, Zc = np.meshgrid(t, z, indexing="ij")
    pts = np.stack([radius * np.cos(T).ravel(), radius * np.sin(T).ravel(), Zc.ravel()], axis=1)
    window = (np.array([-2.0, -2.0, -half_length]), np.array([2.0, 2.0, half_length]))
    return ClosedSet.from_points(pts, max(resolution, 2 * np.pi * radius / k), window=window, name="cylinder")


REGION_SHAPES = {
    "ball": lambda radius=1.0, dim=3: Sphere((0.0,) * dim, radius),
    "halfspace": lambda dim=3, axis=None: HalfSpace(tuple(np.eye(dim)[dim - 1 if axis is None else axis])),
    "slab": lambda half_width=0.2, dim=3: Slab(tuple(np.eye(dim)[dim - 1]), half_width),
    "cylinder": lambda radius=0.5: Cylinder((0.0, 0.0, 0.0), (0.0, 0.0, 1.0), radius),
}


CLOSED_SETS = {
    "sphere": sphere_set,
    "plane": plane_set,
    "half-plane": half_plane_set,
    "segment": segment_set,
    "singleton": singleton_set,
    "slab": slab_set,
    "cylinder": cylinder_set,
}


def build_closed_set(name, **params) -> ClosedSet:
    try:
        builder = CLOSED_SETS[name]
    except KeyError:
        raise InvalidInput(f"unknown closed-set fixture {name!r}") from None
    return builder(**params)


def build_region(name, **params):
    try:
        return REGION_SHAPES[name](**params)
    except KeyError:
        raise InvalidInput(f"unknown region fixture {name!r}") from None
