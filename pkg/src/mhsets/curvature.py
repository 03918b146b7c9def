"""Level-set curvature, barrier inequalities and tube (Riccati) geometry.

Principal curvatures are reported with respect to the unit normal that
points *into* the region ``{u <= 0}``: a ball of radius r has all
curvatures ``+1/r``.  Curvature propagation along normal geodesics is
restricted to space forms of constant sectional curvature K, where the
second fundamental form obeys ``B' = K I + B^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tolerances as tol
from .errors import (
    ContainmentFailure,
    CurvatureBlowup,
    DegenerateGradient,
    InvalidInput,
    NoContact,
)
from .linalg import SymBilinearForm, trace_m, trace_m_batch
from .shapes import Shape


@dataclass(frozen=True)
class SpaceFormAmbient:
    n: int
    K: float = 0.0

    def __post_init__(self):
        if self.n < 2:
            raise InvalidInput("ambient dimension must be at least 2")
        if not math.isfinite(self.K):
            raise InvalidInput("sectional curvature must be finite")

    @property
    def rho(self):
        """Ricci lower bound ``(n - 1) K``."""
        return (self.n - 1) * self.K


@dataclass(frozen=True)
class PrincipalCurvatures:
    values: np.ndarray
    form: SymBilinearForm
    basis: np.ndarray = field(repr=False)
    normal: np.ndarray = field(repr=False)


def _derivs(u, P):
    """Batched gradient and Hessian of a shape, field or test function."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if isinstance(u, Shape):
        return u.gradient(P), u.hessian(P)
    if hasattr(u, "gradient_at"):
        return u.gradient_at(P), u.hessian_at(P)
    return u.gradients(P), u.hessians(P)


def _values(u, P):
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if isinstance(u, Shape):
        return u.distance(P)
    if hasattr(u, "value_at"):
        return u.value_at(P)
    return u.values(P)


def tangent_bases(normals):
    """Deterministic orthonormal complements, shape ``(k, n, n-1)``."""
    k, n = normals.shape
    M = np.concatenate([normals[:, :, None], np.broadcast_to(np.eye(n), (k, n, n))], axis=2)
    Q, _ = np.linalg.qr(M)
    return Q[:, :, 1:n]


def tangential_forms(grad, hess):
    """Second fundamental forms ``T^T D^2u T / |Du|`` of the level sets."""
    gn = np.linalg.norm(grad, axis=1)
    nrm = grad / np.maximum(gn, 1e-300)[:, None]
    T = tangent_bases(nrm)
    B = np.einsum("kia,kij,kjb->kab", T, hess, T) / np.maximum(gn, 1e-300)[:, None, None]
    return B, T, nrm, gn


def level_set_curvatures(u, p, shrink=False, scale=1.0) -> PrincipalCurvatures:
    """Principal curvatures of the level set of ``u`` through ``p``.

    ``u`` is a signed distance (shape or field) or any function with
    batched derivatives.  ``shrink=True`` lowers every curvature by
    ``NEAR_CUT_SHRINK / scale``, the strict-containment adjustment used at
    points close to the cut locus before propagation.
    """
    g, H = _derivs(u, p)
    gn = float(np.linalg.norm(g[0]))
    if gn < 0.5:
        raise DegenerateGradient(f"|grad u| = {gn:.3g} < 0.5 (not a usable signed distance here)")
    B, T, nrm, _ = tangential_forms(g, H)
    if shrink:
        B = B - (tol.NEAR_CUT_SHRINK / scale) * np.eye(B.shape[-1])
    form = SymBilinearForm(B[0])
    return PrincipalCurvatures(form.eigenvalues.copy(), form, T[0], -nrm[0])


# --------------------------------------------------------------- barrier


@dataclass(frozen=True)
class BarrierReport:
    n_touching: int
    max_excess: float
    worst_point: np.ndarray
    tolerance: float
    curvature_sums: np.ndarray = field(repr=False)

    @property
    def passed(self):
        return self.max_excess <= self.tolerance

    def to_dict(self):
        return {"n_touching": self.n_touching, "max_excess": float(self.max_excess),
                "worst_point": [float(v) for v in self.worst_point], "tolerance": float(self.tolerance),
                "verdict": "pass" if self.passed else "excess"}


def barrier_check(Z, N, m, h, dx=None) -> BarrierReport:
    """Barrier inequality ``kappa_1 + ... + kappa_m <= h`` at touching points.

    ``N`` is the containing region as a signed distance (shape or field).
    Touching points are samples of ``Z`` within ``TOUCH_BAND_CELLS`` cells
    of the boundary of ``N``.  Reports the largest excess of the curvature
    sum over ``h``; a positive excess means the configuration is
    inconsistent with ``Z`` being an (m,h) set.
    """
    if dx is None:
        dx = N.grid.dx if hasattr(N, "grid") else Z.resolution
    P = Z.points
    u = _values(N, P)
    if np.max(u) > dx:
        raise ContainmentFailure(f"Z leaves N by {np.max(u):.3g} (> one cell)")
    touch = np.abs(u) <= tol.TOUCH_BAND_CELLS * dx
    if not touch.any():
        raise NoContact(f"no point of Z within {tol.TOUCH_BAND_CELLS:g} cell(s) of the boundary of N")
    Pt = P[touch]
    g, H = _derivs(N, Pt)
    B, _, _, _ = tangential_forms(g, H)
    sums = trace_m_batch(B, m)
    excess = sums - h
    k = int(np.argmax(excess))
    scale = max(abs(h), float(np.max(np.abs(sums))), 1e-12)
    return BarrierReport(int(touch.sum()), float(excess[k]), Pt[k].copy(), tol.BARRIER_REL_TOL * scale, sums)


# --------------------------------------------------------------- Riccati


def riccati_closed_form(k0, K, s):
    """Solution of ``k' = K + k^2`` with ``k(0) = k0`` (vectorised in k0)."""
    k0 = np.asarray(k0, dtype=float)
    s = float(s)
    if K == 0:
        return k0 / (1.0 - s * k0)
    if K > 0:
        a = math.sqrt(K)
        return a * np.tan(a * s + np.arctan(k0 / a))
    a = math.sqrt(-K)
    out = np.empty_like(k0)
    small = np.abs(k0) < a
    out[small] = -a * np.tanh(a * s - np.arctanh(k0[small] / a))
    big = np.abs(k0) > a
    out[big] = -a / np.tanh(a * s + np.arctanh(-a / k0[big]))
    eq = ~(small | big)
    out[eq] = k0[eq]
    return out


def blowup_distance(k0, K):
    """Smallest s > 0 at which some eigenvalue blows up (inf if none)."""
    k0 = np.atleast_1d(np.asarray(k0, dtype=float))
    if K == 0:
        pos = k0[k0 > 0]
        return float(np.min(1.0 / pos)) if len(pos) else math.inf
    if K > 0:
        a = math.sqrt(K)
        return float(np.min((math.pi / 2 - np.arctan(k0 / a)) / a))
    a = math.sqrt(-K)
    big = k0[k0 > a]
    return float(np.min(np.arctanh(a / big) / a)) if len(big) else math.inf


@dataclass(frozen=True)
class RiccatiResult:
    form: SymBilinearForm
    s: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)
    closed_form: np.ndarray = field(repr=False)

    def to_csv(self):
        k = self.eigenvalues.shape[1]
        head = "s," + ",".join(f"kappa_{i + 1}" for i in range(k))
        rows = [",".join(f"{v:.17g}" for v in (si, *ev)) for si, ev in zip(self.s, self.eigenvalues)]
        return "\n".join([head] + rows) + "\n"


def riccati_propagate(B0, ambient: SpaceFormAmbient, s, record=True) -> RiccatiResult:
    """Propagate a second fundamental form a distance ``s`` along the normal.

    Classical fourth-order Runge-Kutta on ``B' = K I + B^2`` with step
    ``min(RICCATI_MAX_STEP, s / 100)``.  In a space form the equation
    diagonalises in the eigenbasis of ``B0``, so the closed-form
    eigenvalues at ``s`` are returned alongside for cross-checking.
    Raises :class:`CurvatureBlowup` if ``|kappa|`` exceeds
    ``BLOWUP_CURVATURE`` before ``s``.
    """
    B0 = B0 if isinstance(B0, SymBilinearForm) else SymBilinearForm(B0)
    if s < 0:
        raise InvalidInput("distance must be nonnegative")
    K = float(ambient.K)
    k = B0.dim
    s_star = blowup_distance(B0.eigenvalues, K)
    if s == 0:
        ev = B0.eigenvalues[None]
        return RiccatiResult(B0, np.zeros(1), ev, B0.eigenvalues.copy())
    nsteps = max(100, int(math.ceil(s / tol.RICCATI_MAX_STEP)))
    dt = s / nsteps
    KI = K * np.eye(k)

    def rhs(B):
        return KI + B @ B

    B = B0.entries.copy()
    ss = [0.0]
    evs = [B0.eigenvalues.copy()]
    for i in range(nsteps):
        k1 = rhs(B)
        k2 = rhs(B + 0.5 * dt * k1)
        k3 = rhs(B + 0.5 * dt * k2)
        k4 = rhs(B + dt * k3)
        with np.errstate(over="ignore", invalid="ignore"):
            B = B + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(B)) or np.max(np.abs(B)) > tol.BLOWUP_CURVATURE:
            where = s_star if math.isfinite(s_star) and s_star <= (i + 1) * dt + dt else (i + 1) * dt
            raise CurvatureBlowup(where)
        if record:
            ss.append((i + 1) * dt)
            evs.append(np.linalg.eigvalsh(0.5 * (B + B.T)))
    form = SymBilinearForm(B)
    if not record:
        ss.append(s)
        evs.append(form.eigenvalues.copy())
    return RiccatiResult(form, np.array(ss), np.array(evs), np.sort(riccati_closed_form(B0.eigenvalues, K, s)))


@dataclass(frozen=True)
class ComparisonReport:
    per_eigenvalue: tuple
    trace_m: tuple
    trace: tuple

    def as_tuple(self):
        return (self.per_eigenvalue, self.trace_m, self.trace)

    @property
    def passed(self):
        return all(ok for ok, _ in self.as_tuple())

    def to_dict(self):
        return {name: {"pass": bool(ok), "slack": float(sl)}
                for name, (ok, sl) in zip(("per_eigenvalue", "trace_m", "trace"), self.as_tuple())}


def comparison_check(B_p, B_q, ambient: SpaceFormAmbient, d, m, rtol=1e-9) -> ComparisonReport:
    """The three eigenvalue comparison inequalities along a normal geodesic
    of length ``d``: per eigenvalue with ``K d``, Trace_m with ``m K d`` and
    the full trace with ``rho d`` (``rho = dim(B) K``)."""
    Bp = B_p if isinstance(B_p, SymBilinearForm) else SymBilinearForm(B_p)
    Bq = B_q if isinstance(B_q, SymBilinearForm) else SymBilinearForm(B_q)
    if Bp.dim != Bq.dim:
        raise InvalidInput(f"dimension mismatch {Bp.dim} != {Bq.dim}")
    if not d > 0:
        raise InvalidInput("distance must be positive")
    K = float(ambient.K)
    ep, eq = Bp.eigenvalues, Bq.eigenvalues
    scale = max(1.0, float(np.max(np.abs(ep))), float(np.max(np.abs(eq))))
    slack1 = float(np.min(eq - ep - K * d))
    slack2 = trace_m(Bq, m) - trace_m(Bp, m) - m * K * d
    slack3 = float(np.sum(eq) - np.sum(ep) - Bp.dim * K * d)
    t = -rtol * scale
    return ComparisonReport((slack1 >= t, slack1), (slack2 >= t, slack2), (slack3 >= t, slack3))


# --------------------------------------------------------------- converse


@dataclass(frozen=True)
class ConverseReport:
    point: np.ndarray
    H_m: float
    h: float
    margin: float
    region: object = field(default=None, repr=False)

    @property
    def holds(self):
        return self.H_m > self.h

    def to_dict(self):
        return {"point": [float(v) for v in self.point], "H_m": float(self.H_m), "h": float(self.h),
                "margin": float(self.margin), "verdict": "H_m > h" if self.holds else "H_m <= h"}


def converse_barrier_build(Z, p, f, m, h, grid=None) -> ConverseReport:
    """Region ``N = {f <= f(p)}`` from a violating test function.

    ``f`` is normalised so ``|Df(p)| = 1``; the operation refuses
    (:class:`InvalidInput`) when the normalised margin is not positive.
    Checks ``Z`` lies in ``N`` and returns ``H_m`` of the boundary of ``N``
    at ``p`` (sum of the m smallest principal curvatures, inward normal).
    With a ``grid`` the region is also returned as a signed distance field.
    """
    from .fields import ScalarField, signed_distance

    p = np.asarray(p, dtype=float)
    g, H = _derivs(f, p)
    gn = float(np.linalg.norm(g[0]))
    if gn <= tol.TOL_GRAD:
        raise DegenerateGradient("normalisation needs a nonvanishing gradient at p")
    margin = trace_m(H[0] / gn, m) - h
    if margin <= 0:
        raise InvalidInput("test function does not violate the inequality at p")
    vals = f.values(Z.points)
    fp = float(f.values(p[None])[0])
    if np.max(vals) > fp + tol.TOL_MAX * max(1.0, abs(fp)):
        raise ContainmentFailure("Z is not contained in the sublevel region {f <= f(p)}")
    B, _, _, _ = tangential_forms(g, H)
    Hm = trace_m(B[0], m)
    region = None
    if grid is not None:
        phi = ScalarField(grid, (f.values(grid.nodes()) - fp).reshape(grid.shape) / gn)
        region = signed_distance(phi, grid)
    return ConverseReport(p, float(Hm), float(h), float(margin), region)
