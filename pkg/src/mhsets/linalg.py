"""Small dense symmetric linear algebra.

Eigenvalues come from a compiled cyclic Jacobi solver that walks a stack
of matrices with a fixed (p, q) sweep order, so results are reproducible
bit-for-bit for a given input.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numba
import numpy as np

from . import tolerances as tol
from .errors import InvalidInput


def _as_stack(a):
    a = np.asarray(a, dtype=float)
    if a.ndim == 2:
        return a[None], True
    if a.ndim == 3:
        return a, False
    raise InvalidInput(f"expected an (n, n) or (k, n, n) array, got shape {a.shape}")


@numba.njit(cache=True)
def _jacobi_sweeps(A, V, target, max_sweeps):
    # Cyclic Jacobi in place, one matrix at a time, fixed (p, q) order.
    k, n, _ = A.shape
    for m in range(k):
        for _ in range(max_sweeps):
            off = 0.0
            for i in range(n):
                for j in range(n):
                    if i != j:
                        off += A[m, i, j] * A[m, i, j]
            if off <= target[m]:
                break
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = A[m, p, q]
                    if apq == 0.0:
                        continue
                    tau = (A[m, q, q] - A[m, p, p]) / (2.0 * apq)
                    t = (1.0 if tau >= 0.0 else -1.0) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                    c = 1.0 / np.sqrt(1.0 + t * t)
                    s = t * c
                    for i in range(n):
                        xp = A[m, i, p]
                        xq = A[m, i, q]
                        A[m, i, p] = c * xp - s * xq
                        A[m, i, q] = s * xp + c * xq
                    for j in range(n):
                        xp = A[m, p, j]
                        xq = A[m, q, j]
                        A[m, p, j] = c * xp - s * xq
                        A[m, q, j] = s * xp + c * xq
                    A[m, p, q] = 0.0
                    A[m, q, p] = 0.0
                    for i in range(n):
                        vp = V[m, i, p]
                        vq = V[m, i, q]
                        V[m, i, p] = c * vp - s * vq
                        V[m, i, q] = s * vp + c * vq


def jacobi_eigh(a, max_sweeps: int = tol.JACOBI_MAX_SWEEPS):
    """Eigen-decompose one symmetric matrix or a stack of them.

    Returns ``(w, v)`` with ascending eigenvalues ``w`` and orthonormal
    eigenvectors in the columns of ``v`` (stacked if the input was).
    """
    stack, single = _as_stack(a)
    if stack.shape[-1] != stack.shape[-2]:
        raise InvalidInput("matrix must be square")
    if not np.all(np.isfinite(stack)):
        raise InvalidInput("non-finite matrix entries")
    k, n, _ = stack.shape
    if n > tol.JACOBI_MAX_DIM:
        raise InvalidInput(f"dimension {n} exceeds the dense Jacobi limit {tol.JACOBI_MAX_DIM}")
    A = 0.5 * (stack + np.swapaxes(stack, 1, 2))
    V = np.broadcast_to(np.eye(n), (k, n, n)).copy()
    scale = np.sqrt(np.sum(A * A, axis=(1, 2)))
    target = (np.finfo(float).eps * np.maximum(scale, np.finfo(float).tiny)) ** 2
    _jacobi_sweeps(A, V, target, int(max_sweeps))
    w = np.diagonal(A, axis1=1, axis2=2).copy()
    order = np.argsort(w, axis=1, kind="stable")
    w = np.take_along_axis(w, order, axis=1)
    V = np.take_along_axis(V, order[:, None, :], axis=2)
    if single:
        return w[0], V[0]
    return w, V


@dataclass(frozen=True)
class EigenSystem:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


@dataclass(frozen=True, eq=False)
class SymBilinearForm:
    """Dense symmetric form; entries are symmetrized on construction."""

    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise InvalidInput(f"form must be a nonempty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InvalidInput("non-finite entries")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n))

    @classmethod
    def diag(cls, values):
        return cls(np.diag(np.asarray(values, dtype=float)))

    @property
    def dim(self):
        return self.entries.shape[0]

    @cached_property
    def eigen(self) -> EigenSystem:
        w, v = jacobi_eigh(self.entries)
        return EigenSystem(w, v)

    @property
    def eigenvalues(self):
        return self.eigen.eigenvalues

    def shifted(self, t):
        return SymBilinearForm(self.entries + t * np.eye(self.dim))

    def __add__(self, other):
        return SymBilinearForm(self.entries + _entries(other))

    def __sub__(self, other):
        return SymBilinearForm(self.entries - _entries(other))

    def __mul__(self, c):
        return SymBilinearForm(float(c) * self.entries)

    __rmul__ = __mul__

    def __repr__(self):
        return f"SymBilinearForm(dim={self.dim}, eigenvalues={np.round(self.eigenvalues, 6).tolist()})"


def _entries(S):
    if isinstance(S, SymBilinearForm):
        return S.entries
    return np.asarray(S, dtype=float)


def _form(S) -> SymBilinearForm:
    return S if isinstance(S, SymBilinearForm) else SymBilinearForm(S)


def eigh(S) -> EigenSystem:
    return _form(S).eigen


def trace_m(S, m: int) -> float:
    """Sum of the ``m`` smallest eigenvalues of ``S``."""
    S = _form(S)
    if not (1 <= int(m) <= S.dim) or int(m) != m:
        raise InvalidInput(f"m={m} must be an integer in [1, {S.dim}]")
    return float(np.sum(S.eigenvalues[: int(m)]))


def trace_m_batch(stack, m: int):
    """Vectorised ``trace_m`` over a ``(k, n, n)`` stack."""
    stack = np.asarray(stack, dtype=float)
    n = stack.shape[-1]
    if not (1 <= int(m) <= n):
        raise InvalidInput(f"m={m} must be in [1, {n}]")
    if stack.shape[0] == 0:
        return np.zeros(0)
    w, _ = jacobi_eigh(stack)
    return np.sum(w[:, : int(m)], axis=1)


def trace_m_of_shifted(S, m: int, t: float) -> float:
    return trace_m(_form(S).shifted(t), m)


@dataclass(frozen=True)
class DominanceReport:
    holds: bool
    gaps: np.ndarray

    def __bool__(self):
        return self.holds


def dominance_check(Q, Qp, rtol: float = tol.SYMMETRY) -> DominanceReport:
    """Check ``lambda_k(Q) <= lambda_k(Qp)`` for every k.

    ``gaps[k] = lambda_k(Qp) - lambda_k(Q)``; tiny negative gaps below
    ``rtol * max(1, |Q|, |Qp|)`` are treated as rounding.
    """
    Q, Qp = _form(Q), _form(Qp)
    if Q.dim != Qp.dim:
        raise InvalidInput(f"dimension mismatch {Q.dim} != {Qp.dim}")
    gaps = Qp.eigenvalues - Q.eigenvalues
    scale = max(1.0, float(np.max(np.abs(Q.eigenvalues))), float(np.max(np.abs(Qp.eigenvalues))))
    return DominanceReport(bool(np.all(gaps >= -rtol * scale)), gaps)
