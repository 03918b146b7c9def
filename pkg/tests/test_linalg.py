import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mhsets.errors import InvalidInput
from mhsets.linalg import (
    SymBilinearForm,
    dominance_check,
    eigh,
    jacobi_eigh,
    trace_m,
    trace_m_batch,
    trace_m_of_shifted,
)


def random_sym(rng, n, scale=1.0):
    a = rng.normal(size=(n, n)) * scale
    return 0.5 * (a + a.T)


def charpoly_roots(a, dps=40):
    """Eigenvalues as roots of the characteristic polynomial (Faddeev-LeVerrier, mpmath)."""
    with mpmath.workdps(dps):
        n = a.shape[0]
        A = mpmath.matrix(a.tolist())
        coeffs = [mpmath.mpf(1)]
        M = mpmath.zeros(n, n)
        I = mpmath.eye(n)
        for k in range(1, n + 1):
            M = A * M + coeffs[-1] * I
            AM = A * M
            c = -sum(AM[i, i] for i in range(n)) / k
            coeffs.append(c)
        roots = mpmath.polyroots(coeffs, maxsteps=400, extraprec=200)
        return np.sort(np.array([float(mpmath.re(r)) for r in roots]))


def test_identity_and_diagonal():
    np.testing.assert_array_equal(eigh(np.eye(3)).eigenvalues, [1, 1, 1])
    np.testing.assert_array_equal(eigh(np.diag([5.0, -1.0, 0.0])).eigenvalues, [-1, 0, 5])


def test_symmetrized_on_construction():
    a = np.array([[1.0, 2.0], [0.0, 1.0]])
    S = SymBilinearForm(a)
    assert S.entries[0, 1] == S.entries[1, 0] == 1.0


def test_non_finite_rejected():
    with pytest.raises(InvalidInput):
        SymBilinearForm([[np.nan, 0], [0, 1]])
    with pytest.raises(InvalidInput):
        jacobi_eigh(np.array([[np.inf]]))


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_against_characteristic_polynomial_roots(n):
    rng = np.random.default_rng(100 + n)
    for _ in range(20):
        a = random_sym(rng, n)
        w = eigh(a).eigenvalues
        oracle = charpoly_roots(a)
        scale = max(1.0, np.max(np.abs(oracle)))
        np.testing.assert_allclose(w, oracle, atol=1e-9 * scale, rtol=0)


def test_reconstruction_and_orthonormality():
    rng = np.random.default_rng(1)
    for n in range(1, 9):
        a = random_sym(rng, n, scale=10.0)
        es = eigh(a)
        v = es.eigenvectors
        np.testing.assert_allclose(v.T @ v, np.eye(n), atol=1e-12)
        assert np.linalg.norm(es.reconstruct() - a) <= 1e-10 * np.linalg.norm(a)
        assert np.all(np.diff(es.eigenvalues) >= 0)


def test_batch_matches_single():
    rng = np.random.default_rng(2)
    stack = np.array([random_sym(rng, 4) for _ in range(7)])
    w, v = jacobi_eigh(stack)
    for k in range(7):
        wk, vk = jacobi_eigh(stack[k])
        np.testing.assert_array_equal(w[k], wk)
        np.testing.assert_array_equal(v[k], vk)


def test_deterministic():
    rng = np.random.default_rng(3)
    a = random_sym(rng, 6)
    w1, v1 = jacobi_eigh(a)
    w2, v2 = jacobi_eigh(a.copy())
    assert np.array_equal(w1, w2) and np.array_equal(v1, v2)


def test_trace_m_examples():
    assert trace_m(np.eye(3), 2) == 2.0
    assert trace_m(np.diag([-1.0, 0.0, 5.0]), 2) == -1.0
    # Hessian of x1 + x1^2 + x3^2 at the origin
    hess = np.diag([2.0, 0.0, 2.0])
    grad = np.array([1.0, 0.0, 0.0])
    assert trace_m(hess, 2) == 2.0
    assert np.linalg.norm(grad) == 1.0


def test_trace_m_range():
    with pytest.raises(InvalidInput):
        trace_m(np.eye(3), 0)
    with pytest.raises(InvalidInput):
        trace_m(np.eye(3), 4)


def test_trace_m_shifted_examples():
    assert trace_m_of_shifted(np.eye(3), 2, 1.0) == 4.0
    assert trace_m_of_shifted(np.diag([-1.0, 0.0, 5.0]), 2, -2.0) == -5.0
    rng = np.random.default_rng(4)
    a = random_sym(rng, 5)
    assert abs(trace_m_of_shifted(a, 3, 0.7) - (trace_m(a, 3) + 2.1)) <= 1e-12


def test_trace_m_batch_matches_scalar():
    rng = np.random.default_rng(5)
    stack = np.array([random_sym(rng, 3) for _ in range(20)])
    batch = trace_m_batch(stack, 2)
    single = [trace_m(s, 2) for s in stack]
    np.testing.assert_allclose(batch, single, rtol=0, atol=1e-14)


def test_concavity_of_trace_m():
    rng = np.random.default_rng(6)
    for _ in range(1000):
        n = int(rng.integers(2, 7))
        m = int(rng.integers(1, n + 1))
        a, b = random_sym(rng, n), random_sym(rng, n)
        assert trace_m((a + b) / 2, m) >= 0.5 * (trace_m(a, m) + trace_m(b, m)) - 1e-12


def test_dominance_examples():
    rng = np.random.default_rng(7)
    q = random_sym(rng, 4)
    rep = dominance_check(q, q)
    assert rep.holds and np.all(rep.gaps == 0)
    v = rng.normal(size=4)
    assert dominance_check(q, q + np.outer(v, v)).holds
    rep = dominance_check(q, q - 0.1 * np.eye(4))
    assert not rep.holds and np.all(rep.gaps < 0)
    with pytest.raises(InvalidInput):
        dominance_check(np.eye(2), np.eye(3))


def test_dominance_random_psd_perturbations():
    rng = np.random.default_rng(8)
    for _ in range(1000):
        n = int(rng.integers(1, 7))
        q = random_sym(rng, n)
        b = rng.normal(size=(n, n))
        assert dominance_check(q, q + b @ b.T).holds


def test_eigenvalue_lower_bound_of_flux_jacobian():
    # eigenvalues of s*H + d d^T dominate those of s*H for s >= 0
    rng = np.random.default_rng(9)
    for _ in range(300):
        n = int(rng.integers(2, 6))
        H = random_sym(rng, n)
        d = rng.normal(size=n)
        s = float(rng.uniform(0, 3))
        assert dominance_check(s * H, s * H + np.outer(d, d)).holds


@settings(max_examples=200, deadline=None)
@given(
    arrays(np.float64, (4, 4), elements=st.floats(-1e3, 1e3)),
    st.integers(1, 4),
    st.floats(-100, 100),
)
def test_affine_identity_property(a, m, t):
    a = 0.5 * (a + a.T)
    scale = max(1.0, np.abs(a).max(), abs(t))
    assert abs(trace_m_of_shifted(a, m, t) - (trace_m(a, m) + m * t)) <= 1e-12 * scale * 4
