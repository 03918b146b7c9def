"""Fast sweeping kernels for the unsigned eikonal equation |grad d| = 1.

Frozen nodes keep their initial values; every other node is relaxed with
the Godunov upwind update in Gauss-Seidel order over all 2^n sweep
directions, repeated until nothing changes.
"""
import numba
import numpy as np


@numba.njit(cache=True)
def _solve(a, h, k):
    # sort the k neighbour values (insertion sort, k <= 3)
    for i in range(1, k):
        j = i
        while j > 0 and a[j - 1] > a[j]:
            t = a[j]; a[j] = a[j - 1]; a[j - 1] = t
            t = h[j]; h[j] = h[j - 1]; h[j - 1] = t
            j -= 1
    # grow the active set while the solution exceeds the next neighbour
    d = a[0] + h[0]
    s_w = 0.0
    s_wa = 0.0
    s_waa = 0.0
    for i in range(k):
        if i > 0 and d <= a[i]:
            break
        w = 1.0 / (h[i] * h[i])
        s_w += w
        s_wa += w * a[i]
        s_waa += w * a[i] * a[i]
        disc = s_wa * s_wa - s_w * (s_waa - 1.0)
        if disc < 0.0:
            disc = 0.0
        d = (s_wa + np.sqrt(disc)) / s_w
    return d


@numba.njit(cache=True)
def sweep2d(d, frozen, hx, hy, max_iter):
    nx, ny = d.shape
    a = np.empty(2)
    h = np.empty(2)
    big = np.inf
    for it in range(max_iter):
        changed = 0.0
        for sx in (1, -1):
            for sy in (1, -1):
                for ii in range(nx):
                    i = ii if sx == 1 else nx - 1 - ii
                    for jj in range(ny):
                        j = jj if sy == 1 else ny - 1 - jj
                        if frozen[i, j]:
                            continue
                        ax = big
                        if i > 0:
                            ax = d[i - 1, j]
                        if i < nx - 1 and d[i + 1, j] < ax:
                            ax = d[i + 1, j]
                        ay = big
                        if j > 0:
                            ay = d[i, j - 1]
                        if j < ny - 1 and d[i, j + 1] < ay:
                            ay = d[i, j + 1]
                        k = 0
                        if ax < big:
                            a[k] = ax; h[k] = hx; k += 1
                        if ay < big:
                            a[k] = ay; h[k] = hy; k += 1
                        if k == 0:
                            continue
                        new = _solve(a, h, k)
                        if new < d[i, j]:
                            diff = d[i, j] - new
                            if diff > changed or d[i, j] == big:
                                changed = diff if d[i, j] < big else 1.0
                            d[i, j] = new
        if changed <= 1e-14:
            break
    return d


@numba.njit(cache=True)
def sweep3d(d, frozen, hx, hy, hz, max_iter):
    nx, ny, nz = d.shape
    a = np.empty(3)
    h = np.empty(3)
    big = np.inf
    for it in range(max_iter):
        changed = 0.0
        for sx in (1, -1):
            for sy in (1, -1):
                for sz in (1, -1):
                    for ii in range(nx):
                        i = ii if sx == 1 else nx - 1 - ii
                        for jj in range(ny):
                            j = jj if sy == 1 else ny - 1 - jj
                            for kk in range(nz):
                                l = kk if sz == 1 else nz - 1 - kk
                                if frozen[i, j, l]:
                                    continue
                                ax = big
                                if i > 0:
                                    ax = d[i - 1, j, l]
                                if i < nx - 1 and d[i + 1, j, l] < ax:
                                    ax = d[i + 1, j, l]
                                ay = big
                                if j > 0:
                                    ay = d[i, j - 1, l]
                                if j < ny - 1 and d[i, j + 1, l] < ay:
                                    ay = d[i, j + 1, l]
                                az = big
                                if l > 0:
                                    az = d[i, j, l - 1]
                                if l < nz - 1 and d[i, j, l + 1] < az:
                                    az = d[i, j, l + 1]
                                k = 0
                                if ax < big:
                                    a[k] = ax; h[k] = hx; k += 1
                                if ay < big:
                                    a[k] = ay; h[k] = hy; k += 1
                                if az < big:
                                    a[k] = az; h[k] = hz; k += 1
                                if k == 0:
                                    continue
                                new = _solve(a, h, k)
                                if new < d[i, j, l]:
                                    diff = d[i, j, l] - new
                                    if diff > changed or d[i, j, l] == big:
                                        changed = diff if d[i, j, l] < big else 1.0
                                    d[i, j, l] = new
        if changed <= 1e-14:
            break
    return d


def sweep(d, frozen, spacing, max_iter=20):
    """Relax the non-frozen entries of ``d`` (modified in place and returned)."""
    d = np.ascontiguousarray(d, dtype=np.float64)
    frozen = np.ascontiguousarray(frozen, dtype=np.bool_)
    if d.ndim == 2:
        return sweep2d(d, frozen, float(spacing[0]), float(spacing[1]), max_iter)
    if d.ndim == 3:
        return sweep3d(d, frozen, float(spacing[0]), float(spacing[1]), float(spacing[2]), max_iter)
    raise ValueError("sweeping is implemented for 2D and 3D grids")
