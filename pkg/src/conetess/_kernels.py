"""Hot numeric kernels.

Every kernel here is written so that it runs both under ``numba.njit`` and as
plain Python. ``count_inside`` additionally has a vectorised numpy twin that
is selected when JIT is disabled.
"""
import math

import numpy as np

from ._jit import JIT_ENABLED, jit

_EPS = 1e-12


def _max_slack_py(M, box):
    # max t  s.t.  M z + t <= 0,  -box <= z <= box,  0 <= t <= 1
    # z is split as p - q with 0 <= p, q <= box. Dense tableau, Bland's rule.
    m = M.shape[0]
    k = M.shape[1]
    nv = 2 * k + 1
    nr = m + 2 * k + 1
    ncol = nv + nr + 1
    T = np.zeros((nr + 1, ncol))
    for r in range(m):
        for c in range(k):
            T[r, c] = M[r, c]
            T[r, k + c] = -M[r, c]
        T[r, 2 * k] = 1.0
    for c in range(k):
        T[m + c, c] = 1.0
        T[m + c, ncol - 1] = box
        T[m + k + c, k + c] = 1.0
        T[m + k + c, ncol - 1] = box
    T[m + 2 * k, 2 * k] = 1.0
    T[m + 2 * k, ncol - 1] = 1.0
    for r in range(nr):
        T[r, nv + r] = 1.0
    T[nr, 2 * k] = -1.0
    basis = np.empty(nr, dtype=np.int64)
    for r in range(nr):
        basis[r] = nv + r

    for _ in range(50 * ncol):
        enter = -1
        for c in range(ncol - 1):
            if T[nr, c] < -1e-12:
                enter = c
                break
        if enter < 0:
            break
        leave = -1
        best = np.inf
        for r in range(nr):
            a = T[r, enter]
            if a > 1e-12:
                ratio = T[r, ncol - 1] / a
                if ratio < best - 1e-15 or (abs(ratio - best) <= 1e-15 and basis[r] < basis[leave]):
                    best = ratio
                    leave = r
        if leave < 0:  # unbounded; cannot happen with the box rows
            break
        piv = T[leave, enter]
        for c in range(ncol):
            T[leave, c] /= piv
        for r in range(nr + 1):
            if r != leave:
                f = T[r, enter]
                if f != 0.0:
                    for c in range(ncol):
                        T[r, c] -= f * T[leave, c]
        basis[leave] = enter

    x = np.zeros(nv)
    for r in range(nr):
        if basis[r] < nv:
            x[basis[r]] = T[r, ncol - 1]
    z = np.empty(k)
    for c in range(k):
        z[c] = x[c] - x[k + c]
    return T[nr, ncol - 1], z


max_slack = jit(_max_slack_py)


def _incremental_cells_py(U, tol, capacity):
    n = U.shape[0]
    d = U.shape[1]
    signs = np.zeros((capacity, n), dtype=np.int8)
    wit = np.zeros((capacity, d))
    count = 1
    wit[0, 0] = 1.0
    for i in range(n):
        cur = count
        for c in range(cur):
            val = 0.0
            for a in range(d):
                val += U[i, a] * wit[c, a]
            keep = 1 if val < 0.0 else -1
            sides = np.empty(2, dtype=np.int8)
            sides[0] = keep
            sides[1] = -keep
            ntest = 1 if abs(val) > 1e-7 else 2
            start = 1 if ntest == 1 else 0
            feasible_keep = ntest == 1
            for s_idx in range(start, 2):
                s = sides[s_idx]
                M = np.empty((i + 1, d))
                for l in range(i):
                    for a in range(d):
                        M[l, a] = signs[c, l] * U[l, a]
                for a in range(d):
                    M[i, a] = s * U[i, a]
                t, z = max_slack(M, 1.0)
                if t > tol:
                    if s_idx == 0:
                        feasible_keep = True
                        for a in range(d):
                            wit[c, a] = z[a]
                    else:
                        if feasible_keep:
                            if count >= capacity:
                                return signs, -1
                            for l in range(i):
                                signs[count, l] = signs[c, l]
                            signs[count, i] = s
                            for a in range(d):
                                wit[count, a] = z[a]
                            count += 1
                        else:
                            for a in range(d):
                                wit[c, a] = z[a]
                            keep = s
                            feasible_keep = True
            signs[c, i] = keep
    return signs, count


incremental_cells = jit(_incremental_cells_py)


def _girard_area_py(V):
    # V: (m, 3) unit vectors, cyclically ordered vertices of a convex spherical polygon
    m = V.shape[0]
    total = 0.0
    for i in range(m):
        a = V[(i - 1) % m]
        b = V[i]
        c = V[(i + 1) % m]
        ab = a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
        cb = c[0] * b[0] + c[1] * b[1] + c[2] * b[2]
        t1 = a - ab * b
        t2 = c - cb * b
        cx = t1[1] * t2[2] - t1[2] * t2[1]
        cy = t1[2] * t2[0] - t1[0] * t2[2]
        cz = t1[0] * t2[1] - t1[1] * t2[0]
        s = math.sqrt(cx * cx + cy * cy + cz * cz)
        co = t1[0] * t2[0] + t1[1] * t2[1] + t1[2] * t2[2]
        total += math.atan2(s, co)
    return total - (m - 2) * math.pi


girard_area = jit(_girard_area_py)


def _count_inside_loop(X, G, tol):
    count = 0
    for i in range(X.shape[0]):
        inside = True
        for r in range(G.shape[0]):
            v = 0.0
            for a in range(X.shape[1]):
                v += G[r, a] * X[i, a]
            if v > tol:
                inside = False
                break
        if inside:
            count += 1
    return count


def _count_inside_np(X, G, tol):
    if G.shape[0] == 0:
        return X.shape[0]
    return int(np.count_nonzero((X @ G.T <= tol).all(axis=1)))


if JIT_ENABLED:
    count_inside = jit(_count_inside_loop)
else:
    count_inside = _count_inside_np
