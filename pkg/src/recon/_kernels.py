"""Compiled inner loops for filtering, smoothing and path simulation.

All kernels take dense arrays. Missing observations are encoded by a boolean
mask; per-period quantities for missing rows are stored as zeros so that the
backward recursions can use the full ``Z`` without re-indexing.
"""

from __future__ import annotations

import numpy as np
from numba import njit

LOG_2PI = np.log(2.0 * np.pi)

STATUS_OK = 0
STATUS_SINGULAR = 1
STATUS_INCONSISTENT = 2
STATUS_NONFINITE = 3

# Eigenvalues of the innovation covariance below this fraction of the largest
# one are treated as exact zeros.
SINGULAR_RTOL = 1e-12


@njit(cache=True)
def _sym(A):
    return 0.5 * (A + A.T)


@njit(cache=True)
def kalman_filter_kernel(Y, mask, Z, T, c, RRt, a1, P1, allow_singular):
    n_t, n = Y.shape
    m = Z.shape[1]
    a_pred = np.zeros((n_t + 1, m))
    a_filt = np.zeros((n_t, m))
    P_pred = np.zeros((n_t + 1, m, m))
    P_filt = np.zeros((n_t, m, m))
    v_full = np.zeros((n_t, n))
    Finv_full = np.zeros((n_t, n, n))
    F_full = np.zeros((n_t, n, n))
    gain = np.zeros((n_t, m, n))
    ll = np.zeros(n_t)
    rank = np.zeros(n_t, dtype=np.int64)

    a = a1.copy()
    P = P1.copy()
    a_pred[0] = a
    P_pred[0] = P
    status = STATUS_OK
    fail_t = -1
    for t in range(n_t):
        idx = np.nonzero(~mask[t])[0]
        k = idx.size
        if k == 0:
            af = a.copy()
            Pf = P.copy()
        else:
            Zt = np.ascontiguousarray(Z[idx])
            PZ = P @ Zt.T
            F = _sym(Zt @ PZ)
            v = np.empty(k)
            for i in range(k):
                v[i] = Y[t, idx[i]]
            v = v - Zt @ a
            if not np.all(np.isfinite(F)) or not np.all(np.isfinite(v)):
                status = STATUS_NONFINITE
                fail_t = t
                break
            lam, U = np.linalg.eigh(F)
            scale = max(lam[k - 1], 1e-300)
            tol = SINGULAR_RTOL * scale
            keep = lam > tol
            nk = 0
            for i in range(k):
                if keep[i]:
                    nk += 1
            if nk < k and not allow_singular:
                status = STATUS_SINGULAR
                fail_t = t
                break
            Finv = np.zeros((k, k))
            logdet = 0.0
            quad = 0.0
            vscale = 1.0 + np.max(np.abs(v))
            for i in range(k):
                u = U[:, i]
                proj = u @ v
                if keep[i]:
                    Finv += np.outer(u, u) / lam[i]
                    logdet += np.log(lam[i])
                    quad += proj * proj / lam[i]
                elif abs(proj) > 1e-7 * vscale:
                    status = STATUS_INCONSISTENT
                    fail_t = t
            if status != STATUS_OK:
                break
            ll[t] = -0.5 * (nk * LOG_2PI + logdet + quad)
            rank[t] = nk
            K = PZ @ Finv
            af = a + K @ v
            Pf = _sym(P - K @ PZ.T)
            for i in range(k):
                v_full[t, idx[i]] = v[i]
                for j in range(k):
                    Finv_full[t, idx[i], idx[j]] = Finv[i, j]
                    F_full[t, idx[i], idx[j]] = F[i, j]
                for r in range(m):
                    gain[t, r, idx[i]] = K[r, i]
        a_filt[t] = af
        a = c + T @ af
        P = _sym(T @ Pf @ T.T + RRt)
        a_pred[t + 1] = a
        P_filt[t] = Pf
        P_pred[t + 1] = P
    return (a_pred, P_pred, a_filt, P_filt, v_full, Finv_full, F_full, gain,
            ll, rank, status, fail_t)


@njit(cache=True)
def state_smoother_kernel(Z, T, a_pred, P_pred, v_full, Finv_full, gain, store_cov):
    """Fixed-interval smoother in the (r, N) backward form.

    ``gain`` holds the filtered gain P Z' F^-1 (zero columns where missing).
    """
    n_t = v_full.shape[0]
    m = Z.shape[1]
    eye = np.eye(m)
    r = np.zeros(m)
    N = np.zeros((m, m))
    alpha = np.zeros((n_t, m))
    if store_cov:
        V = np.zeros((n_t, m, m))
    else:
        V = np.zeros((1, m, m))
    for t in range(n_t - 1, -1, -1):
        ZF = Z.T @ Finv_full[t]
        L = T @ (eye - gain[t] @ Z)
        r = ZF @ v_full[t] + L.T @ r
        P = P_pred[t]
        alpha[t] = a_pred[t] + P @ r
        if store_cov:
            N = ZF @ Z + L.T @ N @ L
            V[t] = _sym(P - P @ N @ P)
    return alpha, V


@njit(cache=True)
def simulate_kernel(T, c, R, a1, S1, z0, eta):
    """Path of ``alpha_{t+1} = c + T alpha_t + R eta_t`` with ``alpha_1 = a1 + S1 z0``."""
    n_t = eta.shape[0] + 1
    m = T.shape[0]
    out = np.empty((n_t, m))
    out[0] = a1 + S1 @ z0
    for t in range(1, n_t):
        out[t] = c + T @ out[t - 1] + R @ eta[t - 1]
    return out


@njit(cache=True)
def simulation_smoother_kernel(Y, mask, Z, T, c, R, a1, P1, S1, z0, eta, allow_singular):
    """One joint draw of the states given ``Y`` by mean correction.

    Simulates an unconditional path, smooths the difference between the data
    and the simulated observations (zero intercept and initial mean) and adds
    the smoothed correction back. Once the covariance recursion has converged
    under an unchanged missing pattern its quantities are reused.
    Returns ``(draw, status, fail_t)``.
    """
    n_t, n = Y.shape
    m = T.shape[0]
    nr = R.shape[1]

    # unconditional path and observation residuals
    plus = np.empty((n_t, m))
    for i in range(m):
        s = a1[i]
        for j in range(m):
            s += S1[i, j] * z0[j]
        plus[0, i] = s
    for t in range(1, n_t):
        for i in range(m):
            s = c[i]
            for j in range(m):
                s += T[i, j] * plus[t - 1, j]
            for q in range(nr):
                s += R[i, q] * eta[t - 1, q]
            plus[t, i] = s
    ystar = np.zeros((n_t, n))
    for t in range(n_t):
        for k in range(n):
            if not mask[t, k]:
                s = Y[t, k]
                for j in range(m):
                    s -= Z[k, j] * plus[t, j]
                ystar[t, k] = s

    Q = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            s = 0.0
            for q in range(nr):
                s += R[i, q] * R[j, q]
            Q[i, j] = s

    a_pred = np.zeros((n_t, m))
    P_pred = np.zeros((n_t, m, m))
    v_full = np.zeros((n_t, n))
    Finv_full = np.zeros((n_t, n, n))
    gain = np.zeros((n_t, m, n))
    a = np.zeros(m)
    P = P1.copy()
    Pf = np.empty((m, m))
    TPf = np.empty((m, m))
    af = np.empty(m)
    status = STATUS_OK
    fail_t = -1
    steady = False
    for t in range(n_t):
        same = t > 0
        if same:
            for k in range(n):
                if mask[t, k] != mask[t - 1, k]:
                    same = False
                    break
        idx = np.nonzero(~mask[t])[0]
        kk = idx.size
        nk = kk
        a_pred[t] = a
        if steady and same:
            P_pred[t] = P_pred[t - 1]
            Finv_full[t] = Finv_full[t - 1]
            gain[t] = gain[t - 1]
        else:
            steady = False
            P_pred[t] = P
            if kk == 0:
                Pf[:, :] = P
            else:
                PZ = np.zeros((m, kk))
                for i in range(m):
                    for b in range(kk):
                        s = 0.0
                        for j in range(m):
                            s += P[i, j] * Z[idx[b], j]
                        PZ[i, b] = s
                F = np.zeros((kk, kk))
                for b1 in range(kk):
                    for b2 in range(kk):
                        s = 0.0
                        for j in range(m):
                            s += Z[idx[b1], j] * PZ[j, b2]
                        F[b1, b2] = s
                F = 0.5 * (F + F.T)
                if not np.all(np.isfinite(F)):
                    status = STATUS_NONFINITE
                    fail_t = t
                    break
                lam, U = np.linalg.eigh(F)
                tol = SINGULAR_RTOL * max(lam[kk - 1], 1e-300)
                Finv = np.zeros((kk, kk))
                nk = 0
                for q in range(kk):
                    if lam[q] > tol:
                        nk += 1
                        for b1 in range(kk):
                            for b2 in range(kk):
                                Finv[b1, b2] += U[b1, q] * U[b2, q] / lam[q]
                if nk < kk and not allow_singular:
                    status = STATUS_SINGULAR
                    fail_t = t
                    break
                if nk < kk:
                    # innovation must avoid the null directions
                    vv = np.empty(kk)
                    for b in range(kk):
                        s = ystar[t, idx[b]]
                        for j in range(m):
                            s -= Z[idx[b], j] * a[j]
                        vv[b] = s
                    vscale = 1.0 + np.max(np.abs(vv))
                    for q in range(kk):
                        if lam[q] <= tol:
                            proj = 0.0
                            for b in range(kk):
                                proj += U[b, q] * vv[b]
                            if abs(proj) > 1e-7 * vscale:
                                status = STATUS_INCONSISTENT
                                fail_t = t
                    if status != STATUS_OK:
                        break
                for i in range(m):
                    for b in range(kk):
                        s = 0.0
                        for b2 in range(kk):
                            s += PZ[i, b2] * Finv[b2, b]
                        gain[t, i, idx[b]] = s
                for b1 in range(kk):
                    for b2 in range(kk):
                        Finv_full[t, idx[b1], idx[b2]] = Finv[b1, b2]
                for i in range(m):
                    for j in range(m):
                        s = P[i, j]
                        for b in range(kk):
                            s -= gain[t, i, idx[b]] * PZ[j, b]
                        Pf[i, j] = s
            # P_next = T Pf T' + Q
            for i in range(m):
                for j in range(m):
                    s = 0.0
                    for q in range(m):
                        s += T[i, q] * Pf[q, j]
                    TPf[i, j] = s
            diff = 0.0
            big = 0.0
            Pn = np.empty((m, m))
            for i in range(m):
                for j in range(i + 1):
                    s = Q[i, j]
                    for q in range(m):
                        s += TPf[i, q] * T[j, q]
                    Pn[i, j] = s
                    Pn[j, i] = s
            for i in range(m):
                for j in range(m):
                    d = abs(Pn[i, j] - P[i, j])
                    if d > diff:
                        diff = d
                    if abs(Pn[i, j]) > big:
                        big = abs(Pn[i, j])
            # reuse only when the innovation covariance had full rank
            steady = diff <= 1e-13 * (1.0 + big) and (kk == 0 or nk == kk)
            P = Pn
        # mean update
        for b in range(kk):
            k = idx[b]
            s = ystar[t, k]
            for j in range(m):
                s -= Z[k, j] * a[j]
            v_full[t, k] = s
        for i in range(m):
            s = a[i]
            for b in range(kk):
                s += gain[t, i, idx[b]] * v_full[t, idx[b]]
            af[i] = s
        for i in range(m):
            s = 0.0
            for j in range(m):
                s += T[i, j] * af[j]
            a[i] = s
        if not np.all(np.isfinite(a)):
            status = STATUS_NONFINITE
            fail_t = t
            break

    draw = plus
    if status != STATUS_OK:
        return draw, status, fail_t

    # backward pass: r_{t-1} = Z'(F^-1 v - K' T' r_t) + T' r_t
    r = np.zeros(m)
    w = np.empty(m)
    u = np.empty(n)
    for t in range(n_t - 1, -1, -1):
        for i in range(m):
            s = 0.0
            for j in range(m):
                s += T[j, i] * r[j]
            w[i] = s
        for k in range(n):
            s = 0.0
            for k2 in range(n):
                s += Finv_full[t, k, k2] * v_full[t, k2]
            for i in range(m):
                s -= gain[t, i, k] * w[i]
            u[k] = s
        for i in range(m):
            s = w[i]
            for k in range(n):
                s += Z[k, i] * u[k]
            r[i] = s
        for i in range(m):
            s = a_pred[t, i]
            for j in range(m):
                s += P_pred[t, i, j] * r[j]
            draw[t, i] += s
    return draw, status, fail_t
