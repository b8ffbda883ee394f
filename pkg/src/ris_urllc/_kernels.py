"""Compiled inner loop of the ADMM solver.

The Python driver in :mod:`conic` owns setup, termination checks and step
size updates; these kernels run the fixed-point iterations in between.
Cones are described by flat integer tables so everything stays in nopython
mode:

* ``kind``: per-row tag, 0 free (zero cone), 1 nonnegative, 2 handled by a
  block below
* ``soc``: rows of ``(start, count, dim)`` for runs of equal-size SOCs
* ``psd``: rows of ``(start, n, is_complex)``
"""

from __future__ import annotations

import numpy as np
from numba import njit

INV_SQRT2 = 1.0 / np.sqrt(2.0)
SQRT2 = np.sqrt(2.0)


@njit(cache=True)
def _psd_complex(v, out, n):
    p = n * (n - 1) // 2
    X = np.empty((n, n), dtype=np.complex128)
    for i in range(n):
        X[i, i] = v[i]
    k = 0
    for i in range(n):
        for j in range(i + 1, n):
            z = (v[n + k] + 1j * v[n + p + k]) * INV_SQRT2
            X[i, j] = z
            X[j, i] = np.conj(z)
            k += 1
    w, U = np.linalg.eigh(X)
    if w[0] >= 0.0:
        out[:] = v
        return
    for c in range(n):
        lam = w[c] if w[c] > 0.0 else 0.0
        for r in range(n):
            U[r, c] *= np.sqrt(lam)
    Y = U @ U.conj().T
    for i in range(n):
        out[i] = Y[i, i].real
    k = 0
    for i in range(n):
        for j in range(i + 1, n):
            out[n + k] = SQRT2 * Y[i, j].real
            out[n + p + k] = SQRT2 * Y[i, j].imag
            k += 1


@njit(cache=True)
def _psd_real(v, out, n):
    X = np.empty((n, n))
    for i in range(n):
        X[i, i] = v[i]
    k = 0
    for i in range(n):
        for j in range(i + 1, n):
            X[i, j] = v[n + k] * INV_SQRT2
            X[j, i] = X[i, j]
            k += 1
    w, U = np.linalg.eigh(X)
    if w[0] >= 0.0:
        out[:] = v
        return
    for c in range(n):
        lam = w[c] if w[c] > 0.0 else 0.0
        for r in range(n):
            U[r, c] *= np.sqrt(lam)
    Y = U @ U.T
    for i in range(n):
        out[i] = Y[i, i]
    k = 0
    for i in range(n):
        for j in range(i + 1, n):
            out[n + k] = SQRT2 * Y[i, j]
            k += 1


@njit(cache=True)
def project(z, out, kind, soc, psd):
    """Project ``z`` onto the cone product, writing into ``out``."""
    for i in range(z.size):
        if kind[i] == 0:
            out[i] = 0.0
        elif kind[i] == 1:
            out[i] = z[i] if z[i] > 0.0 else 0.0
    for b in range(soc.shape[0]):
        start, count, dim = soc[b, 0], soc[b, 1], soc[b, 2]
        for c in range(count):
            a = start + c * dim
            t = z[a]
            nx2 = 0.0
            for j in range(a + 1, a + dim):
                nx2 += z[j] * z[j]
            nx = np.sqrt(nx2)
            if nx <= t:
                for j in range(a, a + dim):
                    out[j] = z[j]
            elif nx <= -t:
                for j in range(a, a + dim):
                    out[j] = 0.0
            else:
                h = 0.5 * (t + nx)
                out[a] = h
                f = h / nx
                for j in range(a + 1, a + dim):
                    out[j] = f * z[j]
    for b in range(psd.shape[0]):
        start, n, cplx = psd[b, 0], psd[b, 1], psd[b, 2]
        d = n * n if cplx else n * (n + 1) // 2
        if cplx:
            _psd_complex(z[start:start + d], out[start:start + d], n)
        else:
            _psd_real(z[start:start + d], out[start:start + d], n)


@njit(cache=True)
def _step(u, n, Ah, AhT, Kinv, bh, ch, rv, sigma, alpha, kind, soc, psd, u1, y0):
    m = bh.size
    x = u[:n]
    v = u[n:]
    s = np.empty(m)
    project(v, s, kind, soc, psd)
    for i in range(m):
        y0[i] = rv[i] * (v[i] - s[i])
    z = np.empty(m)
    for i in range(m):
        z[i] = rv[i] * (bh[i] - s[i]) + y0[i]
    r = AhT @ z
    for j in range(n):
        r[j] += sigma * x[j] - ch[j]
    xt = Kinv @ r
    ax = Ah @ xt
    for j in range(n):
        u1[j] = alpha * xt[j] + (1.0 - alpha) * x[j]
    for i in range(m):
        st = bh[i] - ax[i]
        u1[n + i] = alpha * st + (1.0 - alpha) * s[i] + y0[i] / rv[i]


@njit(cache=True)
def _aa_update(u, g, dU, dG, gram, prev_u, prev_g, meta, out):
    """Anderson type-II extrapolation; returns False when no step is offered.

    ``meta`` holds ``[has_prev, count, head]``.
    """
    mem = dU.shape[0]
    if meta[0] == 1:
        j = meta[2]
        for i in range(u.size):
            dU[j, i] = u[i] - prev_u[i]
            dG[j, i] = g[i] - prev_g[i]
        meta[2] = (j + 1) % mem
        cnt = min(meta[1] + 1, mem)
        meta[1] = cnt
        for r in range(cnt):
            val = 0.0
            for i in range(u.size):
                val += dG[r, i] * dG[j, i]
            gram[j, r] = val
            gram[r, j] = val
    prev_u[:] = u
    prev_g[:] = g
    meta[0] = 1
    k = meta[1]
    if k == 0:
        return False
    G = gram[:k, :k].copy()
    tr = 0.0
    for i in range(k):
        tr += G[i, i]
    reg = 1e-10 * max(tr, 1e-30)
    for i in range(k):
        G[i, i] += reg
    rhs = dG[:k] @ g
    gam = np.linalg.solve(G, rhs)
    for i in range(u.size):
        acc = u[i] + g[i]
        for r in range(k):
            acc -= gam[r] * (dU[r, i] + dG[r, i])
        out[i] = acc
    for i in range(u.size):
        if not np.isfinite(out[i]):
            meta[0] = 0
            meta[1] = 0
            meta[2] = 0
            return False
    return True


@njit(cache=True)
def run_block(u, steps, n, Ah, AhT, Kinv, bh, ch, rv, sigma, alpha, kind, soc, psd,
              use_aa, dU, dG, gram, prev_u, prev_g, meta, safe_u, safe_meta, u1, y0):
    """Advance ``u`` by ``steps`` safeguarded Anderson-ADMM iterations.

    On return ``u1`` and ``y0`` hold the plain ADMM image of the last point
    evaluated and its multiplier. ``safe_meta`` is ``[valid, norm]``.
    """
    g = np.empty(u.size)
    nu = np.empty(u.size)
    for _ in range(steps):
        _step(u, n, Ah, AhT, Kinv, bh, ch, rv, sigma, alpha, kind, soc, psd, u1, y0)
        for i in range(u.size):
            g[i] = u1[i] - u[i]
        gnorm = np.sqrt(np.dot(g, g))
        if not use_aa:
            u[:] = u1
            continue
        if safe_meta[0] > 0.5 and gnorm > safe_meta[1]:
            # extrapolation made things worse: take the plain step instead
            meta[0] = 0
            meta[1] = 0
            meta[2] = 0
            u[:] = safe_u
            _step(u, n, Ah, AhT, Kinv, bh, ch, rv, sigma, alpha, kind, soc, psd, u1, y0)
            for i in range(u.size):
                g[i] = u1[i] - u[i]
            gnorm = np.sqrt(np.dot(g, g))
        safe_u[:] = u1
        safe_meta[0] = 1.0
        safe_meta[1] = gnorm
        if _aa_update(u, g, dU, dG, gram, prev_u, prev_g, meta, nu):
            u[:] = nu
        else:
            safe_meta[0] = 0.0
            u[:] = u1


@njit(cache=True)
def ruiz_scalings(absA, group, iters):
    """Row/column scalings equilibrating ``absA`` in the max norm.

    Rows with the same nonnegative ``group`` id share one factor so cone
    membership is preserved.
    """
    m, n = absA.shape
    D = np.ones(n)
    E = np.ones(m)
    ngroups = 0
    for i in range(m):
        if group[i] + 1 > ngroups:
            ngroups = group[i] + 1
    cn = np.empty(n)
    rn = np.empty(m)
    gmax = np.empty(ngroups)
    for _ in range(iters):
        cn[:] = 0.0
        rn[:] = 0.0
        for i in range(m):
            for j in range(n):
                v = E[i] * absA[i, j] * D[j]
                if v > cn[j]:
                    cn[j] = v
                if v > rn[i]:
                    rn[i] = v
        gmax[:] = 0.0
        for i in range(m):
            if group[i] >= 0 and rn[i] > gmax[group[i]]:
                gmax[group[i]] = rn[i]
        for i in range(m):
            if group[i] >= 0:
                rn[i] = gmax[group[i]]
        for j in range(n):
            d = 1.0 / np.sqrt(cn[j]) if cn[j] > 1e-12 else 1.0
            D[j] *= min(max(d, 1e-4), 1e4)
        for i in range(m):
            e = 1.0 / np.sqrt(rn[i]) if rn[i] > 1e-12 else 1.0
            E[i] *= min(max(e, 1e-4), 1e4)
    return D, E
