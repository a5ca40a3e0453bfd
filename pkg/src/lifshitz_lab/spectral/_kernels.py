"""Compiled kernels for inertia counting and the dense symmetric eigensolver.

All kernels accept real (float64) or complex (complex128) Hermitian input;
numba specializes per dtype.  Matrices are full storage and only the lower
triangle is trusted.
"""

import math

import numpy as np
from numba import njit

# Bunch-Kaufman growth bound constant.
ALPHA = (1.0 + math.sqrt(17.0)) / 8.0

OK = 0
SINGULAR = 1


@njit(cache=True)
def _swap_rows_cols(a, p, q):
    n = a.shape[0]
    for j in range(n):
        t = a[p, j]
        a[p, j] = a[q, j]
        a[q, j] = t
    for i in range(n):
        t = a[i, p]
        a[i, p] = a[i, q]
        a[i, q] = t


@njit(cache=True)
def bk_factor(a, perm, ptype, work):
    """In-place Bunch-Kaufman LDL^H of the Hermitian matrix ``a``.

    On return the strict lower part of ``a`` holds L (unit lower, with zero
    coupling inside 2x2 pivots), the diagonal and ``a[k+1, k]`` of 2x2
    pivots hold D, ``perm`` the symmetric permutation and ``ptype`` marks
    pivots (1: 1x1, 2: first index of a 2x2, -1: second index).

    Returns ``(negatives, status)``; the trailing part is only meaningful
    when status is OK.  ``work`` must have shape (2, n).
    """
    n = a.shape[0]
    for i in range(n):
        perm[i] = i
        ptype[i] = 0
    # the factorization never reads the upper triangle of the trailing block
    for j in range(n):
        for i in range(j + 1, n):
            a[j, i] = np.conj(a[i, j])
        a[j, j] = a[j, j].real
    neg = 0
    k = 0
    while k < n:
        absakk = abs(a[k, k].real)
        imax = k
        colmax = 0.0
        for i in range(k + 1, n):
            v = abs(a[i, k])
            if v > colmax:
                colmax = v
                imax = i
        if absakk == 0.0 and colmax == 0.0:
            return neg, SINGULAR
        kstep = 1
        if absakk >= ALPHA * colmax:
            kp = k
        else:
            rowmax = 0.0
            for j in range(k, n):
                if j != imax:
                    v = abs(a[imax, j])
                    if v > rowmax:
                        rowmax = v
            if absakk * rowmax >= ALPHA * colmax * colmax:
                kp = k
            elif abs(a[imax, imax].real) >= ALPHA * rowmax:
                kp = imax
            else:
                kp = imax
                kstep = 2
        kk = k + kstep - 1
        if kp != kk:
            _swap_rows_cols(a, kk, kp)
            t = perm[kk]
            perm[kk] = perm[kp]
            perm[kp] = t

        if kstep == 1:
            ptype[k] = 1
            d = a[k, k].real
            if d == 0.0:
                return neg, SINGULAR
            if d < 0.0:
                neg += 1
            for i in range(k + 1, n):
                work[0, i] = a[i, k]
            for j in range(k + 1, n):
                cj = np.conj(work[0, j]) / d
                for i in range(j, n):
                    a[i, j] -= work[0, i] * cj
                a[j, j] = a[j, j].real
                for i in range(j + 1, n):
                    a[j, i] = np.conj(a[i, j])
            for i in range(k + 1, n):
                a[i, k] = work[0, i] / d
        else:
            ptype[k] = 2
            ptype[k + 1] = -1
            a11 = a[k, k].real
            a22 = a[k + 1, k + 1].real
            a21 = a[k + 1, k]
            det = a11 * a22 - abs(a21) ** 2
            if det == 0.0:
                return neg, SINGULAR
            if det < 0.0:
                neg += 1
            elif a11 < 0.0:
                neg += 2
            for i in range(k + 2, n):
                c1 = a[i, k]
                c2 = a[i, k + 1]
                # row of C D^{-1}
                work[0, i] = (c1 * a22 - c2 * a21) / det
                work[1, i] = (c2 * a11 - c1 * np.conj(a21)) / det
            for j in range(k + 2, n):
                c1j = np.conj(a[j, k])
                c2j = np.conj(a[j, k + 1])
                for i in range(j, n):
                    a[i, j] -= work[0, i] * c1j + work[1, i] * c2j
                a[j, j] = a[j, j].real
                for i in range(j + 1, n):
                    a[j, i] = np.conj(a[i, j])
            for i in range(k + 2, n):
                a[i, k] = work[0, i]
                a[i, k + 1] = work[1, i]
        k += kstep
    return neg, OK


@njit(cache=True)
def bk_solve(a, perm, ptype, y, tmp):
    """Overwrite ``y`` (n x r) with S^{-1} y using factors from bk_factor."""
    n = a.shape[0]
    r = y.shape[1]
    for i in range(n):
        for c in range(r):
            tmp[i, c] = y[perm[i], c]
    # forward substitution with unit L
    for j in range(n):
        start = j + 2 if ptype[j] == 2 else j + 1
        for i in range(start, n):
            lij = a[i, j]
            for c in range(r):
                tmp[i, c] -= lij * tmp[j, c]
    # block diagonal solve
    k = 0
    while k < n:
        if ptype[k] == 1:
            d = a[k, k].real
            for c in range(r):
                tmp[k, c] /= d
            k += 1
        else:
            a11 = a[k, k].real
            a22 = a[k + 1, k + 1].real
            a21 = a[k + 1, k]
            det = a11 * a22 - abs(a21) ** 2
            for c in range(r):
                z1 = tmp[k, c]
                z2 = tmp[k + 1, c]
                tmp[k, c] = (a22 * z1 - np.conj(a21) * z2) / det
                tmp[k + 1, c] = (a11 * z2 - a21 * z1) / det
            k += 2
    # back substitution with L^H
    for j in range(n - 1, -1, -1):
        start = j + 2 if ptype[j] == 2 else j + 1
        for i in range(start, n):
            lij = np.conj(a[i, j])
            for c in range(r):
                tmp[j, c] -= lij * tmp[i, c]
    for i in range(n):
        for c in range(r):
            y[perm[i], c] = tmp[i, c]


@njit(cache=True)
def dense_negative_count(a, sigma):
    """Inertia count of ``a - sigma I``; returns (negatives, status)."""
    n = a.shape[0]
    w = a.copy()
    for i in range(n):
        w[i, i] -= sigma
    perm = np.empty(n, dtype=np.int64)
    ptype = np.empty(n, dtype=np.int64)
    work = np.zeros((2, n), dtype=a.dtype)
    return bk_factor(w, perm, ptype, work)


@njit(cache=True)
def _scalar_chain_count(diag, lower, sigma):
    # Sturm recurrence for b = 1.
    nb = diag.shape[0]
    neg = 0
    q = diag[0, 0, 0].real - sigma
    for i in range(nb):
        if q == 0.0:
            return neg, SINGULAR
        if q < 0.0:
            neg += 1
        if i < nb - 1:
            q = diag[i + 1, 0, 0].real - sigma - abs(lower[i, 0, 0]) ** 2 / q
    return neg, OK


@njit(cache=True)
def block_tridiagonal_count(diag, lower, sigma):
    """Inertia count of a block-tridiagonal Hermitian matrix minus sigma I.

    ``diag[i]`` is block (i, i) and ``lower[i]`` is block (i + 1, i).  The
    block LDL^H elimination keeps the pivoting inside each Schur complement
    block; the negative count is the sum of the block inertias.
    """
    nb = diag.shape[0]
    b = diag.shape[1]
    if b == 1:
        return _scalar_chain_count(diag, lower, sigma)
    s = np.empty((b, b), dtype=diag.dtype)
    x = np.empty((b, b), dtype=diag.dtype)
    tmp = np.empty((b, b), dtype=diag.dtype)
    work = np.zeros((2, b), dtype=diag.dtype)
    perm = np.empty(b, dtype=np.int64)
    ptype = np.empty(b, dtype=np.int64)
    for i in range(b):
        for j in range(b):
            s[i, j] = diag[0, i, j]
        s[i, i] -= sigma
    neg = 0
    for blk in range(nb):
        nblk, status = bk_factor(s, perm, ptype, work)
        if status != OK:
            return neg, status
        neg += nblk
        if blk == nb - 1:
            break
        for i in range(b):
            for j in range(b):
                x[i, j] = np.conj(lower[blk, j, i])
        bk_solve(s, perm, ptype, x, tmp)
        for i in range(b):
            for j in range(b):
                acc = diag[blk + 1, i, j]
                for l in range(b):
                    acc -= lower[blk, i, l] * x[l, j]
                tmp[i, j] = acc
        for i in range(b):
            s[i, i] = tmp[i, i].real - sigma
            for j in range(i):
                v = 0.5 * (tmp[i, j] + np.conj(tmp[j, i]))
                s[i, j] = v
                s[j, i] = np.conj(v)
    return neg, OK


@njit(cache=True)
def block_tridiagonal_profile(diag, lower, sigmas, counts, status):
    for q in range(sigmas.shape[0]):
        c, st = block_tridiagonal_count(diag, lower, sigmas[q])
        counts[q] = c
        status[q] = st


@njit(cache=True)
def dense_profile(a, sigmas, counts, status):
    for q in range(sigmas.shape[0]):
        c, st = dense_negative_count(a, sigmas[q])
        counts[q] = c
        status[q] = st


@njit(cache=True)
def householder_tridiagonal(a, d, e):
    """Reduce Hermitian ``a`` (overwritten) to real symmetric tridiagonal form.

    ``d`` receives the diagonal, ``e[i]`` the modulus of the (i+1, i)
    entry; a diagonal unitary similarity makes the off-diagonal real.
    """
    n = a.shape[0]
    v = np.zeros(n, dtype=a.dtype)
    p = np.zeros(n, dtype=a.dtype)
    for k in range(n - 2):
        xnorm2 = 0.0
        for i in range(k + 1, n):
            xnorm2 += abs(a[i, k]) ** 2
        xnorm = math.sqrt(xnorm2)
        if xnorm == 0.0:
            continue
        x0 = a[k + 1, k]
        ax0 = abs(x0)
        phase = x0 / ax0 if ax0 > 0.0 else x0 * 0.0 + 1.0
        alpha = -phase * xnorm
        vnorm2 = 0.0
        for i in range(k + 1, n):
            v[i] = a[i, k]
        v[k + 1] -= alpha
        for i in range(k + 1, n):
            vnorm2 += abs(v[i]) ** 2
        if vnorm2 == 0.0:
            continue
        vnorm = math.sqrt(vnorm2)
        for i in range(k + 1, n):
            v[i] /= vnorm
        # p = A22 v using the lower triangle only
        for i in range(k + 1, n):
            p[i] = 0.0
        for j in range(k + 1, n):
            vj = v[j]
            p[j] += a[j, j].real * vj
            for i in range(j + 1, n):
                aij = a[i, j]
                p[i] += aij * vj
                p[j] += np.conj(aij) * v[i]
        kk = 0.0
        for i in range(k + 1, n):
            kk += (np.conj(v[i]) * p[i]).real
        for i in range(k + 1, n):
            p[i] -= kk * v[i]
        for j in range(k + 1, n):
            cvj = np.conj(v[j])
            cpj = np.conj(p[j])
            for i in range(j, n):
                a[i, j] -= 2.0 * (v[i] * cpj + p[i] * cvj)
            a[j, j] = a[j, j].real
        a[k + 1, k] = alpha
        for i in range(k + 2, n):
            a[i, k] = 0.0
    for i in range(n):
        d[i] = a[i, i].real
    for i in range(n - 1):
        e[i] = abs(a[i + 1, i])
    if n > 0:
        e[n - 1] = 0.0


@njit(cache=True)
def tql_eigenvalues(d, e, max_sweeps):
    """Implicit-shift QL on the symmetric tridiagonal (d, e); d is overwritten.

    ``e[i]`` couples i and i + 1.  Returns OK or 1 when some eigenvalue
    needed more than ``max_sweeps`` sweeps.
    """
    n = d.shape[0]
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) + dd == dd:
                    break
                m += 1
            if m == l:
                break
            if it == max_sweeps:
                return 1
            it += 1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            underflow = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return 0
