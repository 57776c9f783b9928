# cython: language_level=3
"""Compiled versions of the hot numerical kernels.

Same signatures and semantics as ``entanglekit._pykernels``. Eigenvectors
inside the Frank-Wolfe loop come from LAPACK ``zheevr`` through SciPy's
Cython bindings, so no Python objects are touched per iteration.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, fma, INFINITY
from libc.stdlib cimport malloc, free
from scipy.linalg.cython_lapack cimport zheevr

cnp.import_array()

BACKEND = "compiled"

cdef extern from "complex.h" nogil:
    double creal(double complex)
    double cimag(double complex)
    double complex conj(double complex)
    double cabs(double complex)


# ---------------------------------------------------------------- Jacobi

def jacobi_eigh(a, double tol=1e-12, int max_sweeps=100):
    """Cyclic Jacobi eigendecomposition; see ``_pykernels.jacobi_eigh``."""
    if np.iscomplexobj(a):
        return _jacobi_complex(np.array(a, dtype=np.complex128, order="C", copy=True), tol, max_sweeps)
    return _jacobi_real(np.array(a, dtype=np.float64, order="C", copy=True), tol, max_sweeps)


cdef tuple _jacobi_complex(cnp.ndarray[cnp.complex128_t, ndim=2] arr, double tol, int max_sweeps):
    cdef Py_ssize_t n = arr.shape[0]
    cdef double complex[:, ::1] a = arr
    vout = np.eye(n, dtype=np.complex128)
    cdef double complex[:, ::1] v = vout
    cdef Py_ssize_t p, q, r
    cdef double scale = 0.0, off, g, app, aqq, tau, t, c, s
    cdef double complex apq, e, ec, xp, xq
    cdef int sweeps = 0
    for p in range(n):
        for q in range(n):
            scale += creal(a[p, q]) ** 2 + cimag(a[p, q]) ** 2
    scale = sqrt(scale)
    if n < 2 or scale == 0.0:
        return np.real(np.diag(arr)).copy(), vout, 0
    with nogil:
        while sweeps < max_sweeps:
            off = 0.0
            for p in range(n):
                for q in range(n):
                    if p != q:
                        off += creal(a[p, q]) ** 2 + cimag(a[p, q]) ** 2
            if sqrt(off) < tol * scale:
                break
            sweeps += 1
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = a[p, q]
                    g = cabs(apq)
                    if g == 0.0:
                        continue
                    app = creal(a[p, p])
                    aqq = creal(a[q, q])
                    if g < 1e-300 or (fabs(app) + 100.0 * g == fabs(app) and fabs(aqq) + 100.0 * g == fabs(aqq)):
                        a[p, q] = 0.0
                        a[q, p] = 0.0
                        continue
                    tau = (aqq - app) / (2.0 * g)
                    t = 1.0 / (fabs(tau) + sqrt(1.0 + tau * tau))
                    if tau < 0.0:
                        t = -t
                    c = 1.0 / sqrt(1.0 + t * t)
                    s = t * c
                    e = apq / g
                    ec = conj(e)
                    for r in range(n):
                        xp = a[r, p]
                        xq = a[r, q] * ec
                        a[r, p] = c * xp - s * xq
                        a[r, q] = s * xp + c * xq
                    for r in range(n):
                        xp = a[p, r]
                        xq = a[q, r] * e
                        a[p, r] = c * xp - s * xq
                        a[q, r] = s * xp + c * xq
                    a[p, q] = 0.0
                    a[q, p] = 0.0
                    a[p, p] = creal(a[p, p])
                    a[q, q] = creal(a[q, q])
                    for r in range(n):
                        xp = v[r, p]
                        xq = v[r, q] * ec
                        v[r, p] = c * xp - s * xq
                        v[r, q] = s * xp + c * xq
    return np.real(np.diag(arr)).copy(), vout, sweeps


cdef tuple _jacobi_real(cnp.ndarray[cnp.float64_t, ndim=2] arr, double tol, int max_sweeps):
    cdef Py_ssize_t n = arr.shape[0]
    cdef double[:, ::1] a = arr
    vout = np.eye(n, dtype=np.float64)
    cdef double[:, ::1] v = vout
    cdef Py_ssize_t p, q, r
    cdef double scale = 0.0, off, g, app, aqq, tau, t, c, s, apq, e, xp, xq
    cdef int sweeps = 0
    for p in range(n):
        for q in range(n):
            scale += a[p, q] * a[p, q]
    scale = sqrt(scale)
    if n < 2 or scale == 0.0:
        return np.diag(arr).copy(), vout, 0
    with nogil:
        while sweeps < max_sweeps:
            off = 0.0
            for p in range(n):
                for q in range(n):
                    if p != q:
                        off += a[p, q] * a[p, q]
            if sqrt(off) < tol * scale:
                break
            sweeps += 1
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = a[p, q]
                    g = fabs(apq)
                    if g == 0.0:
                        continue
                    app = a[p, p]
                    aqq = a[q, q]
                    if g < 1e-300 or (fabs(app) + 100.0 * g == fabs(app) and fabs(aqq) + 100.0 * g == fabs(aqq)):
                        a[p, q] = 0.0
                        a[q, p] = 0.0
                        continue
                    tau = (aqq - app) / (2.0 * g)
                    t = 1.0 / (fabs(tau) + sqrt(1.0 + tau * tau))
                    if tau < 0.0:
                        t = -t
                    c = 1.0 / sqrt(1.0 + t * t)
                    s = t * c
                    e = apq / g
                    for r in range(n):
                        xp = a[r, p]
                        xq = a[r, q] * e
                        a[r, p] = c * xp - s * xq
                        a[r, q] = s * xp + c * xq
                    for r in range(n):
                        xp = a[p, r]
                        xq = a[q, r] * e
                        a[p, r] = c * xp - s * xq
                        a[q, r] = s * xp + c * xq
                    a[p, q] = 0.0
                    a[q, p] = 0.0
                    for r in range(n):
                        xp = v[r, p]
                        xq = v[r, q] * e
                        v[r, p] = c * xp - s * xq
                        v[r, q] = s * xp + c * xq
    return np.diag(arr).copy(), vout, sweeps


# ---------------------------------------------------------- Frank-Wolfe

cdef struct EigWork:
    int nmax
    double complex* a
    double complex* z
    double complex* work
    double* w
    double* rwork
    int* iwork
    int* isuppz
    int lwork
    int lrwork
    int liwork


cdef int _eig_alloc(EigWork* ws, int nmax) nogil:
    ws.nmax = nmax
    ws.lwork = 4 * nmax + 64
    ws.lrwork = 24 * nmax + 64
    ws.liwork = 10 * nmax + 64
    ws.a = <double complex*> malloc(nmax * nmax * sizeof(double complex))
    ws.z = <double complex*> malloc(nmax * sizeof(double complex))
    ws.work = <double complex*> malloc(ws.lwork * sizeof(double complex))
    ws.w = <double*> malloc(nmax * sizeof(double))
    ws.rwork = <double*> malloc(ws.lrwork * sizeof(double))
    ws.iwork = <int*> malloc(ws.liwork * sizeof(int))
    ws.isuppz = <int*> malloc(2 * nmax * sizeof(int))
    return 0


cdef void _eig_free(EigWork* ws) nogil:
    free(ws.a)
    free(ws.z)
    free(ws.work)
    free(ws.w)
    free(ws.rwork)
    free(ws.iwork)
    free(ws.isuppz)


cdef int _top_eigvec(EigWork* ws, double complex* m, int n, double complex* out) nogil:
    """Eigenvector of the largest eigenvalue of the row-major Hermitian ``m``."""
    cdef int i, j, info = 0, found = 0, il = n, iu = n
    cdef double vl = 0.0, vu = 0.0, abstol = 0.0
    cdef char jobz = b'V'
    cdef char rng = b'I'
    cdef char uplo = b'L'
    # copy into LAPACK's column-major layout
    for i in range(n):
        for j in range(n):
            ws.a[j * n + i] = m[i * n + j]
    zheevr(&jobz, &rng, &uplo, &n, ws.a, &n, &vl, &vu, &il, &iu, &abstol, &found,
           ws.w, ws.z, &n, ws.isuppz, ws.work, &ws.lwork, ws.rwork, &ws.lrwork,
           ws.iwork, &ws.liwork, &info)
    for i in range(n):
        out[i] = ws.z[i]
    return info


cdef int _product_oracle(EigWork* ws, double complex* m, int dA, int dB, int sweeps,
                         double complex* s, double complex* red, double complex* a,
                         double complex* b) nogil:
    cdef int n = dA * dB
    cdef int i, j, k, l, it, info
    cdef double complex acc
    cdef double nb
    info = _top_eigvec(ws, m, n, s)
    if info != 0:
        return info
    # leading Schmidt pair: a = top eigenvector of S S^H, b = a^H S / |.|
    for i in range(dA):
        for k in range(dA):
            acc = 0.0
            for j in range(dB):
                acc = acc + s[i * dB + j] * conj(s[k * dB + j])
            red[i * dA + k] = acc
    info = _top_eigvec(ws, red, dA, a)
    if info != 0:
        return info
    nb = 0.0
    for j in range(dB):
        acc = 0.0
        for i in range(dA):
            acc = acc + conj(a[i]) * s[i * dB + j]
        b[j] = acc
        nb += creal(acc) ** 2 + cimag(acc) ** 2
    nb = sqrt(nb)
    for j in range(dB):
        b[j] = b[j] / nb
    for it in range(sweeps):
        for i in range(dA):
            for k in range(dA):
                acc = 0.0
                for j in range(dB):
                    for l in range(dB):
                        acc = acc + conj(b[j]) * m[(i * dB + j) * n + k * dB + l] * b[l]
                red[i * dA + k] = acc
        info = _top_eigvec(ws, red, dA, a)
        if info != 0:
            return info
        for j in range(dB):
            for l in range(dB):
                acc = 0.0
                for i in range(dA):
                    for k in range(dA):
                        acc = acc + conj(a[i]) * m[(i * dB + j) * n + k * dB + l] * a[k]
                red[j * dB + l] = acc
        info = _top_eigvec(ws, red, dB, b)
        if info != 0:
            return info
    return 0


def frank_wolfe(rho, int dA, int dB, a0, b0, int iterations, int oracle_sweeps):
    """Frank-Wolfe iterations toward the nearest separable state; see ``_pykernels``."""
    cdef int n = dA * dB
    cdef double complex[:, ::1] r = np.ascontiguousarray(rho, dtype=np.complex128)
    cdef double complex[::1] av = np.ascontiguousarray(a0, dtype=np.complex128)
    cdef double complex[::1] bv = np.ascontiguousarray(b0, dtype=np.complex128)
    sig_arr = np.empty((n, n), dtype=np.complex128)
    cdef double complex[:, ::1] sig = sig_arr
    m_arr = np.empty((n, n), dtype=np.complex128)
    cdef double complex[:, ::1] m = m_arr
    buf = np.empty(4 * n + max(dA, dB) ** 2, dtype=np.complex128)
    cdef double complex[::1] bufv = buf
    cdef double complex* s = &bufv[0]
    cdef double complex* w = s + n
    cdef double complex* a = w + n
    cdef double complex* b = a + n
    cdef double complex* red = b + n
    cdef EigWork ws
    cdef int t, i, j, info = 0
    cdef double step, dist = 0.0
    cdef double complex d
    for i in range(dA):
        for j in range(dB):
            w[i * dB + j] = av[i] * bv[j]
    for i in range(n):
        for j in range(n):
            sig[i, j] = w[i] * conj(w[j])
    with nogil:
        _eig_alloc(&ws, n)
        for t in range(iterations):
            for i in range(n):
                for j in range(n):
                    m[i, j] = r[i, j] - sig[i, j]
            info = _product_oracle(&ws, &m[0, 0], dA, dB, oracle_sweeps, s, red, a, b)
            if info != 0:
                break
            for i in range(dA):
                for j in range(dB):
                    w[i * dB + j] = a[i] * b[j]
            step = 2.0 / (t + 2.0)
            for i in range(n):
                for j in range(n):
                    sig[i, j] = (1.0 - step) * sig[i, j] + step * (w[i] * conj(w[j]))
        _eig_free(&ws)
        for i in range(n):
            for j in range(n):
                d = r[i, j] - sig[i, j]
                dist += creal(d) ** 2 + cimag(d) ** 2
    if info != 0:
        raise RuntimeError(f"zheevr failed with info={info}")
    return sig_arr, sqrt(dist)


# ------------------------------------------------------------------ SMO

def smo(K, y, double C, double tol, long max_iter, bint record_objective=False):
    """Second-order working-set SMO; see ``_pykernels.smo``."""
    cdef double[:, ::1] Kv = np.ascontiguousarray(K, dtype=np.float64)
    cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = yv.shape[0]
    alpha_arr = np.zeros(n)
    grad_arr = -np.ones(n)
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] grad = grad_arr
    cdef Py_ssize_t t, i, j
    cdef long it = 0
    cdef double gmax, gmin, yg, bb, quad, score, best, lam, lim_i, lim_j, obj
    cdef bint converged = False, in_up, in_low, hit_i, hit_j
    trace = [] if record_objective else None
    while True:
        gmax = -INFINITY
        gmin = INFINITY
        i = -1
        with nogil:
            for t in range(n):
                yg = -yv[t] * grad[t]
                if yv[t] > 0:
                    in_up = alpha[t] < C
                    in_low = alpha[t] > 0
                else:
                    in_up = alpha[t] > 0
                    in_low = alpha[t] < C
                if in_up and yg > gmax:
                    gmax = yg
                    i = t
                if in_low and yg < gmin:
                    gmin = yg
        if i < 0 or gmin == INFINITY or gmax - gmin < tol:
            converged = True
            break
        if it >= max_iter:
            break
        with nogil:
            j = -1
            best = INFINITY
            for t in range(n):
                if yv[t] > 0:
                    in_low = alpha[t] > 0
                else:
                    in_low = alpha[t] < C
                if not in_low:
                    continue
                bb = gmax + yv[t] * grad[t]
                if bb <= 0:
                    continue
                quad = Kv[i, i] + Kv[t, t] - 2.0 * Kv[i, t]
                if quad <= 0:
                    quad = 1e-12
                score = -(bb * bb) / quad
                if score < best:
                    best = score
                    j = t
            bb = gmax + yv[j] * grad[j]
            quad = Kv[i, i] + Kv[j, j] - 2.0 * Kv[i, j]
            if quad <= 0:
                quad = 1e-12
            lam = bb / quad
            lim_i = C - alpha[i] if yv[i] > 0 else alpha[i]
            lim_j = alpha[j] if yv[j] > 0 else C - alpha[j]
            hit_i = False
            hit_j = False
            if lam >= lim_i:
                lam = lim_i
                hit_i = True
            if lam >= lim_j:
                lam = lim_j
                hit_j = True
                hit_i = hit_i and lim_i == lim_j
            alpha[i] += yv[i] * lam
            alpha[j] -= yv[j] * lam
            if hit_i:
                alpha[i] = C if yv[i] > 0 else 0.0
            if hit_j:
                alpha[j] = 0.0 if yv[j] > 0 else C
            for t in range(n):
                grad[t] += lam * yv[t] * (Kv[i, t] - Kv[j, t])
        it += 1
        if record_objective:
            obj = 0.0
            for t in range(n):
                obj += alpha[t] * (grad[t] - 1.0)
            trace.append(0.5 * obj)
    return alpha_arr, grad_arr, it, converged, (np.array(trace) if record_objective else None)


# ------------------------------------------------------------- Gram dots

def dot_matrix(X, Y):
    """Pairwise inner products with compensated (Dot2) accumulation."""
    cdef double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[:, ::1] yy = np.ascontiguousarray(Y, dtype=np.float64)
    cdef Py_ssize_t nx = x.shape[0], ny = yy.shape[0], dim = x.shape[1]
    out_arr = np.empty((nx, ny), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef double p, ep, s, z, es, comp
    with nogil:
        for i in range(nx):
            for j in range(ny):
                s = 0.0
                comp = 0.0
                for k in range(dim):
                    p = x[i, k] * yy[j, k]
                    ep = fma(x[i, k], yy[j, k], -p)
                    z = s + p
                    es = (s - (z - (z - s))) + (p - (z - s))
                    s = z
                    comp += ep + es
                out[i, j] = s + comp
    return out_arr
