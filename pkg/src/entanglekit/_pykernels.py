"""Pure-Python (numpy) implementations of the hot numerical kernels.

These mirror ``entanglekit._kernels`` function for function and are used
when the compiled module is unavailable or ``ENTANGLEKIT_PURE_PYTHON=1``.
All functions take and return plain numpy arrays; argument checking is done
by the public wrappers.
"""

import numpy as np
from scipy.linalg import eigh

BACKEND = "python"


def jacobi_eigh(a, tol=1e-12, max_sweeps=100):
    """Cyclic Jacobi eigendecomposition of a Hermitian (or real symmetric) matrix.

    Returns ``(eigenvalues, eigenvectors, sweeps)`` with eigenvalues in
    diagonal order (unsorted) and eigenvectors as columns.
    """
    a = np.array(a, copy=True)
    n = a.shape[0]
    is_complex = np.iscomplexobj(a)
    v = np.eye(n, dtype=a.dtype)
    scale = np.linalg.norm(a)
    if n < 2 or scale == 0.0:
        return np.real(np.diag(a)).copy(), v, 0
    threshold = tol * scale
    offdiag = ~np.eye(n, dtype=bool)
    sweeps = 0
    while sweeps < max_sweeps:
        off = np.linalg.norm(a[offdiag])
        if off < threshold:
            break
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                g = abs(apq)
                if g == 0.0:
                    continue
                app = a[p, p].real
                aqq = a[q, q].real
                # skip rotations that cannot change the diagonal in floating point
                if g < 1e-300 or (abs(app) + 100.0 * g == abs(app) and abs(aqq) + 100.0 * g == abs(aqq)):
                    a[p, q] = 0.0
                    a[q, p] = 0.0
                    continue
                tau = (aqq - app) / (2.0 * g)
                t = 1.0 / (abs(tau) + np.sqrt(1.0 + tau * tau))
                if tau < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                e = apq / g
                ec = np.conj(e) if is_complex else e
                # A <- A G with G = diag(1, conj(e)) . [[c, s], [-s, c]] on (p, q)
                colp = a[:, p].copy()
                colq = a[:, q] * ec
                a[:, p] = c * colp - s * colq
                a[:, q] = s * colp + c * colq
                # A <- G^H A
                rowp = a[p, :].copy()
                rowq = a[q, :] * e
                a[p, :] = c * rowp - s * rowq
                a[q, :] = s * rowp + c * rowq
                a[p, q] = 0.0
                a[q, p] = 0.0
                a[p, p] = a[p, p].real
                a[q, q] = a[q, q].real
                vp = v[:, p].copy()
                vq = v[:, q] * ec
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    return np.real(np.diag(a)).copy(), v, sweeps


def _top_eigvec(m):
    n = m.shape[0]
    # same LAPACK driver (zheevr) as the compiled core
    return eigh(m, lower=True, subset_by_index=[n - 1, n - 1], driver="evr")[1][:, 0]


def product_oracle(m, dA, dB, sweeps):
    """Product vectors ``(a, b)`` approximately maximizing <a b|m|a b>.

    Starts from the leading Schmidt pair of the top eigenvector of ``m`` and
    applies ``sweeps`` rounds of alternating maximization.
    """
    S = _top_eigvec(m).reshape(dA, dB)
    # leading Schmidt pair: a = top eigenvector of S S^H, b = a^H S / |.|
    a = _top_eigvec(S @ S.conj().T)
    b = a.conj() @ S
    b = b / np.linalg.norm(b)
    if sweeps:
        m4 = m.reshape(dA, dB, dA, dB)
        for _ in range(sweeps):
            a = _top_eigvec(np.einsum("j,ijkl,l->ik", b.conj(), m4, b))
            b = _top_eigvec(np.einsum("i,ijkl,k->jl", a.conj(), m4, a))
    return a, b


def frank_wolfe(rho, dA, dB, a0, b0, iterations, oracle_sweeps):
    """Frank-Wolfe iterations toward the nearest separable state.

    Returns ``(sigma, distance)`` with ``distance = ||rho - sigma||_F``.
    """
    rho = np.ascontiguousarray(rho, dtype=np.complex128)
    w = np.kron(a0, b0)
    sigma = np.outer(w, w.conj())
    for t in range(iterations):
        a, b = product_oracle(rho - sigma, dA, dB, oracle_sweeps)
        w = np.kron(a, b)
        step = 2.0 / (t + 2.0)
        sigma = (1.0 - step) * sigma + step * np.outer(w, w.conj())
    return sigma, float(np.linalg.norm(rho - sigma))


def smo(K, y, C, tol, max_iter, record_objective=False):
    """Second-order working-set SMO for the SVM dual.

    Minimizes ``0.5 a^T Q a - sum(a)`` with ``Q_ij = y_i y_j K_ij`` subject to
    ``0 <= a_i <= C`` and ``y^T a = 0``. Returns
    ``(alpha, gradient, iterations, converged, objective_trace)``.
    """
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    alpha = np.zeros(n)
    grad = -np.ones(n)
    kd = np.diag(K).copy()
    trace = [] if record_objective else None
    converged = False
    it = 0
    pos = y > 0
    while True:
        yg = -y * grad
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        if not up.any() or not low.any():
            converged = True
            break
        i = int(np.argmax(np.where(up, yg, -np.inf)))
        gmax = yg[i]
        gmin = np.min(np.where(low, yg, np.inf))
        if gmax - gmin < tol:
            converged = True
            break
        if it >= max_iter:
            break
        b = gmax - yg
        quad = kd[i] + kd - 2.0 * K[i]
        quad = np.where(quad > 0, quad, 1e-12)
        cand = low & (b > 0)
        score = np.where(cand, -(b * b) / quad, np.inf)
        j = int(np.argmin(score))
        lam = b[j] / quad[j]
        lim_i = C - alpha[i] if y[i] > 0 else alpha[i]
        lim_j = alpha[j] if y[j] > 0 else C - alpha[j]
        hit_i = hit_j = False
        if lam >= lim_i:
            lam = lim_i
            hit_i = True
        if lam >= lim_j:
            lam = lim_j
            hit_j = True
            hit_i = hit_i and lim_i == lim_j
        alpha[i] += y[i] * lam
        alpha[j] -= y[j] * lam
        if hit_i:
            alpha[i] = C if y[i] > 0 else 0.0
        if hit_j:
            alpha[j] = 0.0 if y[j] > 0 else C
        grad += lam * y * (K[i] - K[j])
        it += 1
        if record_objective:
            trace.append(0.5 * float(np.dot(alpha, grad - 1.0)))
    return alpha, grad, it, converged, (np.array(trace) if record_objective else None)


def dot_matrix(X, Y):
    """Pairwise inner products accumulated in extended precision."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    return (X.astype(np.longdouble) @ Y.T.astype(np.longdouble)).astype(np.float64)
