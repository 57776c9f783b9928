"""Density matrices, bipartite structure and the PPT test.

Density matrices are plain ``complex128`` numpy arrays; the helpers here
check the invariants where a function's contract depends on them.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._backend import kernels
from .errors import ContractViolation, DimensionError, NormalizationError

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
PSD_TOL = 1e-10


@dataclass(frozen=True)
class BipartiteDims:
    """Local dimensions of a two-party system."""

    dA: int
    dB: int

    def __post_init__(self):
        if int(self.dA) < 2 or int(self.dB) < 2:
            raise DimensionError(f"local dimensions must be >= 2, got {self.dA}x{self.dB}")

    @property
    def total(self):
        return self.dA * self.dB

    def __str__(self):
        return f"{self.dA}x{self.dB}"


@dataclass(frozen=True)
class SchmidtForm:
    coefficients: np.ndarray
    left_vectors: np.ndarray  # columns
    right_vectors: np.ndarray  # columns

    @property
    def rank(self):
        return len(self.coefficients)

    def reconstruct(self):
        return sum(
            c * np.kron(self.left_vectors[:, k], self.right_vectors[:, k])
            for k, c in enumerate(self.coefficients)
        )


@dataclass(frozen=True)
class BlochVector:
    dim: int
    components: np.ndarray

    def to_density(self):
        """Rebuild ``(I + r.G) / d``."""
        basis = gell_mann_basis(self.dim)
        rho = np.eye(self.dim, dtype=np.complex128)
        rho += np.tensordot(self.components, basis, axes=1)
        return rho / self.dim


def _square(m, name="matrix"):
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")
    return m


def _check_bipartite(rho, dims):
    rho = _square(rho, "rho")
    if rho.shape[0] != dims.total:
        raise DimensionError(f"rho is {rho.shape[0]}x{rho.shape[0]} but dims {dims} need {dims.total}")
    return rho


def check_density(rho, tol=PSD_TOL):
    """Raise ``ContractViolation`` unless ``rho`` is Hermitian, PSD and unit trace."""
    rho = _square(rho, "rho")
    if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
        raise ContractViolation("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > TRACE_TOL:
        raise ContractViolation(f"density matrix trace is {np.trace(rho).real!r}, expected 1")
    if rho.shape[0] > 1:
        lam = hermitian_eig(rho)[0]
        if lam[-1] < -tol:
            raise ContractViolation(f"density matrix has eigenvalue {lam[-1]:.3e} < 0")
    return rho


def is_density_matrix(rho, tol=PSD_TOL):
    try:
        check_density(rho, tol)
    except (ContractViolation, DimensionError):
        return False
    return True


def tensor_product(A, B):
    """Kronecker product of two square matrices."""
    A = _square(A, "A")
    B = _square(B, "B")
    return np.kron(A, B)


def partial_transpose(rho, dims, subsystem="B"):
    """Transpose one tensor factor of a bipartite operator.

    This is an index permutation, so applying it twice returns ``rho`` exactly.
    """
    rho = _check_bipartite(rho, dims)
    t = rho.reshape(dims.dA, dims.dB, dims.dA, dims.dB)
    if subsystem == "B":
        t = t.transpose(0, 3, 2, 1)
    elif subsystem == "A":
        t = t.transpose(2, 1, 0, 3)
    else:
        raise ValueError(f"subsystem must be 'A' or 'B', got {subsystem!r}")
    return np.ascontiguousarray(t.reshape(dims.total, dims.total))


def hermitian_eig(M, tol=1e-10):
    """Eigen-decomposition of a Hermitian matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues sorted in
    descending order and eigenvectors as orthonormal columns. Real symmetric
    input stays real.
    """
    M = _square(M, "M")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if M.size and np.max(np.abs(M - M.conj().T)) > tol * scale:
        raise ContractViolation("matrix is not Hermitian")
    if np.iscomplexobj(M):
        M = M.astype(np.complex128)
    else:
        M = M.astype(np.float64)
    w, v, _ = kernels.jacobi_eigh(M)
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def is_ppt(rho, dims, tol=PSD_TOL):
    """True when the partial transpose of ``rho`` has no eigenvalue below ``-tol``."""
    lam = hermitian_eig(partial_transpose(rho, dims))[0]
    return bool(lam[-1] >= -tol)


def min_pt_eigenvalue(rho, dims):
    return float(hermitian_eig(partial_transpose(rho, dims))[0][-1])


def purity(rho):
    """``tr(rho^2)``; for Hermitian input this is the squared Frobenius norm."""
    rho = _square(rho, "rho")
    return float(np.sum(rho.real ** 2 + rho.imag ** 2))


def schmidt_decompose(psi, dims, tol=1e-10, zero_tol=1e-12):
    """Schmidt decomposition of a normalized bipartite pure state.

    Coefficients are returned in descending order; runs of equal
    coefficients are ordered by the pivot (largest-magnitude entry) index of
    their left vectors, and each left vector's pivot entry is made real and
    positive so the output is deterministic.
    """
    psi = np.asarray(psi, dtype=np.complex128).ravel()
    if psi.shape[0] != dims.total:
        raise DimensionError(f"state has length {psi.shape[0]}, dims {dims} need {dims.total}")
    if abs(np.linalg.norm(psi) - 1.0) > tol:
        raise ContractViolation("state vector is not normalized")
    u, s, vh = np.linalg.svd(psi.reshape(dims.dA, dims.dB))
    keep = s > zero_tol
    s = s[keep]
    left = u[:, : len(s)].copy()
    right = vh[: len(s), :].T.copy()
    pivots = np.empty(len(s), dtype=int)
    for k in range(len(s)):
        p = int(np.argmax(np.abs(left[:, k])))
        phase = left[p, k] / abs(left[p, k])
        left[:, k] /= phase
        right[:, k] *= phase
        pivots[k] = p
    # group numerically equal coefficients, then sort each group by pivot
    order = []
    k = 0
    while k < len(s):
        j = k + 1
        while j < len(s) and s[k] - s[j] <= 1e-12:
            j += 1
        order.extend(sorted(range(k, j), key=lambda m: (pivots[m], m)))
        k = j
    order = np.array(order, dtype=int)
    return SchmidtForm(s[order], left[:, order], right[:, order])


def reduced_density(psi, dims, keep="A"):
    """Partial trace of ``|psi><psi|`` over the other party."""
    m = np.asarray(psi, dtype=np.complex128).reshape(dims.dA, dims.dB)
    if keep == "A":
        return m @ m.conj().T
    return m.T @ m.conj()


def vectorize(rho):
    """Real isometric embedding of a Hermitian matrix.

    Layout: the ``d`` diagonal entries, then ``sqrt(2) * Re`` of the strict
    upper triangle in row-major order, then ``sqrt(2) * Im`` of the same
    entries. ``vectorize(a) @ vectorize(b) == tr(a b)`` for Hermitian a, b.
    """
    rho = _square(rho, "rho")
    d = rho.shape[0]
    iu = np.triu_indices(d, 1)
    upper = rho[iu]
    return np.concatenate([np.real(np.diag(rho)), np.sqrt(2.0) * upper.real, np.sqrt(2.0) * upper.imag])


def unvectorize(x):
    """Inverse of :func:`vectorize`."""
    x = np.asarray(x, dtype=np.float64)
    d = int(round(np.sqrt(x.shape[0])))
    if d * d != x.shape[0]:
        raise DimensionError(f"vector length {x.shape[0]} is not a perfect square")
    m = (d * (d - 1)) // 2
    rho = np.diag(x[:d]).astype(np.complex128)
    iu = np.triu_indices(d, 1)
    upper = (x[d : d + m] + 1j * x[d + m :]) / np.sqrt(2.0)
    rho[iu] = upper
    rho[(iu[1], iu[0])] = upper.conj()
    return rho


@lru_cache(maxsize=32)
def _gell_mann(d):
    mats = []
    for j in range(d):
        for k in range(j + 1, d):
            g = np.zeros((d, d), dtype=np.complex128)
            g[j, k] = g[k, j] = 1.0
            mats.append(g)
    for j in range(d):
        for k in range(j + 1, d):
            g = np.zeros((d, d), dtype=np.complex128)
            g[j, k] = -1j
            g[k, j] = 1j
            mats.append(g)
    for l in range(1, d):
        g = np.zeros((d, d), dtype=np.complex128)
        g[np.arange(l), np.arange(l)] = 1.0
        g[l, l] = -l
        mats.append(g * np.sqrt(2.0 / (l * (l + 1))))
    # tr(G_i G_j) = d delta_ij, so |r|^2 = d tr(rho^2) - 1 and |r| <= sqrt(d - 1)
    basis = np.array(mats) * np.sqrt(d / 2.0)
    basis.setflags(write=False)
    return basis


def gell_mann_basis(d):
    """Traceless Hermitian basis: symmetric, antisymmetric, then diagonal.

    Normalized so that ``tr(G_i G_j) = d * delta_ij``; for ``d = 2`` this is
    exactly the Pauli triple (X, Y, Z).
    """
    if d < 1:
        raise DimensionError("dimension must be positive")
    return _gell_mann(int(d))


def bloch_vector(rho):
    """Coefficients ``r`` with ``rho = (I + r.G) / d``."""
    rho = _square(rho, "rho")
    d = rho.shape[0]
    basis = gell_mann_basis(d)
    comps = np.real(np.einsum("kij,ji->k", basis, rho))
    return BlochVector(d, comps)


def pure_density(psi):
    psi = np.asarray(psi, dtype=np.complex128).ravel()
    n = np.linalg.norm(psi)
    if n == 0.0:
        raise NormalizationError("zero state vector")
    psi = psi / n
    return np.outer(psi, psi.conj())
