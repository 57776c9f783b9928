"""PCA reduction and amplitude-encoding preparation of feature vectors."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NormalizationError
from .qstate import hermitian_eig


@dataclass(frozen=True)
class PcaModel:
    """Principal axes of a training set.

    ``components`` holds orthonormal rows sorted by decreasing variance;
    each row's largest-magnitude entry is positive.
    """

    input_dim: int
    n_components: int
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    def to_text(self):
        """Plain-text block with every number at 17 significant digits."""
        fmt = lambda row: " ".join(format(float(v), ".17g") for v in row)
        lines = [f"pca {self.input_dim} {self.n_components}",
                 "mean " + fmt(self.mean),
                 "variance " + fmt(self.explained_variance)]
        lines += ["component " + fmt(c) for c in self.components]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        lines = [ln for ln in text.splitlines() if ln.strip()]
        head = lines[0].split()
        if head[0] != "pca":
            raise ValueError("not a PCA block")
        input_dim, n = int(head[1]), int(head[2])
        rows = {"mean": [], "variance": [], "component": []}
        for ln in lines[1:]:
            key, *vals = ln.split()
            rows[key].append(np.array([float(v) for v in vals]))
        comps = np.array(rows["component"]).reshape(n, input_dim)
        return cls(input_dim, n, rows["mean"][0], comps, rows["variance"][0])


def fit_pca(X, n_components):
    """Fit PCA by Jacobi eigendecomposition of the sample covariance (ddof=1)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionError("X must be a 2-D array of feature vectors")
    n, dim = X.shape
    if n_components < 1 or n_components > dim:
        raise DimensionError(f"n_components={n_components} must lie in [1, {dim}]")
    if n < n_components:
        raise DimensionError(f"need at least {n_components} samples, got {n}")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = (Xc.T @ Xc) / max(n - 1, 1)
    cov = (cov + cov.T) / 2.0
    w, v = hermitian_eig(cov)
    comps = v[:, :n_components].T.copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    var = np.maximum(w[:n_components], 0.0)
    return PcaModel(dim, n_components, mean, comps, var)


def pca_transform(model, x):
    """Project ``x`` (one vector or rows of vectors) onto the model's components."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.input_dim:
        raise DimensionError(f"expected length {model.input_dim}, got {x.shape[-1]}")
    return (x - model.mean) @ model.components.T


def amplitude_prepare(x, n_qubits):
    """Zero-pad ``x`` to ``2**n_qubits`` entries and scale to unit norm."""
    x = np.asarray(x, dtype=np.float64).ravel()
    size = 1 << int(n_qubits)
    if x.shape[0] > size:
        raise DimensionError(f"{x.shape[0]} features do not fit in {n_qubits} qubits")
    norm = math.sqrt(math.fsum(x * x))
    if norm == 0.0:
        raise NormalizationError("cannot amplitude-encode the zero vector")
    out = np.zeros(size)
    out[: x.shape[0]] = x / norm
    return out


def qubits_for(system_d, use_pca=True):
    """Register size for a ``d x d`` system and the matching feature count.

    The vectorized state has ``d**4`` entries. Without PCA the register is
    the smallest that holds them all; the PCA strategy drops one qubit and
    keeps as many components as the smaller register holds.
    """
    full = system_d ** 4
    n = max(1, (full - 1).bit_length())
    if not use_pca:
        return n, full
    return n - 1, 1 << (n - 1)
