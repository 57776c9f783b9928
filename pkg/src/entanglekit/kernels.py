"""Kernel functions and Gram matrices.

Every kernel here is a function of inner products, so a Gram matrix is
built from one matrix of compensated dot products plus the squared norms
on its diagonal.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from ._backend import kernels as _k
from .errors import DimensionError, NormalizationError


class KernelKind(str, Enum):
    AMPLITUDE = "amplitude"
    POLY = "poly"
    RBF = "rbf"
    SIGMOID = "sigmoid"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus its hyperparameters.

    ``POLY`` is ``gamma * <x, y> ** degree`` with no additive constant;
    ``AMPLITUDE`` ignores ``gamma`` and ``degree``.
    """

    kind: KernelKind
    gamma: float = 1.0
    degree: int = 2

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind(self.kind))
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.kind == KernelKind.POLY and not 2 <= int(self.degree) <= 7:
            raise ValueError(f"polynomial degree must be in [2, 7], got {self.degree}")

    def describe(self):
        if self.kind == KernelKind.AMPLITUDE:
            return "amplitude"
        if self.kind == KernelKind.POLY:
            return f"poly(gamma={float(self.gamma)!r},degree={self.degree})"
        return f"{self.kind.value}(gamma={float(self.gamma)!r})"

    @classmethod
    def parse(cls, text):
        """Inverse of :meth:`describe`."""
        text = text.strip()
        if text == "amplitude":
            return cls(KernelKind.AMPLITUDE)
        name, _, rest = text.partition("(")
        params = dict(p.split("=") for p in rest.rstrip(")").split(",") if p)
        kw = {"gamma": float(params["gamma"])}
        if "degree" in params:
            kw["degree"] = int(params["degree"])
        return cls(KernelKind(name), **kw)


AMPLITUDE = KernelSpec(KernelKind.AMPLITUDE)


def _dot(x, y):
    # products are symmetric in x, y and fsum is order independent
    return math.fsum(x * y)


def _apply(spec, dots, nx, ny):
    if spec.kind == KernelKind.AMPLITUDE:
        if np.any(nx == 0.0) or np.any(ny == 0.0):
            raise NormalizationError("amplitude kernel is undefined for the zero vector")
        # rounding can push a perfect overlap one ulp above 1
        return np.minimum(dots * dots / (nx * ny), 1.0)
    if spec.kind == KernelKind.POLY:
        return spec.gamma * dots ** int(spec.degree)
    if spec.kind == KernelKind.RBF:
        return np.exp(-spec.gamma * np.maximum(nx + ny - 2.0 * dots, 0.0))
    return np.tanh(spec.gamma * dots)


def kernel_eval(spec, x, y):
    """Kernel value for one pair of feature vectors."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise DimensionError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    if spec.kind == KernelKind.RBF:
        diff = x - y
        return float(math.exp(-spec.gamma * math.fsum(diff * diff)))
    return float(_apply(spec, _dot(x, y), _dot(x, x), _dot(y, y)))


def dot_matrix(X, Y=None):
    """Pairwise inner products with compensated accumulation."""
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    if Y is None:
        D = _k.dot_matrix(X, X)
        return np.triu(D) + np.triu(D, 1).T
    Y = np.ascontiguousarray(np.atleast_2d(Y), dtype=np.float64)
    if X.shape[1] != Y.shape[1]:
        raise DimensionError(f"length mismatch: {X.shape[1]} vs {Y.shape[1]}")
    return _k.dot_matrix(X, Y)


def squared_norms(X):
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    return np.array([math.fsum(row * row) for row in X])


def gram_from_dots(spec, D, nx, ny):
    """Kernel matrix from precomputed dot products and squared norms."""
    return _apply(spec, D, np.asarray(nx)[:, None], np.asarray(ny)[None, :])


def gram_matrix(spec, X, Y=None):
    """``G[i, j] = k(X[i], Y[j])``; square and exactly symmetric when ``Y`` is omitted."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    D = dot_matrix(X, Y)
    if Y is None:
        n = np.diag(D).copy()
        return gram_from_dots(spec, D, n, n)
    return gram_from_dots(spec, D, squared_norms(X), squared_norms(Y))


def normalize_rows(X):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = np.sqrt(squared_norms(X))
    if np.any(n == 0.0):
        raise NormalizationError("cannot normalize a zero row")
    return X / n[:, None]


def export_csv(G, path, digits=17):
    """Write a Gram matrix as comma-separated rows."""
    fmt = f"%.{digits}g"
    np.savetxt(path, np.atleast_2d(G), fmt=fmt, delimiter=",")


def load_csv(path):
    return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=np.float64))
