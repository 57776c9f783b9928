"""Soft-margin SVM: SMO dual solver, cross-validation and grid search."""

import hashlib
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels as _k
from .errors import ConvergenceWarning, DimensionError, StratificationError
from .kernels import KernelKind, KernelSpec, gram_matrix

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-3
DEFAULT_MAX_PASSES = 10_000
LOG_GRID = tuple(float(v) for v in np.logspace(-5, 5, 10))


@dataclass
class SvmModel:
    """Trained binary SVM.

    ``alphas`` and ``labels`` are restricted to the support vectors, whose
    positions in the training set are ``support_indices``.
    """

    support_indices: np.ndarray
    alphas: np.ndarray
    labels: np.ndarray
    bias: float
    kernel: KernelSpec
    support_vectors: np.ndarray
    C: float
    converged: bool = True
    iterations: int = 0
    n_train: int = 0
    objective_trace: np.ndarray = field(default=None, repr=False)

    @property
    def coef(self):
        return self.alphas * self.labels

    def decision_from_gram(self, K):
        """Decision values from kernel rows against the full training set."""
        K = np.atleast_2d(K)
        return K[:, self.support_indices] @ self.coef + self.bias

    def decision_function(self, X):
        if self.support_vectors is None or self.kernel is None:
            raise ValueError("model was trained on a precomputed Gram matrix without features")
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if len(self.support_indices) == 0:
            return np.full(X.shape[0], self.bias)
        return gram_matrix(self.kernel, X, self.support_vectors) @ self.coef + self.bias


def sign_labels(decisions):
    """``+1`` for non-negative decision values, ``-1`` otherwise."""
    return np.where(np.asarray(decisions) >= 0.0, 1, -1)


def _bias(alpha, grad, y, C):
    yg = -y * grad
    free = (alpha > 0.0) & (alpha < C)
    if free.any():
        return float(np.mean(yg[free]))
    at_zero = alpha <= 0.0
    lower = (at_zero & (y > 0)) | (~at_zero & (y < 0))
    upper = ~lower
    lo = np.max(yg[lower]) if lower.any() else -np.inf
    hi = np.min(yg[upper]) if upper.any() else np.inf
    if np.isinf(lo):
        return float(hi)
    if np.isinf(hi):
        return float(lo)
    return float((lo + hi) / 2.0)


def train(gram, y, C, tol=DEFAULT_TOL, max_passes=DEFAULT_MAX_PASSES, kernel=None, X=None, debug=False):
    """Solve the soft-margin dual on a precomputed Gram matrix.

    Parameters
    ----------
    gram : (n, n) array
        Kernel matrix of the training set.
    y : (n,) array of +1/-1
    C : float
        Box constraint.
    tol : float
        Stopping threshold on the maximal KKT violation.
    max_passes : int
        Iteration budget in units of ``n`` pair updates.
    kernel, X : optional
        Kernel and training features, stored so the model can score new
        feature vectors directly.
    debug : bool
        Record the dual objective after every update and check that it
        never decreases.

    Returns
    -------
    SvmModel
        A ``ConvergenceWarning`` carrying the model is issued when the
        budget runs out before the KKT conditions hold.
    """
    K = np.ascontiguousarray(gram, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    n = y.shape[0]
    if K.shape != (n, n):
        raise DimensionError(f"Gram matrix shape {K.shape} does not match {n} labels")
    if not np.all(np.abs(y) == 1.0):
        raise ValueError("labels must be +1 or -1")
    if not (y > 0).any() or not (y < 0).any():
        raise ValueError("training data must contain both classes")
    if not C > 0:
        raise ValueError(f"C must be positive, got {C}")
    max_iter = int(max_passes) * max(n, 1)
    alpha, grad, it, converged, trace = _k.smo(K, y, float(C), float(tol), max_iter, bool(debug))
    if debug and len(trace) > 1:
        # trace holds the minimized form; the dual objective is its negative
        scale = 1e-12 * max(1.0, float(np.max(np.abs(trace))))
        if np.any(np.diff(trace) > scale):
            raise AssertionError("SMO dual objective decreased during training")
    b = _bias(alpha, grad, y, C)
    sv = np.flatnonzero(alpha > 0.0)
    model = SvmModel(
        support_indices=sv,
        alphas=alpha[sv].copy(),
        labels=y[sv].astype(np.int64),
        bias=b,
        kernel=kernel,
        support_vectors=None if X is None else np.asarray(X, dtype=np.float64)[sv].copy(),
        C=float(C),
        converged=bool(converged),
        iterations=int(it),
        n_train=n,
        objective_trace=trace,
    )
    if not converged:
        warnings.warn(ConvergenceWarning(f"SMO stopped after {it} updates without meeting tol={tol}", model),
                      stacklevel=2)
    return model


def fit(X, y, kernel, C, **kw):
    """Compute the training Gram matrix and train on it."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return train(gram_matrix(kernel, X), y, C, kernel=kernel, X=X, **kw)


def predict(model, x):
    """Label and decision value for one feature vector."""
    dec = float(model.decision_function(np.atleast_2d(x))[0])
    return (1 if dec >= 0.0 else -1), dec


def stratified_kfold(y, k=5, seed=0):
    """Shuffled stratified folds.

    Each class is shuffled with a generator seeded by ``seed`` and dealt
    round-robin across folds, continuing from where the previous class
    stopped, so fold sizes differ by at most one.

    Returns a list of ``(train_idx, val_idx)`` sorted index arrays.
    """
    y = np.asarray(y).ravel()
    if k < 2:
        raise ValueError("need at least 2 folds")
    classes, counts = np.unique(y, return_counts=True)
    if np.any(counts < k):
        small = classes[counts < k]
        raise StratificationError(f"classes {small.tolist()} have fewer than {k} members")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(y.shape[0], dtype=np.int64)
    offset = 0
    for c in classes:
        idx = rng.permutation(np.flatnonzero(y == c))
        fold_of[idx] = (offset + np.arange(idx.shape[0])) % k
        offset = (offset + idx.shape[0]) % k
    folds = []
    for f in range(k):
        folds.append((np.flatnonzero(fold_of != f), np.flatnonzero(fold_of == f)))
    return folds


def default_kernel_grid():
    """Polynomial degrees 2 to 7, RBF and sigmoid, without gamma."""
    return [KernelSpec(KernelKind.POLY, 1.0, d) for d in range(2, 8)] + [
        KernelSpec(KernelKind.RBF), KernelSpec(KernelKind.SIGMOID)]


@dataclass
class GridEntry:
    kernel: KernelSpec
    C: float
    mean_accuracy: float
    fold_accuracies: tuple
    unconverged: int = 0


@dataclass
class GridSearchReport:
    evaluated: list
    best: GridEntry

    def to_rows(self):
        return [(e.kernel.describe(), e.C, e.mean_accuracy, e.fold_accuracies, e.unconverged)
                for e in self.evaluated]


def _cells(kernel_grid, gamma_grid):
    cells = []
    for template in kernel_grid:
        if template.kind == KernelKind.AMPLITUDE:
            cells.append(template)
            continue
        for g in gamma_grid:
            cells.append(KernelSpec(template.kind, g, template.degree))
    return cells


_GRID_STATE = {}


def _grid_init(X, y, folds, C_grid, fold_transform, tol, max_passes):
    _GRID_STATE.update(X=X, y=y, folds=folds, C_grid=C_grid, fold_transform=fold_transform,
                       tol=tol, max_passes=max_passes)


def _grid_cell(spec):
    st = _GRID_STATE
    X, y, folds = st["X"], st["y"], st["folds"]
    acc = np.zeros((len(st["C_grid"]), len(folds)))
    bad = np.zeros(len(st["C_grid"]), dtype=np.int64)
    G = None if st["fold_transform"] else gram_matrix(spec, X)
    for f, (tr, va) in enumerate(folds):
        if G is None:
            A, B = st["fold_transform"](X[tr], X[va])
            K_tr, K_va = gram_matrix(spec, A), gram_matrix(spec, B, A)
        else:
            K_tr, K_va = G[np.ix_(tr, tr)], G[np.ix_(va, tr)]
        for c, C in enumerate(st["C_grid"]):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                m = train(K_tr, y[tr], C, tol=st["tol"], max_passes=st["max_passes"])
            bad[c] += not m.converged
            acc[c, f] = np.mean(sign_labels(m.decision_from_gram(K_va)) == y[va])
    return acc, bad


def grid_search(X, y, kernel_grid=None, C_grid=LOG_GRID, gamma_grid=LOG_GRID, k_folds=5, seed=0,
                jobs=1, fold_transform=None, tol=DEFAULT_TOL, max_passes=DEFAULT_MAX_PASSES):
    """Exhaustive cross-validated search over kernels, ``gamma`` and ``C``.

    One Gram matrix is computed per kernel setting and sliced per fold.
    ``fold_transform(train_X, val_X) -> (train_X', val_X')`` is applied
    inside each fold when given (for per-fold PCA), in which case Gram
    matrices are rebuilt per fold. The best entry maximizes mean fold
    accuracy; ties go to the smaller ``C``, then the smaller ``gamma``,
    then the earlier kernel in ``kernel_grid``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    kernel_grid = default_kernel_grid() if kernel_grid is None else list(kernel_grid)
    C_grid = [float(c) for c in C_grid]
    cells = _cells(kernel_grid, [float(g) for g in gamma_grid])
    if not cells or not C_grid:
        raise ValueError("grid is empty")
    folds = stratified_kfold(y, k_folds, seed)
    args = (X, y, folds, C_grid, fold_transform, tol, max_passes)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_grid_init, initargs=args) as pool:
            results = list(pool.map(_grid_cell, cells))
    else:
        _grid_init(*args)
        try:
            results = [_grid_cell(spec) for spec in cells]
        finally:
            _GRID_STATE.clear()
    evaluated = []
    for spec, (acc, bad) in zip(cells, results):
        for c, C in enumerate(C_grid):
            evaluated.append(GridEntry(spec, C, float(np.mean(acc[c])), tuple(float(a) for a in acc[c]),
                                       int(bad[c])))
    order = {id(e): i for i, e in enumerate(evaluated)}
    best = min(evaluated, key=lambda e: (-e.mean_accuracy, e.C, e.kernel.gamma, order[id(e)]))
    return GridSearchReport(evaluated, best)


@dataclass
class EvaluationReport:
    overall: float
    per_class: dict  # tag -> accuracy, only for classes present
    counts: dict
    notices: list = field(default_factory=list)

    def row(self, order=("SEP", "PPT_ENT", "NPPT_ENT")):
        return [self.overall] + [self.per_class.get(t) for t in order]


def evaluate_predictions(pred, tags, classes=("SEP", "PPT_ENT", "NPPT_ENT"), binary=None):
    """Accuracy overall and per class tag for ``+1/-1`` predictions.

    ``binary`` maps each tag to its target; by default ``SEP`` is +1 and
    every other tag is -1.
    """
    pred = np.asarray(pred).ravel()
    tags = np.array([getattr(t, "value", t) for t in tags])
    if pred.shape[0] != tags.shape[0]:
        raise DimensionError("predictions and tags differ in length")
    target = np.array([(binary or {}).get(t, 1 if t == "SEP" else -1) for t in tags])
    hit = pred == target
    per_class, counts, notices = {}, {}, []
    for c in classes:
        mask = tags == c
        counts[c] = int(mask.sum())
        if counts[c] == 0:
            msg = f"no {c} samples in the test set; class accuracy omitted"
            notices.append(msg)
            log.info(msg)
            continue
        per_class[c] = float(hit[mask].mean())
    overall = float(hit.mean()) if hit.size else float("nan")
    return EvaluationReport(overall, per_class, counts, notices)


def evaluate(model, X, tags, **kw):
    """Score ``model`` on feature rows ``X`` with three-class tags."""
    return evaluate_predictions(sign_labels(model.decision_function(X)), tags, **kw)


# ------------------------------------------------------------- persistence


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _g(v):
    return format(float(v), ".17g")


def model_to_text(model, dataset_hash="-"):
    """Text manifest holding everything needed to score new vectors."""
    lines = [
        "svm-model 1",
        f"kernel {model.kernel.describe() if model.kernel else 'precomputed'}",
        f"C {_g(model.C)}",
        f"bias {_g(model.bias)}",
        f"converged {int(model.converged)}",
        f"iterations {model.iterations}",
        f"n_train {model.n_train}",
        f"dataset_sha256 {dataset_hash}",
        f"support {len(model.support_indices)}",
    ]
    for k, i in enumerate(model.support_indices):
        row = f"sv {int(i)} {_g(model.alphas[k])} {int(model.labels[k])}"
        if model.support_vectors is not None:
            row += " " + " ".join(_g(v) for v in model.support_vectors[k])
        lines.append(row)
    return "\n".join(lines) + "\n"


def model_from_text(text):
    """Inverse of :func:`model_to_text`; returns ``(model, dataset_hash)``."""
    meta, rows = {}, []
    for ln in text.splitlines():
        if not ln.strip():
            continue
        key, _, rest = ln.partition(" ")
        if key == "sv":
            rows.append(rest.split())
        else:
            meta[key] = rest.strip()
    if meta.get("svm-model") != "1":
        raise ValueError("not an SVM model manifest")
    idx = np.array([int(r[0]) for r in rows], dtype=np.int64)
    alphas = np.array([float(r[1]) for r in rows])
    labels = np.array([int(r[2]) for r in rows], dtype=np.int64)
    svs = None
    if rows and len(rows[0]) > 3:
        svs = np.array([[float(v) for v in r[3:]] for r in rows])
    kernel = None if meta["kernel"] == "precomputed" else KernelSpec.parse(meta["kernel"])
    model = SvmModel(idx, alphas, labels, float(meta["bias"]), kernel, svs, float(meta["C"]),
                     bool(int(meta["converged"])), int(meta["iterations"]), int(meta["n_train"]))
    return model, meta.get("dataset_sha256", "-")
