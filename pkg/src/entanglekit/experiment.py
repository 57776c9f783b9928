"""Experiment configuration and the generate / train / evaluate pipeline."""

import dataclasses
import os
from dataclasses import dataclass, field

import numpy as np

from . import datagen, svm
from .datagen import GenerationConfig, Label, PurityBand
from .features import PcaModel, fit_pca, pca_transform, qubits_for
from .kernels import AMPLITUDE, normalize_rows
from .qstate import BipartiteDims, is_ppt


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text):
    return [int(v) for v in str(text).replace(" ", "").split(",") if v]


@dataclass
class ExperimentConfig:
    dims: str = "3x3"
    train_size: int = 2000
    train_sizes: list = field(default_factory=lambda: list(range(100, 1001, 100)) + [2000])
    test_size: int = 600
    band: str = "auto"
    seed: int = 0
    pca: str = "table"
    pca_per_fold: bool = False
    kernel: str = "amplitude"
    C: float = 100.0
    repeats: int = 10
    grid_points: int = 10
    k_folds: int = 5
    normalize: bool = False
    ppt_filter: bool = False
    baseline: bool = True
    threshold: float = 0.01
    fw_iterations: int = 1000
    oracle_sweeps: int = 0
    max_tries: int = 20000
    calibration_samples: int = 200
    summands: str = ""
    systems: list = field(default_factory=lambda: [3, 4, 5])
    tol: float = 1e-3
    max_passes: int = 10000
    pairs: int = 100
    epsilon: float = 0.05
    delta: float = 0.05
    trials: int = 1000
    n_qubits: int = 6

    _PARSERS = {
        "train_sizes": _ints,
        "systems": _ints,
        "pca_per_fold": _bool,
        "normalize": _bool,
        "ppt_filter": _bool,
        "baseline": _bool,
    }

    def set(self, key, value):
        names = {f.name: f for f in dataclasses.fields(self)}
        if key not in names:
            raise ConfigError(f"unknown config key {key!r}")
        parse = self._PARSERS.get(key)
        if parse is None:
            default = names[key].default
            parse = type(default) if default is not dataclasses.MISSING else str
        try:
            setattr(self, key, parse(value))
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None

    def validate(self):
        try:
            self.bipartite()
            self.purity_band()
            self.summand_map()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.kernel not in ("amplitude", "grid"):
            raise ConfigError(f"kernel must be 'amplitude' or 'grid', got {self.kernel!r}")
        if self.pca not in ("table", "none") and not self.pca.isdigit():
            raise ConfigError(f"pca must be 'table', 'none' or a component count, got {self.pca!r}")
        if self.train_size < 2 or self.train_size % 2:
            raise ConfigError("train_size must be a positive even number")
        if any(n < 2 or n % 2 for n in self.train_sizes):
            raise ConfigError("train_sizes must be positive even numbers")
        if self.test_size < 3 or self.test_size % 3:
            raise ConfigError("test_size must be a positive multiple of 3")
        if self.C <= 0:
            raise ConfigError("C must be positive")
        if self.repeats < 1 or self.grid_points < 1 or self.k_folds < 2:
            raise ConfigError("repeats and grid_points must be >= 1, k_folds >= 2")
        nc = self.n_components()
        if nc is not None and nc > self.train_size:
            raise ConfigError(f"{nc}-component PCA needs at least {nc} training samples, "
                              f"train_size is {self.train_size}")
        return self

    def bipartite(self):
        try:
            a, b = (int(v) for v in self.dims.lower().split("x"))
        except ValueError:
            raise ValueError(f"dims must look like '3x3', got {self.dims!r}") from None
        return BipartiteDims(a, b)

    def purity_band(self):
        if self.band == "auto":
            return None
        lo, hi = (float(v) for v in self.band.split(","))
        return PurityBand.window(lo, hi).check(self.bipartite())

    def summand_map(self):
        out = {}
        for item in self.summands.replace(" ", "").split(","):
            if item:
                tag, k = item.split(":")
                out[Label(tag)] = int(k)
        return out

    def n_components(self, dims=None):
        """PCA width implied by the strategy, or None when PCA is off."""
        dims = dims or self.bipartite()
        if self.pca == "none":
            return None
        if self.pca == "table":
            if dims.dA != dims.dB:
                raise ConfigError("the table PCA strategy needs equal local dimensions")
            return qubits_for(dims.dA, use_pca=True)[1]
        return int(self.pca)

    def generation(self, dims=None, n_train=None, jobs=1):
        dims = dims or self.bipartite()
        return GenerationConfig(
            dims=dims, n_train=n_train or self.train_size, n_test=self.test_size,
            band=self.purity_band() if dims == self.bipartite() else None, seed=self.seed,
            threshold=self.threshold, fw_iterations=self.fw_iterations,
            oracle_sweeps=self.oracle_sweeps, max_tries=self.max_tries,
            calibration_samples=self.calibration_samples, summands=self.summand_map(), jobs=jobs)

    def gamma_grid(self):
        return tuple(float(v) for v in np.logspace(-5, 5, self.grid_points))


def parse_config_text(text):
    """``key = value`` lines; ``#`` starts a comment."""
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        pairs.append((key.strip(), value.strip()))
    return pairs


def load_config(path=None, overrides=(), environ=None):
    """Defaults, then the config file, then ``ENTANGLEKIT_SEED``, then overrides."""
    cfg = ExperimentConfig()
    if path:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        for key, value in parse_config_text(text):
            cfg.set(key, value)
    env = os.environ if environ is None else environ
    if env.get("ENTANGLEKIT_SEED"):
        cfg.set("seed", env["ENTANGLEKIT_SEED"])
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value.strip())
    return cfg.validate()


# ------------------------------------------------------------------ features


@dataclass
class FeaturePipeline:
    """Vectorization, optional PCA fitted on training data, optional row normalization."""

    pca: PcaModel = None
    normalize: bool = False

    def transform(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.pca is not None:
            X = pca_transform(self.pca, X)
        if self.normalize:
            X = normalize_rows(X)
        return X

    def to_text(self):
        head = f"features normalize={int(self.normalize)} pca={'none' if self.pca is None else 'yes'}\n"
        return head + (self.pca.to_text() if self.pca is not None else "")

    @classmethod
    def from_text(cls, text):
        head, _, rest = text.partition("\n")
        opts = dict(tok.split("=") for tok in head.split()[1:])
        pca = PcaModel.from_text(rest) if opts["pca"] == "yes" else None
        return cls(pca, bool(int(opts["normalize"])))


def fit_features(X_train, n_components=None, normalize=False):
    pca = fit_pca(X_train, n_components) if n_components else None
    return FeaturePipeline(pca, normalize)


def balanced_prefix(states, n):
    """First ``n/2`` SEP and first ``n/2`` PPT_ENT states, in original order."""
    half = n // 2
    seen = {Label.SEP: 0, Label.PPT_ENT: 0}
    out = []
    for s in states:
        lab = Label(s.label)
        if lab in seen and seen[lab] < half:
            seen[lab] += 1
            out.append(s)
    if min(seen.values()) < half:
        raise ConfigError(f"dataset holds fewer than {half} training states per class")
    return out


# ------------------------------------------------------------------- models


@dataclass
class TrainedModel:
    model: svm.SvmModel
    pipeline: FeaturePipeline
    train_size: int
    label: str  # kernel column in reports
    extra: dict = field(default_factory=dict)

    def decisions(self, states):
        X = self.pipeline.transform(datagen.features(states))
        return self.model.decision_function(X)

    def predict(self, states, ppt_filter=False, dims=None):
        pred = svm.sign_labels(self.decisions(states))
        if ppt_filter:
            # states failing PPT are entangled regardless of the SVM
            for i, s in enumerate(states):
                if not is_ppt(s.rho, dims or BipartiteDims(*_dims_of(s.rho))):
                    pred[i] = -1
        return pred

    def to_text(self, dataset_hash="-"):
        meta = f"experiment train_size={self.train_size} label={self.label}\n"
        return ("[experiment]\n" + meta + "[features]\n" + self.pipeline.to_text()
                + "[svm]\n" + svm.model_to_text(self.model, dataset_hash))

    @classmethod
    def from_text(cls, text):
        blocks = {}
        current = None
        for line in text.splitlines(keepends=True):
            if line.startswith("[") and line.strip().endswith("]"):
                current = line.strip()[1:-1]
                blocks[current] = ""
            elif current:
                blocks[current] += line
        try:
            opts = dict(tok.split("=", 1) for tok in blocks["experiment"].split()[1:])
            pipeline = FeaturePipeline.from_text(blocks["features"])
            model, _ = svm.model_from_text(blocks["svm"])
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"malformed model manifest: {exc}") from None
        return cls(model, pipeline, int(opts["train_size"]), opts["label"])


def _dims_of(rho):
    n = int(round(np.sqrt(rho.shape[0])))
    if n * n != rho.shape[0]:
        raise ConfigError("the PPT filter needs square local dimensions")
    return n, n


def amplitude_label(n_components, dims):
    if n_components is None:
        n = qubits_for(dims.dA, use_pca=False)[0]
        return f"amplitude_{n}q_nopca"
    return f"amplitude_{max(1, (n_components - 1).bit_length())}q_pca{n_components}"


def train_amplitude(cfg, train_states, dims, n_components="config"):
    if n_components == "config":
        n_components = cfg.n_components(dims)
    X = datagen.features(train_states)
    y = datagen.binary_labels(train_states)
    pipe = fit_features(X, n_components, cfg.normalize)
    model = svm.fit(pipe.transform(X), y, AMPLITUDE, cfg.C, tol=cfg.tol, max_passes=cfg.max_passes)
    return TrainedModel(model, pipe, len(train_states), amplitude_label(n_components, dims))


def _pca_fold_transform(n_components, normalize):
    def transform(A, B):
        pipe = fit_features(A, n_components, normalize)
        return pipe.transform(A), pipe.transform(B)
    return transform


def train_grid(cfg, train_states, dims, jobs=1, per_repeat=False):
    """Repeated grid searches with CV seeds ``seed, seed + 1, ...``.

    The returned model uses the setting with the best accuracy averaged
    over repeats. Returns ``(TrainedModel, reports, repeat_models)`` where
    ``repeat_models`` holds each repeat's own best model when
    ``per_repeat`` is set and is empty otherwise.
    """
    X = datagen.features(train_states)
    y = datagen.binary_labels(train_states)
    nc = cfg.n_components(dims)
    if cfg.pca_per_fold:
        Xg = X
        transform = _pca_fold_transform(nc, cfg.normalize)
    else:
        Xg = fit_features(X, nc, cfg.normalize).transform(X)
        transform = None
    grid = cfg.gamma_grid()
    reports = []
    for r in range(cfg.repeats):
        reports.append(svm.grid_search(Xg, y, svm.default_kernel_grid(), grid, grid, cfg.k_folds, cfg.seed + r,
                                       jobs=jobs, fold_transform=transform, tol=cfg.tol,
                                       max_passes=cfg.max_passes))
    means = np.mean([[e.mean_accuracy for e in rep.evaluated] for rep in reports], axis=0)
    entries = reports[0].evaluated
    best_i = min(range(len(entries)), key=lambda i: (-means[i], entries[i].C, entries[i].kernel.gamma, i))
    best = entries[best_i]
    pipe = fit_features(X, nc, cfg.normalize)
    Xp = pipe.transform(X)

    def final(entry):
        model = svm.fit(Xp, y, entry.kernel, entry.C, tol=cfg.tol, max_passes=cfg.max_passes)
        return TrainedModel(model, pipe, len(train_states), "grid")

    picks = [rep.best.mean_accuracy for rep in reports]
    trained = final(best)
    trained.extra = {"best_kernel": best.kernel.describe(), "best_C": best.C,
                     "cv_best_mean": float(np.mean(picks)), "cv_best_std": float(np.std(picks))}
    repeat_models = [final(rep.best) for rep in reports] if per_repeat else []
    return trained, reports, repeat_models


def evaluate_states(trained, states, ppt_filter=False, dims=None):
    pred = trained.predict(states, ppt_filter, dims)
    return svm.evaluate_predictions(pred, [s.label for s in states])
