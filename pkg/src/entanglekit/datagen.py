"""Labeled, purity-matched datasets of separable and entangled states.

Three classes are produced:

``SEP``
    convex mixtures of products of random density matrices;
``PPT_ENT``
    random mixed states that pass the PPT test but stay farther than a
    threshold from their Frank-Wolfe separable approximation;
``NPPT_ENT``
    random mixed states that fail the PPT test.

Each class draws its number of mixture summands ``k`` from a calibration
step so that all classes share the same purity window, which removes purity
as a shortcut feature.
"""

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import qstate
from ._backend import BACKEND, kernels
from .errors import CalibrationError, DimensionError, GenerationExhausted
from .qstate import BipartiteDims


class Label(str, Enum):
    SEP = "SEP"
    PPT_ENT = "PPT_ENT"
    NPPT_ENT = "NPPT_ENT"


LABEL_CODES = {Label.SEP: 0, Label.PPT_ENT: 1, Label.NPPT_ENT: 2}
SPLIT_CODES = {"train": 0, "test": 1, "calibration": 2}

# binary target used by the classifier: separable vs entangled
BINARY = {Label.SEP: 1, Label.PPT_ENT: -1, Label.NPPT_ENT: -1}


@dataclass(frozen=True)
class PurityBand:
    """Acceptance window ``[lo, hi]`` on ``tr(rho^2)`` plus its nominal moments."""

    mean: float
    stddev: float
    lo: float
    hi: float

    def __post_init__(self):
        if not (0.0 < self.lo < self.hi <= 1.0):
            raise ValueError(f"purity band needs 0 < lo < hi <= 1, got [{self.lo}, {self.hi}]")

    @classmethod
    def window(cls, lo, hi):
        return cls((lo + hi) / 2.0, (hi - lo) / 4.0, float(lo), float(hi))

    @classmethod
    def default(cls, dims):
        """Window just above the Gurvits ball ``tr(rho^2) < 1/(D-1)``.

        Inside that ball every state is separable, so the window starts 5%
        above its radius and spans 30% of it.
        """
        g = 1.0 / (dims.total - 1)
        return cls.window(1.05 * g, 1.35 * g)

    def check(self, dims):
        if self.lo < 1.0 / dims.total:
            raise ValueError(f"band lo {self.lo} is below the minimum purity 1/{dims.total}")
        return self

    def contains(self, p):
        return self.lo <= p <= self.hi


@dataclass
class LabeledState:
    rho: np.ndarray
    label: Label
    purity: float
    summand_count: int
    fw_distance: float = None
    seed: int = None


@dataclass
class GenerationConfig:
    """Every knob that influences a generated dataset."""

    dims: BipartiteDims
    n_train: int = 2000
    n_test: int = 600
    band: PurityBand = None
    seed: int = 0
    threshold: float = 0.01
    fw_iterations: int = 1000
    oracle_sweeps: int = 0
    max_tries: int = 20000
    calibration_samples: int = 200
    summands: dict = field(default_factory=dict)  # label -> k, skips calibration
    jobs: int = 1

    def resolved_band(self):
        return (self.band or PurityBand.default(self.dims)).check(self.dims)

    def record(self):
        band = self.resolved_band()
        return {
            "dims": [self.dims.dA, self.dims.dB],
            "n_train": self.n_train,
            "n_test": self.n_test,
            "band": [band.lo, band.hi],
            "seed": self.seed,
            "threshold": self.threshold,
            "fw_iterations": self.fw_iterations,
            "oracle_sweeps": self.oracle_sweeps,
            "max_tries": self.max_tries,
            "calibration_samples": self.calibration_samples,
            "summands": {Label(k).value: int(v) for k, v in sorted(self.summands.items())},
        }


@dataclass
class Dataset:
    dims: BipartiteDims
    train: list
    test: list
    generation_config: dict
    log: dict = field(default_factory=dict)

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        band = self.generation_config["band"]
        seed = self.generation_config["seed"]
        write_split(os.path.join(directory, "train.txt"), self.train, self.dims, band, seed)
        write_split(os.path.join(directory, "test.txt"), self.test, self.dims, band, seed)
        with open(os.path.join(directory, "generation_log.json"), "w") as fh:
            json.dump({"config": self.generation_config, "log": self.log}, fh, indent=2, sort_keys=True)
            fh.write("\n")


# ---------------------------------------------------------------- sampling


def random_density(d, rng):
    """Hilbert-Schmidt random state ``A^H A / tr(A^H A)`` with Ginibre ``A``."""
    if d < 1:
        raise DimensionError("dimension must be >= 1")
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rho = a.conj().T @ a
    rho = (rho + rho.conj().T) / 2.0
    return rho / np.trace(rho).real


def random_pure(d, rng):
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def _weights(k, rng):
    if k < 1:
        raise ValueError(f"summand count must be >= 1, got {k}")
    return np.ones(1) if k == 1 else rng.dirichlet(np.ones(k))


def random_separable(dims, k, rng):
    """Dirichlet-weighted mixture of ``k`` products of random local states."""
    q = _weights(k, rng)
    rho = np.zeros((dims.total, dims.total), dtype=np.complex128)
    for qj in q:
        rho += qj * np.kron(random_density(dims.dA, rng), random_density(dims.dB, rng))
    return rho


def random_mixture(d, k, rng):
    """Dirichlet-weighted mixture of ``k`` random ``d``-dimensional states."""
    q = _weights(k, rng)
    rho = np.zeros((d, d), dtype=np.complex128)
    for qj in q:
        rho += qj * random_density(d, rng)
    return rho


def random_nppt(dims, k, rng, max_tries=10000, band=None):
    """Rejection-sample a random mixture whose partial transpose is not PSD."""
    for _ in range(max_tries):
        rho = random_mixture(dims.total, k, rng)
        if band is not None and not band.contains(qstate.purity(rho)):
            continue
        if not qstate.is_ppt(rho, dims):
            return rho
    raise GenerationExhausted(f"no NPPT state with k={k} in {max_tries} tries")


def frank_wolfe_nearest_separable(rho, dims, T=1000, rng=None, oracle_sweeps=0):
    """Approximate the closest separable state by Frank-Wolfe over product projectors.

    Starts from a random product pure state and at step ``t`` mixes in the
    product projector returned by the linear oracle with weight
    ``2/(t+2)``. The oracle takes the top eigenvector of ``rho - sigma_t``,
    keeps its leading Schmidt pair and then applies ``oracle_sweeps`` rounds
    of alternating maximization over the two local factors
    (``oracle_sweeps=0`` keeps the bare Schmidt pair).

    Returns
    -------
    sigma : ndarray
        The separable iterate after ``T`` steps.
    distance : float
        Frobenius norm ``||rho - sigma||``.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    rho = np.ascontiguousarray(rho, dtype=np.complex128)
    if rho.shape != (dims.total, dims.total):
        raise DimensionError(f"rho shape {rho.shape} does not match dims {dims}")
    rng = np.random.default_rng() if rng is None else rng
    a0 = random_pure(dims.dA, rng)
    b0 = random_pure(dims.dB, rng)
    sigma, dist = kernels.frank_wolfe(rho, dims.dA, dims.dB, a0, b0, int(T), int(oracle_sweeps))
    return sigma, float(dist)


def _draw(label, dims, k, rng, band=None, max_tries=10000, threshold=0.01, T=1000, oracle_sweeps=0,
          run_fw=True):
    """One accepted sample of ``label``; returns ``(LabeledState, tries)``."""
    for tries in range(1, max_tries + 1):
        if label == Label.SEP:
            rho = random_separable(dims, k, rng)
        else:
            rho = random_mixture(dims.total, k, rng)
        p = qstate.purity(rho)
        if band is not None and not band.contains(p):
            continue
        if label == Label.SEP:
            return LabeledState(rho, label, p, k), tries
        ppt = qstate.is_ppt(rho, dims)
        if label == Label.NPPT_ENT:
            if not ppt:
                return LabeledState(rho, label, p, k), tries
            continue
        if not ppt:
            continue
        if not run_fw:
            return LabeledState(rho, label, p, k), tries
        _, dist = frank_wolfe_nearest_separable(rho, dims, T, rng, oracle_sweeps)
        if dist > threshold:
            return LabeledState(rho, label, p, k, fw_distance=dist), tries
    raise GenerationExhausted(f"no {label.value} sample with k={k} in {max_tries} tries")


def generate_ppt_entangled(dims, k, threshold=0.01, T=1000, rng=None, max_tries=10000, band=None,
                           oracle_sweeps=0):
    """Rejection-sample a PPT state that Frank-Wolfe cannot bring within ``threshold``."""
    rng = np.random.default_rng() if rng is None else rng
    state, _ = _draw(Label.PPT_ENT, dims, k, rng, band, max_tries, threshold, T, oracle_sweeps)
    return state


# ------------------------------------------------------------- calibration


def _probe(dims, label, k, rng, n_samples, max_tries):
    """Mean purity of ``n_samples`` draws, or None when the class is too rare at this k."""
    budget = max_tries
    total = 0.0
    for _ in range(n_samples):
        try:
            state, tries = _draw(label, dims, k, rng, max_tries=budget, run_fw=False)
        except GenerationExhausted:
            return None
        budget -= tries - 1
        total += state.purity
    return total / n_samples


def calibrate_summands(dims, target_band, label, rng, n_samples=200, k_max=4096, max_tries=None):
    """Smallest summand count whose mean class purity falls in the band.

    Mean purity decreases with ``k``, so the search doubles ``k`` until the
    mean drops to ``hi`` or below and then bisects for the smallest such
    ``k``. PPT draws are filtered by the PPT test only; the Frank-Wolfe
    check is skipped during calibration. A probe where the class is too
    rare to sample (PPT at small ``k``, NPPT at large ``k``) counts as
    lying on the corresponding side of the band.
    """
    label = Label(label)
    max_tries = max_tries or 200 * n_samples
    table = []

    def too_pure(k):
        m = _probe(dims, label, k, rng, n_samples, max_tries)
        table.append((k, m))
        if m is None:
            if label == Label.NPPT_ENT:
                raise CalibrationError(
                    f"{label.value} states became too rare at k={k} before reaching band "
                    f"[{target_band.lo:.4g}, {target_band.hi:.4g}]", table)
            return True
        return m > target_band.hi

    k_prev, k = 0, 1
    while too_pure(k):
        if k >= k_max:
            raise CalibrationError(
                f"band [{target_band.lo:.4g}, {target_band.hi:.4g}] not reached for {label.value} "
                f"with k <= {k_max}", table)
        k_prev, k = k, min(2 * k, k_max)
    lo_k, hi_k = k_prev, k
    while hi_k - lo_k > 1:
        mid = (lo_k + hi_k) // 2
        if too_pure(mid):
            lo_k = mid
        else:
            hi_k = mid
    mean = dict(table)[hi_k]
    if mean < target_band.lo:
        raise CalibrationError(
            f"{label.value} mean purity jumps past band [{target_band.lo:.4g}, {target_band.hi:.4g}]",
            table)
    return hi_k


# ---------------------------------------------------------------- assembly


def sample_seed(master, split, label, index):
    """64-bit seed of one sample, derived from its position alone."""
    ss = np.random.SeedSequence([int(master), SPLIT_CODES[split], LABEL_CODES[Label(label)], int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def _task(args):
    label, dims, k, band, seed, cfg = args
    rng = np.random.default_rng(seed)
    state, tries = _draw(label, dims, k, rng, band, cfg["max_tries"], cfg["threshold"],
                         cfg["fw_iterations"], cfg["oracle_sweeps"])
    state.seed = seed
    return state, tries


def _class_stats(states):
    p = np.array([s.purity for s in states])
    return {"count": len(states), "purity_mean": float(p.mean()), "purity_std": float(p.std(ddof=1))
            if len(p) > 1 else 0.0}


def build_dataset(config):
    """Generate the train and test splits described by ``config``.

    The training split holds equal numbers of SEP and PPT_ENT states; the
    test split holds equal thirds of all three classes. Samples are laid out
    class by class and each one is drawn from its own seed stream, so the
    result does not depend on ``config.jobs``.
    """
    dims = config.dims
    band = config.resolved_band()
    if config.n_train % 2 or config.n_train < 2:
        raise ValueError(f"train size must be a positive even number, got {config.n_train}")
    if config.n_test % 3 or config.n_test < 3:
        raise ValueError(f"test size must be a positive multiple of 3, got {config.n_test}")
    summands = {Label(k): int(v) for k, v in config.summands.items()}
    calibration = {}
    for label in Label:
        if label not in summands:
            rng = np.random.default_rng(np.random.SeedSequence(
                [int(config.seed), SPLIT_CODES["calibration"], LABEL_CODES[label]]))
            summands[label] = calibrate_summands(dims, band, label, rng, config.calibration_samples)
        calibration[label.value] = summands[label]

    cfg = {"max_tries": config.max_tries, "threshold": config.threshold,
           "fw_iterations": config.fw_iterations, "oracle_sweeps": config.oracle_sweeps}
    layout = [("train", label, config.n_train // 2) for label in (Label.SEP, Label.PPT_ENT)]
    layout += [("test", label, config.n_test // 3) for label in Label]
    tasks = []
    for split, label, n in layout:
        for i in range(n):
            tasks.append((label, dims, summands[label], band, sample_seed(config.seed, split, label, i), cfg))

    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (8 * config.jobs))))
    else:
        results = [_task(t) for t in tasks]

    splits = {"train": [], "test": []}
    acceptance = {}
    pos = 0
    for split, label, n in layout:
        chunk = results[pos:pos + n]
        pos += n
        splits[split].extend(s for s, _ in chunk)
        acceptance[f"{split}/{label.value}"] = n / sum(t for _, t in chunk)

    log = {"backend": BACKEND, "summands": calibration, "acceptance_rate": acceptance, "purity": {}}
    for split in ("train", "test"):
        for label in Label:
            members = [s for s in splits[split] if s.label == label]
            if members:
                log["purity"][f"{split}/{label.value}"] = _class_stats(members)
    fw = [s.fw_distance for s in splits["train"] + splits["test"] if s.fw_distance is not None]
    if fw:
        log["fw_distance"] = {"min": float(min(fw)), "mean": float(np.mean(fw)), "max": float(max(fw))}
    return Dataset(dims, splits["train"], splits["test"], config.record(), log)


# ------------------------------------------------------------- persistence


def _g(x):
    return format(float(x), ".17g")


def write_split(path, states, dims, band, seed):
    """Write one split as line-delimited text that reads back bit-exactly."""
    lo, hi = (band.lo, band.hi) if isinstance(band, PurityBand) else band
    lines = [f"dims {dims.dA} {dims.dB}; count {len(states)}; band {_g(lo)} {_g(hi)}; seed {int(seed)}"]
    for s in states:
        fw = "-" if s.fw_distance is None else _g(s.fw_distance)
        entries = " ".join(f"{_g(z.real)},{_g(z.imag)}" for z in np.asarray(s.rho).ravel())
        lines.append(f"{Label(s.label).value} {_g(s.purity)} {int(s.summand_count)} {fw} {entries}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_header(line):
    fields = {}
    for part in line.strip().split(";"):
        key, *vals = part.split()
        fields[key] = vals
    try:
        dims = BipartiteDims(int(fields["dims"][0]), int(fields["dims"][1]))
        count = int(fields["count"][0])
        band = (float(fields["band"][0]), float(fields["band"][1]))
        seed = int(fields["seed"][0])
    except (KeyError, IndexError, ValueError) as exc:
        raise ValueError(f"malformed dataset header: {line.strip()!r}") from exc
    return dims, count, band, seed


def read_split(path, split=None):
    """Read a split written by :func:`write_split`.

    Returns ``(dims, states, band, seed)``. When ``split`` is given, each
    state's seed is recomputed from its position within its class.
    """
    with open(path) as fh:
        header = fh.readline()
        dims, count, band, seed = _parse_header(header)
        n = dims.total
        states = []
        counters = {label: 0 for label in Label}
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            tok = line.split()
            if len(tok) != 4 + n * n:
                raise ValueError(f"{path}:{lineno}: expected {4 + n * n} fields, got {len(tok)}")
            label = Label(tok[0])
            vals = np.array([float(v) for pair in tok[4:] for v in pair.split(",")])
            rho = (vals[0::2] + 1j * vals[1::2]).reshape(n, n)
            fw = None if tok[3] == "-" else float(tok[3])
            s_seed = sample_seed(seed, split, label, counters[label]) if split else None
            counters[label] += 1
            states.append(LabeledState(rho, label, float(tok[1]), int(tok[2]), fw, s_seed))
    if len(states) != count:
        raise ValueError(f"{path}: header announces {count} states, found {len(states)}")
    return dims, states, band, seed


def load_dataset(directory):
    dims, train, band, seed = read_split(os.path.join(directory, "train.txt"), "train")
    dims_t, test, _, _ = read_split(os.path.join(directory, "test.txt"), "test")
    if dims_t != dims:
        raise ValueError("train and test splits have different dimensions")
    config, log = {"dims": [dims.dA, dims.dB], "band": list(band), "seed": seed}, {}
    log_path = os.path.join(directory, "generation_log.json")
    if os.path.exists(log_path):
        with open(log_path) as fh:
            blob = json.load(fh)
        config, log = blob.get("config", config), blob.get("log", {})
    return Dataset(dims, train, test, config, log)


def features(states):
    """Stack isometric vectorizations into an ``(n, d^2)`` array."""
    return np.array([qstate.vectorize(s.rho) for s in states])


def binary_labels(states):
    return np.array([BINARY[Label(s.label)] for s in states], dtype=np.int64)


def purity_summary(states):
    """Per-class ``(count, mean, stddev)`` of purity."""
    out = {}
    for label in Label:
        p = np.array([s.purity for s in states if Label(s.label) == label])
        if len(p):
            out[label.value] = (len(p), float(p.mean()), float(p.std(ddof=1)) if len(p) > 1 else 0.0)
    return out


def pooled_std(summary, a, b):
    na, _, sa = summary[a]
    nb, _, sb = summary[b]
    if na + nb <= 2:
        return math.sqrt((sa * sa + sb * sb) / 2.0)
    return math.sqrt(((na - 1) * sa * sa + (nb - 1) * sb * sb) / (na + nb - 2))


__all__ = [
    "Label", "PurityBand", "LabeledState", "GenerationConfig", "Dataset", "random_density",
    "random_pure", "random_separable", "random_mixture", "random_nppt",
    "frank_wolfe_nearest_separable", "generate_ppt_entangled", "calibrate_summands",
    "build_dataset", "write_split", "read_split", "load_dataset", "features", "binary_labels",
    "purity_summary", "pooled_std", "sample_seed",
]
