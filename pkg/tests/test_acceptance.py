"""One test per acceptance criterion; each records a pass/fail line before asserting."""

import functools
import math
import time

import numpy as np
import pytest

from entanglekit import cli, datagen, experiment, qsim, qstate, svm
from entanglekit.datagen import Label, LabeledState
from entanglekit.features import qubits_for
from entanglekit.kernels import AMPLITUDE, KernelKind, KernelSpec, gram_matrix, kernel_eval, normalize_rows
from entanglekit.qstate import BipartiteDims
from entanglekit.qsim import StateVector, encode, hadamard_test, shots_required, swap_test_p0

from .test_svm import _kkt_margins, _problem, brute_force_dual

pytestmark = pytest.mark.slow

POLY2 = KernelSpec(KernelKind.POLY, 1.0, 2)


def config(d, n_train, seed=0, *extra):
    return experiment.load_config(None, [f"dims={d}x{d}", f"train_size={n_train}", f"seed={seed}", *extra],
                                  environ={})


@functools.lru_cache(maxsize=None)
def dataset(d, n_train, seed=0):
    """Default-law dataset, generated once per session."""
    start = time.perf_counter()
    ds = datagen.build_dataset(config(d, n_train, seed).generation())
    return ds, time.perf_counter() - start


def amplitude_accuracy(cfg, ds, n_components="config"):
    trained = experiment.train_amplitude(cfg, ds.train, ds.dims, n_components)
    return experiment.evaluate_states(trained, ds.test)


# -------------------------------------------------------------- criterion 1


def test_criterion_1_kernel_equivalence(acceptance):
    start = time.perf_counter()
    ds, _ = dataset(3, 500)
    cfg = config(3, 500)
    pipe = experiment.fit_features(datagen.features(ds.train), cfg.n_components())
    X, Xt = pipe.transform(datagen.features(ds.train)), pipe.transform(datagen.features(ds.test))
    y = datagen.binary_labels(ds.train)
    tags = [s.label for s in ds.test]
    acc = {}
    for name, spec, A, B in (("amplitude", AMPLITUDE, X, Xt),
                             ("poly2", POLY2, normalize_rows(X), normalize_rows(Xt))):
        model = svm.fit(A, y, spec, cfg.C)
        acc[name] = svm.evaluate_predictions(svm.sign_labels(model.decision_function(B)), tags).overall
    gram_dev = max(np.max(np.abs(gram_matrix(AMPLITUDE, X) - gram_matrix(POLY2, normalize_rows(X)))),
                   np.max(np.abs(gram_matrix(AMPLITUDE, Xt, X)
                                 - gram_matrix(POLY2, normalize_rows(Xt), normalize_rows(X)))))
    elapsed = time.perf_counter() - start
    gap = abs(acc["amplitude"] - acc["poly2"])
    ok = gap <= 0.01 and gram_dev <= 1e-12 and elapsed < 60
    acceptance(1, "kernel equivalence", ok,
               f"accuracy amplitude={acc['amplitude']:.4f} poly2={acc['poly2']:.4f} gap={gap:.4f} (<= 0.01); "
               f"max Gram deviation {gram_dev:.2e} (<= 1e-12); {elapsed:.1f} s (< 60 s)")
    assert ok


# -------------------------------------------------------------- criterion 2


def _random_state(n, rng):
    v = rng.standard_normal(2 ** n) + 1j * rng.standard_normal(2 ** n)
    return StateVector(n, v / np.linalg.norm(v))


def test_criterion_2_circuit_identity(acceptance):
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    dev = {"swap": 0.0, "Re": 0.0, "Im": 0.0}
    for n in range(1, 10):
        for _ in range(100):
            psi, phi = _random_state(n, rng), _random_state(n, rng)
            overlap = np.vdot(psi.amplitudes, phi.amplitudes)
            dev["swap"] = max(dev["swap"], abs(swap_test_p0(psi, phi) - (1 + abs(overlap) ** 2) / 2))
            dev["Re"] = max(dev["Re"], abs(hadamard_test(psi, phi, "Re") - (1 + overlap.real) / 2))
            dev["Im"] = max(dev["Im"], abs(hadamard_test(psi, phi, "Im") - (1 + overlap.imag) / 2))

    eps = delta = 0.05
    shots = shots_required(eps, delta).shots
    trials = 1000
    x, y = rng.standard_normal(64), rng.standard_normal(64)
    p0 = swap_test_p0(encode(x), encode(y))
    k = kernel_eval(AMPLITUDE, x, y)
    p0_bad = k_bad = 0
    for _ in range(trials):
        p_hat = qsim.sampled_p0(p0, shots, rng)
        p0_bad += abs(p_hat - p0) > eps
        k_bad += abs(min(max(2 * p_hat - 1, 0.0), 1.0) - k) > eps
    allowed = delta + 3 * math.sqrt(delta * (1 - delta) / trials)
    elapsed = time.perf_counter() - start
    ok = max(dev.values()) <= 1e-12 and p0_bad / trials <= allowed and elapsed < 120
    acceptance(2, "circuit identity", ok,
               f"max deviation swap={dev['swap']:.1e} Re={dev['Re']:.1e} Im={dev['Im']:.1e} (<= 1e-12) "
               f"over n=1..9 x 100 pairs; {shots} shots: p0-band violations {p0_bad / trials:.3f} "
               f"(<= {allowed:.4f}), kernel-band violations {k_bad / trials:.3f} (informational); "
               f"{elapsed:.1f} s (< 120 s)")
    assert ok


# -------------------------------------------------------------- criterion 3


HEADLINE = [(3, 2000, 0.72, 600), (4, 2000, 0.82, None), (5, 600, 0.92, 7200)]


@pytest.mark.parametrize("d, n_train, threshold, budget", HEADLINE, ids=["3x3", "4x4", "5x5"])
def test_criterion_3_headline_accuracy(acceptance, d, n_train, threshold, budget):
    ds, gen_time = dataset(d, n_train)
    start = time.perf_counter()
    cfg = config(d, n_train)
    report = amplitude_accuracy(cfg, ds)
    elapsed = gen_time + time.perf_counter() - start
    ok = report.overall >= threshold and (budget is None or elapsed < budget)
    per_class = " ".join(f"{c}={report.per_class[c]:.3f}" for c in cli.CLASSES)
    limit = f" (< {budget} s)" if budget else ""
    acceptance(3, f"headline accuracy {d}x{d}", ok,
               f"train {n_train}, {cfg.n_components()}-component PCA: overall {report.overall:.4f} "
               f"(>= {threshold}); {per_class}; {elapsed:.0f} s{limit}")
    assert ok


# -------------------------------------------------------------- criterion 4


def test_criterion_4_pca_ordering(acceptance):
    acc = {64: [], 32: [], None: []}
    for seed in range(5):
        ds, _ = dataset(3, 500, seed)
        cfg = config(3, 500, seed)
        for nc in acc:
            acc[nc].append(amplitude_accuracy(cfg, ds, nc).overall)
    mean = {nc: float(np.mean(v)) for nc, v in acc.items()}
    ok = mean[64] >= mean[32] and mean[64] >= mean[None] - 0.02
    acceptance(4, "PCA ordering", ok,
               f"mean over 5 seeds at train 500: 64-PCA {mean[64]:.4f}, 32-PCA {mean[32]:.4f}, "
               f"no PCA {mean[None]:.4f} (64 >= 32 and 64 >= no PCA - 0.02)")
    assert ok


# -------------------------------------------------------------- criterion 5


def _biased_fixture(rng, n=200):
    dims = BipartiteDims(3, 3)
    states = []
    for _ in range(n):
        rho = datagen.random_separable(dims, 1, rng)
        states.append(LabeledState(rho, Label.SEP, qstate.purity(rho), 1))
    for _ in range(n):
        rho = datagen.random_mixture(9, 50, rng)
        states.append(LabeledState(rho, Label.PPT_ENT, qstate.purity(rho), 50))
    return states


def test_criterion_5_purity_debias(acceptance):
    worst, flagged = 0.0, []
    for d, n_train, _, _ in HEADLINE:
        ds, _ = dataset(d, n_train)
        _, flags = cli.audit({"train": ds.train, "test": ds.test})
        for split, a, b, diff, pooled, flag in flags:
            worst = max(worst, diff / pooled)
            if flag:
                flagged.append(f"{d}x{d} {split} {a}/{b}")
    _, biased = cli.audit({"fixture": _biased_fixture(np.random.default_rng(5))})
    ok = not flagged and all(row[-1] for row in biased)
    acceptance(5, "purity debias", ok,
               f"generated datasets: largest mean gap {worst:.3f} pooled std (<= 1), flags {flagged or 'none'}; "
               f"biased fixture flagged: {bool(biased[0][-1])} (gap {biased[0][3] / biased[0][4]:.1f} pooled std)")
    assert ok


# -------------------------------------------------------------- criterion 6


def _qstate_suite(rng):
    worst = 0.0
    for d in (2, 3, 4, 9):
        for _ in range(100):
            rho = datagen.random_density(d, rng)
            sigma = datagen.random_density(d, rng)
            x, z = qstate.vectorize(rho), qstate.vectorize(sigma)
            worst = max(worst, abs(x @ z - np.trace(rho @ sigma).real) / 1e-10)
            worst = max(worst, np.max(np.abs(qstate.unvectorize(x) - rho)) / 1e-10)
            r = qstate.bloch_vector(rho).components
            G = qstate.gell_mann_basis(d)
            back = (np.eye(d) + np.tensordot(r, G, axes=1)) / d
            worst = max(worst, np.max(np.abs(back - rho)) / 1e-9)
            worst = max(worst, abs(r @ r - (d * qstate.purity(rho) - 1)) / 1e-9)
    dims = BipartiteDims(3, 4)
    for _ in range(100):
        psi = rng.standard_normal(12) + 1j * rng.standard_normal(12)
        psi /= np.linalg.norm(psi)
        form = qstate.schmidt_decompose(psi, dims)
        coeffs, U, V = form.coefficients, form.left_vectors, form.right_vectors
        rebuilt = sum(c * np.kron(U[:, i], V[:, i]) for i, c in enumerate(coeffs))
        worst = max(worst, np.max(np.abs(rebuilt - psi)) / 1e-9)
        ev = np.sort(np.linalg.eigvalsh(qstate.reduced_density(psi, dims, "A")))[::-1]
        worst = max(worst, np.max(np.abs(coeffs ** 2 - ev[:len(coeffs)])) / 1e-9)
    return worst


def _svm_suite():
    kkt_ok, oracle_dev = True, 0.0
    for seed in range(10):
        X, y = _problem(200 + seed)
        for spec in (AMPLITUDE, KernelSpec("rbf", 0.5)):
            K = gram_matrix(spec, X)
            model = svm.train(K, y, 1.0, tol=1e-6)
            alpha, margin = _kkt_margins(model, K, y)
            kkt_ok &= bool(np.all(alpha >= 0) and np.all(alpha <= 1.0) and abs(alpha @ y) <= 1e-8)
            tol = 1e-6
            kkt_ok &= bool(np.all(margin[alpha == 0] >= 1 - tol) and np.all(margin[alpha == 1.0] <= 1 + tol))
            a, b_lo, b_hi = brute_force_dual(K, y, 1.0)
            b = min(max(model.bias, b_lo), b_hi)
            oracle_dev = max(oracle_dev, float(np.max(np.abs(model.decision_from_gram(K) - (K @ (a * y) + b)))),
                             max(0.0, b_lo - model.bias, model.bias - b_hi))
    return kkt_ok, oracle_dev


def _fw_suite(rng, n=1000):
    dims = BipartiteDims(3, 3)
    dist = [datagen.frank_wolfe_nearest_separable(datagen.random_separable(dims, 8, rng), dims, 1000, rng)[1]
            for _ in range(n)]
    return float(np.mean(np.array(dist) < 0.01)), float(max(dist))


def _ppt_suite(rng):
    bell = np.zeros(4)
    bell[[0, 3]] = 1 / math.sqrt(2)
    rho_bell = np.outer(bell, bell)
    q = BipartiteDims(2, 2)
    ok = not qstate.is_ppt(rho_bell, q) and abs(qstate.min_pt_eigenvalue(rho_bell, q) + 0.5) <= 1e-12
    for d in (2, 3, 4):
        dims = BipartiteDims(d, d)
        for _ in range(50):
            prod = qstate.tensor_product(datagen.random_density(d, rng), datagen.random_density(d, rng))
            ok &= qstate.is_ppt(prod, dims)
    return ok


def test_criterion_6_property_suites(acceptance):
    rng = np.random.default_rng(6)
    qstate_worst = _qstate_suite(rng)
    kkt_ok, oracle_dev = _svm_suite()
    fw_rate, fw_max = _fw_suite(rng)
    ppt_ok = _ppt_suite(rng)
    table = {d: qubits_for(d) for d in (3, 4, 5)}
    table_ok = table == {3: (6, 64), 4: (7, 128), 5: (9, 512)}
    ok = qstate_worst <= 1 and kkt_ok and oracle_dev <= 1e-4 and fw_rate >= 0.95 and ppt_ok and table_ok
    acceptance(6, "property suites", ok,
               f"qstate worst error {qstate_worst:.2e} of tolerance; SMO KKT {kkt_ok}, oracle deviation "
               f"{oracle_dev:.1e} (<= 1e-4); Frank-Wolfe < 0.01 on {fw_rate:.1%} of 1000 (>= 95%, max "
               f"{fw_max:.2e}); PPT fixtures {ppt_ok}; qubit table {table}")
    assert ok


# -------------------------------------------------------------- criterion 7


PIPELINE = ["dims=3x3", "train_size=200", "test_size=60", "seed=7"]
ARTIFACTS = ["data/train.txt", "data/test.txt", "data/generation_log.json", "model/model.txt",
             "model/train_report.csv", "eval/evaluation.csv", "grid/model.txt", "grid/grid_report.csv",
             "grid/grid_summary.csv"]


def _pipeline(root, jobs):
    jobs = str(jobs)
    steps = [
        ["generate", "--out", root / "data", "--jobs", jobs],
        ["train", "--data", root / "data", "--out", root / "model", "--jobs", jobs],
        ["evaluate", "--model", root / "model" / "model.txt", "--data", root / "data", "--out", root / "eval"],
        ["train", "--data", root / "data", "--out", root / "grid", "--jobs", jobs, "kernel=grid", "repeats=2",
         "grid_points=3", "k_folds=3"],
    ]
    for step in steps:
        assert cli.main([str(a) for a in step] + PIPELINE) == cli.EXIT_OK
    return {name: (root / name).read_bytes() for name in ARTIFACTS}


def test_criterion_7_determinism(acceptance, tmp_path):
    first = _pipeline(tmp_path / "a", 1)
    second = _pipeline(tmp_path / "b", 1)
    wide = _pipeline(tmp_path / "c", 8)
    rerun_diff = [n for n in ARTIFACTS if first[n] != second[n]]
    jobs_diff = [n for n in ARTIFACTS if first[n] != wide[n]]
    ok = not rerun_diff and not jobs_diff
    acceptance(7, "determinism", ok,
               f"{len(ARTIFACTS)} artifacts from generate/train/evaluate; differing across reruns: "
               f"{rerun_diff or 'none'}; differing between --jobs 1 and --jobs 8: {jobs_diff or 'none'}")
    assert ok
