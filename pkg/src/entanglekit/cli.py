"""Command-line entry point: ``entanglekit <command> [options] [key=value ...]``.

Exit codes: 0 success, 2 configuration or input error, 3 generation
failure, 4 convergence warning escalated by ``--strict``.
"""

import argparse
import csv
import dataclasses
import math
import os
import sys
import warnings

import numpy as np

from . import datagen, experiment, qsim, svm
from .errors import CalibrationError, ConvergenceWarning, EntangleKitError, GenerationExhausted
from .experiment import ConfigError, TrainedModel
from .kernels import AMPLITUDE, kernel_eval

EXIT_OK, EXIT_CONFIG, EXIT_GENERATION, EXIT_CONVERGENCE = 0, 2, 3, 4
CLASSES = ("SEP", "PPT_ENT", "NPPT_ENT")


class StrictFailure(Exception):
    pass


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else format(float(v), ".10g")
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _say(msg):
    print(msg, file=sys.stderr, flush=True)


class _Convergence:
    """Collects convergence warnings raised while the block runs."""

    def __enter__(self):
        self._ctx = warnings.catch_warnings(record=True)
        self.caught = self._ctx.__enter__()
        warnings.simplefilter("always", ConvergenceWarning)
        return self

    def __exit__(self, *exc):
        self._ctx.__exit__(*exc)
        self.count = sum(issubclass(w.category, ConvergenceWarning) for w in self.caught)
        for w in self.caught:
            if not issubclass(w.category, ConvergenceWarning):
                warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
        return False


def _check_strict(args, unconverged):
    if unconverged:
        _say(f"warning: {unconverged} SVM solve(s) hit the iteration cap")
        if args.strict:
            raise StrictFailure(f"{unconverged} unconverged solve(s)")


# ----------------------------------------------------------------- commands


def cmd_generate(cfg, args):
    ds = datagen.build_dataset(cfg.generation(n_train=cfg.train_size, jobs=args.jobs))
    ds.save(args.out)
    _say(f"wrote {len(ds.train)} train and {len(ds.test)} test states to {args.out}")
    _say(f"summands per class: {ds.log['summands']}")
    return EXIT_OK


def _load(path):
    if not os.path.isdir(path):
        raise ConfigError(f"dataset directory {path} does not exist")
    return datagen.load_dataset(path)


def cmd_train(cfg, args):
    ds = _load(args.data)
    n = min(cfg.train_size, len(ds.train))
    states = experiment.balanced_prefix(ds.train, n)
    nc = cfg.n_components(ds.dims)
    if nc is not None and nc > n:
        raise ConfigError(f"{nc}-component PCA needs at least {nc} training samples, have {n}")
    digest = svm.file_sha256(os.path.join(args.data, "train.txt"))
    os.makedirs(args.out, exist_ok=True)
    with _Convergence() as conv:
        if cfg.kernel == "amplitude":
            trained = experiment.train_amplitude(cfg, states, ds.dims)
            reports, unconverged = [], 0
        else:
            trained, reports, _ = experiment.train_grid(cfg, states, ds.dims, jobs=args.jobs)
            unconverged = sum(e.unconverged for rep in reports for e in rep.evaluated)
    with open(os.path.join(args.out, "model.txt"), "w") as fh:
        fh.write(trained.to_text(digest))
    X = trained.pipeline.transform(datagen.features(states))
    y = datagen.binary_labels(states)
    train_acc = float(np.mean(svm.sign_labels(trained.model.decision_function(X)) == y))
    m = trained.model
    write_csv(os.path.join(args.out, "train_report.csv"),
              ["train_size", "kernel", "spec", "C", "n_support", "converged", "iterations", "train_accuracy"],
              [[n, trained.label, m.kernel.describe(), m.C, len(m.support_indices), int(m.converged),
                m.iterations, train_acc]])
    if reports:
        rows = []
        for r, rep in enumerate(reports):
            for e in rep.evaluated:
                rows.append([r, e.kernel.describe(), e.C, e.mean_accuracy, e.unconverged] + list(e.fold_accuracies))
        write_csv(os.path.join(args.out, "grid_report.csv"),
                  ["repeat", "kernel", "C", "mean_accuracy", "unconverged"]
                  + [f"fold{i + 1}" for i in range(cfg.k_folds)], rows)
        ex = trained.extra
        write_csv(os.path.join(args.out, "grid_summary.csv"),
                  ["best_kernel", "best_C", "cv_best_mean", "cv_best_std", "repeats"],
                  [[ex["best_kernel"], ex["best_C"], ex["cv_best_mean"], ex["cv_best_std"], len(reports)]])
    _say(f"trained {trained.label} on {n} states: {len(m.support_indices)} support vectors, "
         f"train accuracy {train_acc:.4f}")
    _check_strict(args, conv.count + unconverged)
    return EXIT_OK


def _eval_row(train_size, kernel, report):
    return [train_size, kernel] + report.row(CLASSES)


EVAL_HEADER = ["train_size", "kernel", "overall", "sep_acc", "ppt_acc", "nppt_acc"]


def cmd_evaluate(cfg, args):
    try:
        with open(args.model) as fh:
            trained = TrainedModel.from_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read model {args.model}: {exc}") from None
    ds = _load(args.data)
    report = experiment.evaluate_states(trained, ds.test, cfg.ppt_filter, ds.dims)
    for note in report.notices:
        _say(note)
    os.makedirs(args.out, exist_ok=True)
    kernel = trained.label + ("+ppt" if cfg.ppt_filter else "")
    write_csv(os.path.join(args.out, "evaluation.csv"), EVAL_HEADER, [_eval_row(trained.train_size, kernel, report)])
    _say("overall {:.4f}  ".format(report.overall)
         + "  ".join(f"{c} {report.per_class[c]:.4f}" for c in CLASSES if c in report.per_class))
    return EXIT_OK


def audit(splits):
    """Per-class purity rows and pairwise flags for ``{split: states}``."""
    stats, flags = [], []
    for split, states in splits.items():
        summary = datagen.purity_summary(states)
        for tag, (count, mean, std) in summary.items():
            stats.append([split, tag, count, mean, std])
        tags = [t for t in CLASSES if t in summary]
        for i, a in enumerate(tags):
            for b in tags[i + 1:]:
                diff = abs(summary[a][1] - summary[b][1])
                pooled = datagen.pooled_std(summary, a, b)
                flags.append([split, a, b, diff, pooled, int(diff > pooled)])
    return stats, flags


def cmd_purity_audit(cfg, args):
    if os.path.isdir(args.data):
        splits = {}
        for split in ("train", "test"):
            path = os.path.join(args.data, f"{split}.txt")
            if os.path.exists(path):
                splits[split] = datagen.read_split(path)[1]
    elif os.path.exists(args.data):
        splits = {os.path.splitext(os.path.basename(args.data))[0]: datagen.read_split(args.data)[1]}
    else:
        raise ConfigError(f"{args.data} does not exist")
    stats, flags = audit(splits)
    os.makedirs(args.out, exist_ok=True)
    write_csv(os.path.join(args.out, "purity_audit.csv"), ["split", "class", "count", "mean", "std"], stats)
    write_csv(os.path.join(args.out, "purity_flags.csv"),
              ["split", "class_a", "class_b", "mean_diff", "pooled_std", "flagged"], flags)
    for split, tag, count, mean, std in stats:
        print(f"{split:6s} {tag:9s} n={count:5d} mean={mean:.6f} std={std:.6f}")
    for split, a, b, diff, pooled, flagged in flags:
        if flagged:
            print(f"FLAG {split}: {a} vs {b} purity means differ by {diff:.3g} > pooled std {pooled:.3g}")
    return EXIT_OK


def cmd_kernel_check(cfg, args):
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7]))
    if args.data:
        ds = _load(args.data)
        pipe = experiment.fit_features(datagen.features(ds.train), cfg.n_components(ds.dims))
        V = pipe.transform(datagen.features(ds.train + ds.test))
    else:
        V = rng.standard_normal((max(2, 2 * cfg.pairs), 1 << cfg.n_qubits))
    n_qubits = max(1, (V.shape[1] - 1).bit_length())
    plan = qsim.shots_required(cfg.epsilon, cfg.delta)
    rows, dev = [], 0.0
    pairs = []
    for _ in range(cfg.pairs):
        i, j = (int(v) for v in rng.choice(V.shape[0], size=2, replace=False))
        pairs.append((i, j))
    exact = []
    for i, j in pairs:
        classical = kernel_eval(AMPLITUDE, V[i], V[j])
        p0 = qsim.swap_test_p0(qsim.encode(V[i], n_qubits), qsim.encode(V[j], n_qubits))
        circuit = 2.0 * p0 - 1.0
        dev = max(dev, abs(circuit - classical))
        exact.append((p0, classical))
        rows.append([i, j, classical, circuit, abs(circuit - classical)])
    trials = cfg.trials if pairs else 0
    p0_bad = k_bad = 0
    for t in range(trials):
        p0, k = exact[t % len(pairs)]
        p_hat = qsim.sampled_p0(p0, plan.shots, rng)
        k_hat = min(max(2.0 * p_hat - 1.0, 0.0), 1.0)
        p0_bad += abs(p_hat - p0) > cfg.epsilon
        k_bad += abs(k_hat - k) > cfg.epsilon
    allowed = cfg.delta + 3.0 * math.sqrt(cfg.delta * (1 - cfg.delta) / trials) if trials else None
    os.makedirs(args.out, exist_ok=True)
    write_csv(os.path.join(args.out, "kernel_check.csv"), ["i", "j", "classical", "circuit", "abs_dev"], rows)
    summary = [len(pairs), n_qubits, dev if pairs else None, plan.shots, trials,
               p0_bad / trials if trials else None, k_bad / trials if trials else None, allowed]
    write_csv(os.path.join(args.out, "kernel_check_summary.csv"),
              ["pairs", "n_qubits", "max_dev_exact", "shots", "trials", "p0_violation_rate",
               "kernel_violation_rate", "allowed_rate"], [summary])
    if pairs:
        print(f"pairs={len(pairs)} qubits={n_qubits} max|circuit-classical|={dev:.3e} shots={plan.shots} "
              f"p0 violations={p0_bad}/{trials} (allowed rate {allowed:.4f}) kernel violations={k_bad}/{trials}")
    else:
        print("no pairs requested; empty report")
    return EXIT_OK


# ---------------------------------------------------------------- recipes


def _dataset_for(cfg, args, d, n_train):
    dims = datagen.BipartiteDims(d, d)
    sub = os.path.join(args.out, f"data_{d}x{d}")
    _say(f"generating {dims} dataset with {n_train} training states")
    ds = datagen.build_dataset(cfg.generation(dims=dims, n_train=n_train, jobs=args.jobs))
    ds.save(sub)
    return ds


def _figure2(cfg, args):
    sizes = sorted(set(cfg.train_sizes))
    ds = _dataset_for(cfg, args, 3, max(sizes))
    rows = []
    with _Convergence() as conv:
        for n in sizes:
            states = experiment.balanced_prefix(ds.train, n)
            for nc in (None, 32, 64):
                if nc is not None and nc > n:
                    continue
                trained = experiment.train_amplitude(cfg, states, ds.dims, nc)
                rep = experiment.evaluate_states(trained, ds.test)
                rows.append(_eval_row(n, trained.label, rep))
    write_csv(os.path.join(args.out, "figure2.csv"), EVAL_HEADER, rows)
    return conv.count


def _figure45(cfg, args, number):
    sizes = sorted(set(cfg.train_sizes))
    rows = []
    unconverged = 0
    with _Convergence() as conv:
        for d in cfg.systems:
            ds = _dataset_for(cfg, args, d, max(sizes))
            nc = cfg.n_components(ds.dims)
            for n in sizes:
                states = experiment.balanced_prefix(ds.train, n)
                if nc is None or nc <= n:
                    trained = experiment.train_amplitude(cfg, states, ds.dims)
                    rep = experiment.evaluate_states(trained, ds.test)
                    rows.append([f"{d}x{d}", n, trained.label, 1] + _with_std([rep]))
                else:
                    _say(f"skipping amplitude model for {d}x{d} at n={n}: PCA needs {nc} samples")
                if cfg.baseline:
                    # classical kernels fall back to raw features where the PCA is too wide
                    grid_cfg = cfg if nc is None or nc <= n else dataclasses.replace(cfg, pca="none")
                    _, reports, models = experiment.train_grid(grid_cfg, states, ds.dims, args.jobs, per_repeat=True)
                    unconverged += sum(e.unconverged for r in reports for e in r.evaluated)
                    reps = [experiment.evaluate_states(m, ds.test) for m in models]
                    rows.append([f"{d}x{d}", n, "grid_best", len(reps)] + _with_std(reps))
    header = ["system", "train_size", "kernel", "runs", "overall", "overall_std", "sep_acc", "sep_std",
              "ppt_acc", "ppt_std", "nppt_acc", "nppt_std"]
    if number == 4:
        header, rows = header[:6], [r[:6] for r in rows]
    write_csv(os.path.join(args.out, f"figure{number}.csv"), header, rows)
    return conv.count + unconverged


def _with_std(reports):
    out = []
    for key in (None,) + CLASSES:
        vals = [r.overall if key is None else r.per_class.get(key) for r in reports]
        vals = [v for v in vals if v is not None]
        out += [float(np.mean(vals)), float(np.std(vals))] if vals else [None, None]
    return out


def _figure6(cfg, args):
    dims = cfg.bipartite()
    if dims.dA != dims.dB:
        raise ConfigError("figure 6 needs equal local dimensions")
    ds = _dataset_for(cfg, args, dims.dA, cfg.train_size)
    summary = datagen.purity_summary(ds.train + ds.test)
    lo, hi = ds.generation_config["band"]
    rows = [[tag, count, mean, std, lo, hi] for tag, (count, mean, std) in summary.items()]
    write_csv(os.path.join(args.out, "figure6.csv"), ["class", "count", "mean", "std", "band_lo", "band_hi"], rows)
    return 0


def cmd_reproduce_figure(cfg, args):
    os.makedirs(args.out, exist_ok=True)
    if args.figure == "2":
        unconverged = _figure2(cfg, args)
    elif args.figure in ("4", "5"):
        unconverged = _figure45(cfg, args, int(args.figure))
    else:
        unconverged = _figure6(cfg, args)
    _say(f"wrote figure {args.figure} data to {args.out}")
    _check_strict(args, unconverged)
    return EXIT_OK


# --------------------------------------------------------------------- main


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value configuration file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    common.add_argument("--out", default="results", help="output directory (default: results)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes (default: 1)")
    common.add_argument("--strict", action="store_true", help="exit with code 4 on SVM convergence warnings")
    common.add_argument("overrides", nargs="*", metavar="KEY=VALUE", help="configuration overrides")

    p = argparse.ArgumentParser(prog="entanglekit", description="Entanglement classification experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="generate train/test datasets")
    t = sub.add_parser("train", parents=[common], help="train an SVM on a generated dataset")
    t.add_argument("--data", required=True, help="dataset directory")
    e = sub.add_parser("evaluate", parents=[common], help="per-class test accuracy of a trained model")
    e.add_argument("--model", required=True, help="model manifest written by train")
    e.add_argument("--data", required=True, help="dataset directory")
    a = sub.add_parser("purity-audit", parents=[common], help="per-class purity statistics and bias flags")
    a.add_argument("--data", required=True, help="dataset directory or split file")
    k = sub.add_parser("kernel-check", parents=[common], help="classical vs simulated vs sampled kernel")
    k.add_argument("--data", help="dataset directory (random vectors when omitted)")
    k.add_argument("--pairs", type=int, help="number of vector pairs")
    f = sub.add_parser("reproduce-figure", parents=[common], help="data behind one of the figures")
    f.add_argument("figure", choices=["2", "4", "5", "6"])
    return p


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "purity-audit": cmd_purity_audit,
    "kernel-check": cmd_kernel_check,
    "reproduce-figure": cmd_reproduce_figure,
}


def main(argv=None):
    parser = build_parser()
    # overrides may sit between options, where argparse leaves them unclaimed
    args, extra = parser.parse_known_args(argv)
    stray = [tok for tok in extra if tok.startswith("-") or "=" not in tok]
    if stray:
        parser.error(f"unrecognized arguments: {' '.join(stray)}")
    try:
        overrides = list(args.set) + list(args.overrides) + extra
        if getattr(args, "pairs", None) is not None:
            overrides.append(f"pairs={args.pairs}")
        cfg = experiment.load_config(args.config, overrides)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        return COMMANDS[args.command](cfg, args)
    except CalibrationError as exc:
        _say(f"error: {exc}")
        _say("k      mean purity")
        for k, m in exc.table:
            _say(f"{k:<6d} {'exhausted' if m is None else format(m, '.6f')}")
        return EXIT_GENERATION
    except GenerationExhausted as exc:
        _say(f"error: {exc}")
        return EXIT_GENERATION
    except StrictFailure as exc:
        _say(f"error: {exc} (--strict)")
        return EXIT_CONVERGENCE
    except (ConfigError, EntangleKitError, ValueError, OSError) as exc:
        _say(f"error: {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
