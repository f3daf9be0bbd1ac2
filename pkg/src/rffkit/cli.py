"""Command-line experiment runner.

Subcommands: synth, train, select, evaluate, verify, sweep.  Every
command is deterministic given its flags (including --seed): rerunning
one writes byte-identical output files.  Exit codes: 0 success, 1
validation failure, 2 verification-tolerance failure, 3 I/O failure.

A run directory written by ``train`` contains the resolved config
snapshot, the per-epoch history CSV, the model container, and the final
metrics, so the run can be reproduced from the directory alone.
Training variants are labelled NT / B / R / BR (optionally +FS): B means
a linear bottleneck was used, R means the learning rate decays on
held-out ERLL plateaus, +FS means iterative feature selection ran first.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import _sampling, data, featsel, kernels, model, training

SWEEP_FEATURES = tuple(2 ** p for p in range(6, 14))


class CliValidationError(Exception):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class _Parser(argparse.ArgumentParser):
    """argparse that reports errors instead of exiting with its own code."""

    def error(self, message):
        raise CliValidationError([message])


def _read_config_file(path):
    """Flat key=value lines; '#' starts a comment, blank lines ignored."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliValidationError([f"cannot read config file: {exc}"]) from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliValidationError(
                [f"{path}: line {lineno}: expected key=value, got {raw!r}"]
            )
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def _apply_config_defaults(parser, argv, config_values):
    """Let a config file override parser defaults (flags still win)."""
    actions = {}
    for a in parser._actions:
        actions[a.dest] = a
        for opt in a.option_strings:  # accept flag spellings like "lambda"
            actions[opt.lstrip("-").replace("-", "_")] = a
    unknown = []
    for key, raw in config_values.items():
        action = actions.get(key.replace("-", "_"))
        if action is None:
            unknown.append(key)
            continue
        if action.type is not None:
            try:
                raw = action.type(raw)
            except ValueError:
                raise CliValidationError(
                    [f"config key {key}: cannot parse {raw!r}"]
                ) from None
        if action.choices and raw not in action.choices:
            raise CliValidationError(
                [f"config key {key}: {raw!r} not in {sorted(action.choices)}"]
            )
        parser.set_defaults(**{action.dest: raw})
    if unknown:
        raise CliValidationError([f"unknown config key {k!r}" for k in unknown])


def _add_kernel_flags(p):
    p.add_argument("--kernel", choices=["gaussian", "laplacian", "sparse-gaussian"],
                   default="gaussian")
    p.add_argument("--sigma", type=float, default=1.0,
                   help="bandwidth for the Gaussian families")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0,
                   help="scale for the Laplacian kernel")
    p.add_argument("--sparsity", type=int, default=2,
                   help="coordinates per feature for the sparse Gaussian")


def _add_selection_flags(p):
    p.add_argument("--select-iters", type=int, default=None,
                   help="selection rounds T (enables +FS when >= 2)")
    p.add_argument("--select-subset", type=int, default=None,
                   help="training examples per selection round (default: --features)")


def _add_train_flags(p):
    p.add_argument("--lr", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--decay", choices=["constant", "ce", "erll"], default="constant",
                   help="halve lr on plateaus of this held-out metric")
    p.add_argument("--patience", type=int, default=1)
    p.add_argument("--early-stop", choices=["ce", "erll", "err"], default="ce")
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--heldout-fraction", type=float, default=0.2)


def build_parser():
    parser = _Parser(prog="rffkit",
                     description="random Fourier feature kernel classifiers")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--type", choices=["mixture", "interactions"], required=True)
    p.add_argument("--dim", type=int, default=10)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--separation", type=float, default=3.0,
                   help="cluster mean norm (mixture)")
    p.add_argument("--relevant", type=int, default=2,
                   help="secret coordinate count (interactions)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True,
                   help="output path; .csv extension selects CSV, else binary")

    p = sub.add_parser("train", help="train a classifier, optionally with selection")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--data", required=True)
    p.add_argument("--heldout", default=None,
                   help="held-out dataset file (default: split --data)")
    p.add_argument("--features", type=int, default=1024)
    p.add_argument("--rank", type=int, default=None,
                   help="linear bottleneck rank (enables variant B)")
    _add_kernel_flags(p)
    _add_selection_flags(p)
    _add_train_flags(p)
    p.add_argument("--units", choices=["nats", "bits"], default="nats")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outdir", required=True)

    p = sub.add_parser("select", help="run feature selection, save the feature map")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--features", type=int, default=1024)
    p.add_argument("--rank", type=int, default=None)
    _add_kernel_flags(p)
    _add_selection_flags(p)
    p.add_argument("--lr", type=float, default=1.0)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outdir", required=True)

    p = sub.add_parser("evaluate", help="metrics of a saved model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--units", choices=["nats", "bits"], default="nats")

    p = sub.add_parser("verify", help="Monte Carlo and oracle verification suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=100_000,
                   help="Monte Carlo draws for the identity checks")
    p.add_argument("--pairs", type=int, default=200,
                   help="input pairs for the approximation sweep")
    p.add_argument("--rff-features", type=int, default=100_000,
                   help="feature count for the sparse-kernel estimate check")

    p = sub.add_parser("sweep", help="approximation error vs feature count")
    _add_kernel_flags(p)
    p.add_argument("--dim", type=int, default=10)
    p.add_argument("--features-list", default=",".join(str(v) for v in SWEEP_FEATURES),
                   help="comma-separated feature counts")
    p.add_argument("--pairs", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")

    return parser


def _kernel_spec(args, problems):
    try:
        if args.kernel == "gaussian":
            return kernels.KernelSpec.gaussian(args.sigma)
        if args.kernel == "laplacian":
            return kernels.KernelSpec.laplacian(args.lam)
        return kernels.KernelSpec.sparse_gaussian(args.sigma, args.sparsity)
    except ValueError as exc:
        problems.append(str(exc))
        return None


def _load_dataset(path):
    """Binary container or CSV, decided by the file's own magic bytes."""
    with open(path, "rb") as fh:
        head = fh.read(len(data.MAGIC))
    if head == data.MAGIC:
        return data.load_binary(path)
    return data.load_csv(path)


def _save_dataset(ds, path):
    if str(path).endswith(".csv"):
        data.save_csv(ds, path)
    else:
        data.save_binary(ds, path)


def variant_label(rank, decay, selected):
    label = ""
    if rank is not None:
        label += "B"
    if decay == "erll":
        label += "R"
    if not label:
        label = "NT"
    if selected:
        label += "+FS"
    return label


def _train_config(args, problems):
    policy = "constant" if args.decay == "constant" else "plateau"
    monitor = args.decay if args.decay != "constant" else "erll"
    try:
        return training.TrainConfig(
            learning_rate=args.lr,
            epochs=args.epochs,
            batch_size=args.batch_size,
            seed=args.seed,
            decay_policy=policy,
            decay_monitor=monitor,
            patience=args.patience,
            early_stop_monitor=args.early_stop,
            heldout_fraction=args.heldout_fraction,
            weight_decay=args.weight_decay,
        )
    except ValueError as exc:
        problems.append(str(exc))
        return None


def _schedule(args, ds, problems):
    if args.select_iters is None:
        return None
    if args.select_iters < 2:
        problems.append(f"--select-iters must be >= 2, got {args.select_iters}")
        return None
    subset = args.select_subset if args.select_subset is not None else args.features
    try:
        schedule = featsel.default_schedule(args.features, args.select_iters, R=subset)
    except ValueError as exc:
        problems.append(str(exc))
        return None
    if schedule.R > ds.n:
        problems.append(
            f"--select-subset {schedule.R} exceeds dataset size {ds.n}"
        )
        return None
    return schedule


def _check_model_shape(args, ds, problems):
    if args.features < 1:
        problems.append(f"--features must be >= 1, got {args.features}")
    if args.rank is not None and not 1 <= args.rank < min(args.features + 1, ds.num_classes):
        problems.append(
            f"--rank must lie in [1, {min(args.features + 1, ds.num_classes) - 1}], "
            f"got {args.rank}"
        )
    if args.seed < 0:
        problems.append(f"--seed must be non-negative, got {args.seed}")


def _metrics_csv(metrics, units):
    m = metrics.in_bits() if units == "bits" else metrics
    return "ce,ent,err,erll\n" + f"{m.ce!r},{m.ent!r},{m.err!r},{m.erll!r}\n"


def _config_snapshot(args, extra):
    skip = {"command", "config", "func"}
    items = {k: v for k, v in vars(args).items() if k not in skip}
    items.update(extra)
    lines = [f"{k.replace('_', '-')}={items[k]}" for k in sorted(items)]
    return "\n".join(lines) + "\n"


def cmd_synth(args):
    problems = []
    if args.dim < 1:
        problems.append(f"--dim must be >= 1, got {args.dim}")
    if args.classes < 2:
        problems.append(f"--classes must be >= 2, got {args.classes}")
    if args.samples < args.classes:
        problems.append(f"--samples must be >= --classes, got {args.samples}")
    if args.type == "interactions" and not 1 <= args.relevant <= args.dim:
        problems.append(
            f"--relevant must lie in [1, {args.dim}], got {args.relevant}"
        )
    if problems:
        raise CliValidationError(problems)
    if args.type == "mixture":
        ds = data.synth_gaussian_mixture(args.dim, args.classes, args.samples,
                                         args.separation, args.seed)
    else:
        ds = data.synth_sparse_interactions(args.dim, args.relevant, args.classes,
                                            args.samples, args.seed)
    _save_dataset(ds, args.out)
    print(f"wrote {ds.name}: N={ds.n} d={ds.dim} C={ds.num_classes} -> {args.out}")
    return 0


def _prepare_training(args):
    """Shared by train/select: dataset, spec, schedule, validation."""
    problems = []
    ds = _load_dataset(args.data)
    spec = _kernel_spec(args, problems)
    if spec is not None:
        try:
            spec.check_dim(ds.dim)
        except ValueError as exc:
            problems.append(str(exc))
    _check_model_shape(args, ds, problems)
    schedule = _schedule(args, ds, problems)
    return ds, spec, schedule, problems


def cmd_train(args):
    ds, spec, schedule, problems = _prepare_training(args)
    config = _train_config(args, problems)
    if problems:
        raise CliValidationError(problems)
    if args.heldout is not None:
        train_ds, held_ds = ds, _load_dataset(args.heldout)
    else:
        train_ds, held_ds = data.split(ds, config.heldout_fraction, args.seed)
    init_seed = int(
        _sampling.stream(args.seed, _sampling.TAG_INIT).integers(0, 2 ** 63)
    )
    selection = None
    if schedule is not None:
        selection = featsel.select_features(
            spec, train_ds, schedule, train_config=config, rank=args.rank,
            seed=args.seed,
        )
        fmap = selection.feature_map
    else:
        fmap = kernels.sample_feature_map(spec, ds.dim, args.features, args.seed)
    Z_train = kernels.apply_feature_map(fmap, train_ds.X)
    Z_held = kernels.apply_feature_map(fmap, held_ds.X)
    init = model.init_model(args.features, ds.num_classes, rank=args.rank,
                            seed=init_seed)
    best, history = training.train(init, Z_train, train_ds.y, Z_held, held_ds.y,
                                   config)
    final = training.compute_metrics(best, Z_held, held_ds.y)
    label = variant_label(args.rank, args.decay, schedule is not None)

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.txt").write_text(_config_snapshot(args, {"variant": label}))
    (outdir / "history.csv").write_text(
        "\n".join(training.history_csv_lines(history)) + "\n"
    )
    (outdir / "metrics.csv").write_text(_metrics_csv(final, args.units))
    data.save_model(best, fmap, outdir / "model.rfk")
    if selection is not None:
        (outdir / "selection.csv").write_text(
            "\n".join(featsel.diagnostics_csv_lines(selection.diagnostics)) + "\n"
        )
    shown = final.in_bits() if args.units == "bits" else final
    print(f"variant {label}")
    print(f"heldout ce={shown.ce:.6f} ent={shown.ent:.6f} "
          f"err={shown.err:.6f} erll={shown.erll:.6f}")
    return 0


def cmd_select(args):
    ds, spec, schedule, problems = _prepare_training(args)
    if schedule is None and not problems:
        problems.append("--select-iters is required for the select command")
    if problems:
        raise CliValidationError(problems)
    try:
        config = training.TrainConfig(learning_rate=args.lr,
                                      batch_size=args.batch_size, seed=args.seed)
    except ValueError as exc:
        raise CliValidationError([str(exc)]) from None
    result = featsel.select_features(spec, ds, schedule, train_config=config,
                                     rank=args.rank, seed=args.seed)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.txt").write_text(_config_snapshot(args, {}))
    (outdir / "selection.csv").write_text(
        "\n".join(featsel.diagnostics_csv_lines(result.diagnostics)) + "\n"
    )
    data.save_feature_map(result.feature_map, outdir / "featuremap.rfk")
    print(f"selected feature map: D={schedule.D} T={schedule.T} "
          f"distinct draws={result.draws_generated}")
    return 0


def cmd_evaluate(args):
    trained, fmap = data.load_model(args.model)
    ds = _load_dataset(args.data)
    if ds.dim != fmap.d:
        raise CliValidationError(
            [f"dataset dimension {ds.dim} does not match the model's {fmap.d}"]
        )
    Z = kernels.apply_feature_map(fmap, ds.X)
    metrics = training.compute_metrics(trained, Z, ds.y)
    sys.stdout.write(_metrics_csv(metrics, args.units))
    return 0


def _ball_pairs(dim, count, seed, radius=1.0):
    rng = _sampling.stream(seed, _sampling.TAG_DATA)
    pts = rng.standard_normal((2 * count, dim))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    pts *= radius * rng.random((2 * count, 1)) ** (1.0 / dim)
    return pts[:count], pts[count:]


def _sweep_errors(spec, dim, feature_counts, pairs, seed):
    xs, ys = _ball_pairs(dim, pairs, seed)
    exact = np.array([kernels.eval_exact(spec, x, y) for x, y in zip(xs, ys)])
    rows = []
    for D in feature_counts:
        fmap = kernels.sample_feature_map(spec, dim, D, seed)
        zx = kernels.apply_feature_map(fmap, xs)
        zy = kernels.apply_feature_map(fmap, ys)
        errors = np.abs((zx * zy).sum(axis=1) - exact)
        rows.append((D, float(np.median(errors)),
                     float(np.quantile(errors, 0.9))))
    return rows


def cmd_sweep(args):
    problems = []
    spec = _kernel_spec(args, problems)
    try:
        feature_counts = [int(v) for v in args.features_list.split(",") if v]
    except ValueError:
        problems.append(f"--features-list must be comma-separated integers, "
                        f"got {args.features_list!r}")
        feature_counts = []
    if spec is not None and spec.family == kernels.SPARSE_GAUSSIAN:
        try:
            spec.check_dim(args.dim)
        except ValueError as exc:
            problems.append(str(exc))
    if not feature_counts:
        problems.append("--features-list is empty")
    if args.pairs < 1:
        problems.append(f"--pairs must be >= 1, got {args.pairs}")
    if problems:
        raise CliValidationError(problems)
    rows = _sweep_errors(spec, args.dim, feature_counts, args.pairs, args.seed)
    lines = ["features,median_abs_err,p90_abs_err"]
    lines += [f"{D},{med!r},{p90!r}" for D, med, p90 in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_verify(args):
    if args.samples < 100:
        raise CliValidationError(
            [f"--samples must be >= 100, got {args.samples}"]
        )
    failures = 0
    seed = args.seed

    def report(ok, line):
        nonlocal failures
        if not ok:
            failures += 1
        print(("PASS " if ok else "FAIL ") + line)

    # (a) cosine-identity grid: E[2 cos(w.x+b) cos(w.y+b)] = k(x, y)
    specs = [("gaussian", kernels.KernelSpec.gaussian(s)) for s in (0.5, 1.0, 2.0)]
    specs += [("laplacian", kernels.KernelSpec.laplacian(s)) for s in (0.5, 1.0, 2.0)]
    xs, ys = _ball_pairs(5, 2, seed, radius=2.0)
    cell = 0
    for name, spec in specs:
        for x, y in zip(xs, ys):
            exact = kernels.eval_exact(spec, x, y)
            est, se = kernels.mc_identity_check(spec, x, y, args.samples,
                                                seed + cell)
            ok = abs(est - exact) <= 4.0 * se
            report(ok, f"identity {name} cell {cell}: estimate {est:.5f} "
                       f"exact {exact:.5f} stderr {se:.2e}")
            cell += 1

    # (b) approximation error shrinks with the feature count
    spec = kernels.KernelSpec.gaussian(1.0)
    rows = _sweep_errors(spec, 10, SWEEP_FEATURES, args.pairs, seed)
    for D, med, p90 in rows:
        print(f"sweep features={D} median={med:.5f} p90={p90:.5f}")
    by_D = {D: med for D, med, _ in rows}
    report(by_D[4096] < by_D[256],
           f"sweep median error decreases 256 -> 4096 "
           f"({by_D[256]:.5f} -> {by_D[4096]:.5f})")
    p90_4096 = next(p90 for D, _, p90 in rows if D == 4096)
    report(p90_4096 < 0.05, f"sweep p90 at 4096 features = {p90_4096:.5f} < 0.05")

    # (c) sparse Gaussian: enumeration vs subset MC vs feature estimate
    rng = _sampling.stream(seed, _sampling.TAG_DATA)
    for d in (4, 6, 8):
        for k in (1, 2):
            spec = kernels.KernelSpec.sparse_gaussian(1.0, k)
            x = rng.standard_normal(d)
            y = rng.standard_normal(d)
            exact = kernels.eval_exact(spec, x, y)
            est, se = kernels.mc_subset_estimate(spec, x, y, args.samples,
                                                 seed + d + k)
            report(abs(est - exact) <= 4.0 * se,
                   f"sparse subset-mc d={d} k={k}: estimate {est:.5f} "
                   f"exact {exact:.5f} stderr {se:.2e}")
            fmap = kernels.sample_feature_map(spec, d, args.rff_features,
                                              seed + d + k)
            approx = kernels.approx_kernel(fmap, x, y)
            report(abs(approx - exact) <= 0.02,
                   f"sparse rff d={d} k={k}: estimate {approx:.5f} "
                   f"exact {exact:.5f}")
    print(f"{failures} check(s) failed" if failures else "all checks passed")
    return 2 if failures else 0


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "select": cmd_select,
    "evaluate": cmd_evaluate,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
}


def _thread_limit():
    value = os.environ.get("RFFKIT_THREADS")
    if not value:
        return None
    try:
        limit = int(value)
    except ValueError:
        raise CliValidationError(
            [f"RFFKIT_THREADS must be an integer, got {value!r}"]
        ) from None
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return None
    return threadpool_limits(limits=limit)


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        # pre-scan for --config so its values become parser defaults
        probe, _ = parser.parse_known_args(argv)
        if getattr(probe, "config", None):
            config_values = _read_config_file(probe.config)
            sub = next(
                a for a in parser._actions
                if isinstance(a, argparse._SubParsersAction)
            )
            _apply_config_defaults(sub.choices[probe.command], argv, config_values)
        args = parser.parse_args(argv)
        limiter = _thread_limit()
        try:
            return _COMMANDS[args.command](args)
        finally:
            if limiter is not None:
                limiter.unregister()
    except CliValidationError as exc:
        for problem in exc.problems:
            print(f"error: {problem}", file=sys.stderr)
        return 1
    except (data.ContainerError, data.CsvFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, training.DivergenceError) as exc:
        # inconsistent user inputs surface as library errors; report, not panic
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
