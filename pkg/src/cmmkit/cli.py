"""``cmm`` command-line interface.

Exit codes: 0 on success, 1 on runtime errors, 2 on usage or schema errors.
Datasets are CSV files with a header plus a schema declaration, or
``builtin:<name>`` for the bundled benchmarks and generators.
"""

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis
from . import data as dm
from . import io as model_io
from .errors import CMMError, SchemaError
from .measures import MEASURES, evaluate
from .novelty import NoveltyDetector, alarm, znormalize_series
from .rules import extract_rules, render_rules
from .training import PRUNING_STRATEGIES, TrainingConfig, fit

logger = logging.getLogger("cmmkit")


class UsageError(Exception):
    pass


# -- helpers --------------------------------------------------------------------


def _load_dataset(source, schema_path=None, reference=None, labeled=None, seed=0):
    if source.startswith("builtin:"):
        ds = dm.load_builtin(source.split(":", 1)[1], seed=seed)
        return ds
    if schema_path is not None:
        decl = dm.read_schema_declaration(schema_path)
    elif reference is not None:
        decl = dm.schema_declaration(reference)
    else:
        raise UsageError("--schema is required for CSV input")
    ds = dm.load_csv(source, decl, reference=reference, unseen="uniform" if reference is not None else "error",
                     labeled=labeled)
    if reference is not None:
        _check_columns(ds.schema, reference)
    return ds


def _check_columns(schema, reference):
    got = ([c.name for c in schema.continuous], [c.name for c in schema.categorical])
    want = ([c.name for c in reference.continuous], [c.name for c in reference.categorical])
    if got != want:
        raise SchemaError(f"data columns {got} do not match the model columns {want}")


def _open_out(path):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", newline=""), True


def _write(path, text):
    fh, close = _open_out(path)
    try:
        fh.write(text)
    finally:
        if close:
            fh.close()


def _config(args):
    cfg = TrainingConfig.from_file(args.config).to_dict() if args.config else {}
    overrides = {
        "initial_components_per_class": args.components,
        "max_iterations": args.max_iter,
        "pruning": args.prune,
        "prune_threshold": args.prune_threshold,
        "covariance": args.covariance,
        "prior_cov_scale": args.prior_cov_scale,
    }
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    cfg["rng_seed"] = args.seed
    try:
        return TrainingConfig.from_mapping(cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# -- commands -------------------------------------------------------------------


def cmd_train(args):
    config = _config(args)
    ds = _load_dataset(args.data, args.schema, labeled=True, seed=args.seed)
    if args.zscore:
        ds, _ = dm.z_normalize(ds)
    result = fit(ds, config)
    model_io.save_model(args.out_model, result.classifier, result.second_order)
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "components", "convergence", "train_error"])
            for r in result.trace:
                w.writerow([r.iteration, r.components, repr(float(r.convergence)),
                            "" if r.train_error is None else repr(float(r.train_error))])
    print(f"trained {result.classifier.n_components} components in {result.vi_steps} VI steps"
          f" (converged: {result.converged})")
    return 0


def cmd_classify(args):
    clf, _ = model_io.load_model(args.model)
    ds = _load_dataset(args.data, args.schema, reference=clf.schema, labeled=False)
    post = clf.class_posterior_batch(ds)
    pred = post.argmax(axis=1)
    labels = clf.schema.class_labels
    fh, close = _open_out(args.out)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "prediction"] + [f"p_{lab}" for lab in labels])
        for n in range(len(ds)):
            w.writerow([n, labels[pred[n]]] + [repr(float(p)) for p in post[n]])
    finally:
        if close:
            fh.close()
    return 0


def cmd_eval(args):
    clf, _ = model_io.load_model(args.model)
    ds = _load_dataset(args.data, args.schema, reference=clf.schema, labeled=True)
    err = float(np.mean(clf.predict(ds) != ds.y))
    print("samples,accuracy,error")
    print(f"{len(ds)},{1.0 - err!r},{err!r}")
    return 0


def _report(args):
    clf, so = model_io.load_model(args.model)
    ds = _load_dataset(args.data, args.schema, reference=clf.schema, labeled=True)
    test = None
    if getattr(args, "test_data", None):
        test = _load_dataset(args.test_data, args.schema, reference=clf.schema, labeled=True)
    measures = [m.strip() for m in args.measures.split(",")] if args.measures else list(MEASURES)
    bad = [m for m in measures if m not in MEASURES]
    if bad:
        raise UsageError(f"unknown measures: {bad}")
    if "unct" in measures and so is None:
        logger.warning("model has no second-order parameters; unct omitted")
    report = evaluate(clf, ds, so, test_data=test, measures=measures)
    for note in report.notes:
        logger.info(note)
    return report


def cmd_measures(args):
    report = _report(args)
    if args.format == "text":
        _write(args.out, report.rank_table_text())
    else:
        text = report.to_csv()
        if args.ranks:
            text += "\n" + report.rank_table_csv()
        _write(args.out, text)
    return 0


def cmd_rank(args):
    args.measures = args.measure
    report = _report(args)
    if args.format == "text":
        _write(args.out, report.rank_table_text([args.measure]))
    else:
        _write(args.out, report.rank_table_csv([args.measure]))
    return 0


def cmd_rules(args):
    clf, _ = model_io.load_model(args.model)
    ruleset = extract_rules(clf, omega=args.omega, identity_threshold=args.identity_threshold)
    _write(args.out, render_rules(ruleset, args.format))
    return 0


def _correlate_models(models_dir, workers):
    runs = []
    d = Path(models_dir)
    for path in sorted(d.glob("*.json")):
        data_path = path.with_suffix(".csv")
        if not data_path.exists():
            logger.warning("skipping %s: no %s next to it", path.name, data_path.name)
            continue
        clf, so = model_io.load_model(path)
        ds = _load_dataset(str(data_path), reference=clf.schema, labeled=True)
        n = len(MEASURES)
        if clf.n_components < 3:
            nan = np.full((n, n), np.nan)
            runs.append(analysis.RunResult(path.stem, 0, clf.n_components, nan, nan, {}, float("nan"),
                                           f"only {clf.n_components} components"))
            logger.warning("excluded %s: fewer than 3 components", path.stem)
            continue
        report = evaluate(clf, ds, so)
        _, rho, pv = analysis.correlation_matrix(report)
        err = float(np.mean(clf.predict(ds) != ds.y))
        runs.append(analysis.RunResult(path.stem, 0, clf.n_components, rho, pv, dict(report.timings), err))
    if not runs:
        raise UsageError(f"no model/data pairs found in {models_dir}")
    return analysis.summarize(runs)


def cmd_correlate(args):
    if args.models_dir:
        summary = _correlate_models(args.models_dir, args.workers)
    else:
        names = [n.strip() for n in args.datasets_list.split(",") if n.strip()]
        unknown = [n for n in names if n not in dm.BUILTIN_NAMES]
        if unknown:
            raise UsageError(f"unknown datasets: {unknown}")
        seeds = [int(s) for s in args.seeds.split(",")]
        config = _config(args)
        summary = analysis.correlation_study(names, seeds, config, workers=args.workers)
    out = [summary.table_text() if args.format == "text" else summary.table_csv()]
    out.append("")
    out.append("dataset,seed,components,test_error,excluded")
    for r in summary.runs:
        out.append(f"{r.dataset},{r.seed},{r.n_components},{float(r.test_error)!r},{r.excluded or ''}")
    out.append("")
    out.append("measure,mean_seconds,std_seconds")
    for m, (mu, sd) in summary.timings.items():
        out.append(f"{m},{float(mu)!r},{float(sd)!r}")
    _write(args.out, "\n".join(out) + "\n")
    return 0


def cmd_novelty(args):
    clf, _ = model_io.load_model(args.model)
    ds = _load_dataset(args.stream, args.schema, reference=clf.schema, labeled=False)
    if ds.schema.n_cont != clf.schema.n_cont:
        raise SchemaError("stream dimensionality does not match the model")
    det = NoveltyDetector(clf, window=args.window, every=args.every)
    out = det.run(ds.xc)
    fh, close = _open_out(args.out)
    try:
        w = csv.writer(fh, lineterminator="\n")
        if len(out) < 2:
            logger.warning("stream too short for window %d: %d evaluations", args.window, len(out))
            w.writerow(["stream_index", "raw", "z"])
            for idx, raw in out:
                w.writerow([idx, repr(float(raw)), ""])
            return 0
        z = znormalize_series([v for _, v in out])
        w.writerow(["stream_index", "raw", "z"])
        for (idx, raw), zz in zip(out, z):
            w.writerow([idx, repr(float(raw)), repr(float(zz))])
    finally:
        if close:
            fh.close()
    hold = args.hold if args.hold is not None else max(1, args.window // 10)
    for a, b in alarm(z, args.threshold, hold):
        print(f"alarm: samples {out[a][0]}-{out[b - 1][0]}", file=sys.stderr)
    return 0


SYNTH = ("two_moons", "two_regime", "background", "ripley", "clouds", "mixed")


def cmd_synth(args):
    if args.kind == "two_moons":
        ds = dm.two_moons(n=args.n or 2000, seed=args.seed)
    elif args.kind == "two_regime":
        ds = dm.two_regime_stream(seed=args.seed).data
    elif args.kind == "background":
        ds = dm.background_training_set(n=args.n or 2000, seed=args.seed)
    elif args.kind == "ripley":
        ds = dm.ripley_like(n=args.n or 1250, seed=args.seed)
    elif args.kind == "clouds":
        ds = dm.clouds_like(n=args.n or 2000, seed=args.seed)
    else:
        ds = dm.mixed_synthetic(n=args.n or 600, seed=args.seed)
    fh, close = _open_out(args.out)
    try:
        dm.save_csv(ds, fh)
    finally:
        if close:
            fh.close()
    if args.schema_out:
        decl = dm.schema_declaration(ds.schema)
        Path(args.schema_out).write_text("".join(f"{k}: {v}\n" for k, v in decl.items()))
    return 0


# -- parser ---------------------------------------------------------------------


def _training_flags(p):
    p.add_argument("--config", help="key=value or JSON training config file")
    p.add_argument("--components", type=int, help="initial components per class")
    p.add_argument("--max-iter", type=int, help="maximum VI iterations")
    p.add_argument("--prune", choices=PRUNING_STRATEGIES, help="pruning strategy")
    p.add_argument("--prune-threshold", type=float, help="pruning threshold")
    p.add_argument("--covariance", choices=("full", "diag"))
    p.add_argument("--prior-cov-scale", type=float, help="scale of the Wishart prior covariance")


def build_parser():
    parser = argparse.ArgumentParser(prog="cmm", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0, help="seed for all randomness (default 0)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a classifier")
    p.add_argument("--data", required=True, help="CSV file or builtin:<name>")
    p.add_argument("--schema", help="schema declaration file")
    p.add_argument("--out-model", required=True)
    p.add_argument("--trace", help="write the per-iteration trace as CSV")
    p.add_argument("--zscore", action="store_true", help="z-normalize continuous columns first")
    _training_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="predict class labels")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--schema")
    p.add_argument("--out")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("eval", help="accuracy and error on labeled data")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--schema")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("measures", help="all component measures")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--test-data")
    p.add_argument("--schema")
    p.add_argument("--measures", help="comma-separated subset")
    p.add_argument("--format", choices=("csv", "text"), default="csv")
    p.add_argument("--ranks", action="store_true", help="append rank tables to the CSV")
    p.add_argument("--out")
    p.set_defaults(func=cmd_measures)

    p = sub.add_parser("rank", help="order components by one measure")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--measure", required=True, choices=MEASURES)
    p.add_argument("--test-data")
    p.add_argument("--schema")
    p.add_argument("--format", choices=("csv", "text"), default="csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("rules", help="extract rules (diagonal covariances only)")
    p.add_argument("--model", required=True)
    p.add_argument("--omega", type=float, help="category threshold (default 1/K_d)")
    p.add_argument("--identity-threshold", type=float, default=0.01)
    p.add_argument("--format", choices=("text", "markdown", "json"), default="text")
    p.add_argument("--out")
    p.set_defaults(func=cmd_rules)

    p = sub.add_parser("correlate", help="Spearman correlations between measures")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--models-dir", help="directory of <name>.json models with <name>.csv data")
    g.add_argument("--datasets-list", help="comma-separated builtin dataset names")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--format", choices=("csv", "text"), default="text")
    p.add_argument("--out")
    _training_flags(p)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("novelty", help="sliding-window novelty statistic")
    p.add_argument("--model", required=True)
    p.add_argument("--stream", required=True)
    p.add_argument("--schema")
    p.add_argument("--window", type=int, default=5000)
    p.add_argument("--every", type=int, default=10)
    p.add_argument("--threshold", type=float, default=-1.0)
    p.add_argument("--hold", type=int, help="minimum alarm length in evaluations (default window/10)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_novelty)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("kind", choices=SYNTH)
    p.add_argument("--n", type=int)
    p.add_argument("--out")
    p.add_argument("--schema-out", help="also write a schema declaration")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except BrokenPipeError:
        sys.stderr.close()
        return 0
    except (UsageError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CMMError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
