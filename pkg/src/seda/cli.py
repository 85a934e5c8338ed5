"""Command-line front end.

Exit codes: 0 on success, 1 when a computation fails, 2 for usage or
configuration errors (bad flags, unreadable or malformed inputs).
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import classify, dataio, simulate, theory
from .measures import SpectralMeasure, build_spectral_measure
from .spiked import SpikeConfig, estimate_spike_counts
from .theory import SearchConfig, ThetaParams

PRESETS = ("fig1", "fig2_1", "fig3", "case1", "case2", "case3")


class UsageError(Exception):
    pass


def fmt(x):
    """Six significant digits for terminal output."""
    return f"{x:.6g}"


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror}") from None


def preset_text(name):
    if name not in PRESETS:
        raise UsageError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return resources.files("seda").joinpath("presets", f"{name}.json").read_text(encoding="utf-8")


def _load_dataset(path, label_column, required=True):
    try:
        return dataio.load_csv(path, label_column, required)
    except dataio.DataFormatError as exc:
        raise UsageError(str(exc)) from None
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror}") from None


def _spike_arg(text, p, y):
    if text == "auto":
        return None
    if text == "none":
        return SpikeConfig()
    try:
        r1, r2 = (int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--spikes expects 'auto', 'none' or 'r1,r2', got {text!r}") from None
    return SpikeConfig.from_counts(p, r1, r2)


def _levels_for(config: SpikeConfig, large, small):
    levels = {j: large for j in config.large_indices}
    levels.update({j: small for j in config.small_indices})
    return {j: v for j, v in levels.items() if v != 0}


def _write_or_print(text, out):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_simulate(args):
    if bool(args.config) == bool(args.preset):
        raise UsageError("simulate needs exactly one of --config or --preset")
    text = preset_text(args.preset) if args.preset else None
    try:
        doc = json.loads(text) if text is not None else _read_json(args.config)
        cfg = simulate.ExperimentConfig.from_dict(doc)
        cfg = cfg.with_overrides(base_seed=args.seed, replications=args.replications)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad experiment config: {exc}") from None
    table = simulate.run_experiment(cfg, threads=args.threads)
    _write_or_print(table.to_csv(timing=args.timing), args.out)
    for name, s in table.summary().items():
        print(f"{name}: mean={fmt(s['mean'])} sd={fmt(s['sd'])} theory={fmt(s['theory'])} n={s['n']}",
              file=sys.stderr)
    failed = [r for r in table.rows if r.failure]
    if failed:
        print(f"{len(failed)} fit(s) failed, first: {failed[0].classifier} rep {failed[0].rep}: "
              f"{failed[0].failure}", file=sys.stderr)
    return 0


def _binary_split(ds):
    classes = ds.classes()
    if len(classes) != 2:
        raise UsageError(f"expected 2 classes, found {len(classes)}")
    Xs, order = ds.split_by_class(classes)
    return Xs[0], Xs[1], order


def _tune_binary(X1, X2, config, search):
    base = classify.fit_seda(X1, X2, ThetaParams(1.0), config)
    theta, value = theory.tune_theta(classify.plugin_inputs(base, X1, X2), search)
    return theta, value, base.spike_config


def cmd_fit(args):
    ds = _load_dataset(args.train, args.label_column)
    X1, X2, labels = _binary_split(ds)
    config = _spike_arg(args.spikes, ds.p, ds.p / ds.n)
    if args.kind == "rlda":
        model = classify.fit_rlda(X1, X2, args.lam, labels)
    elif args.kind in ("tuned", "tuned_corrected"):
        theta, _, config = _tune_binary(X1, X2, config, SearchConfig())
        fit = classify.fit_corrected_seda if args.kind == "tuned_corrected" else classify.fit_seda
        model = fit(X1, X2, theta, config, labels)
    else:
        if config is None:
            config = classify.fit_seda(X1, X2, ThetaParams(args.lam), None).spike_config
        theta = ThetaParams(args.lam, _levels_for(config, args.large_level, args.small_level))
        fit = classify.fit_corrected_seda if args.kind == "seda_corrected" else classify.fit_seda
        model = fit(X1, X2, theta, config, labels)
    classify.save_model(model, args.out)
    print(f"kind={model.kind} lambda={fmt(model.theta.lam)} spikes=({model.spike_config.r1},"
          f"{model.spike_config.r2}) alpha={fmt(model.alpha)}")
    return 0


def cmd_predict(args):
    try:
        model = classify.load_model(args.model)
    except (OSError, KeyError, ValueError) as exc:
        raise UsageError(f"{args.model}: cannot load model: {exc}") from None
    path = args.test
    ds = _load_dataset(path, args.label_column, required=False)
    has_labels = ds.labels.dtype != object or any(v is not None for v in ds.labels)
    p = model.projector.shape[0] if isinstance(model, classify.MulticlassModel) else model.p
    if ds.p != p:
        raise UsageError(f"model expects {p} features, {path} has {ds.p}")
    pred = model.predict(ds.features)
    lines = ["label"] + [str(v) for v in pred]
    _write_or_print("\n".join(lines) + "\n", args.out)
    if has_labels:
        truth = np.array([str(v) for v in ds.labels])
        acc = float(np.mean(truth == np.array([str(v) for v in pred])))
        # keep stdout a clean CSV when the labels go there
        print(f"accuracy: {fmt(acc)} ({int(round(acc * ds.n))}/{ds.n})",
              file=sys.stdout if args.out else sys.stderr)
    return 0


def cmd_tune(args):
    ds = _load_dataset(args.train, args.label_column)
    config = _spike_arg(args.spikes, ds.p, ds.p / ds.n)
    classes = ds.classes()
    if len(classes) < 2:
        raise UsageError("need at least two classes")
    if len(classes) == 2:
        X1, X2, _ = _binary_split(ds)
        theta, value, config = _tune_binary(X1, X2, config, SearchConfig())
    else:
        Xs, _ = ds.split_by_class()
        pairs, config = classify.multiclass_plugin_inputs(Xs, config)
        theta, value = theory.tune_theta_multiclass(pairs, SearchConfig())
    doc = {"schema_version": 1, "lambda": theta.lam,
           "levels": {str(j): v for j, v in theta.levels.items()},
           "spikes": {"large": list(config.large_indices), "small": list(config.small_indices)},
           "objective": value}
    _write_or_print(json.dumps(doc, indent=2) + "\n", args.out)
    print(f"lambda={fmt(theta.lam)} objective={fmt(value)} levels="
          + ",".join(f"{j}:{fmt(v)}" for j, v in theta.levels.items()), file=sys.stderr)
    return 0


def _theory_setup(doc):
    if doc.get("schema_version") != 1:
        raise UsageError("theory config needs schema_version 1")
    n1, n2 = int(doc["n1"]), int(doc["n2"])
    if "covariance" in doc:
        cfg = simulate.ExperimentConfig.from_dict(
            {"schema_version": 1, "covariance": doc["covariance"], "mean": doc.get("mean", {}),
             "n1": n1, "n2": n2, "roster": [], "target_bayes_error": doc.get("target_bayes_error", 0.1),
             "base_seed": doc.get("base_seed", 0)})
        pop = simulate.build_population(cfg)
        s, g, mns = pop.covariance.eigenvalues, pop.g_masses, pop.mu_norm_sq
    else:
        s = np.sort(np.asarray(doc["spectrum"], dtype=float))[::-1]
        g = np.asarray(doc["g_masses"], dtype=float)
        if g.shape != s.shape:
            raise UsageError("g_masses must match the spectrum length")
        g = g / g.sum()
        mns = float(doc["mu_norm_sq"])
    return s, g, mns, n1, n2


def cmd_theory(args):
    if not args.config:
        raise UsageError("theory needs --config")
    doc = _read_json(args.config)
    try:
        s, g, mns, n1, n2 = _theory_setup(doc)
        lams = [float(v) for v in doc.get("lambdas", [0.1])]
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad theory config: {exc}") from None
    p = s.size
    y1, y2 = p / n1, p / n2
    spikes = doc.get("spikes", "population")
    if spikes == "population":
        r1, r2, _ = estimate_spike_counts(s, p / (n1 + n2))
    else:
        r1, r2 = spikes
    config = SpikeConfig.from_counts(p, r1, r2)
    levels = _levels_for(config, float(doc.get("large_level", 0.0)), float(doc.get("small_level", 0.0)))
    H = build_spectral_measure(s)
    G = SpectralMeasure.from_atoms(s, g, normalize=True)
    rows = []
    for lam in lams:
        theta = ThetaParams(lam, levels)
        r_rlda = theory.rlda_rate(H, G, mns, y1, y2, lam)
        try:
            r_seda = theory.seda_rate(s, g, mns, theta, config, y1, y2)
            r_corr = theory.corrected_seda_rate(s, g, mns, theta, config, y1, y2)
        except ValueError:
            r_seda = r_corr = float("nan")
        rows.append((lam, r_rlda, r_seda, r_corr))
    out = ["lambda,rlda,seda,seda_corrected"] + [",".join(repr(float(v)) for v in r) for r in rows]
    if args.out:
        Path(args.out).write_text("\n".join(out) + "\n", encoding="utf-8")
    print(f"spikes=({r1},{r2}) levels=" + ",".join(f"{j}:{fmt(v)}" for j, v in levels.items()))
    print(f"{'lambda':>10} {'rlda':>10} {'seda':>10} {'corrected':>10}")
    for r in rows:
        print(" ".join(f"{fmt(v):>10}" for v in r))
    return 0


def cmd_reduce(args):
    ds = _load_dataset(args.train, args.label_column)
    Xs, order = ds.split_by_class()
    config = _spike_arg(args.spikes, ds.p, ds.p / ds.n)
    if args.tune:
        pairs, config = classify.multiclass_plugin_inputs(Xs, config)
        theta, _ = theory.tune_theta_multiclass(pairs, SearchConfig())
    else:
        if config is None:
            a = np.linalg.eigvalsh(classify.within_between_scatter(Xs)[0])[::-1]
            r1, r2, _ = estimate_spike_counts(a, ds.p / ds.n)
            config = SpikeConfig.from_counts(ds.p, r1, r2)
        theta = ThetaParams(args.lam, _levels_for(config, args.large_level, args.small_level))
    model = classify.fit_multiclass(Xs, theta, config, order)
    Z = model.transform(ds.features)
    proj = ds.with_features(Z, [f"z{i + 1}" for i in range(Z.shape[1])])
    dataio.write_csv(args.out, proj, args.label_column)
    classify.save_model(model, args.model)
    print(f"classes={len(order)} columns={Z.shape[1]} lambda={fmt(theta.lam)}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="seda", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        if seed:
            sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--out", default=None)
        sp.add_argument("--config", default=None)

    def levels(sp):
        sp.add_argument("--lam", type=float, default=0.1)
        sp.add_argument("--large-level", type=float, default=0.0)
        sp.add_argument("--small-level", type=float, default=0.0)
        sp.add_argument("--spikes", default="auto", help="auto, none, or r1,r2")
        sp.add_argument("--label-column", default="label")

    sp = sub.add_parser("simulate", help="run a Monte Carlo experiment")
    common(sp)
    sp.add_argument("--preset", choices=PRESETS)
    sp.add_argument("--replications", type=int, default=None)
    sp.add_argument("--timing", action="store_true", help="record wall times (output no longer byte-reproducible)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("fit", help="fit a binary classifier to a CSV")
    common(sp)
    sp.add_argument("train")
    sp.add_argument("--kind", default="seda",
                    choices=["rlda", "seda", "seda_corrected", "tuned", "tuned_corrected"])
    levels(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("predict", help="label a CSV with a saved model")
    common(sp)
    sp.add_argument("model")
    sp.add_argument("test")
    sp.add_argument("--label-column", default="label")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("tune", help="choose lambda and spike levels from training data")
    common(sp)
    sp.add_argument("train")
    sp.add_argument("--spikes", default="auto")
    sp.add_argument("--label-column", default="label")
    sp.set_defaults(func=cmd_tune)

    sp = sub.add_parser("theory", help="deterministic error rates for a population")
    common(sp)
    sp.set_defaults(func=cmd_theory)

    sp = sub.add_parser("reduce", help="K-class discriminant projection")
    common(sp)
    sp.add_argument("train")
    sp.add_argument("--model", default="model.json")
    sp.add_argument("--tune", action="store_true")
    levels(sp)
    sp.set_defaults(func=cmd_reduce)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    if args.command in ("fit", "reduce") and not args.out:
        parser.error(f"{args.command} needs --out")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
