"""Command-line experiment runner.

Subcommands: make-corpus (synthetic stand-in corpus), build-dataset, run,
aggregate, selfcheck. Exit codes: 0 success, 1 validation error, 2 runtime
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import data as dx
from .errors import CompositionError, ConfigurationError, IngestError, NumericalFault
from .experiments import (EXPERIMENTS, ExperimentConfig, aggregate_runs,
                          default_config, run_experiment)


def _load_config_file(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}")


def cmd_make_corpus(args) -> int:
    corpus = dx.synthesize_corpus(n_train=args.train, n_test=args.test, seed=args.seed)
    dx.write_corpus(corpus, args.out)
    print(f"wrote synthetic corpus ({args.train} train / {args.test} test) to {args.out}")
    return 0


def cmd_build_dataset(args) -> int:
    corpus = dx.load_corpus(args.corpus)
    classes = dx.enumerate_classes()
    out = Path(args.out)
    manifest_path = out.with_suffix(out.suffix + ".json")
    wanted = {
        "per_class_train": args.per_class_train,
        "per_class_test": args.per_class_test,
        "seed": args.seed,
        "classes": [[c.a, c.b] for c in classes],
    }
    if out.exists() and manifest_path.exists():
        existing = json.loads(manifest_path.read_text())
        if all(existing.get(k) == v for k, v in wanted.items()):
            print(f"{out}: up to date (content {existing['content_sha256'][:12]})")
            return 0
    dataset = dx.compose(corpus, classes, args.per_class_train, args.per_class_test, args.seed)
    digest = dx.save_dataset(dataset, out)
    print(f"wrote {len(classes)}-class dataset "
          f"({args.per_class_train} train / {args.per_class_test} test per class) "
          f"to {out} (content {digest[:12]})")
    return 0


def cmd_run(args) -> int:
    overrides = {}
    if args.config:
        overrides.update(_load_config_file(args.config))
    if args.experiment:
        overrides["experiment"] = args.experiment
    if args.profile:
        overrides["profile"] = args.profile
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.trials is not None:
        overrides["n_trials"] = args.trials
    if "experiment" not in overrides:
        raise ConfigurationError("experiment is required (flag --experiment or config file)")
    experiment = overrides.pop("experiment")
    profile = overrides.pop("profile", "hybrid")
    master_seed = overrides.pop("master_seed", 0)
    config = default_config(experiment, profile=profile, master_seed=master_seed, **overrides)
    summary = run_experiment(config, args.dataset, args.out, parallel=args.parallel)
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_aggregate(args) -> int:
    rows = aggregate_runs(args.runs, args.out)
    print(f"wrote {len(rows)} comparison rows to {args.out}")
    return 0


def cmd_selfcheck(args) -> int:
    """Fast invariant sweep on tiny nets; exercises the core rule, the
    gradient path, the dataset constraints, and determinism."""
    from .synapse import Constant, RuleConfig, Uniform, scale
    from .network import init_classifier, forward, loss_and_gradients, train_phase, make_batches

    failures = []

    def check(name, ok):
        print(f"{'ok  ' if ok else 'FAIL'} {name}")
        if not ok:
            failures.append(name)

    check("scale(1, x, a) == 1", scale(1.0, 123.4, 2.0) == 1.0)
    check("scale(f, 0, a) == 1", scale(0.37, 0.0, 5.0) == 1.0)
    check("scale symmetric in delta_w", scale(0.4, 1.7, 3.0) == scale(0.4, -1.7, 3.0))
    rng = np.random.default_rng(0)
    net = init_classifier([8, 6, 4], Uniform(seed=1), seed=2)
    x = rng.random((5, 8))
    t = np.full((5, 4), 0.25)
    probs = forward(net, x)
    check("softmax rows sum to 1", bool(np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)))
    loss, grads = loss_and_gradients(net, x, t)
    eps, worst = 1e-5, 0.0
    for li in (0, 1):
        layer = net.layers[li]
        w = layer.W
        idx = (0, 0)
        orig = w[idx]
        w[idx] = orig + eps
        up, _ = loss_and_gradients(net, x, t)
        w[idx] = orig - eps
        dn, _ = loss_and_gradients(net, x, t)
        w[idx] = orig
        fd = (up - dn) / (2 * eps)
        denom = max(abs(fd), abs(grads[li][0][idx]), 1e-12)
        worst = max(worst, abs(fd - grads[li][0][idx]) / denom)
    check("analytic gradient matches finite differences", worst < 1e-4)
    a = init_classifier([8, 6, 4], Constant(1.0, seed=3), seed=4)
    b = init_classifier([8, 6, 4], Constant(1.0, seed=3), seed=4)
    check("same seed gives identical nets",
          all(np.array_equal(la.W, lb.W) for la, lb in zip(a.layers, b.layers)))
    batches = make_batches(x, t, 2)
    a.refresh_reference()
    train_phase(a, batches, RuleConfig(alpha=5.0, eta=0.05), epochs=2)
    from .data import enumerate_classes
    classes = enumerate_classes()
    check("45 two-digit classes", len(classes) == 45)
    check("class (0,1) first, (8,9) last",
          (classes[0].a, classes[0].b) == (0, 1) and (classes[-1].a, classes[-1].b) == (8, 9))
    if failures:
        print(f"{len(failures)} selfcheck failure(s)")
        return 2
    print("selfcheck passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="synflex",
                                     description="metaplastic continual-learning experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-corpus", help="write a synthetic digit corpus as IDX files")
    p.add_argument("--out", required=True)
    p.add_argument("--train", type=int, default=60000)
    p.add_argument("--test", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_corpus)

    p = sub.add_parser("build-dataset", help="compose the two-digit dataset cache")
    p.add_argument("--corpus", required=True, help="directory with the four IDX files")
    p.add_argument("--out", required=True, help="cache file path")
    p.add_argument("--per-class-train", type=int, default=5000)
    p.add_argument("--per-class-test", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("run", help="run one experiment (one profile)")
    p.add_argument("--dataset", required=True, help="dataset cache file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="JSON config file (overridden by flags)")
    p.add_argument("--experiment", choices=EXPERIMENTS)
    p.add_argument("--profile",
                   help="conventional | stable | hybrid | constant:<c> | biased:<k>")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--trials", type=int)
    p.add_argument("--parallel", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("aggregate", help="comparison tables across finished runs")
    p.add_argument("runs", nargs="+", help="run output directories")
    p.add_argument("--out", required=True, help="comparisons CSV path")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("selfcheck", help="fast invariant sweep on tiny nets")
    p.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, IngestError, CompositionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalFault as exc:
        print(f"numerical fault: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
