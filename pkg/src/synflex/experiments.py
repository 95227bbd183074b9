"""Experiment families, trial orchestration, and plot-ready output files.

Each experiment run executes n_trials independent trials (trial seed =
master_seed + index), writes per-trial CSV/JSON under the output directory,
and finishes with aggregate tables. Every output directory carries a
manifest embedding the fully resolved configuration.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .curriculum import (Curriculum, FeatureBank, TrainSettings, build_frequency,
                         build_repetition, build_sequence, run)
from .data import TwoDigitDataset, enumerate_classes, images_to_unit, load_dataset
from .errors import ConfigurationError
from .metrics import (build_report, correlation_report, memorized_flags,
                      repetition_metrics, t_greater_than, t_two_sample)
from .network import (FeatureStandardizer, extract_features, forward,
                      init_classifier, make_extractor, predict_readouts)
from .synapse import Biased, Constant, RuleConfig, Uniform

EXPERIMENTS = ("serial_position", "capacity_sweep", "repetition", "poisoning",
               "frequency", "single_value_profile", "biased_profile")

# seed-stream salts (trial seed = master_seed + trial index)
SALT_EXTRACTOR = 100
SALT_INIT = 101
SALT_FLEX = 102
SALT_CURRICULUM = 103
SALT_ITEMS = 104
SALT_SHUFFLE = 105
SALT_FREQ = 106


def derive_seed(base: int, salt: int) -> int:
    return int(np.random.SeedSequence([base, salt]).generate_state(1, dtype=np.uint64)[0])


def parse_profile(spec: str, seed: int = 0):
    """Profile names: conventional | stable | hybrid | constant:<c> | biased:<k>."""
    if spec == "conventional":
        return Constant(1.0, seed=seed)
    if spec == "stable":
        return Constant(0.3, seed=seed)
    if spec == "hybrid":
        return Uniform(0.0, 1.0, seed=seed)
    if spec.startswith("constant:"):
        return Constant(float(spec.split(":", 1)[1]), seed=seed)
    if spec.startswith("biased:"):
        return Biased(float(spec.split(":", 1)[1]), seed=seed)
    raise ConfigurationError(f"unknown profile {spec!r}")


@dataclass
class ExperimentConfig:
    experiment: str
    profile: str = "hybrid"
    alpha: float = 60.0
    eta: float = 0.1
    flexibility_floor: float = 1e-12
    feature_dim: int = 256
    hidden_dims: list = field(default_factory=lambda: [128, 64])
    n_items: int = 10
    n_readouts: int = 10
    epochs: int = 7
    batch_size: int = 32
    positives_per_phase: int = 192
    negatives_per_positive: float = 2.0
    n_trials: int = 30
    master_seed: int = 0
    repeats: int = 9
    poison_last: bool = False
    interleave: str = "blocks"
    lengths: list = field(default_factory=lambda: [10, 20, 30])
    memorize_shuffles: int = 1000
    memorize_criterion: int = 950
    standardize_features: bool = True
    negative_pool: str = "universe"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(
                f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        parse_profile(self.profile)  # validates
        if self.n_items > self.n_readouts:
            raise ConfigurationError(
                f"n_items {self.n_items} exceeds n_readouts {self.n_readouts}")
        if self.n_trials < 1:
            raise ConfigurationError("n_trials must be >= 1")
        if self.interleave not in ("blocks", "shuffled", "rounds"):
            raise ConfigurationError(f"unknown interleave {self.interleave!r}")
        if self.negative_pool != "universe":
            raise ConfigurationError("only the 45-class universe negative pool is implemented")
        RuleConfig(self.alpha, self.eta, self.flexibility_floor)  # validates

    def rule(self) -> RuleConfig:
        return RuleConfig(self.alpha, self.eta, self.flexibility_floor)

    def dims(self) -> list[int]:
        return [self.feature_dim, *self.hidden_dims, self.n_readouts]

    def settings(self) -> TrainSettings:
        return TrainSettings(rule=self.rule(), epochs=self.epochs,
                             batch_size=self.batch_size,
                             positives_per_phase=self.positives_per_phase)

    def resolved(self) -> dict:
        out = dataclasses.asdict(self)
        out["package_version"] = __version__
        out["trial_seed_rule"] = "master_seed + trial_index"
        out["negative_target"] = "uniform-over-other-readouts"
        return out


# Calibrated per-family defaults (desk scale); see README for the rationale.
_FAMILY_DEFAULTS = {
    "serial_position": dict(epochs=7, hidden_dims=[128, 64], n_trials=30),
    "single_value_profile": dict(epochs=7, hidden_dims=[128, 64], alpha=500.0, n_trials=20),
    "biased_profile": dict(epochs=3, hidden_dims=[128, 64], alpha=500.0, n_trials=20),
    "repetition": dict(epochs=6, hidden_dims=[128, 64], alpha=80.0, repeats=9, n_trials=30),
    "poisoning": dict(epochs=6, hidden_dims=[128, 64], alpha=80.0, repeats=10,
                      poison_last=True, n_trials=20),
    "capacity_sweep": dict(epochs=6, hidden_dims=[], alpha=60.0, n_readouts=30,
                           n_items=30, n_trials=20),
    "frequency": dict(epochs=6, hidden_dims=[], alpha=100.0, interleave="rounds",
                      n_trials=30),
}

# Profile-specific alpha for the serial-position family (the conventional
# model is alpha-independent; stable needs a wider suppression regime).
SERIAL_ALPHA = {"conventional": 60.0, "stable": 200.0, "hybrid": 60.0}


def default_config(experiment: str, profile: str = "hybrid", master_seed: int = 0,
                   **overrides) -> ExperimentConfig:
    """Calibrated defaults for an experiment family; explicit overrides win."""
    fields = dict(experiment=experiment, profile=profile, master_seed=master_seed)
    fields.update(_FAMILY_DEFAULTS.get(experiment, {}))
    if experiment == "serial_position" and profile in SERIAL_ALPHA:
        fields["alpha"] = SERIAL_ALPHA[profile]
    fields.update(overrides)
    return ExperimentConfig(**fields)


# --- feature preparation ----------------------------------------------------------


def prepare_feature_bank(dataset: TwoDigitDataset, feature_dim: int, extractor_seed: int,
                         standardize: bool = True) -> FeatureBank:
    """Extract features for every class once (the extractor is fixed across
    trials, like a shared pretrained stack) and optionally standardize them
    with statistics fit on the pooled composed train set."""
    sample = next(iter(dataset.train.values()))
    input_dim = sample.shape[1] * sample.shape[2]
    extractor = make_extractor(input_dim, feature_dim, extractor_seed)
    train = {cls: extract_features(extractor, images_to_unit(imgs))
             for cls, imgs in dataset.train.items()}
    test = {cls: extract_features(extractor, images_to_unit(imgs))
            for cls, imgs in dataset.test.items()}
    if standardize:
        standardizer = FeatureStandardizer.fit(np.concatenate([train[c] for c in dataset.classes]))
        train = {c: standardizer.apply(f) for c, f in train.items()}
        test = {c: standardizer.apply(f) for c, f in test.items()}
    return FeatureBank(train=train, test=test)


# --- single trial ------------------------------------------------------------------


@dataclass
class TrialOutput:
    trial: int
    seed: int
    items: list
    checkpoints: np.ndarray
    final_accuracy: np.ndarray
    memorized: np.ndarray
    extras: dict = field(default_factory=dict)


def _select_items(bank: FeatureBank, n_items: int, rng) -> list:
    universe = bank.classes
    idx = rng.choice(len(universe), size=n_items, replace=False)
    return [universe[i] for i in sorted(idx)]


def _build_curriculum(config: ExperimentConfig, items, trial_seed: int, n_items: int):
    extras = {}
    if config.experiment in ("serial_position", "single_value_profile", "biased_profile"):
        cur = build_sequence(items, config.n_readouts, config.negatives_per_positive)
    elif config.experiment == "capacity_sweep":
        cur = build_sequence(items, config.n_readouts, config.negatives_per_positive)
    elif config.experiment in ("repetition", "poisoning"):
        cur = build_repetition(items, config.n_readouts, config.repeats,
                               poison_last=config.poison_last,
                               negatives_per_positive=config.negatives_per_positive)
    elif config.experiment == "frequency":
        rng = np.random.default_rng([trial_seed, SALT_FREQ])
        freqs = [int(f) for f in rng.permutation(np.arange(1, n_items + 1))]
        cur = build_frequency(items, config.n_readouts, freqs,
                              seed=derive_seed(trial_seed, SALT_FREQ),
                              interleave=config.interleave,
                              negatives_per_positive=config.negatives_per_positive)
        extras["frequencies"] = freqs
    else:  # pragma: no cover - guarded by config validation
        raise ConfigurationError(config.experiment)
    return cur, extras


def run_trial(config: ExperimentConfig, bank: FeatureBank, trial: int,
              n_items: int | None = None) -> TrialOutput:
    n_items = config.n_items if n_items is None else n_items
    seed = config.master_seed + trial
    items = _select_items(bank, n_items, np.random.default_rng([seed, SALT_ITEMS]))
    profile = parse_profile(config.profile, seed=derive_seed(seed, SALT_FLEX))
    net = init_classifier(config.dims(), profile, derive_seed(seed, SALT_INIT))
    cur, extras = _build_curriculum(config, items, seed, n_items)
    result = run(cur, net, bank, config.settings(), derive_seed(seed, SALT_CURRICULUM))
    preds = [predict_readouts(net, bank.test[cls]) for cls in result.items]
    flags, final_acc = memorized_flags(preds, n_shuffles=config.memorize_shuffles,
                                       criterion=config.memorize_criterion,
                                       seed=derive_seed(seed, SALT_SHUFFLE))
    if config.experiment in ("repetition", "poisoning"):
        reps = config.repeats
        rep_rows = result.checkpoints[[(r + 1) * n_items - 1 for r in range(reps)]]
        min_trace, delta = repetition_metrics(rep_rows)
        extras["min_trace"] = [float(v) for v in min_trace]
        extras["delta_performance"] = delta
    if config.experiment == "frequency":
        report = correlation_report(final_acc, list(range(n_items)), extras["frequencies"])
        extras["correlations"] = report
    return TrialOutput(trial=trial, seed=seed, items=items, checkpoints=result.checkpoints,
                       final_accuracy=final_acc, memorized=flags, extras=extras)


# --- output files -------------------------------------------------------------------


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header: list[str], rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def _write_trial_files(out: TrialOutput, directory: Path):
    directory.mkdir(parents=True, exist_ok=True)
    _write_csv(directory / "checkpoints.csv", ["phase_index", "item_index", "accuracy"],
               [[p, i, _fmt(out.checkpoints[p, i])]
                for p in range(out.checkpoints.shape[0])
                for i in range(out.checkpoints.shape[1])])
    _write_csv(directory / "curve.csv", ["item_index", "accuracy", "memorized"],
               [[i, _fmt(out.final_accuracy[i]), int(out.memorized[i])]
                for i in range(len(out.final_accuracy))])
    report = build_report(out.final_accuracy, out.memorized,
                          n_readouts=max(len(out.final_accuracy), 1))
    blob = json.loads(report.to_json())
    blob["items"] = [cls.name for cls in out.items]
    blob["seed"] = out.seed
    if "min_trace" in out.extras:
        blob["min_trace"] = out.extras["min_trace"]
        blob["delta_performance"] = out.extras["delta_performance"]
    if "frequencies" in out.extras:
        blob["frequencies"] = out.extras["frequencies"]
    if "correlations" in out.extras:
        blob["correlations"] = json.loads(out.extras["correlations"].to_json())
    (directory / "report.json").write_text(json.dumps(blob, indent=2, sort_keys=True))
    if "min_trace" in out.extras:
        _write_csv(directory / "repetition.csv", ["repetition_index", "min_accuracy"],
                   [[r, _fmt(v)] for r, v in enumerate(out.extras["min_trace"])])


def _write_run_outputs(config: ExperimentConfig, outputs: list[TrialOutput],
                       directory: Path, n_readouts: int):
    directory.mkdir(parents=True, exist_ok=True)
    for out in outputs:
        _write_trial_files(out, directory / f"trial_{out.trial:03d}")
    chk = np.stack([o.checkpoints for o in outputs])  # (trials, phases, items)
    _write_csv(directory / "aggregate.csv",
               ["phase_index", "item_index", "mean_accuracy", "sd_accuracy"],
               [[p, i, _fmt(chk[:, p, i].mean()), _fmt(chk[:, p, i].std())]
                for p in range(chk.shape[1]) for i in range(chk.shape[2])])
    header = ["trial", "seed", "n_memorized", "gross_memory", "mean_accuracy"]
    freq_mode = "correlations" in outputs[0].extras
    rep_mode = "min_trace" in outputs[0].extras
    if freq_mode:
        header += ["rho_order", "rho_frequency", "p_order", "p_frequency"]
    if rep_mode:
        header += ["min_gain", "delta_performance"]
    rows = []
    for o in outputs:
        row = [o.trial, o.seed, int(o.memorized.sum()),
               _fmt(o.final_accuracy.sum()), _fmt(o.final_accuracy.mean())]
        if freq_mode:
            c = o.extras["correlations"]
            row += [_fmt(c.rho_order), _fmt(c.rho_frequency), _fmt(c.p_order), _fmt(c.p_frequency)]
        if rep_mode:
            trace = o.extras["min_trace"]
            row += [_fmt(trace[-1] - trace[0]), _fmt(o.extras["delta_performance"])]
        rows.append(row)
    _write_csv(directory / "trials.csv", header, rows)


# --- experiment entry point ----------------------------------------------------------


def run_experiment(config: ExperimentConfig, dataset_path, out_dir, parallel: int = 1) -> dict:
    """Run all trials of an experiment and write result files. Returns a
    summary dict (also embedded in the manifest)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = load_dataset(dataset_path)
    bank = prepare_feature_bank(dataset, config.feature_dim,
                                derive_seed(config.master_seed, SALT_EXTRACTOR),
                                standardize=config.standardize_features)

    def run_batch(n_items: int, directory: Path):
        if parallel > 1:
            with ThreadPoolExecutor(max_workers=parallel) as pool:
                outputs = list(pool.map(
                    lambda t: run_trial(config, bank, t, n_items=n_items),
                    range(config.n_trials)))
        else:
            outputs = [run_trial(config, bank, t, n_items=n_items)
                       for t in range(config.n_trials)]
        outputs.sort(key=lambda o: o.trial)
        _write_run_outputs(config, outputs, directory, config.n_readouts)
        return outputs

    summary = {"experiment": config.experiment, "profile": config.profile}
    if config.experiment == "capacity_sweep":
        table = []
        for length in config.lengths:
            outputs = run_batch(length, out_dir / f"length_{length:02d}")
            table.append([length,
                          _fmt(np.mean([o.memorized.sum() for o in outputs])),
                          _fmt(np.std([float(o.memorized.sum()) for o in outputs])),
                          _fmt(np.mean([o.final_accuracy.sum() for o in outputs])),
                          _fmt(np.mean([o.final_accuracy.mean() for o in outputs]))])
        _write_csv(out_dir / "capacity.csv",
                   ["length", "mean_n_memorized", "sd_n_memorized",
                    "mean_gross_memory", "mean_accuracy"], table)
        summary["lengths"] = config.lengths
    else:
        outputs = run_batch(config.n_items, out_dir)
        summary["mean_n_memorized"] = float(np.mean([o.memorized.sum() for o in outputs]))
        summary["mean_gross_memory"] = float(np.mean([o.final_accuracy.sum() for o in outputs]))
    manifest = {"config": config.resolved(), "summary": summary,
                "dataset": str(dataset_path), "parallel": parallel}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return summary


# --- aggregation across runs -----------------------------------------------------------


def _load_trials_table(run_dir: Path) -> dict:
    path = run_dir / "trials.csv"
    if not path.exists():
        raise ConfigurationError(f"{run_dir} has no trials.csv (incomplete run?)")
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise ConfigurationError(f"{path} is empty")
    out = {}
    for key in rows[0].keys():
        out[key] = np.array([float(r[key]) for r in rows])
    return out


def _load_final_curves(run_dir: Path) -> np.ndarray:
    curves = []
    for trial_dir in sorted(run_dir.glob("trial_*")):
        with open(trial_dir / "curve.csv", newline="") as f:
            rows = list(csv.DictReader(f))
        curves.append([float(r["accuracy"]) for r in rows])
    return np.array(curves)


def aggregate_runs(run_dirs: list, out_path) -> list[list]:
    """Comparison tables across completed runs: per-run one-sided t vs chance
    per item, and pairwise two-sample t-tests on the summary metrics."""
    run_dirs = [Path(d) for d in run_dirs]
    if not run_dirs:
        raise ConfigurationError("need at least one run directory")
    rows = []
    info = []
    for d in run_dirs:
        manifest = json.loads((d / "manifest.json").read_text())
        label = f"{manifest['config']['experiment']}:{manifest['config']['profile']}"
        table = _load_trials_table(d)
        curves = _load_final_curves(d)
        chance = 1.0 / manifest["config"]["n_readouts"]
        info.append((d, label, table, curves))
        for i in range(curves.shape[1]):
            t, p = t_greater_than(curves[:, i], chance)
            rows.append(["vs_chance", label, f"item_{i}", _fmt(curves[:, i].mean()),
                         _fmt(chance), _fmt(t), _fmt(p)])
    metrics = ["n_memorized", "gross_memory", "mean_accuracy",
               "rho_order", "rho_frequency", "min_gain", "delta_performance"]
    for a in range(len(info)):
        for b in range(a + 1, len(info)):
            _, label_a, table_a, curves_a = info[a]
            _, label_b, table_b, curves_b = info[b]
            for metric in metrics:
                if metric in table_a and metric in table_b:
                    t, p = t_two_sample(table_a[metric], table_b[metric])
                    rows.append(["two_sample", label_a, f"{label_b}:{metric}",
                                 _fmt(table_a[metric].mean()), _fmt(table_b[metric].mean()),
                                 _fmt(t), _fmt(p)])
            if curves_a.shape[1] == curves_b.shape[1]:
                for i in range(curves_a.shape[1]):
                    t, p = t_two_sample(curves_a[:, i], curves_b[:, i])
                    rows.append(["two_sample", label_a, f"{label_b}:item_{i}",
                                 _fmt(curves_a[:, i].mean()), _fmt(curves_b[:, i].mean()),
                                 _fmt(t), _fmt(p)])
    _write_csv(Path(out_path), ["test", "group_a", "group_b", "mean_a", "mean_b",
                                "t_statistic", "p_value"], rows)
    return rows
