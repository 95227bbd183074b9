"""Continual-learning schedules and the phase-by-phase training loop.

A curriculum is an ordered list of item phases over a fixed readout layout.
Running it alternates reference refreshes, phase training on positives plus
negatives drawn from the class universe, and per-item test evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import TwoDigitClass
from .errors import ConfigurationError, ShapeError
from .network import ClassifierNet, forward, make_batches, train_phase
from .synapse import RuleConfig

# seed-stream salts, combined with the run seed via np.random.default_rng([seed, salt])
STREAM_PHASE_DATA = 1
STREAM_POISON = 2


@dataclass(frozen=True)
class ItemTask:
    item_class: TwoDigitClass
    readout_index: int
    poisoned: bool = False


@dataclass
class Curriculum:
    phases: list[ItemTask]
    n_readouts: int
    negatives_per_positive: float = 1.0

    def __post_init__(self):
        readouts = {t.readout_index for t in self.phases}
        if any(r < 0 or r >= self.n_readouts for r in readouts):
            raise ConfigurationError("readout index outside [0, n_readouts)")

    @property
    def items(self) -> list[TwoDigitClass]:
        """Distinct item classes in first-appearance order."""
        seen = {}
        for task in self.phases:
            seen.setdefault(task.readout_index, task.item_class)
        return [seen[r] for r in sorted(seen)]

    def frequency_of(self, readout_index: int) -> int:
        return sum(1 for t in self.phases if t.readout_index == readout_index)


def build_sequence(items: list[TwoDigitClass], n_readouts: int,
                   negatives_per_positive: float = 1.0) -> Curriculum:
    """One phase per item, readout i assigned to item i."""
    if len(set(items)) != len(items):
        raise ConfigurationError("items must be distinct")
    if len(items) > n_readouts:
        raise ConfigurationError(f"{len(items)} items exceed {n_readouts} readouts")
    phases = [ItemTask(cls, i) for i, cls in enumerate(items)]
    return Curriculum(phases, n_readouts, negatives_per_positive)


def build_repetition(items: list[TwoDigitClass], n_readouts: int, repeats: int,
                     poison_last: bool = False,
                     negatives_per_positive: float = 1.0) -> Curriculum:
    """The full item sequence repeated `repeats` times; with poison_last the
    final repetition's phases all train on permuted targets."""
    if repeats < 1:
        raise ConfigurationError(f"repeats must be >= 1, got {repeats}")
    base = build_sequence(items, n_readouts, negatives_per_positive)
    phases = []
    for rep in range(repeats):
        poisoned = poison_last and rep == repeats - 1
        phases.extend(ItemTask(t.item_class, t.readout_index, poisoned) for t in base.phases)
    return Curriculum(phases, n_readouts, negatives_per_positive)


def build_frequency(items: list[TwoDigitClass], n_readouts: int,
                    frequencies: list[int], seed: int = 0, interleave: str = "blocks",
                    negatives_per_positive: float = 1.0) -> Curriculum:
    """Item i appears frequencies[i] times. Interleaving modes:

    - "blocks": item i trained frequencies[i] consecutive phases, blocks in
      sequence order (default).
    - "shuffled": all phase occurrences in one seeded random order.
    - "rounds": an item with frequency f appears once per round in the last f
      of max(frequencies) rounds, items in sequence order within each round;
      every item's final exposure lands in the last round.
    """
    if len(frequencies) != len(items):
        raise ConfigurationError(
            f"{len(frequencies)} frequencies for {len(items)} items")
    if any(f < 1 for f in frequencies):
        raise ConfigurationError("frequencies must all be >= 1")
    base = build_sequence(items, n_readouts, negatives_per_positive)
    if interleave == "blocks":
        order = [i for i in range(len(items)) for _ in range(frequencies[i])]
    elif interleave == "shuffled":
        flat = [i for i in range(len(items)) for _ in range(frequencies[i])]
        rng = np.random.default_rng(seed)
        order = [int(i) for i in rng.permutation(flat)]
    elif interleave == "rounds":
        max_f = max(frequencies)
        order = [i for r in range(max_f) for i in range(len(items))
                 if frequencies[i] >= max_f - r]
    else:
        raise ConfigurationError(f"unknown interleave mode {interleave!r}")
    phases = [base.phases[i] for i in order]
    return Curriculum(phases, n_readouts, negatives_per_positive)


# --- running a curriculum --------------------------------------------------------


@dataclass
class TrainSettings:
    """Per-phase training budget shared by all phases of a run."""

    rule: RuleConfig
    epochs: int = 5
    batch_size: int = 32
    positives_per_phase: int = 192

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size <= 0 or self.positives_per_phase <= 0:
            raise ConfigurationError("invalid training settings")


@dataclass
class FeatureBank:
    """Per-class feature pools (already extracted, standardized, frozen)."""

    train: dict  # TwoDigitClass -> (n, d) float64
    test: dict

    @property
    def feature_dim(self) -> int:
        return next(iter(self.train.values())).shape[1]

    @property
    def classes(self) -> list[TwoDigitClass]:
        return sorted(self.train.keys())


@dataclass
class RunResult:
    checkpoints: np.ndarray        # (n_phases, n_items) per-item test accuracy
    loss_traces: list[list[float]]
    items: list[TwoDigitClass]


def assemble_phase_data(bank: FeatureBank, task: ItemTask, curriculum: Curriculum,
                        settings: TrainSettings, rng):
    """Fixed training set for one item: positives one-hot on the item's
    readout; negatives drawn uniformly from the other classes of the full
    universe with a uniform target over all readouts except the item's."""
    n_pos = settings.positives_per_phase
    pool = bank.train[task.item_class]
    if n_pos > pool.shape[0]:
        raise ConfigurationError(
            f"{n_pos} positives requested but class {task.item_class.name} has {pool.shape[0]}")
    pos = pool[rng.choice(pool.shape[0], size=n_pos, replace=False)]
    negative_classes = [c for c in bank.classes if c != task.item_class]
    n_neg = int(round(n_pos * curriculum.negatives_per_positive))
    cls_pick = rng.integers(0, len(negative_classes), size=n_neg)
    neg = np.empty((n_neg, bank.feature_dim))
    for j, ci in enumerate(cls_pick):
        src = bank.train[negative_classes[ci]]
        neg[j] = src[rng.integers(0, src.shape[0])]
    features = np.concatenate([pos, neg])
    n_out = curriculum.n_readouts
    targets = np.zeros((features.shape[0], n_out))
    targets[:n_pos, task.readout_index] = 1.0
    if n_out > 1:
        targets[n_pos:, :] = 1.0 / (n_out - 1)
        targets[n_pos:, task.readout_index] = 0.0
    order = rng.permutation(features.shape[0])
    return features[order], targets[order]


def evaluate_items(net: ClassifierNet, bank: FeatureBank, items: list[TwoDigitClass]) -> np.ndarray:
    """Per-item test accuracy over the sequence items, argmax over all readouts."""
    accs = np.empty(len(items))
    for j, cls in enumerate(items):
        probs = forward(net, bank.test[cls])
        accs[j] = float((np.argmax(probs, axis=1) == j).mean())
    return accs


def run(curriculum: Curriculum, net: ClassifierNet, bank: FeatureBank,
        settings: TrainSettings, seed: int) -> RunResult:
    """Execute the curriculum: per phase, refresh references, train on the
    item's fixed phase data (targets permuted first when poisoned), then
    record per-item test accuracy for all sequence items."""
    items = curriculum.items
    missing = [c.name for c in items if c not in bank.train or c not in bank.test]
    if missing:
        raise ConfigurationError(f"classes missing from feature bank: {missing}")
    data_rng = np.random.default_rng([seed, STREAM_PHASE_DATA])
    poison_rng = np.random.default_rng([seed, STREAM_POISON])
    phase_data = {}
    for task in curriculum.phases:
        if task.readout_index not in phase_data:
            phase_data[task.readout_index] = assemble_phase_data(
                bank, task, curriculum, settings, data_rng)
    before = net.refresh_count
    checkpoints = np.empty((len(curriculum.phases), len(items)))
    traces = []
    for pi, task in enumerate(curriculum.phases):
        net.refresh_reference()
        features, targets = phase_data[task.readout_index]
        if task.poisoned:
            targets = targets[poison_rng.permutation(targets.shape[0])]
        batches = make_batches(features, targets, settings.batch_size)
        traces.append(train_phase(net, batches, settings.rule, settings.epochs))
        checkpoints[pi] = evaluate_items(net, bank, items)
    assert net.refresh_count - before == len(curriculum.phases)
    return RunResult(checkpoints=checkpoints, loss_traces=traces, items=items)
