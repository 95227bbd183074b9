"""Digit corpus ingestion (IDX format) and the composed two-digit dataset.

Classes are ordered digit pairs (a, b) with a < b; images are two 28x28
digit instances abutted side by side into a 28x56 canvas. Train compositions
draw digit instances only from the train split of the source corpus, test
compositions only from the test split.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CompositionError, IngestError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

TRAIN_IMAGES = "train-images-idx3-ubyte"
TRAIN_LABELS = "train-labels-idx1-ubyte"
TEST_IMAGES = "t10k-images-idx3-ubyte"
TEST_LABELS = "t10k-labels-idx1-ubyte"

CACHE_MAGIC = b"2DGC"
CACHE_VERSION = 1


@dataclass
class DigitCorpus:
    train_images: np.ndarray  # (N, 28, 28) uint8
    train_labels: np.ndarray  # (N,) uint8
    test_images: np.ndarray
    test_labels: np.ndarray


@dataclass(frozen=True, order=True)
class TwoDigitClass:
    """Ordered pair of distinct digits; the smaller digit is on the left."""

    a: int
    b: int

    def __post_init__(self):
        if not (0 <= self.a <= 9 and 0 <= self.b <= 9 and self.a < self.b):
            raise CompositionError(f"invalid class ({self.a}, {self.b}): need 0 <= a < b <= 9")

    @property
    def name(self) -> str:
        return f"{self.a}{self.b}"


@dataclass
class TwoDigitDataset:
    classes: list[TwoDigitClass]
    train: dict  # class -> (n, 28, 56) uint8
    test: dict
    seed: int
    # per-class (n, 2) arrays of (left, right) source-instance indices into the
    # corresponding corpus split; None when loaded from a cache file
    train_sources: dict | None = None
    test_sources: dict | None = None

    @property
    def per_class_train(self) -> int:
        return next(iter(self.train.values())).shape[0]

    @property
    def per_class_test(self) -> int:
        return next(iter(self.test.values())).shape[0]


# --- IDX ingest ----------------------------------------------------------------


def _read_be32(buf: bytes, offset: int, path) -> int:
    if offset + 4 > len(buf):
        raise IngestError(f"{path}: truncated header at byte {offset}")
    return struct.unpack_from(">I", buf, offset)[0]


def read_idx_images(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise IngestError(f"{path}: file not found")
    buf = path.read_bytes()
    magic = _read_be32(buf, 0, path)
    if magic != IMAGE_MAGIC:
        raise IngestError(f"{path}: expected image magic {IMAGE_MAGIC:#010x}, got {magic:#010x}")
    count = _read_be32(buf, 4, path)
    rows = _read_be32(buf, 8, path)
    cols = _read_be32(buf, 12, path)
    expected = 16 + count * rows * cols
    if len(buf) < expected:
        raise IngestError(f"{path}: truncated image payload at byte {len(buf)}, expected {expected}")
    return np.frombuffer(buf, dtype=np.uint8, count=count * rows * cols,
                         offset=16).reshape(count, rows, cols).copy()


def read_idx_labels(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise IngestError(f"{path}: file not found")
    buf = path.read_bytes()
    magic = _read_be32(buf, 0, path)
    if magic != LABEL_MAGIC:
        raise IngestError(f"{path}: expected label magic {LABEL_MAGIC:#010x}, got {magic:#010x}")
    count = _read_be32(buf, 4, path)
    expected = 8 + count
    if len(buf) < expected:
        raise IngestError(f"{path}: truncated label payload at byte {len(buf)}, expected {expected}")
    return np.frombuffer(buf, dtype=np.uint8, count=count, offset=8).copy()


def write_idx_images(path, images: np.ndarray):
    images = np.ascontiguousarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols))
        f.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray):
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">II", LABEL_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())


def load_corpus(directory) -> DigitCorpus:
    """Load the four standard IDX files from a directory, validating magic
    numbers, dimensions, and image/label count agreement."""
    directory = Path(directory)
    train_images = read_idx_images(directory / TRAIN_IMAGES)
    train_labels = read_idx_labels(directory / TRAIN_LABELS)
    test_images = read_idx_images(directory / TEST_IMAGES)
    test_labels = read_idx_labels(directory / TEST_LABELS)
    if train_images.shape[0] != train_labels.shape[0]:
        raise IngestError(
            f"{directory / TRAIN_IMAGES}: {train_images.shape[0]} images but "
            f"{train_labels.shape[0]} labels")
    if test_images.shape[0] != test_labels.shape[0]:
        raise IngestError(
            f"{directory / TEST_IMAGES}: {test_images.shape[0]} images but "
            f"{test_labels.shape[0]} labels")
    if train_images.shape[1:] != (28, 28) or test_images.shape[1:] != (28, 28):
        raise IngestError(f"{directory}: expected 28x28 images, got {train_images.shape[1:]}")
    return DigitCorpus(train_images, train_labels, test_images, test_labels)


# --- synthetic stand-in corpus ---------------------------------------------------

_GLYPHS = {
    0: ["01110", "10001", "10011", "10101", "11001", "10001", "01110"],
    1: ["00100", "01100", "00100", "00100", "00100", "00100", "01110"],
    2: ["01110", "10001", "00001", "00010", "00100", "01000", "11111"],
    3: ["11111", "00010", "00100", "00010", "00001", "10001", "01110"],
    4: ["00010", "00110", "01010", "10010", "11111", "00010", "00010"],
    5: ["11111", "10000", "11110", "00001", "00001", "10001", "01110"],
    6: ["00110", "01000", "10000", "11110", "10001", "10001", "01110"],
    7: ["11111", "00001", "00010", "00100", "01000", "01000", "01000"],
    8: ["01110", "10001", "10001", "01110", "10001", "10001", "01110"],
    9: ["01110", "10001", "10001", "01111", "00001", "00010", "01100"],
}


def _box_blur(batch: np.ndarray, passes: int = 2) -> np.ndarray:
    out = batch
    for _ in range(passes):
        p = np.pad(out, ((0, 0), (1, 1), (1, 1)))
        out = (p[:, :-2, :-2] + p[:, :-2, 1:-1] + p[:, :-2, 2:]
               + p[:, 1:-1, :-2] + p[:, 1:-1, 1:-1] + p[:, 1:-1, 2:]
               + p[:, 2:, :-2] + p[:, 2:, 1:-1] + p[:, 2:, 2:]) / 9.0
    return out


def _render_digit_batch(digit: int, count: int, rng) -> np.ndarray:
    glyph = np.array([[int(c) for c in row] for row in _GLYPHS[digit]], dtype=np.float64)
    glyph = np.kron(glyph, np.ones((3, 3)))  # 21 x 15
    gh, gw = glyph.shape
    canvases = np.zeros((count, 28, 28))
    dy = rng.integers(0, 28 - gh + 1, size=count)
    dx = rng.integers(0, 28 - gw + 1, size=count)
    intensity = rng.uniform(0.55, 1.0, size=count)
    for i in range(count):
        canvases[i, dy[i]:dy[i] + gh, dx[i]:dx[i] + gw] = glyph * (intensity[i] * 255.0)
    canvases = _box_blur(canvases)
    canvases += rng.normal(0.0, 12.0, size=canvases.shape)
    return np.clip(canvases, 0.0, 255.0).astype(np.uint8)


def synthesize_corpus(n_train: int = 60000, n_test: int = 10000, seed: int = 0) -> DigitCorpus:
    """Procedurally generated digit corpus with the standard split sizes:
    jittered, blurred, noisy renderings of ten distinct glyphs. A stand-in
    for environments without the real handwritten corpus; same IDX interface.
    """
    def build(total, sub_seed):
        rng = np.random.default_rng(sub_seed)
        per = [total // 10] * 10
        for d in range(total % 10):
            per[d] += 1
        images = np.concatenate([_render_digit_batch(d, per[d], rng) for d in range(10)])
        labels = np.concatenate([np.full(per[d], d, dtype=np.uint8) for d in range(10)])
        order = rng.permutation(total)
        return images[order], labels[order]

    train_images, train_labels = build(n_train, np.random.SeedSequence([seed, 0]))
    test_images, test_labels = build(n_test, np.random.SeedSequence([seed, 1]))
    return DigitCorpus(train_images, train_labels, test_images, test_labels)


def write_corpus(corpus: DigitCorpus, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_idx_images(directory / TRAIN_IMAGES, corpus.train_images)
    write_idx_labels(directory / TRAIN_LABELS, corpus.train_labels)
    write_idx_images(directory / TEST_IMAGES, corpus.test_images)
    write_idx_labels(directory / TEST_LABELS, corpus.test_labels)


# --- composition -----------------------------------------------------------------


def enumerate_classes() -> list[TwoDigitClass]:
    """All 45 valid classes (a, b) with 0 <= a < b <= 9, lexicographic."""
    return [TwoDigitClass(a, b) for a in range(10) for b in range(a + 1, 10)]


def _distinct_pairs(n_left: int, n_right: int, count: int, rng) -> np.ndarray:
    """`count` distinct (left, right) index pairs, sampled by rejection."""
    capacity = n_left * n_right
    if count > capacity:
        raise CompositionError(
            f"cannot draw {count} distinct pairs from {n_left} x {n_right} instances")
    chosen: dict[int, None] = {}
    while len(chosen) < count:
        need = count - len(chosen)
        flat = rng.integers(0, n_left, size=need) * n_right + rng.integers(0, n_right, size=need)
        for v in flat:
            if len(chosen) == count:
                break
            chosen.setdefault(int(v), None)
    flat = np.fromiter(chosen.keys(), dtype=np.int64, count=count)
    return np.stack([flat // n_right, flat % n_right], axis=1)


def compose(corpus: DigitCorpus, classes: list[TwoDigitClass],
            per_class_train: int, per_class_test: int, seed: int) -> TwoDigitDataset:
    """Build the composed dataset: for each class, distinct (left, right)
    instance pairs concatenated into 28x56 images, deterministically under
    the seed. Train pairs use train-split digits only, test pairs test-split
    digits only."""
    rng = np.random.default_rng(seed)
    splits = {
        "train": (corpus.train_images, corpus.train_labels, per_class_train),
        "test": (corpus.test_images, corpus.test_labels, per_class_test),
    }
    out = {"train": {}, "test": {}}
    sources = {"train": {}, "test": {}}
    for split, (images, labels, per_class) in splits.items():
        by_digit = {d: np.flatnonzero(labels == d) for d in range(10)}
        for cls in classes:
            left_pool, right_pool = by_digit[cls.a], by_digit[cls.b]
            if len(left_pool) == 0 or len(right_pool) == 0:
                raise CompositionError(f"{split}: no source instances for class {cls.name}")
            pairs = _distinct_pairs(len(left_pool), len(right_pool), per_class, rng)
            left_idx = left_pool[pairs[:, 0]]
            right_idx = right_pool[pairs[:, 1]]
            composed = np.concatenate([images[left_idx], images[right_idx]], axis=2)
            out[split][cls] = composed
            sources[split][cls] = np.stack([left_idx, right_idx], axis=1)
    return TwoDigitDataset(classes=list(classes), train=out["train"], test=out["test"],
                           seed=seed, train_sources=sources["train"],
                           test_sources=sources["test"])


# --- composed-dataset cache -------------------------------------------------------


def save_dataset(dataset: TwoDigitDataset, path) -> str:
    """Write the composed images as a flat binary (header: magic, version,
    class count, per-class counts, image dims; payload: row-major uint8,
    classes in order, train block then test block) plus a JSON manifest.
    Returns the payload's content hash."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n_classes = len(dataset.classes)
    h, w = 28, 56
    header = struct.pack(">4sIIIIII", CACHE_MAGIC, CACHE_VERSION, n_classes,
                         dataset.per_class_train, dataset.per_class_test, h, w)
    hasher = hashlib.sha256()
    with open(path, "wb") as f:
        f.write(header)
        for split in (dataset.train, dataset.test):
            for cls in dataset.classes:
                block = np.ascontiguousarray(split[cls], dtype=np.uint8).tobytes()
                hasher.update(block)
                f.write(block)
    digest = hasher.hexdigest()
    manifest = {
        "classes": [[c.a, c.b] for c in dataset.classes],
        "per_class_train": dataset.per_class_train,
        "per_class_test": dataset.per_class_test,
        "image_shape": [h, w],
        "seed": dataset.seed,
        "content_sha256": digest,
    }
    manifest_path = path.with_suffix(path.suffix + ".json")
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return digest


def load_dataset(path) -> TwoDigitDataset:
    path = Path(path)
    manifest_path = path.with_suffix(path.suffix + ".json")
    if not path.exists() or not manifest_path.exists():
        raise IngestError(f"{path}: dataset cache or its manifest is missing")
    manifest = json.loads(manifest_path.read_text())
    buf = path.read_bytes()
    magic, version, n_classes, per_train, per_test, h, w = struct.unpack_from(">4sIIIIII", buf, 0)
    if magic != CACHE_MAGIC:
        raise IngestError(f"{path}: bad cache magic {magic!r}")
    if version != CACHE_VERSION:
        raise IngestError(f"{path}: unsupported cache version {version}")
    classes = [TwoDigitClass(a, b) for a, b in manifest["classes"]]
    if len(classes) != n_classes:
        raise IngestError(f"{path}: manifest lists {len(classes)} classes, header says {n_classes}")
    offset = struct.calcsize(">4sIIIIII")
    expected = offset + n_classes * (per_train + per_test) * h * w
    if len(buf) != expected:
        raise IngestError(f"{path}: payload is {len(buf)} bytes, expected {expected}")
    train, test = {}, {}
    for split, per_class, store in (("train", per_train, train), ("test", per_test, test)):
        for cls in classes:
            n_bytes = per_class * h * w
            store[cls] = np.frombuffer(buf, dtype=np.uint8, count=n_bytes,
                                       offset=offset).reshape(per_class, h, w).copy()
            offset += n_bytes
    return TwoDigitDataset(classes=classes, train=train, test=test, seed=manifest["seed"])


def images_to_unit(images: np.ndarray) -> np.ndarray:
    """uint8 pixels -> float64 in [0, 1]."""
    return np.asarray(images, dtype=np.float64) / 255.0


def load_feature_matrix(path) -> np.ndarray:
    """Precomputed feature file: .npy (2-D float array) or CSV with one row
    per image, documented column order = feature index."""
    path = Path(path)
    if not path.exists():
        raise IngestError(f"{path}: feature file not found")
    if path.suffix == ".npy":
        arr = np.load(path)
    else:
        arr = np.loadtxt(path, delimiter=",", dtype=np.float64)
    arr = np.atleast_2d(np.asarray(arr, dtype=np.float64))
    if arr.ndim != 2:
        raise IngestError(f"{path}: expected a 2-D feature matrix, got shape {arr.shape}")
    return arr
