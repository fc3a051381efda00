"""Dataset ingestion: labeled CSV records, class coding, one-hot, k-fold plans.

Input files are RFC-4180 CSV with a header row; the text and label column
names are caller-supplied. Sentiment labels use the three-way coding
pos -> 0, neu -> 1, neg -> 2.
"""

import csv
from dataclasses import dataclass

import numpy as np

from sentikit.errors import DataError

LABEL_TO_INDEX = {"pos": 0, "neu": 1, "neg": 2}
INDEX_TO_LABEL = {i: s for s, i in LABEL_TO_INDEX.items()}
NUM_CLASSES = 3


@dataclass(frozen=True)
class RawRecord:
    text: str
    label: str


@dataclass(frozen=True)
class LabeledExample:
    """A fixed-length token id sequence with its class index and one-hot row."""

    ids: np.ndarray        # (d,) int64, zeros only in the tail
    true_length: int
    label: int
    onehot: np.ndarray     # (NUM_CLASSES,) float64


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray  # per-example fold index in [0, k)
    seed: int

    def fold_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def split(self, fold: int):
        """(train_indices, test_indices) for one held-out fold."""
        test = self.assignments == fold
        return np.flatnonzero(~test), np.flatnonzero(test)


def load_dataset(path, text_col: str, label_col: str) -> list[RawRecord]:
    """Read one RawRecord per data row, in file order.

    Rows whose label is not in {pos, neu, neg} are a hard error, reported
    with their 1-based data row number.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"dataset file not found: {path}")
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file, expected a header row")
        for col in (text_col, label_col):
            if col not in reader.fieldnames:
                raise DataError(
                    f"{path}: missing column {col!r} (header has {reader.fieldnames})"
                )
        records = []
        for rownum, row in enumerate(reader, start=1):
            text = row[text_col]
            label = row[label_col]
            if text is None:
                raise DataError(f"{path}: row {rownum}: missing text field")
            if label not in LABEL_TO_INDEX:
                raise DataError(
                    f"{path}: row {rownum}: unknown label {label!r}, "
                    f"expected one of {sorted(LABEL_TO_INDEX)}"
                )
            records.append(RawRecord(text=text, label=label))
    return records


def map_label(label: str) -> int:
    """pos -> 0, neu -> 1, neg -> 2."""
    try:
        return LABEL_TO_INDEX[label]
    except KeyError:
        raise DataError(f"unknown label {label!r}, expected one of {sorted(LABEL_TO_INDEX)}")


def inverse_label(index: int) -> str:
    try:
        return INDEX_TO_LABEL[int(index)]
    except KeyError:
        raise DataError(f"class index {index} out of range")


def one_hot(index: int, num_classes: int = NUM_CLASSES) -> np.ndarray:
    if not 0 <= index < num_classes:
        raise DataError(f"class index {index} out of range [0, {num_classes})")
    v = np.zeros(num_classes)
    v[index] = 1.0
    return v


def make_folds(n: int, k: int, seed: int) -> FoldPlan:
    """Balanced k-fold assignment from a seeded uniform shuffle.

    The permutation comes from NumPy's default generator (PCG64) seeded with
    ``seed``; example ``perm[i]`` lands in fold ``i % k``, so fold sizes differ
    by at most one. Not stratified by class.
    """
    if k < 2:
        raise DataError(f"k must be at least 2, got {k}")
    if k > n:
        raise DataError(f"k={k} exceeds the number of examples n={n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    assignments[perm] = np.arange(n) % k
    return FoldPlan(k=k, assignments=assignments, seed=seed)
