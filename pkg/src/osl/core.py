"""Logit-space data model, softmax, ranking and the logit CSV format.

Class labels follow the open-set convention: domestic classes are 1..K,
``0`` is foreign. Ground truth additionally uses ``-1`` for fooling inputs.
Logit column ``j`` (0-based) belongs to domestic class ``j + 1``.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FOREIGN = 0
FOOLING = -1


class InvalidInputError(ValueError):
    """Raised when an input violates an operation's preconditions."""


def _as_finite_vector(a, name: str = "a") -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInputError(f"{name} must be a non-empty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def softmax(a) -> np.ndarray:
    """Shift-stable softmax of a single logit vector."""
    arr = _as_finite_vector(a)
    z = np.exp(arr - arr.max())
    return z / z.sum()


def softmax_rows(a: np.ndarray) -> np.ndarray:
    """Row-wise softmax for an (N, K) array."""
    a = np.asarray(a, dtype=np.float64)
    z = np.exp(a - a.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def rank_descending(a) -> np.ndarray:
    """Rank of each entry, 1 for the largest; ties go to the lower index first."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInputError("rank_descending needs a non-empty vector")
    # stable sort on the negated values keeps index order among ties
    order = np.argsort(-arr, kind="stable")
    ranks = np.empty(arr.size, dtype=np.int64)
    ranks[order] = np.arange(1, arr.size + 1)
    return ranks


def argmax_label(a) -> int:
    """Domestic label (1..K) of the largest logit."""
    return int(np.argmax(a)) + 1


def truth_name(truth: int) -> str:
    if truth == FOREIGN:
        return "foreign"
    if truth == FOOLING:
        return "fooling"
    return "domestic"


@dataclass(frozen=True)
class LogitRecord:
    sample_id: str
    logits: np.ndarray
    truth: int


@dataclass
class LogitSet:
    """A column-oriented collection of logit records sharing one K."""

    ids: list[str]
    logits: np.ndarray
    truth: np.ndarray

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=np.float64)
        self.truth = np.asarray(self.truth, dtype=np.int64)
        if self.logits.ndim != 2:
            raise InvalidInputError("logits must be an (N, K) array")
        n, k = self.logits.shape
        if len(self.ids) != n or self.truth.shape != (n,):
            raise InvalidInputError("ids, logits and truth must have the same length")
        if not np.all(np.isfinite(self.logits)):
            raise InvalidInputError("logits contain non-finite entries")
        if np.any(self.truth < FOOLING) or np.any(self.truth > k):
            raise InvalidInputError(f"truth labels must lie in -1..{k}")

    @property
    def K(self) -> int:
        return self.logits.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def __getitem__(self, i: int) -> LogitRecord:
        return LogitRecord(self.ids[i], self.logits[i], int(self.truth[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def subset(self, mask_or_index) -> "LogitSet":
        idx = np.arange(len(self))[mask_or_index]
        return LogitSet([self.ids[i] for i in idx], self.logits[idx], self.truth[idx])

    def argmax_labels(self) -> np.ndarray:
        return np.argmax(self.logits, axis=1) + 1

    @classmethod
    def from_records(cls, records: Iterable[LogitRecord]) -> "LogitSet":
        records = list(records)
        if not records:
            raise InvalidInputError("no records")
        return cls(
            [r.sample_id for r in records],
            np.stack([np.asarray(r.logits, dtype=np.float64) for r in records]),
            np.array([r.truth for r in records]),
        )

    @classmethod
    def concat(cls, sets: Sequence["LogitSet"]) -> "LogitSet":
        sets = [s for s in sets if len(s)]
        if not sets:
            raise InvalidInputError("nothing to concatenate")
        if len({s.K for s in sets}) != 1:
            raise InvalidInputError("logit sets disagree on K")
        return cls(
            [i for s in sets for i in s.ids],
            np.concatenate([s.logits for s in sets]),
            np.concatenate([s.truth for s in sets]),
        )


def fmt_float(x: float) -> str:
    """17 significant digits: enough to round-trip any double."""
    return format(float(x), ".17g")


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write a UTF-8, LF-terminated CSV; floats are rendered with :func:`fmt_float`."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")


def write_logits(path, data: LogitSet) -> None:
    header = ["sample_id", "truth"] + [f"logit_{j}" for j in range(data.K)]
    write_table(
        path,
        header,
        ([sid, int(t)] + [fmt_float(v) for v in row] for sid, t, row in zip(data.ids, data.truth, data.logits)),
    )


def read_logits(path) -> LogitSet:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InvalidInputError(f"{path}: empty file") from None
        if header[:2] != ["sample_id", "truth"] or len(header) < 3:
            raise InvalidInputError(f"{path}: expected header sample_id,truth,logit_0,...")
        expected = [f"logit_{j}" for j in range(len(header) - 2)]
        if header[2:] != expected:
            raise InvalidInputError(f"{path}: logit columns must be logit_0..logit_{len(expected) - 1}")
        ids, truth, rows = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise InvalidInputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            ids.append(row[0])
            truth.append(int(row[1]))
            rows.append([float(v) for v in row[2:]])
    if not rows:
        raise InvalidInputError(f"{path}: no records")
    try:
        return LogitSet(ids, np.array(rows), np.array(truth))
    except InvalidInputError as exc:
        raise InvalidInputError(f"{path}: {exc}") from None


def n_workers() -> int:
    """Worker cap from ``OSL_THREADS`` (default: CPU count)."""
    raw = os.environ.get("OSL_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise InvalidInputError(f"OSL_THREADS must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


def safe_div(num: float, den: float) -> float:
    """``num / den`` with 0/0 defined as 0."""
    if den == 0:
        return 0.0
    return num / den

