"""Prediction records and the delimited prediction-file format.

A prediction file has a header row ``prob_0,...,prob_{K-1},label,<vars...>``
followed by one row per instance. Probabilities are written with ``repr`` so
that a write/load cycle is exact.
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

PROB_TOL = 1e-6


class SchemaError(ValueError):
    """Header of a prediction file does not follow the column convention."""


class ValidationError(ValueError):
    """A row (or array) violates a probability or label invariant."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class PredictionRecord:
    probs: tuple[float, ...]
    label: int
    variables: Mapping[str, float] = field(default_factory=dict)

    @property
    def num_classes(self) -> int:
        return len(self.probs)

    def confidence_and_prediction(self) -> tuple[float, int]:
        return confidence_and_prediction(self)


def confidence_and_prediction(record: PredictionRecord) -> tuple[float, int]:
    """Return ``(max(probs), argmax(probs))``; ties go to the lowest index."""
    probs = record.probs
    best = 0
    for j in range(1, len(probs)):
        if probs[j] > probs[best]:
            best = j
    return float(probs[best]), best


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def validate_probs(probs: np.ndarray, row_offset: int = 1) -> None:
    """Raise ValidationError naming the first offending row (1-based)."""
    if probs.ndim != 2 or probs.shape[1] < 2:
        raise ValidationError(f"expected an (n, K>=2) array, got shape {probs.shape}")
    finite = np.isfinite(probs).all(axis=1)
    if not finite.all():
        i = int(np.argmin(finite))
        raise ValidationError("non-finite probability", row=i + row_offset)
    in_range = ((probs >= 0.0) & (probs <= 1.0)).all(axis=1)
    if not in_range.all():
        i = int(np.argmin(in_range))
        raise ValidationError("probability outside [0, 1]", row=i + row_offset)
    sums = probs.sum(axis=1)
    ok = np.abs(sums - 1.0) <= PROB_TOL
    if not ok.all():
        i = int(np.argmin(ok))
        raise ValidationError(f"row sums to {sums[i]:.6g}", row=i + row_offset)


class Dataset:
    """An immutable, column-oriented collection of prediction records.

    Parameters
    ----------
    probs : array of shape (n, K)
        Per-class probabilities.
    labels : array of shape (n,)
        True class indices in ``0..K-1``.
    variables : mapping of name -> array of shape (n,)
        Real-valued metadata variables, in column order.
    """

    def __init__(self, probs, labels, variables: Mapping[str, Sequence[float]] | None = None):
        probs = np.asarray(probs, dtype=np.float64)
        validate_probs(probs)
        n, k = probs.shape
        if n < 1:
            raise ValidationError("dataset must contain at least one record")
        labels_arr = np.asarray(labels)
        if labels_arr.shape != (n,):
            raise ValidationError(f"labels must have shape ({n},), got {labels_arr.shape}")
        if labels_arr.dtype.kind == "f":
            if not np.all(np.isfinite(labels_arr)) or np.any(labels_arr != np.round(labels_arr)):
                i = int(np.argmax(~np.isfinite(labels_arr) | (labels_arr != np.round(labels_arr))))
                raise ValidationError("label is not an integer", row=i + 1)
        elif labels_arr.dtype.kind not in "iu":
            raise ValidationError("labels must be integers")
        labels_arr = labels_arr.astype(np.int64)
        bad = (labels_arr < 0) | (labels_arr >= k)
        if bad.any():
            i = int(np.argmax(bad))
            raise ValidationError(f"label {labels_arr[i]} outside 0..{k - 1}", row=i + 1)

        vars_out: dict[str, np.ndarray] = {}
        for name, values in (variables or {}).items():
            arr = np.asarray(values, dtype=np.float64)
            if arr.shape != (n,):
                raise ValidationError(f"variable {name!r} must have shape ({n},)")
            if not np.isfinite(arr).all():
                i = int(np.argmin(np.isfinite(arr)))
                raise ValidationError(f"variable {name!r} is missing or non-finite", row=i + 1)
            vars_out[str(name)] = _frozen(arr)

        self.probs = _frozen(probs)
        self.labels = _frozen(labels_arr)
        self.variables = vars_out
        # Ties broken by lowest index, matching np.argmax.
        self.predictions = _frozen(np.argmax(probs, axis=1))
        self.confidence = _frozen(probs[np.arange(n), self.predictions])
        self.correct = _frozen((self.predictions == self.labels).astype(np.float64))

    @property
    def n(self) -> int:
        return self.probs.shape[0]

    @property
    def num_classes(self) -> int:
        return self.probs.shape[1]

    @property
    def variable_names(self) -> list[str]:
        return list(self.variables)

    def __len__(self) -> int:
        return self.n

    def variable(self, name: str) -> np.ndarray:
        try:
            return self.variables[name]
        except KeyError:
            raise KeyError(
                f"unknown variable {name!r}; available: {', '.join(self.variables) or '(none)'}"
            ) from None

    @property
    def records(self) -> Iterator[PredictionRecord]:
        names = self.variable_names
        for i in range(self.n):
            yield PredictionRecord(
                probs=tuple(float(p) for p in self.probs[i]),
                label=int(self.labels[i]),
                variables={k: float(self.variables[k][i]) for k in names},
            )

    @classmethod
    def from_records(cls, records: Sequence[PredictionRecord]) -> "Dataset":
        if not records:
            raise ValidationError("dataset must contain at least one record")
        k = len(records[0].probs)
        names = list(records[0].variables)
        for i, r in enumerate(records):
            if len(r.probs) != k:
                raise ValidationError(f"expected {k} probabilities", row=i + 1)
            if set(r.variables) != set(names):
                raise ValidationError("variable names differ from first record", row=i + 1)
        return cls(
            np.array([r.probs for r in records], dtype=np.float64),
            np.array([r.label for r in records]),
            {name: [r.variables[name] for r in records] for name in names},
        )

    def with_probs(self, probs) -> "Dataset":
        """Same labels and variables, new probabilities."""
        return Dataset(probs, self.labels, self.variables)

    def subset(self, index) -> "Dataset":
        return Dataset(
            self.probs[index],
            self.labels[index],
            {k: v[index] for k, v in self.variables.items()},
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.probs.shape == other.probs.shape
            and self.variable_names == other.variable_names
            and np.array_equal(self.probs, other.probs)
            and np.array_equal(self.labels, other.labels)
            and all(np.array_equal(self.variables[k], other.variables[k]) for k in self.variables)
        )

    def __repr__(self) -> str:
        return f"Dataset(n={self.n}, K={self.num_classes}, variables={self.variable_names})"


def _parse_header(header: list[str]) -> tuple[int, list[str]]:
    header = [h.strip() for h in header]
    prob_cols = [h for h in header if h.startswith("prob_")]
    k = len(prob_cols)
    expected = [f"prob_{j}" for j in range(k)]
    if k < 2 or header[:k] != expected:
        raise SchemaError(
            f"header must start with prob_0..prob_{{K-1}} (K>=2) in order, got {header[: max(k, 2)]}"
        )
    if len(header) <= k or header[k] != "label":
        raise SchemaError("column 'label' must follow the probability columns")
    variables = header[k + 1 :]
    for name in variables:
        if name.startswith("prob_"):
            raise SchemaError(f"unexpected probability column {name!r}")
        if not name:
            raise SchemaError("empty column name in header")
    if len(set(variables)) != len(variables) or "label" in variables:
        raise SchemaError("duplicate column names in header")
    return k, variables


def _to_float(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ValidationError(f"column {column!r}: cannot parse {text!r} as a number", row=row) from None
    if not math.isfinite(value):
        raise ValidationError(f"column {column!r}: non-finite value {text!r}", row=row)
    return value


def load_predictions(path: str | os.PathLike) -> Dataset:
    """Read and validate a prediction file. Row numbers in errors are 1-based data rows."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        k, names = _parse_header(header)
        width = k + 1 + len(names)
        probs, labels = [], []
        columns: list[list[float]] = [[] for _ in names]
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != width:
                raise ValidationError(f"expected {width} fields, got {len(row)}", row=row_no)
            probs.append([_to_float(t, row_no, f"prob_{j}") for j, t in enumerate(row[:k])])
            label = _to_float(row[k], row_no, "label")
            if label != int(label):
                raise ValidationError(f"label {row[k]!r} is not an integer", row=row_no)
            if not 0 <= label < k:
                raise ValidationError(f"label {int(label)} outside 0..{k - 1}", row=row_no)
            labels.append(int(label))
            for c, name in enumerate(names):
                text = row[k + 1 + c].strip()
                if text == "":
                    raise ValidationError(f"missing value for variable {name!r}", row=row_no)
                columns[c].append(_to_float(text, row_no, name))
    if not probs:
        raise ValidationError(f"{path}: no data rows")
    return Dataset(np.array(probs), np.array(labels, dtype=np.int64), dict(zip(names, columns)))


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write to a temporary sibling file, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_predictions(dataset: Dataset) -> str:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    k = dataset.num_classes
    names = dataset.variable_names
    writer.writerow([f"prob_{j}" for j in range(k)] + ["label"] + names)
    var_cols = [dataset.variables[name] for name in names]
    for i in range(dataset.n):
        writer.writerow(
            [repr(float(p)) for p in dataset.probs[i]]
            + [str(int(dataset.labels[i]))]
            + [repr(float(col[i])) for col in var_cols]
        )
    return buf.getvalue()


def write_predictions(dataset: Dataset, path: str | os.PathLike) -> None:
    atomic_write_text(path, format_predictions(dataset))
