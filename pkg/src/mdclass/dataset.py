"""Tabular data with an explicit observed-mask.

Missing cells hold ``NaN`` in ``Dataset.values``; code that needs to know
whether a cell is observed must look at ``Dataset.mask`` instead of testing
the stored value.
"""

import csv
import math
import os
import tempfile
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import (
    AmputationInfeasible,
    MissingLabel,
    ParseError,
    SingleClassDataset,
)

MISSING = np.nan
DEFAULT_MISSING_TOKENS = ("", "NA")
_MAX_AMPUTE_TRIES = 1000


@dataclass(frozen=True, eq=False)
class Dataset:
    """Value matrix, observed-mask, binary labels and names.

    ``values`` and ``mask`` are copied on construction and made read-only;
    ``values[~mask]`` is reset to the missing sentinel.
    """

    values: np.ndarray
    mask: np.ndarray
    labels: np.ndarray
    feature_names: tuple = None
    instance_ids: tuple = None
    positive_label_name: str = "1"
    negative_label_name: str = "0"

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("values must be a 2-d array")
        mask = np.array(self.mask, dtype=bool)
        if mask.shape != values.shape:
            raise ValueError("mask and values must have the same shape")
        labels = np.array(self.labels, dtype=int)
        n, d = values.shape
        if labels.shape != (n,):
            raise ValueError("labels must have one entry per row")
        if not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        if not np.isfinite(values[mask]).all():
            raise ValueError("observed cells must be finite")
        values[~mask] = MISSING
        for arr in (values, mask, labels):
            arr.setflags(write=False)
        names = self.feature_names
        names = tuple(f"x{j}" for j in range(d)) if names is None else tuple(names)
        if len(names) != d:
            raise ValueError("one feature name per column is required")
        ids = self.instance_ids
        ids = tuple(str(i) for i in range(n)) if ids is None else tuple(ids)
        if len(ids) != n:
            raise ValueError("one instance id per row is required")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "instance_ids", ids)

    @classmethod
    def from_array(cls, X, y, **kwargs):
        """Build from a matrix that uses NaN for missing cells."""
        X = np.asarray(X, dtype=float)
        return cls(X, ~np.isnan(X), y, **kwargs)

    @property
    def shape(self):
        return self.values.shape

    @property
    def n_missing(self):
        return int((~self.mask).sum())

    def subset(self, rows):
        rows = np.asarray(rows)
        return replace(
            self,
            values=self.values[rows],
            mask=self.mask[rows],
            labels=self.labels[rows],
            instance_ids=tuple(self.instance_ids[i] for i in rows),
        )

    def with_values(self, values, mask=None):
        if mask is None:
            mask = np.ones(np.shape(values), dtype=bool)
        return replace(self, values=values, mask=mask)


@dataclass(frozen=True)
class MissingnessSummary:
    per_feature_missing: np.ndarray
    per_instance_missing: np.ndarray
    overall_rate: float
    feature_names: tuple = field(default=())

    def column_order(self):
        """Feature indices by descending missing count, ties by original index."""
        return np.lexsort((np.arange(self.per_feature_missing.size), -self.per_feature_missing))

    def to_dict(self):
        return {
            "overall_rate": self.overall_rate,
            "total_missing": int(self.per_feature_missing.sum()),
            "per_feature_missing": {
                name: int(c) for name, c in zip(self.feature_names, self.per_feature_missing)
            },
            "per_instance_missing": [int(c) for c in self.per_instance_missing],
            "feature_order": [self.feature_names[j] for j in self.column_order()],
        }


def _parse_cell(text, tokens, zero_as_missing, row, column):
    if text.strip() in tokens:
        return MISSING, False
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"cannot parse {text!r} as a number", row, column) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite value {text!r}", row, column)
    if zero_as_missing and value == 0.0:
        return MISSING, False
    return value, True


def load_csv(
    path,
    label_column,
    positive_label,
    missing_tokens=DEFAULT_MISSING_TOKENS,
    zero_as_missing=False,
    id_column=None,
):
    """Read a comma-separated file into a :class:`Dataset`.

    Cells equal to one of ``missing_tokens`` (after stripping whitespace), and
    zeros when ``zero_as_missing`` is set, become missing. Rows are labelled 1
    where the label column equals ``positive_label``.
    """
    tokens = {str(t).strip() for t in missing_tokens}
    positive_label = str(positive_label)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("file is empty") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise MissingLabel(f"label column {label_column!r} not found in header")
        label_idx = header.index(label_column)
        id_idx = None
        if id_column is not None:
            if id_column not in header:
                raise ParseError(f"id column {id_column!r} not found in header")
            id_idx = header.index(id_column)
        feature_idx = [j for j in range(len(header)) if j not in (label_idx, id_idx)]

        values, mask, labels, ids = [], [], [], []
        negative_name = None
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"expected {len(header)} fields, found {len(row)}", lineno, None
                )
            label = row[label_idx].strip()
            if label == "":
                raise MissingLabel(f"row {lineno} has an empty label")
            labels.append(1 if label == positive_label else 0)
            if label != positive_label and negative_name is None:
                negative_name = label
            ids.append(row[id_idx] if id_idx is not None else str(len(ids)))
            parsed = [
                _parse_cell(row[j], tokens, zero_as_missing, lineno, header[j])
                for j in feature_idx
            ]
            values.append([v for v, _ in parsed])
            mask.append([m for _, m in parsed])

    if not labels:
        raise ParseError("file has no data rows")
    labels = np.array(labels)
    if labels.min() == labels.max():
        raise SingleClassDataset(
            f"all rows fall in one class (positive label {positive_label!r})"
        )
    d = len(feature_idx)
    return Dataset(
        np.array(values, dtype=float).reshape(len(labels), d),
        np.array(mask, dtype=bool).reshape(len(labels), d),
        labels,
        tuple(header[j] for j in feature_idx),
        tuple(ids),
        positive_label,
        negative_name,
    )


def atomic_write_text(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_number(x):
    """Shortest round-tripping text for a float (integers without a fraction)."""
    x = float(x)
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def dataset_to_csv(
    data,
    label_column="label",
    missing_token="NA",
    values=None,
    comment=None,
):
    """Render ``data`` as CSV text.

    ``values`` optionally replaces the stored matrix (e.g. with an imputed
    one); the cells written as ``missing_token`` always follow ``data.mask``
    unless a complete ``values`` matrix is supplied.
    """
    matrix = data.values if values is None else np.asarray(values, dtype=float)
    mask = data.mask if values is None else ~np.isnan(matrix)
    lines = []
    if comment:
        lines.append(f"# {comment}")
    lines.append(",".join([*data.feature_names, label_column]))
    for i in range(data.shape[0]):
        cells = [
            format_number(matrix[i, j]) if mask[i, j] else missing_token
            for j in range(data.shape[1])
        ]
        label = data.positive_label_name if data.labels[i] == 1 else data.negative_label_name
        lines.append(",".join([*cells, label]))
    return "\n".join(lines) + "\n"


def summarize_missingness(data):
    missing = ~data.mask
    n, d = missing.shape
    return MissingnessSummary(
        per_feature_missing=missing.sum(axis=0),
        per_instance_missing=missing.sum(axis=1),
        overall_rate=float(missing.sum()) / (n * d),
        feature_names=data.feature_names,
    )


def heatmap_pgm(data):
    """Missingness heatmap as plain PGM text: missing cells 255, observed 0.

    Rows keep input order; columns are sorted by descending missing count.
    """
    order = summarize_missingness(data).column_order()
    pixels = np.where(data.mask[:, order], 0, 255)
    n, d = pixels.shape
    lines = ["P2", f"{d} {n}", "255"]
    lines.extend(" ".join(str(p) for p in row) for row in pixels)
    return "\n".join(lines) + "\n"


def export_heatmap(data, path):
    atomic_write_text(path, heatmap_pgm(data))


def ampute_mcar(data, rate, stream):
    """Delete exactly ``floor(rate * n * d)`` cells chosen uniformly at random.

    Every row and column keeps at least one observed cell; draws violating
    that are rejected and redrawn (at most 1000 attempts).
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError("rate must lie in [0, 1)")
    if not data.mask.all():
        raise ValueError("amputation requires a fully observed dataset")
    n, d = data.shape
    n_remove = math.floor(rate * n * d)
    if n_remove == 0:
        return data
    # each row and each column needs a survivor
    if n * d - n_remove < max(n, d):
        raise AmputationInfeasible(
            f"removing {n_remove} of {n * d} cells cannot leave every row and column observed"
        )
    for _ in range(_MAX_AMPUTE_TRIES):
        cells = stream.permutation(n * d)[:n_remove]
        mask = np.ones(n * d, dtype=bool)
        mask[cells] = False
        mask = mask.reshape(n, d)
        if mask.any(axis=0).all() and mask.any(axis=1).all():
            return replace(data, mask=mask)
    raise AmputationInfeasible(
        f"no admissible pattern found in {_MAX_AMPUTE_TRIES} draws"
    )


def make_gaussian_classes(n, d, stream, separation=1.0, positive_fraction=0.5):
    """Two isotropic Gaussian classes centred at ``+separation`` and ``-separation``."""
    n_pos = int(round(n * positive_fraction))
    labels = np.r_[np.ones(n_pos, dtype=int), np.zeros(n - n_pos, dtype=int)]
    centres = np.where(labels[:, None] == 1, separation, -separation)
    X = centres + stream.normal((n, d))
    order = stream.permutation(n)
    return Dataset(
        X[order],
        np.ones((n, d), dtype=bool),
        labels[order],
        positive_label_name="1",
    )


def make_survey_like(stream, n=149, n_positive=52, d=12, missing_rate=0.15):
    """Synthetic stand-in for a Likert-style survey with class-dependent scores.

    Scores are integers 1..10; the first half of the questions shift with
    the class and the rest are noise. Missingness is MCAR at ``missing_rate``.
    """
    labels = np.r_[np.ones(n_positive, dtype=int), np.zeros(n - n_positive, dtype=int)]
    shift = np.zeros(d)
    shift[: d // 2] = np.linspace(1.5, 0.5, d // 2)
    latent = 5.5 + stream.normal((n, d)) * 2.0 - np.outer(labels, shift)
    scores = np.clip(np.rint(latent), 1, 10)
    order = stream.permutation(n)
    full = Dataset(
        scores[order],
        np.ones((n, d), dtype=bool),
        labels[order],
        tuple(f"Q{j + 1}" for j in range(d)),
        tuple(f"c{i:03d}" for i in range(n)),
        "deactivated",
        "active",
    )
    return ampute_mcar(full, missing_rate, stream)
