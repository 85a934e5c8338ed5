"""CSV datasets and the preprocessing used before fitting real data."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np


class DataFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple

    def __post_init__(self):
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-d array")
        if len(self.labels) != len(self.features):
            raise ValueError("labels and features disagree on the number of rows")
        if len(self.feature_names) != self.features.shape[1]:
            raise ValueError("feature_names does not match the number of columns")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def p(self):
        return self.features.shape[1]

    def classes(self):
        """Distinct labels in order of first appearance."""
        return list(dict.fromkeys(self.labels.tolist()))

    def split_by_class(self, order=None):
        order = self.classes() if order is None else list(order)
        return [self.features[self.labels == c] for c in order], order

    def with_features(self, features, names=None):
        names = tuple(names) if names is not None else tuple(f"x{i}" for i in range(features.shape[1]))
        return Dataset(np.asarray(features, float), self.labels, names)


def _parse_label(text):
    try:
        v = float(text)
    except ValueError:
        return text
    return int(v) if v.is_integer() else v


def load_csv(path, label_column="label", require_label=True) -> Dataset:
    """Read a header-first CSV with one label column and numeric features.

    Rows and columns in error messages are 1-based as seen in a text
    editor (the header is row 1). With ``require_label=False`` a file
    without the label column loads with every label set to None.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if label_column in header:
            li = header.index(label_column)
        elif require_label:
            raise DataFormatError(f"{path}: no column named {label_column!r} in header {header}")
        else:
            li = -1
        names = tuple(h for i, h in enumerate(header) if i != li)
        rows, labels = [], []
        for rownum, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(f"{path}: row {rownum} has {len(row)} fields, expected {len(header)}")
            vals = []
            for col, cell in enumerate(row):
                if col == li:
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise DataFormatError(f"{path}: row {rownum}, column {header[col]!r}: "
                                          f"not a number: {cell!r}") from None
                if not math.isfinite(v):
                    raise DataFormatError(f"{path}: row {rownum}, column {header[col]!r}: non-finite value")
                vals.append(v)
            rows.append(vals)
            labels.append(_parse_label(row[li].strip()) if li >= 0 else None)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return Dataset(np.array(rows), np.array(labels, dtype=object if li < 0 else None), names)


def write_csv(path, ds: Dataset, label_column="label"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*ds.feature_names, label_column])
        for x, lab in zip(ds.features, ds.labels):
            w.writerow([*(repr(float(v)) for v in x), lab])


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X):
        X = np.asarray(X, float)
        sd = X.std(axis=0)
        const = np.flatnonzero(sd <= 1e-12 * np.maximum(1.0, np.abs(X).max(axis=0)))
        if const.size:
            raise ValueError(f"constant feature(s) at column(s) {const.tolist()} cannot be standardized")
        return cls(X.mean(axis=0), sd)

    def transform(self, X):
        return (np.asarray(X, float) - self.mean) / self.scale


def standardize(ds: Dataset):
    """Zero mean, unit variance per feature; returns ``(dataset, standardizer)``."""
    st = Standardizer.fit(ds.features)
    return Dataset(st.transform(ds.features), ds.labels, ds.feature_names), st


@dataclass(frozen=True)
class PCA:
    mean: np.ndarray
    components: np.ndarray  # p x k, columns by decreasing variance
    variances: np.ndarray

    @classmethod
    def fit(cls, X, k):
        X = np.asarray(X, float)
        if not 1 <= k <= X.shape[1]:
            raise ValueError(f"cannot keep {k} of {X.shape[1]} components")
        mu = X.mean(axis=0)
        _, sv, Vt = np.linalg.svd(X - mu, full_matrices=False)
        comps = np.zeros((X.shape[1], k))
        r = min(k, Vt.shape[0])
        comps[:, :r] = Vt[:r].T
        var = np.zeros(k)
        var[:r] = sv[:r] ** 2 / max(len(X) - 1, 1)
        return cls(mu, comps, var)

    def transform(self, X):
        return (np.asarray(X, float) - self.mean) @ self.components


def pca_reduce(ds: Dataset, rate):
    """Project onto the top ceil(rate * p) principal components."""
    if not 0 < rate <= 1:
        raise ValueError(f"reduction rate must lie in (0, 1], got {rate}")
    k = max(1, math.ceil(rate * ds.p - 1e-9))
    model = PCA.fit(ds.features, k)
    return ds.with_features(model.transform(ds.features), [f"pc{i + 1}" for i in range(k)]), model


def poly_kernel_features(ds: Dataset, degree):
    """Every monomial of total degree <= ``degree``, the constant included.

    This is the explicit feature map of the polynomial kernel up to
    per-column weights; there are C(p + degree, degree) columns, ordered
    as (1, x1, ..., xp, x1^2, x1*x2, ...).
    """
    if degree < 1:
        raise ValueError("degree must be >= 1")
    X = ds.features
    n, p = X.shape
    # pad with a constant so degree-d products of (1, x) cover all lower degrees
    Z = np.hstack([np.ones((n, 1)), X])
    znames = ["1", *ds.feature_names]
    cols, names = [], []
    for combo in itertools.combinations_with_replacement(range(p + 1), degree):
        cols.append(np.prod(Z[:, list(combo)], axis=1))
        counts = np.bincount(combo, minlength=p + 1)
        parts = [znames[i] if c == 1 else f"{znames[i]}^{c}" for i, c in enumerate(counts) if c and i]
        names.append("*".join(parts) or "1")
    return ds.with_features(np.column_stack(cols), names)
