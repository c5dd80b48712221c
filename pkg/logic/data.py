"""
Dataset loading, validation, normalization and windowing.

Two text formats are understood: the UEA/sktime ".ts" layout and a plain
comma-delimited layout with one sample per line (D x T values in row-major
order, optional trailing integer label).
"""

import io
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from logic.errors import DataFormatError, ShapeletLengthError

STD_EPSILON = 1e-8

TS_HEADER_TAGS = {
    "@problemname", "@timestamps", "@missing", "@univariate", "@dimension",
    "@dimensions", "@equallength", "@serieslength", "@classlabel",
    "@targetlabel", "@data",
}


@dataclass(frozen=True, eq=False)
class Series:
    """A D x T multivariate sample"""

    values: np.ndarray
    id: Optional[str] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[np.newaxis, :]
        if values.ndim != 2:
            raise DataFormatError(f"series must be 2-D (D x T), got shape {values.shape}")
        if values.shape[0] < 1 or values.shape[1] < 2:
            raise DataFormatError(f"series needs D >= 1 and T >= 2, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DataFormatError("series contains NaN or infinite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n_dims(self):
        return self.values.shape[0]

    @property
    def length(self):
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Equal-dimension samples with optional class labels and point flags"""

    samples: List[Series]
    labels: Optional[np.ndarray] = None
    point_labels: Optional[List[np.ndarray]] = None
    class_names: Optional[List[str]] = None
    name: Optional[str] = None

    def __post_init__(self):
        if not self.samples:
            raise DataFormatError("dataset has no samples")
        dims = {s.n_dims for s in self.samples}
        if len(dims) != 1:
            raise DataFormatError(f"samples have differing dimension counts: {sorted(dims)}")
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=int)
            if labels.shape != (len(self.samples),):
                raise DataFormatError(
                    f"{labels.shape[0] if labels.ndim else 0} labels for {len(self.samples)} samples")
            object.__setattr__(self, "labels", labels)
        if self.point_labels is not None:
            if len(self.point_labels) != len(self.samples):
                raise DataFormatError("one point-label sequence per sample is required")
            flags = []
            for sample, seq in zip(self.samples, self.point_labels):
                seq = np.asarray(seq, dtype=int)
                if seq.shape != (sample.length,):
                    raise DataFormatError("point labels must match series length")
                flags.append(seq)
            object.__setattr__(self, "point_labels", flags)

    def __len__(self):
        return len(self.samples)

    @property
    def n_dims(self):
        return self.samples[0].n_dims

    @property
    def lengths(self):
        return [s.length for s in self.samples]

    @property
    def n_classes(self):
        return 0 if self.labels is None else int(self.labels.max()) + 1

    def to_array(self):
        """Stack samples into an (N, D, T) array; lengths must agree"""
        if len(set(self.lengths)) != 1:
            raise DataFormatError("samples have differing lengths; call equalize() first")
        return np.stack([s.values for s in self.samples])

    def unlabeled(self):
        """View of the same samples with every label removed"""
        return Dataset(samples=self.samples, name=self.name)


@dataclass(frozen=True, eq=False)
class WindowSet:
    """Fixed-length windows cut from one series"""

    windows: List[Series]
    window_labels: np.ndarray
    stride: int
    w: int
    starts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __len__(self):
        return len(self.windows)


def _lines(text):
    if isinstance(text, str):
        return text.splitlines()
    return [line.rstrip("\r\n") for line in text]


def _parse_float(token, lineno):
    token = token.strip()
    if token == "?":
        raise DataFormatError("missing values ('?') are not supported", line=lineno)
    try:
        value = float(token)
    except ValueError:
        raise DataFormatError(f"non-numeric token {token!r}", line=lineno) from None
    if not np.isfinite(value):
        raise DataFormatError(f"non-finite value {token!r}", line=lineno)
    return value


def _cell_float(token):
    """Correctly rounded float of a delimited cell, NaN when unparsable"""
    try:
        return float(token)
    except (TypeError, ValueError):
        return np.nan


def parse_ts(text, name=None):
    """Parse the sktime/UEA ".ts" text format into a Dataset"""
    header = {}
    class_names = None
    has_labels = False
    declared_dims = None
    in_data = False
    samples, raw_labels = [], []

    for lineno, raw in enumerate(_lines(text), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue

        if line.startswith("@"):
            if in_data:
                raise DataFormatError("header line after @data", line=lineno)
            tokens = line.split()
            tag = tokens[0].lower()
            if tag not in TS_HEADER_TAGS:
                raise DataFormatError(f"unknown header tag {tokens[0]!r}", line=lineno)
            args = tokens[1:]
            if tag == "@data":
                if args:
                    raise DataFormatError("@data takes no value", line=lineno)
                in_data = True
            elif tag == "@problemname":
                if not args:
                    raise DataFormatError("@problemName requires a value", line=lineno)
                header["problemname"] = " ".join(args)
            elif tag in ("@timestamps", "@univariate", "@equallength", "@missing"):
                if len(args) != 1 or args[0].lower() not in ("true", "false"):
                    raise DataFormatError(f"{tokens[0]} expects true or false", line=lineno)
                flag = args[0].lower() == "true"
                if tag == "@timestamps" and flag:
                    raise DataFormatError("timestamped series are not supported", line=lineno)
                if tag == "@univariate" and flag:
                    declared_dims = 1
                header[tag[1:]] = flag
            elif tag in ("@dimension", "@dimensions", "@serieslength"):
                if len(args) != 1 or not args[0].isdigit() or int(args[0]) < 1:
                    raise DataFormatError(f"{tokens[0]} expects a positive integer", line=lineno)
                if tag != "@serieslength":
                    declared_dims = int(args[0])
            elif tag == "@classlabel":
                if not args or args[0].lower() not in ("true", "false"):
                    raise DataFormatError("@classLabel expects true or false", line=lineno)
                has_labels = args[0].lower() == "true"
                if has_labels:
                    if len(args) < 2:
                        raise DataFormatError("@classLabel true requires the class values", line=lineno)
                    class_names = args[1:]
                elif len(args) > 1:
                    raise DataFormatError("@classLabel false takes no class values", line=lineno)
            elif tag == "@targetlabel":
                if args and args[0].lower() == "true":
                    raise DataFormatError("regression targets are not supported", line=lineno)
            continue

        if not in_data:
            raise DataFormatError("data record before @data", line=lineno)

        parts = line.split(":")
        if has_labels:
            if len(parts) < 2:
                raise DataFormatError("record has no class label", line=lineno)
            label = parts[-1].strip()
            if label not in class_names:
                raise DataFormatError(f"undeclared class label {label!r}", line=lineno)
            raw_labels.append(label)
            parts = parts[:-1]

        if declared_dims is None:
            declared_dims = len(parts)
        if len(parts) != declared_dims:
            raise DataFormatError(
                f"record has {len(parts)} dimensions, expected {declared_dims}", line=lineno)

        rows = []
        for part in parts:
            tokens = part.split(",")
            if any(not tok.strip() for tok in tokens):
                raise DataFormatError("empty value in record", line=lineno)
            rows.append([_parse_float(tok, lineno) for tok in tokens])
        if len({len(r) for r in rows}) != 1:
            raise DataFormatError("dimensions of one record have different lengths", line=lineno)
        try:
            samples.append(Series(np.array(rows), id=f"{name or 'sample'}:{len(samples)}"))
        except DataFormatError as e:
            raise DataFormatError(str(e), line=lineno) from None

    if not in_data:
        raise DataFormatError("missing @data section")
    if not samples:
        raise DataFormatError("empty data section")

    labels = None
    if has_labels:
        index = {c: i for i, c in enumerate(class_names)}
        labels = np.array([index[c] for c in raw_labels], dtype=int)
        # Keep label ids contiguous when some declared classes never occur
        used = sorted(set(labels.tolist()))
        remap = {old: new for new, old in enumerate(used)}
        labels = np.array([remap[v] for v in labels], dtype=int)
        class_names = [class_names[i] for i in used]

    return Dataset(samples=samples, labels=labels, class_names=class_names,
                   name=header.get("problemname", name))


def parse_delimited(text, d, labeled=False, name=None):
    """Parse one-sample-per-line comma-delimited text into a Dataset"""
    if d < 1:
        raise DataFormatError(f"dimension count must be positive, got {d}")
    lines = pd.Series(_lines(text), dtype=object)
    line_numbers = pd.Series(np.arange(1, len(lines) + 1))
    keep = lines.str.strip() != ""
    lines, line_numbers = lines[keep].reset_index(drop=True), line_numbers[keep].reset_index(drop=True)
    if lines.empty:
        raise DataFormatError("no samples")

    widths = lines.str.count(",") + 1
    ragged = widths != widths.iloc[0]
    if ragged.any():
        first = int(ragged.idxmax())
        raise DataFormatError(
            f"ragged line: {widths[first]} fields, expected {widths.iloc[0]}",
            line=int(line_numbers[first]))

    cells = lines.str.split(",", expand=True).apply(lambda col: col.str.strip())
    numeric = cells.apply(lambda col: col.map(_cell_float))
    bad = numeric.isna() | ~np.isfinite(numeric.fillna(0.0))
    if bad.to_numpy().any():
        row, col = np.argwhere(bad.to_numpy())[0]
        raise DataFormatError(f"non-numeric token {cells.iat[row, col]!r}", line=int(line_numbers[row]))

    matrix = numeric.to_numpy(dtype=float)
    labels = class_names = None
    if labeled:
        raw = matrix[:, -1]
        if not np.all(raw == np.round(raw)):
            row = int(np.argmax(raw != np.round(raw)))
            raise DataFormatError("label column must hold integers", line=int(line_numbers[row]))
        matrix = matrix[:, :-1]
        classes, labels = np.unique(raw.astype(int), return_inverse=True)
        class_names = [str(c) for c in classes]

    n_values = matrix.shape[1]
    if n_values == 0 or n_values % d != 0:
        raise DataFormatError(f"line holds {n_values} values, not divisible by d={d}",
                              line=int(line_numbers[0]))
    t = n_values // d
    samples = []
    for i, row in enumerate(matrix):
        try:
            samples.append(Series(row.reshape(d, t), id=f"{name or 'sample'}:{i}"))
        except DataFormatError as e:
            raise DataFormatError(str(e), line=int(line_numbers[i])) from None
    return Dataset(samples=samples, labels=labels, class_names=class_names, name=name)


def serialize_delimited(ds, labeled=None):
    """Inverse of parse_delimited: one row-major line per sample"""
    if labeled is None:
        labeled = ds.labels is not None
    if len(set(ds.lengths)) != 1:
        raise DataFormatError("samples have differing lengths; call equalize() first")
    frame = pd.DataFrame(ds.to_array().reshape(len(ds), -1))
    if labeled:
        if ds.labels is None:
            raise DataFormatError("dataset has no labels to serialize")
        frame["label"] = ds.labels.astype(int)
    buffer = io.StringIO()
    frame.to_csv(buffer, header=False, index=False, lineterminator="\n")
    return buffer.getvalue()


def equalize(ds):
    """Truncate every sample to the shortest length in the dataset"""
    t_min = min(ds.lengths)
    if all(t == t_min for t in ds.lengths):
        return ds
    samples = [Series(s.values[:, :t_min], id=s.id) for s in ds.samples]
    point_labels = None
    if ds.point_labels is not None:
        point_labels = [p[:t_min] for p in ds.point_labels]
    return replace(ds, samples=samples, point_labels=point_labels)


def znormalize_values(values):
    """Per-dimension z-normalization of a D x T array (population sigma)"""
    values = np.asarray(values, dtype=float)
    mean = values.mean(axis=1, keepdims=True)
    std = values.std(axis=1, keepdims=True)
    safe = np.where(std < STD_EPSILON, 1.0, std)
    return np.where(std < STD_EPSILON, 0.0, (values - mean) / safe)


def znormalize(ds):
    """Z-normalize every dimension of every sample independently"""
    samples = [Series(znormalize_values(s.values), id=s.id) for s in ds.samples]
    return replace(ds, samples=samples)


def sliding_windows(s, point_labels, w, stride):
    """Cut windows of length w every `stride` steps; a window is anomalous
    iff it covers at least one flagged timestamp"""
    if w < 1 or stride < 1:
        raise ValueError("window length and stride must be positive")
    if w > s.length:
        raise ShapeletLengthError(f"window length {w} exceeds series length {s.length}")
    if point_labels is None:
        point_labels = np.zeros(s.length, dtype=int)
    flags = np.asarray(point_labels, dtype=int)
    if flags.shape != (s.length,):
        raise DataFormatError("point labels must match series length")

    starts = np.arange(0, s.length - w + 1, stride)
    views = sliding_window_view(s.values, w, axis=1)[:, starts, :]
    covered = sliding_window_view(flags, w)[starts]
    labels = (covered.max(axis=1) > 0).astype(int)
    windows = [Series(views[:, k, :], id=f"{s.id}@{start}") for k, start in enumerate(starts)]
    return WindowSet(windows=windows, window_labels=labels, stride=stride, w=w, starts=starts)


def windows_dataset(s, point_labels, w, stride):
    """Windows of one series as a Dataset labelled by the window rule"""
    window_set = sliding_windows(s, point_labels, w, stride)
    return Dataset(samples=window_set.windows, labels=window_set.window_labels,
                   class_names=["normal", "anomaly"], name=s.id), window_set


def load_dataset(path, dims=1, labeled=False):
    """Load a .ts file or a delimited file by suffix"""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        if path.suffix.lower() == ".ts":
            return parse_ts(f, name=path.stem)
        return parse_delimited(f.read(), dims, labeled=labeled, name=path.stem)


def load_stream_csv(path, label_column="label"):
    """Load one long series: one row per timestamp, value columns plus an
    optional label column; returns (Series, flags or None)"""
    path = Path(path)
    frame = pd.read_csv(path, float_precision="round_trip")
    flags = None
    if label_column in frame.columns:
        flags = frame.pop(label_column).to_numpy()
        if not np.isin(flags, (0, 1)).all():
            raise DataFormatError(f"{label_column} column must be binary")
        flags = flags.astype(int)
    values = frame.apply(pd.to_numeric, errors="coerce")
    if values.isna().to_numpy().any():
        row = int(np.argwhere(values.isna().to_numpy())[0][0])
        raise DataFormatError("non-numeric value in stream", line=row + 2)
    return Series(values.to_numpy(dtype=float).T, id=path.stem), flags


def write_stream_csv(path, series, flags=None, label_column="label"):
    """Write a stream in the layout load_stream_csv reads"""
    frame = pd.DataFrame(series.values.T, columns=[f"dim_{j}" for j in range(series.n_dims)])
    if flags is not None:
        frame[label_column] = np.asarray(flags, dtype=int)
    frame.to_csv(path, index=False, lineterminator="\n")


def serialize_ts(ds, problem_name=None):
    """Write a Dataset in the .ts layout parse_ts reads"""
    lines = [f"@problemName {problem_name or ds.name or 'dataset'}",
             "@timeStamps false", "@missing false",
             f"@univariate {'true' if ds.n_dims == 1 else 'false'}",
             f"@dimensions {ds.n_dims}",
             f"@equalLength {'true' if len(set(ds.lengths)) == 1 else 'false'}"]
    names = None
    if ds.labels is not None:
        names = ds.class_names or [str(i) for i in range(ds.n_classes)]
        lines.append("@classLabel true " + " ".join(names))
    else:
        lines.append("@classLabel false")
    lines.append("@data")
    for i, sample in enumerate(ds.samples):
        record = ":".join(",".join(repr(float(v)) for v in row) for row in sample.values)
        if names is not None:
            record += ":" + names[ds.labels[i]]
        lines.append(record)
    return "\n".join(lines) + "\n"
