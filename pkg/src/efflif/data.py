"""Sequence-classification datasets: CSV I/O, splitting, synthetic tasks.

CSV layout: one sample per row, ``f_0, ..., f_{C*L-1}, label`` with features
in channel-major order, UTF-8, optional header row.
"""

from __future__ import annotations

import configparser
import csv
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .tensor import DTYPE

STD_FLOOR = 1e-8
DEFAULT_FRACTIONS = (0.64, 0.16, 0.20)


@dataclass(frozen=True)
class Schema:
    n_channels: int
    seq_len: int
    n_classes: int | None = None
    label_column: int = -1

    @property
    def n_features(self) -> int:
        return self.n_channels * self.seq_len

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_channels, self.seq_len)


@dataclass
class SequenceDataset:
    x: np.ndarray  # (n, channels, length)
    y: np.ndarray  # (n,) int
    n_classes: int
    tag: str = ""

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=DTYPE)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim < 2 or len(self.x) != len(self.y):
            raise DataError(f"features {self.x.shape} and labels {self.y.shape} disagree")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= self.n_classes):
            raise DataError(f"labels outside [0, {self.n_classes})")

    def __len__(self) -> int:
        return len(self.y)

    @property
    def feature_shape(self) -> tuple[int, ...]:
        return self.x.shape[1:]

    def subset(self, idx, tag: str | None = None) -> "SequenceDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return SequenceDataset(self.x[idx], self.y[idx], self.n_classes,
                               self.tag if tag is None else tag)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.n_classes)


def load_csv(path, schema: Schema, header: bool = False, tag: str = "") -> SequenceDataset:
    """Parse a sample-per-row CSV; errors name the offending line."""
    rows, labels = [], []
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != schema.n_features + 1:
                raise DataError(f"{path}:{lineno}: expected {schema.n_features + 1} fields, "
                                f"got {len(row)}")
            try:
                values = [float(c) for c in row]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            label = values.pop(schema.label_column)
            if label != int(label):
                raise DataError(f"{path}:{lineno}: label {label} is not an integer")
            if schema.n_classes is not None and not 0 <= label < schema.n_classes:
                raise DataError(f"{path}:{lineno}: label {int(label)} outside "
                                f"[0, {schema.n_classes})")
            if label < 0:
                raise DataError(f"{path}:{lineno}: negative label {int(label)}")
            rows.append(values)
            labels.append(int(label))
    if not rows:
        raise DataError(f"{path}: no samples")
    x = np.asarray(rows, dtype=np.float32).astype(DTYPE).reshape((-1,) + schema.shape)
    y = np.asarray(labels)
    n_classes = schema.n_classes if schema.n_classes is not None else int(y.max()) + 1
    return SequenceDataset(x, y, n_classes, tag)


def save_csv(ds: SequenceDataset, path, header: bool = False) -> None:
    flat = ds.x.reshape(len(ds), -1)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow([f"f_{i}" for i in range(flat.shape[1])] + ["label"])
        for row, label in zip(flat, ds.y):
            w.writerow([repr(float(v)) for v in row] + [int(label)])


def split(ds: SequenceDataset, fractions=DEFAULT_FRACTIONS, seed: int = 0):
    """Shuffled train/val/test split.

    Train and validation sizes are rounded to nearest; the test split takes
    the remainder.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1) > 1e-9:
        raise ConfigError(f"split fractions must be three non-negatives summing to 1, got {fractions}")
    n = len(ds)
    n_train = int(round(n * fractions[0]))
    n_val = min(int(round(n * fractions[1])), n - n_train)
    order = np.random.default_rng(seed).permutation(n)
    return (ds.subset(order[:n_train], "train"),
            ds.subset(order[n_train:n_train + n_val], "val"),
            ds.subset(order[n_train + n_val:], "test"))


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray  # per channel
    std: np.ndarray

    @classmethod
    def fit(cls, train: SequenceDataset) -> "Standardizer":
        axes = (0,) + tuple(range(2, train.x.ndim))
        mean = train.x.mean(axis=axes)
        std = np.maximum(train.x.std(axis=axes), STD_FLOOR)
        return cls(mean, std)

    def apply(self, ds: SequenceDataset) -> SequenceDataset:
        shape = (1, -1) + (1,) * (ds.x.ndim - 2)
        x = (ds.x - self.mean.reshape(shape)) / self.std.reshape(shape)
        return SequenceDataset(x, ds.y, ds.n_classes, ds.tag)


def standardize(train: SequenceDataset, *others: SequenceDataset):
    """Standardize every split with statistics from ``train`` only."""
    st = Standardizer.fit(train)
    return (st.apply(train),) + tuple(st.apply(d) for d in others)


XOR_POSITIONS = (0, 1)


def synth_temporal_xor(n: int, seq_len: int, seed: int = 0, noise: float = 0.1,
                       channels: int = 2) -> SequenceDataset:
    """Label is the XOR of two events at fixed positions of channel 0.

    Channel 0 carries the events (amplitude 1) on top of Gaussian noise;
    remaining channels are distractor noise. The four event combinations are
    dealt round-robin, so the classes are balanced within one sample.
    """
    if n < 2 or seq_len < 2:
        raise ConfigError("temporal XOR needs n >= 2 and seq_len >= 2")
    rng = np.random.default_rng(seed)
    combos = np.array([(0, 0), (0, 1), (1, 0), (1, 1)])
    events = combos[np.arange(n) % 4]
    events = events[rng.permutation(n)]
    x = rng.normal(0.0, noise, size=(n, channels, seq_len))
    p, q = XOR_POSITIONS
    x[:, 0, p] += events[:, 0]
    x[:, 0, q] += events[:, 1]
    y = events[:, 0] ^ events[:, 1]
    # fp32-representable so a CSV round trip is exact
    return SequenceDataset(x.astype(np.float32), y, 2, "xor")


# -- manifests and external datasets ------------------------------------------

def load_manifest(path) -> dict[str, SequenceDataset]:
    """Datasets named by an INI manifest::

        [dataset]
        n_channels = 9
        seq_len = 128
        n_classes = 6
        header = false

        [splits]
        train = train.csv
        val = val.csv
        test = test.csv

    Paths are relative to the manifest. Splits are standardized with the
    training split's statistics.
    """
    cp = configparser.ConfigParser()
    if not cp.read(path, encoding="utf-8"):
        raise DataError(f"cannot read manifest {path}")
    try:
        d = cp["dataset"]
        schema = Schema(d.getint("n_channels"), d.getint("seq_len"),
                        d.getint("n_classes", None))
        header = d.getboolean("header", False)
        root = Path(path).parent
        files = dict(cp["splits"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"malformed manifest {path}: {exc}") from None
    if "train" not in files:
        raise ConfigError(f"manifest {path} has no train split")
    out = {name: load_csv(root / f, schema, header, name) for name, f in files.items()}
    n_classes = max(ds.n_classes for ds in out.values())
    out = {k: replace(v, n_classes=n_classes) for k, v in out.items()}
    names = list(out)
    normed = standardize(out["train"], *(out[k] for k in names if k != "train"))
    return dict(zip(["train"] + [k for k in names if k != "train"], normed))


def write_manifest(path, schema: Schema, splits: dict[str, str], header: bool = False) -> None:
    cp = configparser.ConfigParser()
    cp["dataset"] = {"n_channels": str(schema.n_channels), "seq_len": str(schema.seq_len),
                     "header": str(header).lower()}
    if schema.n_classes is not None:
        cp["dataset"]["n_classes"] = str(schema.n_classes)
    cp["splits"] = splits
    with open(path, "w", encoding="utf-8") as fh:
        cp.write(fh)


UCI_HAR_SIGNALS = ("body_acc_x", "body_acc_y", "body_acc_z",
                   "body_gyro_x", "body_gyro_y", "body_gyro_z",
                   "total_acc_x", "total_acc_y", "total_acc_z")


def convert_uci_har(root, out_csv) -> SequenceDataset:
    """Merge the UCI-HAR train/test inertial windows into one canonical CSV.

    Reads ``{train,test}/Inertial Signals/<signal>_<split>.txt`` (128-sample
    windows at 50 Hz, 50% overlap) and ``{train,test}/y_<split>.txt`` with
    activity ids 1..6, which become labels 0..5. The merged set is meant to
    be re-split 64/16/20 with :func:`split`.
    """
    root = Path(root)
    xs, ys = [], []
    for part in ("train", "test"):
        sig_dir = root / part / "Inertial Signals"
        try:
            chans = [np.loadtxt(sig_dir / f"{s}_{part}.txt", ndmin=2) for s in UCI_HAR_SIGNALS]
            y = np.loadtxt(root / part / f"y_{part}.txt", dtype=np.int64, ndmin=1)
        except OSError as exc:
            raise DataError(f"UCI-HAR file missing: {exc}") from None
        xs.append(np.stack(chans, axis=1))
        ys.append(y - 1)
    ds = SequenceDataset(np.concatenate(xs), np.concatenate(ys), 6, "uci-har")
    os.makedirs(Path(out_csv).parent or ".", exist_ok=True)
    save_csv(ds, out_csv)
    return ds
