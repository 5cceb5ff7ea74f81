"""Feature datasets: CSV ingestion, train/test split, z-score normalization,
±1 target encoding and a synthetic Gaussian-cluster generator.

A dataset is stored column-wise (ids + a feature matrix) rather than as a list
of per-sample objects; :class:`FeatureVector` is what you get when you index it.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_DIMS = 9
STD_FLOOR = 1e-8


class DataError(ValueError):
    """Malformed or inconsistent dataset."""


@dataclass(frozen=True)
class FeatureVector:
    person_id: int
    trial_id: int
    features: np.ndarray


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Samples of ``people_count`` persons.

    Attributes:
        people_count: N, number of enrolled persons. Ids live in ``[0, N)``.
        person_ids: (S,) int array.
        trial_ids: (S,) int array.
        features: (S, P) float array.
        split_tag: ``"all"``, ``"train"`` or ``"test"``.
    """

    people_count: int
    person_ids: np.ndarray
    trial_ids: np.ndarray
    features: np.ndarray
    split_tag: str = "all"

    def __post_init__(self):
        pid = np.asarray(self.person_ids, dtype=np.int64)
        tid = np.asarray(self.trial_ids, dtype=np.int64)
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] != pid.shape[0] or tid.shape != pid.shape:
            raise DataError("inconsistent dataset array shapes")
        if not np.all(np.isfinite(feats)):
            raise DataError("non-finite feature value")
        if pid.size and (pid.min() < 0 or pid.max() >= self.people_count):
            raise DataError(f"person_id outside [0, {self.people_count})")
        pairs = set(zip(pid.tolist(), tid.tolist()))
        if len(pairs) != pid.size:
            raise DataError("duplicate (person_id, trial_id) pair")
        for arr in (pid, tid, feats):
            arr.setflags(write=False)
        object.__setattr__(self, "person_ids", pid)
        object.__setattr__(self, "trial_ids", tid)
        object.__setattr__(self, "features", feats)

    def __len__(self) -> int:
        return int(self.person_ids.shape[0])

    def __getitem__(self, i: int) -> FeatureVector:
        return FeatureVector(int(self.person_ids[i]), int(self.trial_ids[i]), self.features[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def __eq__(self, other):
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return (
            self.people_count == other.people_count
            and self.split_tag == other.split_tag
            and np.array_equal(self.person_ids, other.person_ids)
            and np.array_equal(self.trial_ids, other.trial_ids)
            and np.array_equal(self.features, other.features)
        )

    @property
    def dims(self) -> int:
        return int(self.features.shape[1])

    def targets(self) -> np.ndarray:
        """(S, N) matrix of ±1 targets, one row per sample."""
        t = -np.ones((len(self), self.people_count))
        t[np.arange(len(self)), self.person_ids] = 1.0
        return t

    def with_features(self, features: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(self.people_count, self.person_ids, self.trial_ids,
                              features, self.split_tag)

    def grouped(self) -> np.ndarray:
        """Features as an (N, K, P) array ordered by person then trial_id.

        Raises DataError when persons have different trial counts.
        """
        counts = np.bincount(self.person_ids, minlength=self.people_count)
        if counts.min() != counts.max():
            raise DataError(f"ragged trials per person (counts {counts.min()}..{counts.max()})")
        order = np.lexsort((self.trial_ids, self.person_ids))
        k = int(counts[0])
        return self.features[order].reshape(self.people_count, k, self.dims)


def _check_people_coverage(ds: LabeledDataset) -> None:
    missing = set(range(ds.people_count)) - set(ds.person_ids.tolist())
    if missing:
        raise DataError(f"person ids {sorted(missing)} have no samples")


def load_dataset(path, expected_dims: int | None = DEFAULT_DIMS) -> LabeledDataset:
    """Read a ``person_id,trial_id,f1,...,fP`` CSV file.

    N is inferred as ``max(person_id) + 1``; every id in ``[0, N)`` must occur.
    Pass ``expected_dims=None`` to accept any feature count.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: no samples")
        header = [h.strip() for h in header]
        if len(header) < 3 or header[:2] != ["person_id", "trial_id"]:
            raise DataError(f"{path}:1: header must start with person_id,trial_id,f1")
        dims = len(header) - 2
        if header[2:] != [f"f{i + 1}" for i in range(dims)]:
            raise DataError(f"{path}:1: feature columns must be named f1..f{dims}")
        if expected_dims is not None and dims != expected_dims:
            raise DataError(f"{path}:1: expected {expected_dims} features, header has {dims}")

        pids, tids, rows, seen = [], [], [], {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != dims + 2:
                raise DataError(f"{path}:{lineno}: expected {dims + 2} fields, got {len(row)}")
            try:
                pid, tid = int(row[0]), int(row[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: ids must be integers") from None
            if pid < 0 or tid < 0:
                raise DataError(f"{path}:{lineno}: ids must be non-negative")
            try:
                feats = [float(c) for c in row[2:]]
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric feature") from None
            if not all(math.isfinite(f) for f in feats):
                raise DataError(f"{path}:{lineno}: non-finite feature")
            if (pid, tid) in seen:
                raise DataError(f"{path}:{lineno}: duplicate (person_id, trial_id) = "
                                f"({pid}, {tid}), first seen on line {seen[pid, tid]}")
            seen[pid, tid] = lineno
            pids.append(pid)
            tids.append(tid)
            rows.append(feats)

    if not rows:
        raise DataError(f"{path}: no samples")
    n = max(pids) + 1
    ds = LabeledDataset(n, np.array(pids), np.array(tids), np.array(rows, dtype=np.float64))
    _check_people_coverage(ds)
    return ds


def save_dataset(ds: LabeledDataset, path) -> None:
    """Write ``ds`` in the CSV layout read by :func:`load_dataset`.

    Floats are written with ``repr`` so a load/save cycle is lossless.
    """
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["person_id", "trial_id"] + [f"f{i + 1}" for i in range(ds.dims)])
        for pid, tid, feats in zip(ds.person_ids, ds.trial_ids, ds.features):
            w.writerow([int(pid), int(tid)] + [repr(float(v)) for v in feats])


def split_train_test(ds: LabeledDataset, train_per_person: int = 5):
    """Per person, the ``train_per_person`` lowest trial ids train; the rest test."""
    if train_per_person < 1:
        raise DataError("train_per_person must be >= 1")
    train_mask = np.zeros(len(ds), dtype=bool)
    for person in range(ds.people_count):
        idx = np.flatnonzero(ds.person_ids == person)
        if idx.size < train_per_person:
            raise DataError(f"person {person} has {idx.size} samples, "
                            f"needs at least {train_per_person}")
        idx = idx[np.argsort(ds.trial_ids[idx], kind="stable")]
        train_mask[idx[:train_per_person]] = True
    if train_mask.all():
        raise DataError("empty test split")

    def subset(mask, tag):
        return LabeledDataset(ds.people_count, ds.person_ids[mask], ds.trial_ids[mask],
                              ds.features[mask], tag)

    test = subset(~train_mask, "test")
    _check_people_coverage(test)
    return subset(train_mask, "train"), test


@dataclass(frozen=True)
class Normalizer:
    """Per-feature affine map ``(x - mean) / std`` (population std, ddof=0)."""

    mean: np.ndarray
    std: np.ndarray = field()

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def invert(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def fit_normalizer(train: LabeledDataset) -> Normalizer:
    if len(train) == 0:
        raise DataError("cannot fit a normalizer on an empty dataset")
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    flat = std < STD_FLOOR
    if flat.any():
        logger.warning("constant feature column(s) %s; std clamped to %g",
                       np.flatnonzero(flat).tolist(), STD_FLOOR)
        std = np.where(flat, STD_FLOOR, std)
    return Normalizer(mean, std)


def apply_normalizer(n: Normalizer, v):
    """Normalize a FeatureVector or a whole LabeledDataset."""
    if isinstance(v, LabeledDataset):
        return v.with_features(n.apply(v.features))
    if isinstance(v, FeatureVector):
        return FeatureVector(v.person_id, v.trial_id, n.apply(v.features))
    return n.apply(v)


def encode_target(person_id: int, n_people: int) -> np.ndarray:
    if not 0 <= person_id < n_people:
        raise DataError(f"person_id {person_id} outside [0, {n_people})")
    t = -np.ones(n_people)
    t[person_id] = 1.0
    return t


def generate_synthetic(n_people: int, trials: int, dims: int = DEFAULT_DIMS, seed: int = 0,
                       spread: float = 3.0) -> LabeledDataset:
    """Isotropic Gaussian clusters, one per person.

    Class means are ``spread * N(0, I)``; samples add unit-variance noise
    around them. Larger ``spread`` means better separated persons.
    """
    if n_people < 2 or trials < 2 or dims < 1:
        raise DataError("need n_people >= 2, trials >= 2, dims >= 1")
    if not spread > 0:
        raise DataError("spread must be > 0")
    rng = np.random.default_rng(seed)
    centers = spread * rng.standard_normal((n_people, dims))
    noise = rng.standard_normal((n_people, trials, dims))
    feats = (centers[:, None, :] + noise).reshape(-1, dims)
    pids = np.repeat(np.arange(n_people), trials)
    tids = np.tile(np.arange(trials), n_people)
    return LabeledDataset(n_people, pids, tids, feats)
