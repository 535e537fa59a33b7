"""Synthetic regression benchmark with controlled train/val-vs-test target shift.

A scalar latent target t is drawn uniformly from a split-dependent range and
embedded into input space through a frozen random smooth map plus noise. The
"tails" design restricts train/val targets to a central sub-interval, "gap"
removes a central band; test always spans the full range. Level 0..4 grades
the shift intensity from none up to the full tails/gap design.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .statkit import substream

KINDS = ("none", "tails", "gap")
SPLITS = ("train", "val", "test")

_EMBED_WIDTH = 16


@dataclass(frozen=True)
class ShiftSpec:
    kind: str = "none"
    full_range: tuple = (1.0, 200.0)
    # level-4 trainval interval (tails) / excluded band (gap); default: central half
    shift_band: tuple = None
    level: int = 4
    n_train: int = 10000
    n_val: int = 2000
    n_test: int = 10000
    input_dim: int = 16
    noise_sd: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown shift kind {self.kind!r}")
        lo, hi = self.full_range
        if not lo < hi:
            raise ValueError(f"degenerate full_range {self.full_range}")
        if not 0 <= self.level <= 4:
            raise ValueError("level must be in 0..4")
        if self.shift_band is None:
            quarter = (hi - lo) / 4.0
            object.__setattr__(self, "shift_band", (lo + quarter, hi - quarter))
        blo, bhi = self.shift_band
        if not lo <= blo < bhi <= hi:
            raise ValueError(f"shift_band {self.shift_band} not inside full_range")
        if min(self.n_train, self.n_val, self.n_test) < 1:
            raise ValueError("split sizes must be positive")
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")

    def trainval_intervals(self):
        """Allowed train/val target intervals at this kind and level."""
        lo, hi = self.full_range
        blo, bhi = self.shift_band
        f = self.level / 4.0
        if self.kind == "none" or self.level == 0:
            return [(lo, hi)]
        if self.kind == "tails":
            return [(lo + (blo - lo) * f, hi + (bhi - hi) * f)]
        center = 0.5 * (blo + bhi)
        cut_lo = center + (blo - center) * f
        cut_hi = center + (bhi - center) * f
        return [(lo, cut_lo), (cut_hi, hi)]

    def to_dict(self):
        return {
            "kind": self.kind, "full_range": list(self.full_range),
            "shift_band": list(self.shift_band), "level": self.level,
            "n_train": self.n_train, "n_val": self.n_val, "n_test": self.n_test,
            "input_dim": self.input_dim, "noise_sd": self.noise_sd, "seed": self.seed,
        }


@dataclass
class Dataset:
    features: np.ndarray
    targets: np.ndarray
    split: np.ndarray  # "train" / "val" / "test" per row
    shift: ShiftSpec = None
    provenance: str = "synthetic"

    def __len__(self):
        return self.targets.size

    def split_xy(self, name: str):
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        mask = self.split == name
        return self.features[mask], self.targets[mask]


def _embedding(spec: ShiftSpec):
    rng = substream(spec.seed, "embed")
    # sharp enough that unseen target ranges bend the input manifold in ways
    # smooth regressors interpolate wrongly (and in agreement with each other)
    w1 = rng.normal(0.0, 3.0, size=_EMBED_WIDTH)
    b1 = rng.normal(0.0, 1.5, size=_EMBED_WIDTH)
    w2 = rng.normal(0.0, 1.0, size=(spec.input_dim, _EMBED_WIDTH)) / np.sqrt(_EMBED_WIDTH)
    b2 = rng.normal(0.0, 0.5, size=spec.input_dim)

    lo, hi = spec.full_range

    def embed(t):
        t_unit = 2.0 * (np.asarray(t) - lo) / (hi - lo) - 1.0
        return np.tanh(np.outer(t_unit, w1) + b1) @ w2.T + b2

    return embed


def _sample_targets(rng, intervals, n):
    lengths = np.array([b - a for a, b in intervals])
    probs = lengths / lengths.sum()
    choice = rng.choice(len(intervals), size=n, p=probs)
    t = np.empty(n)
    for i, (a, b) in enumerate(intervals):
        mask = choice == i
        t[mask] = rng.uniform(a, b, size=mask.sum())
    return t


def generate(spec: ShiftSpec) -> Dataset:
    """Deterministic synthetic dataset for the given shift design."""
    embed = _embedding(spec)
    lo, hi = spec.full_range
    features, targets, split = [], [], []
    for name, n in (("train", spec.n_train), ("val", spec.n_val), ("test", spec.n_test)):
        rng = substream(spec.seed, name)
        intervals = [(lo, hi)] if name == "test" else spec.trainval_intervals()
        t = _sample_targets(rng, intervals, n)
        x = embed(t) + spec.noise_sd * rng.standard_normal((n, spec.input_dim))
        features.append(x)
        targets.append(t)
        split.extend([name] * n)
    return Dataset(
        features=np.vstack(features),
        targets=np.concatenate(targets),
        split=np.array(split),
        shift=spec,
        provenance="synthetic",
    )


DEFAULT_SCHEMA = {"target": "y", "split": "split"}


def save_csv(dataset: Dataset, path) -> None:
    """Write `x0..x{d-1},y,split` rows at full float precision (17 sig digits)."""
    d = dataset.features.shape[1] if len(dataset) else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(d)] + ["y", "split"])
        for i in range(len(dataset)):
            row = [f"{v:.17g}" for v in dataset.features[i]]
            writer.writerow(row + [f"{dataset.targets[i]:.17g}", dataset.split[i]])


def load_csv(path, schema=None) -> Dataset:
    """Read a dataset CSV; rejects NaN/Inf and unknown split labels by row number."""
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        for col in (schema["target"], schema["split"]):
            if col not in header:
                raise ValueError(f"{path}: missing column {col!r}")
        y_idx = header.index(schema["target"])
        s_idx = header.index(schema["split"])
        feat_cols = schema.get("features")
        if feat_cols is None:
            feat_idx = [i for i in range(len(header)) if i not in (y_idx, s_idx)]
        else:
            missing = [c for c in feat_cols if c not in header]
            if missing:
                raise ValueError(f"{path}: missing column {missing[0]!r}")
            feat_idx = [header.index(c) for c in feat_cols]

        features, targets, split = [], [], []
        for rownum, row in enumerate(reader, start=2):
            try:
                x = [float(row[i]) for i in feat_idx]
                y = float(row[y_idx])
            except ValueError:
                raise ValueError(f"{path}: non-numeric cell at row {rownum}") from None
            if not (np.all(np.isfinite(x)) and np.isfinite(y)):
                raise ValueError(f"{path}: non-finite value at row {rownum}")
            s = row[s_idx]
            if s not in SPLITS:
                raise ValueError(f"{path}: unknown split label {s!r} at row {rownum}")
            features.append(x)
            targets.append(y)
            split.append(s)
    d = len(feat_idx)
    return Dataset(
        features=np.array(features, dtype=float).reshape(len(targets), d),
        targets=np.array(targets, dtype=float),
        split=np.array(split) if split else np.array([], dtype=str),
        shift=None,
        provenance="csv_import",
    )


def save_manifest(spec: ShiftSpec, path) -> None:
    with open(path, "w") as fh:
        json.dump({"format": "shiftbench-dataset-v1", "shift": spec.to_dict()}, fh, indent=2)
