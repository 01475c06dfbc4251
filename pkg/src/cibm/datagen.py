"""Synthetic concept datasets, CSV ingestion and concept-set transforms."""

from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import IngestionError, ValidationError
from .info import discrete_mi


def rng_for(seed: int, tag: str) -> np.random.Generator:
    """Independent RNG stream derived from (seed, purpose tag)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(tag.encode())]))


@dataclass
class Dataset:
    X: np.ndarray
    C: np.ndarray
    Y: np.ndarray
    groups: list[list[int]]
    n_classes: int
    split: str = "all"
    concept_names: list[str] | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.C = np.asarray(self.C, dtype=np.float64)
        self.Y = np.asarray(self.Y, dtype=np.int64)
        n = len(self.Y)
        if self.X.ndim != 2 or self.C.ndim != 2 or self.X.shape[0] != n or self.C.shape[0] != n:
            raise ValidationError("X, C, Y must agree on the number of rows")
        if not np.all((self.C == 0) | (self.C == 1)):
            raise ValidationError("concept annotations must be binary")
        if n and (self.Y.min() < 0 or self.Y.max() >= self.n_classes):
            raise ValidationError("class index out of range")
        k = self.C.shape[1]
        flat = sorted(i for g in self.groups for i in g)
        if flat != list(range(k)) or any(len(g) == 0 for g in self.groups):
            raise ValidationError("groups must partition the concept indices into non-empty sets")
        if self.concept_names is None:
            self.concept_names = [f"c_{i}" for i in range(k)]

    @property
    def n(self) -> int:
        return len(self.Y)

    @property
    def n_concepts(self) -> int:
        return self.C.shape[1]

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    def take(self, idx, split: str | None = None) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return replace(self, X=self.X[idx], C=self.C[idx], Y=self.Y[idx],
                       split=self.split if split is None else split)

    def keep_groups(self, keep: list[int]) -> "Dataset":
        """Restrict to the given groups (in ascending order), re-indexing concepts."""
        keep = sorted(keep)
        cols = group_columns(self.groups, keep)
        remap = {old: new for new, old in enumerate(cols)}
        groups = [[remap[i] for i in self.groups[g]] for g in keep]
        names = [self.concept_names[i] for i in cols]
        return replace(self, C=self.C[:, cols], groups=groups, concept_names=names)


@dataclass
class SynthSpec:
    n: int = 4096
    d: int = 32
    k: int = 16
    g: int = 4
    kc: int = 8
    p_flip: float = 0.05
    leak: float = 1.0
    sigma_x: float = 0.1
    seed: int = 7

    def validate(self) -> None:
        for name in ("n", "d", "k", "g", "kc"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if self.g > self.k:
            raise ValidationError("more groups than concepts")
        if not 0.0 <= self.p_flip < 0.5:
            raise ValidationError("p_flip must lie in [0, 0.5)")
        if self.leak < 0:
            raise ValidationError("leak must be non-negative")
        if self.sigma_x <= 0:
            raise ValidationError("sigma_x must be positive")


def contiguous_groups(k: int, g: int) -> list[list[int]]:
    bounds = np.linspace(0, k, g + 1).round().astype(int)
    return [list(range(bounds[i], bounds[i + 1])) for i in range(g)]


def make_synthetic(spec: SynthSpec) -> Dataset:
    """y ~ U{Kc}; c = template[y] with bit flips; x = A c + leak B onehot(y) + sigma_x noise."""
    spec.validate()
    rng = rng_for(spec.seed, "synthetic")
    template = rng.integers(0, 2, size=(spec.kc, spec.k)).astype(np.float64)
    A = rng.standard_normal((spec.d, spec.k))
    B = rng.standard_normal((spec.d, spec.kc))
    y = rng.integers(0, spec.kc, size=spec.n)
    flips = rng.random((spec.n, spec.k)) < spec.p_flip
    c = np.abs(template[y] - flips)
    onehot = np.eye(spec.kc)[y]
    x = c @ A.T + spec.leak * onehot @ B.T + spec.sigma_x * rng.standard_normal((spec.n, spec.d))
    return Dataset(X=x, C=c, Y=y, groups=contiguous_groups(spec.k, spec.g), n_classes=spec.kc)


# ---------------------------------------------------------------------------
# CSV format: x_0..x_{D-1}, c_0..c_{K-1}, y  (+ optional <name>.groups sidecar)


def groups_path(path: Path) -> Path:
    path = Path(path)
    return path.with_suffix(".groups")


def _fmt(v: float) -> str:
    return repr(float(v))


def write_csv(ds: Dataset, path, write_groups: bool = True) -> None:
    path = Path(path)
    d = ds.X.shape[1]
    header = [f"x_{i}" for i in range(d)] + list(ds.concept_names) + ["y"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(ds.n):
            w.writerow([_fmt(v) for v in ds.X[i]] + [str(int(v)) for v in ds.C[i]] + [str(int(ds.Y[i]))])
    if write_groups:
        with open(groups_path(path), "w", encoding="utf-8", newline="\n") as fh:
            for g in ds.groups:
                fh.write(",".join(ds.concept_names[i] for i in g) + "\n")


def load_concept_csv(path, n_classes: int | None = None) -> Dataset:
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise IngestionError("empty file", line=1)
    header = [h.strip() for h in rows[0]]
    xcols = [i for i, h in enumerate(header) if h.startswith("x_")]
    ccols = [i for i, h in enumerate(header) if h.startswith("c_")]
    if header.count("y") != 1:
        raise IngestionError("header needs exactly one 'y' column", line=1)
    unknown = [h for h in header if not (h.startswith("x_") or h.startswith("c_") or h == "y")]
    if unknown:
        raise IngestionError(f"unknown columns {unknown}", line=1)
    ycol = header.index("y")
    X, C, Y = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise IngestionError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
        try:
            X.append([float(row[i]) for i in xcols])
            cs = [float(row[i]) for i in ccols]
            yv = float(row[ycol])
        except ValueError as exc:
            raise IngestionError(f"cannot parse number ({exc})", line=lineno) from None
        if any(v not in (0.0, 1.0) for v in cs):
            raise IngestionError("concept values must be 0 or 1", line=lineno)
        if yv != int(yv) or yv < 0:
            raise IngestionError("class label must be a non-negative integer", line=lineno)
        C.append(cs)
        Y.append(int(yv))
    names = [header[i] for i in ccols]
    groups = _read_groups(groups_path(path), names)
    Y = np.asarray(Y, dtype=np.int64)
    kc = n_classes if n_classes is not None else (int(Y.max()) + 1 if len(Y) else 1)
    return Dataset(X=np.asarray(X, dtype=np.float64).reshape(len(Y), len(xcols)),
                   C=np.asarray(C, dtype=np.float64).reshape(len(Y), len(ccols)),
                   Y=Y, groups=groups, n_classes=kc, concept_names=names)


def _read_groups(path: Path, names: list[str]) -> list[list[int]]:
    if not path.exists():
        return [[i] for i in range(len(names))]
    index = {n: i for i, n in enumerate(names)}
    groups = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            members = [m.strip() for m in line.split(",")]
            for m in members:
                if m not in index:
                    raise IngestionError(f"unknown group member {m!r} in {path.name}", line=lineno)
            groups.append([index[m] for m in members])
    flat = sorted(i for g in groups for i in g)
    if flat != list(range(len(names))):
        raise IngestionError(f"{path.name} does not partition the concept columns")
    return groups


# ---------------------------------------------------------------------------
# transforms


def corrupt_concepts(ds: Dataset, k: int, seed: int) -> Dataset:
    """Replace k random concept columns with Bernoulli(0.5) noise."""
    if not 0 <= k <= ds.n_concepts:
        raise ValidationError(f"k must be in [0, {ds.n_concepts}]")
    if k == 0:
        return replace(ds, C=ds.C.copy())
    rng = rng_for(seed, "corrupt")
    cols = rng.choice(ds.n_concepts, size=k, replace=False)
    C = ds.C.copy()
    C[:, cols] = rng.integers(0, 2, size=(ds.n, k))
    return replace(ds, C=C)


def corrupted_columns(n_concepts: int, k: int, seed: int) -> np.ndarray:
    """The columns :func:`corrupt_concepts` picks for (k, seed)."""
    return rng_for(seed, "corrupt").choice(n_concepts, size=k, replace=False) if k else np.array([], int)


def group_label_mi(ds: Dataset, subsample: int = 2048) -> np.ndarray:
    """Mean plug-in I(Y; C_i) over each group's concepts, on the first rows of ds."""
    rows = slice(0, min(ds.n, subsample))
    y = ds.Y[rows]
    per_concept = np.array([discrete_mi(y, ds.C[rows, i]) for i in range(ds.n_concepts)])
    return np.array([per_concept[g].mean() for g in ds.groups])


def selective_keep(ds: Dataset, subsample: int = 2048) -> list[int]:
    """Groups that survive selective dropout (ascending)."""
    if ds.n_groups < 2:
        raise ValidationError("selective dropout needs at least two groups")
    scores = group_label_mi(ds, subsample)
    n_drop = ds.n_groups // 2
    # among tied scores the lowest index survives, so higher indices are dropped first
    order = sorted(range(ds.n_groups), key=lambda g: (-round(scores[g], 12), -g))
    drop = set(order[:n_drop])
    return [g for g in range(ds.n_groups) if g not in drop]


def selective_dropout(ds: Dataset, subsample: int = 2048) -> Dataset:
    """Drop the half of the groups that carry the most label information."""
    return ds.keep_groups(selective_keep(ds, subsample))


def random_keep(n_groups: int, seed: int) -> list[int]:
    """Groups that survive random dropout of floor(G/2) groups (ascending)."""
    if n_groups < 2:
        raise ValidationError("random dropout needs at least two groups")
    rng = rng_for(seed, "random_dropout")
    drop = set(rng.choice(n_groups, size=n_groups // 2, replace=False).tolist())
    return [g for g in range(n_groups) if g not in drop]


def random_dropout(ds: Dataset, seed: int) -> Dataset:
    """Drop floor(G/2) groups chosen uniformly at random."""
    return ds.keep_groups(random_keep(ds.n_groups, seed))


def group_columns(groups: list[list[int]], keep: list[int]) -> list[int]:
    return [i for g in sorted(keep) for i in groups[g]]


def split(ds: Dataset, fractions=(0.7, 0.15, 0.15), seed: int = 0) -> tuple[Dataset, Dataset, Dataset]:
    """Class-stratified train/val/test partition."""
    fr = np.asarray(fractions, dtype=np.float64)
    if fr.shape != (3,) or np.any(fr < 0) or not np.isclose(fr.sum(), 1.0) or fr[0] <= 0:
        raise ValidationError("fractions must be three non-negative numbers summing to 1")
    rng = rng_for(seed, "split")
    n_parts = int((fr > 0).sum())
    parts: list[list[int]] = [[], [], []]
    for cls in np.unique(ds.Y):
        idx = np.flatnonzero(ds.Y == cls)
        if len(idx) < n_parts:
            raise ValidationError(f"class {cls} has {len(idx)} rows, fewer than {n_parts} splits")
        idx = idx[rng.permutation(len(idx))]
        cuts = np.floor(np.cumsum(fr)[:-1] * len(idx) + 0.5).astype(int)
        for p, chunk in enumerate(np.split(idx, cuts)):
            parts[p].extend(chunk.tolist())
    if fr[1] == 0 and fr[2] == 0:
        return ds.take(np.arange(ds.n), "train"), ds.take([], "val"), ds.take([], "test")
    out = tuple(ds.take(np.sort(np.asarray(p, dtype=np.int64)), name)
                for p, name in zip(parts, ("train", "val", "test")))
    return out  # type: ignore[return-value]
