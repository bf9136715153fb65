"""Bioactivity matrices: CSV ingestion, binarization and missing-data masks.

A matrix has targets on rows and compounds on columns.  Every entry carries
an ``observed`` flag; values at unobserved cells are kept as loaded but are
never read by any computation in the package.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DegenerateDataError, ParseError

logger = logging.getLogger(__name__)

DEFAULT_MISSING = "NA"


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def _check_axes(targets, compounds, shape):
    m, n = shape
    if m < 1 or n < 1:
        raise ValueError(f"matrix must be at least 1x1, got {m}x{n}")
    if len(targets) != m or len(compounds) != n:
        raise ValueError(
            f"axis labels ({len(targets)} targets, {len(compounds)} compounds) "
            f"do not match values shape {shape}"
        )
    for name, ids in (("target", targets), ("compound", compounds)):
        if len(set(ids)) != len(ids):
            seen, dup = set(), None
            for x in ids:
                if x in seen:
                    dup = x
                    break
                seen.add(x)
            raise ValueError(f"duplicate {name} identifier {dup!r}")


@dataclass(frozen=True, eq=False)
class BioactivityMatrix:
    """Binary target x compound activity matrix with an observed mask."""

    targets: tuple
    compounds: tuple
    values: np.ndarray
    observed: np.ndarray = None
    corner: str = field(default="target", compare=False)

    def __post_init__(self):
        values = np.asarray(self.values)
        observed = (
            np.ones(values.shape, dtype=bool)
            if self.observed is None
            else np.asarray(self.observed, dtype=bool)
        )
        if values.ndim != 2 or observed.shape != values.shape:
            raise ValueError("values and observed must be 2-D arrays of equal shape")
        targets = tuple(str(t) for t in self.targets)
        compounds = tuple(str(c) for c in self.compounds)
        _check_axes(targets, compounds, values.shape)
        obs_vals = values[observed]
        if obs_vals.size and not np.all((obs_vals == 0) | (obs_vals == 1)):
            raise ValueError("observed entries of a binary matrix must be 0 or 1")
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "compounds", compounds)
        object.__setattr__(self, "values", _frozen(values, np.int8))
        object.__setattr__(self, "observed", _frozen(observed, bool))

    @property
    def shape(self):
        return self.values.shape

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def ones(self) -> np.ndarray:
        """Float indicator of observed actives (unobserved cells are 0)."""
        return (self.observed & (self.values == 1)).astype(float)

    @property
    def zeros(self) -> np.ndarray:
        """Float indicator of observed inactives (unobserved cells are 0)."""
        return (self.observed & (self.values == 0)).astype(float)

    def column_sums(self) -> np.ndarray:
        """Active counts per compound over observed cells only."""
        return self.ones.sum(axis=0)

    def observed_mean(self) -> float:
        n_obs = int(self.observed.sum())
        if n_obs == 0:
            raise DegenerateDataError("matrix has no observed entries")
        return float(self.ones.sum() / n_obs)

    def take_targets(self, rows: Sequence[int]) -> "BioactivityMatrix":
        rows = list(rows)
        return BioactivityMatrix(
            [self.targets[i] for i in rows],
            self.compounds,
            self.values[rows],
            self.observed[rows],
            corner=self.corner,
        )

    def drop_target(self, i: int) -> "BioactivityMatrix":
        return self.take_targets([r for r in range(self.m) if r != i])

    def take_compounds(self, cols: Sequence[int]) -> "BioactivityMatrix":
        cols = list(cols)
        return BioactivityMatrix(
            self.targets,
            [self.compounds[j] for j in cols],
            self.values[:, cols],
            self.observed[:, cols],
            corner=self.corner,
        )

    def with_missing(self, mask) -> "BioactivityMatrix":
        """Copy with the cells flagged in ``mask`` marked unobserved."""
        mask = np.asarray(mask, dtype=bool)
        return BioactivityMatrix(
            self.targets,
            self.compounds,
            self.values,
            self.observed & ~mask,
            corner=self.corner,
        )

    def target_index(self, target) -> int:
        try:
            return self.targets.index(str(target))
        except ValueError:
            raise KeyError(f"unknown target {target!r}") from None

    def compound_index(self, compound) -> int:
        try:
            return self.compounds.index(str(compound))
        except ValueError:
            raise KeyError(f"unknown compound {compound!r}") from None


@dataclass(frozen=True, eq=False)
class ContinuousMatrix:
    """Real-valued measurements (percent inhibition, z-scores) with a mask."""

    targets: tuple
    compounds: tuple
    values: np.ndarray
    observed: np.ndarray = None
    corner: str = field(default="target", compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        observed = (
            np.ones(values.shape, dtype=bool)
            if self.observed is None
            else np.asarray(self.observed, dtype=bool)
        )
        if values.ndim != 2 or observed.shape != values.shape:
            raise ValueError("values and observed must be 2-D arrays of equal shape")
        targets = tuple(str(t) for t in self.targets)
        compounds = tuple(str(c) for c in self.compounds)
        _check_axes(targets, compounds, values.shape)
        if not np.all(np.isfinite(values[observed])):
            raise ValueError("observed entries must be finite")
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "compounds", compounds)
        object.__setattr__(self, "values", _frozen(values, float))
        object.__setattr__(self, "observed", _frozen(observed, bool))

    @property
    def shape(self):
        return self.values.shape

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]


def _parse_cell(cell, row_no, col_no):
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(f"non-numeric cell {cell!r} in column {col_no}", row=row_no) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite cell {cell!r} in column {col_no}", row=row_no)
    return v


def load_csv(path, missing_token: str = DEFAULT_MISSING, kind: str = "auto"):
    """Read a matrix from CSV.

    The first row holds compound identifiers (its first cell is a corner
    label), and the first column holds target identifiers.  Cells equal to
    ``missing_token`` are marked unobserved.

    ``kind`` is ``"binary"``, ``"continuous"`` or ``"auto"``; auto returns a
    :class:`BioactivityMatrix` when every observed cell is 0 or 1 and a
    :class:`ContinuousMatrix` otherwise.
    """
    if kind not in ("auto", "binary", "continuous"):
        raise ValueError(f"unknown matrix kind {kind!r}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh)]
    # tolerate trailing blank lines
    while rows and not any(c.strip() for c in rows[-1]):
        rows.pop()
    if not rows:
        raise ParseError("empty file", row=1)
    header = [c.strip() for c in rows[0]]
    if len(header) < 2:
        raise ParseError("header must contain at least one compound", row=1)
    corner, compounds = header[0], header[1:]
    n = len(compounds)
    targets, values, observed = [], [], []
    for row_no, raw in enumerate(rows[1:], start=2):
        cells = [c.strip() for c in raw]
        if len(cells) != n + 1:
            raise ParseError(f"expected {n + 1} fields, found {len(cells)}", row=row_no)
        targets.append(cells[0])
        vals, obs = [], []
        for col_no, cell in enumerate(cells[1:], start=2):
            if cell == missing_token:
                vals.append(0.0)
                obs.append(False)
            else:
                vals.append(_parse_cell(cell, row_no, col_no))
                obs.append(True)
        values.append(vals)
        observed.append(obs)
    if not targets:
        raise ParseError("no target rows", row=2)
    values = np.array(values, dtype=float)
    observed = np.array(observed, dtype=bool)
    is_binary = bool(np.all((values[observed] == 0) | (values[observed] == 1)))
    if kind == "binary" and not is_binary:
        raise ParseError("observed cells must be 0 or 1 for a binary matrix")
    if kind == "binary" or (kind == "auto" and is_binary):
        return BioactivityMatrix(targets, compounds, values.astype(np.int8), observed, corner=corner)
    return ContinuousMatrix(targets, compounds, values, observed, corner=corner)


def _format_value(v, binary):
    if binary:
        return str(int(v))
    s = repr(float(v))
    return s[:-2] if s.endswith(".0") else s


def write_csv(matrix, path, missing_token: str = DEFAULT_MISSING) -> None:
    """Write a matrix in the format accepted by :func:`load_csv`."""
    binary = isinstance(matrix, BioactivityMatrix)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([matrix.corner, *matrix.compounds])
        for i, t in enumerate(matrix.targets):
            w.writerow(
                [t]
                + [
                    _format_value(v, binary) if o else missing_token
                    for v, o in zip(matrix.values[i], matrix.observed[i])
                ]
            )


def two_sd_thresholds(z: ContinuousMatrix) -> np.ndarray:
    """Per-target activity threshold ``mean + 2 * sd`` over observed cells.

    ``sd`` is the sample standard deviation (n - 1 denominator).
    """
    thresholds = np.empty(z.m)
    for i in range(z.m):
        row = z.values[i][z.observed[i]]
        if row.size < 2:
            raise DegenerateDataError(
                f"target {z.targets[i]!r} has {row.size} observed entries; need at least 2"
            )
        sd = row.std(ddof=1)
        if sd == 0:
            warnings.warn(
                f"target {z.targets[i]!r} has constant observed values; every entry is called active",
                RuntimeWarning,
                stacklevel=2,
            )
        thresholds[i] = row.mean() + 2.0 * sd
    return thresholds


def binarize_2sd(z: ContinuousMatrix) -> BioactivityMatrix:
    """Call an entry active when it is >= its target's mean + 2 sd."""
    tau = two_sd_thresholds(z)
    for t, thr in zip(z.targets, tau):
        logger.debug("2sd threshold %s: %.6g", t, thr)
    x = (z.values >= tau[:, None]).astype(np.int8)
    return BioactivityMatrix(z.targets, z.compounds, np.where(z.observed, x, 0), z.observed, corner=z.corner)


def binarize_zscore(z: ContinuousMatrix, threshold: float = -2.0) -> BioactivityMatrix:
    """Call an entry active when its z-score is strictly below ``threshold``."""
    if not math.isfinite(threshold):
        raise ValueError("threshold must be finite")
    x = (z.values < threshold).astype(np.int8)
    return BioactivityMatrix(z.targets, z.compounds, np.where(z.observed, x, 0), z.observed, corner=z.corner)


def from_array(values, observed=None, targets=None, compounds=None) -> BioactivityMatrix:
    """Build a binary matrix with generated identifiers (t0.., c0..)."""
    values = np.asarray(values)
    m, n = values.shape
    targets = targets if targets is not None else [f"t{i}" for i in range(m)]
    compounds = compounds if compounds is not None else [f"c{j}" for j in range(n)]
    return BioactivityMatrix(targets, compounds, values, observed)


def read_matrix(path: str | Path, missing_token: str = DEFAULT_MISSING) -> BioactivityMatrix:
    """Load a CSV that must be binary."""
    return load_csv(path, missing_token=missing_token, kind="binary")
