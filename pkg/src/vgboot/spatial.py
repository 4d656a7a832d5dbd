"""Spatial point data, lag grids and Matheron's empirical semi-variogram."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AllBinsEmpty


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SpatialDataset:
    """Planar point locations with one numeric attribute each.

    Parameters
    ----------
    coords : array_like, shape (N, 2)
    values : array_like, shape (N,)
    """

    coords: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        coords = _frozen(self.coords)
        values = _frozen(self.values)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError(f"coords must have shape (N, 2), got {coords.shape}")
        if values.ndim != 1 or values.shape[0] != coords.shape[0]:
            raise ValueError("coords and values must have the same length")
        if values.shape[0] < 2:
            raise ValueError("at least two points are required")
        if not (np.isfinite(coords).all() and np.isfinite(values).all()):
            raise ValueError("coordinates and values must be finite")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def with_values(self, values) -> "SpatialDataset":
        """Same locations, new attribute vector."""
        return SpatialDataset(self.coords, values)


@dataclass(frozen=True)
class LagGrid:
    """``n_lags`` equidistant lag intervals covering ``(0, max_dist]``."""

    max_dist: float
    n_lags: int = 10
    bin_edges: np.ndarray = field(init=False, repr=False)
    bin_centers: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not (np.isfinite(self.max_dist) and self.max_dist > 0):
            raise ValueError(f"max_dist must be positive, got {self.max_dist}")
        if int(self.n_lags) != self.n_lags or self.n_lags < 1:
            raise ValueError(f"n_lags must be a positive integer, got {self.n_lags}")
        object.__setattr__(self, "max_dist", float(self.max_dist))
        object.__setattr__(self, "n_lags", int(self.n_lags))
        edges = np.linspace(0.0, self.max_dist, self.n_lags + 1)
        edges[-1] = self.max_dist
        object.__setattr__(self, "bin_edges", _frozen(edges))
        object.__setattr__(self, "bin_centers", _frozen(0.5 * (edges[:-1] + edges[1:])))

    def assign(self, distances) -> np.ndarray:
        """Bin index per distance, ``-1`` for distances outside ``(0, max_dist]``.

        Bin ``k`` holds ``edge[k] < d <= edge[k + 1]``.
        """
        d = np.asarray(distances, dtype=float)
        k = np.searchsorted(self.bin_edges, d, side="left") - 1
        k[(d <= 0.0) | (d > self.max_dist)] = -1
        return k


@dataclass(frozen=True)
class EmpiricalVariogram:
    """Per-lag Matheron estimates. ``gamma_hat`` is NaN where ``pair_counts`` is 0."""

    grid: LagGrid
    gamma_hat: np.ndarray
    pair_counts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gamma_hat", _frozen(self.gamma_hat))
        object.__setattr__(self, "pair_counts", _frozen(self.pair_counts, dtype=np.int64))
        if self.gamma_hat.shape != (self.grid.n_lags,) or self.pair_counts.shape != (self.grid.n_lags,):
            raise ValueError("gamma_hat and pair_counts must have one entry per lag")

    @property
    def distances(self) -> np.ndarray:
        return self.grid.bin_centers

    @property
    def nonempty(self) -> np.ndarray:
        return self.pair_counts > 0

    def to_dict(self) -> dict:
        return {
            "max_dist": self.grid.max_dist,
            "n_lags": self.grid.n_lags,
            "lags": [
                {
                    "distance": float(d),
                    "gamma_hat": None if c == 0 else float(g),
                    "pair_count": int(c),
                }
                for d, g, c in zip(self.distances, self.gamma_hat, self.pair_counts)
            ],
        }


def pairwise_distances(data: SpatialDataset):
    """All ``N(N-1)/2`` pairs ``i < j`` with their Euclidean distance.

    Returns
    -------
    i, j : ndarray of int
    dist : ndarray of float
    """
    i, j = np.triu_indices(data.n, k=1)
    diff = data.coords[i] - data.coords[j]
    return i, j, np.hypot(diff[:, 0], diff[:, 1])


class LagBinning:
    """Pair-to-lag assignment for a fixed set of locations.

    Locations never change inside the bootstrap, so the pairs that fall in
    each lag are computed once and reused for every attribute vector.
    """

    def __init__(self, coords, grid: LagGrid):
        self.grid = grid
        n = len(coords)
        i, j, d = pairwise_distances(SpatialDataset(coords, np.zeros(n)))
        k = grid.assign(d)
        keep = k >= 0
        self.i = i[keep]
        self.j = j[keep]
        self.bin = k[keep]
        self.pair_counts = np.bincount(self.bin, minlength=grid.n_lags)
        if self.pair_counts.sum() == 0:
            raise AllBinsEmpty(f"no point pair with distance in (0, {grid.max_dist}]")

    def variogram(self, values) -> EmpiricalVariogram:
        z = np.asarray(values, dtype=float)
        sq = (z[self.i] - z[self.j]) ** 2
        sums = np.bincount(self.bin, weights=sq, minlength=self.grid.n_lags)
        counts = self.pair_counts
        with np.errstate(invalid="ignore", divide="ignore"):
            gamma = np.where(counts > 0, sums / (2.0 * counts), np.nan)
        return EmpiricalVariogram(self.grid, gamma, counts)


def empirical_variogram(data: SpatialDataset, grid: LagGrid) -> EmpiricalVariogram:
    """Matheron's method-of-moments semi-variogram on ``grid``.

    Raises
    ------
    AllBinsEmpty
        If no pair distance lies in ``(0, grid.max_dist]``.
    """
    return LagBinning(data.coords, grid).variogram(data.values)


def sample_variance(data) -> float:
    """Unbiased sample variance (divisor ``N - 1``)."""
    values = data.values if isinstance(data, SpatialDataset) else np.asarray(data, dtype=float)
    return float(np.var(values, ddof=1))


class CSVFormatError(ValueError):
    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


def read_points_csv(path) -> SpatialDataset:
    """Read a ``x,y,z`` CSV file (header required) into a dataset."""
    path = Path(path)
    coords, values = [], []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["x", "y", "z"]:
            raise CSVFormatError(path, 1, f"expected header 'x,y,z', got {header!r}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise CSVFormatError(path, line, f"expected 3 fields, got {len(row)}")
            try:
                x, y, z = (float(c) for c in row)
            except ValueError:
                raise CSVFormatError(path, line, f"non-numeric field in {','.join(row)!r}") from None
            if not all(np.isfinite((x, y, z))):
                raise CSVFormatError(path, line, "non-finite value")
            coords.append((x, y))
            values.append(z)
    if len(values) < 2:
        raise CSVFormatError(path, 1, "need at least two data rows")
    return SpatialDataset(np.array(coords), np.array(values))


def write_points_csv(path, data: SpatialDataset) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "z"])
        for (x, y), z in zip(data.coords, data.values):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(z))])
