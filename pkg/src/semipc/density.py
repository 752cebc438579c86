"""Kernel estimate of the special regressor's conditional density.

The smoother pools both orientations of every record, uses product quartic
kernels over ``x0`` and the continuous covariates, and matches discrete
covariates exactly.  Bandwidths are chosen by matching the identity
``E{[I(x0 + d > 0) - I(x0 > 0)] / f(x0 | z)} = d`` on a grid of ``d``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from ._kernels import BACKEND, kernel_sums
from .core import ColumnSchema, Dataset

logger = logging.getLogger(__name__)

DEFAULT_FLOOR = 0.01
DEFAULT_DELTAS = tuple(round(0.1 * k, 1) for k in range(1, 10))
GRID_MULTIPLIERS = (0.5, 0.75, 1.0, 1.5, 2.0, 3.0)
QUARTIC_AT_ZERO = 15.0 / 16.0


def quartic_kernel(u: float | NDArray[np.float64]) -> float | NDArray[np.float64]:
    """Biweight kernel ``(15/16)(1 - u^2)^2`` on ``[-1, 1]``."""
    u = np.asarray(u, dtype=np.float64)
    w = np.where(np.abs(u) <= 1.0, 1.0 - u * u, 0.0)
    out = 0.9375 * w * w
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class _Cell:
    key: NDArray[np.float64]
    x: NDArray[np.float64]
    zc: NDArray[np.float64]


@dataclass(frozen=True, eq=False)
class PooledSample:
    """Training points ``(x0, z)`` and ``(-x0, -z)`` split by discrete cell, each sorted by key.

    Independent of the bandwidth, so one instance serves a whole grid search.
    """

    schema: ColumnSchema
    cells: dict[tuple[float, ...], _Cell]
    size: int
    x0_sd: float

    @property
    def p1(self) -> int:
        return int(self.schema.continuous.sum())

    @classmethod
    def from_dataset(cls, dataset: Dataset) -> "PooledSample":
        schema = dataset.schema
        x = np.concatenate([dataset.x0, -dataset.x0])
        z = np.concatenate([dataset.z, -dataset.z])
        cont = schema.continuous
        zc = np.ascontiguousarray(z[:, cont])
        zd = z[:, ~cont]
        cells: dict[tuple[float, ...], _Cell] = {}
        if zd.shape[1]:
            uniq, inv = np.unique(zd, axis=0, return_inverse=True)
            inv = inv.reshape(-1)
            groups = [(tuple(float(v) for v in uniq[c]), np.flatnonzero(inv == c)) for c in range(uniq.shape[0])]
        else:
            groups = [((), np.arange(x.shape[0]))]
        for cell_key, idx in groups:
            cx, czc = x[idx], zc[idx]
            key = czc[:, 0] if czc.shape[1] else cx
            order = np.argsort(key, kind="stable")
            cells[cell_key] = _Cell(
                np.ascontiguousarray(key[order]),
                np.ascontiguousarray(cx[order]),
                np.ascontiguousarray(czc[order]),
            )
        return cls(schema, cells, int(x.shape[0]), float(np.sqrt(np.mean(x * x))) if x.size else 0.0)

    def raw_density(
        self, x0: NDArray[np.float64], z: NDArray[np.float64], h: float, exclude_self: bool = False
    ) -> NDArray[np.float64]:
        """Unclipped ratio estimate; ``nan`` where the denominator vanishes.

        ``exclude_self`` removes one training point located exactly at each
        query (leave-one-out when the queries are the records themselves).
        """
        x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
        z = np.asarray(z, dtype=np.float64).reshape(x0.shape[0], self.schema.p)
        cont = self.schema.continuous
        zc = np.ascontiguousarray(z[:, cont])
        zd = z[:, ~cont]
        p1 = zc.shape[1]
        out = np.full(x0.shape[0], np.nan)
        if zd.shape[1]:
            uniq, inv = np.unique(zd, axis=0, return_inverse=True)
            inv = inv.reshape(-1)
            groups = [(tuple(float(v) for v in uniq[c]), np.flatnonzero(inv == c)) for c in range(uniq.shape[0])]
        else:
            groups = [((), np.arange(x0.shape[0]))]
        for cell_key, idx in groups:
            cell = self.cells.get(cell_key)
            if cell is None:
                continue
            qx = np.ascontiguousarray(x0[idx])
            qzc = np.ascontiguousarray(zc[idx])
            qkey = np.ascontiguousarray(qzc[:, 0] if p1 else qx)
            num, den = kernel_sums(cell.key, cell.x, cell.zc, qkey, qx, qzc, float(h))
            if p1 == 0:
                den = np.full(idx.shape[0], float(cell.key.shape[0]))
            if exclude_self:
                num = num - QUARTIC_AT_ZERO ** (p1 + 1)
                den = den - QUARTIC_AT_ZERO**p1
                num = np.where(np.abs(num) < 1e-12, 0.0, num)
            ok = den > 1e-12
            res = np.full(idx.shape[0], np.nan)
            res[ok] = num[ok] / (den[ok] * h)
            out[idx] = res
        return out


@dataclass(frozen=True, eq=False)
class DensityModel:
    """Fitted conditional density smoother at a fixed bandwidth."""

    bandwidth: float
    sample: PooledSample
    floor: float = DEFAULT_FLOOR
    leave_one_out: bool = False

    def __post_init__(self) -> None:
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if not self.floor > 0:
            raise ValueError(f"floor must be positive, got {self.floor}")

    @classmethod
    def fit(
        cls,
        dataset: Dataset,
        bandwidth: float,
        floor: float = DEFAULT_FLOOR,
        leave_one_out: bool = False,
    ) -> "DensityModel":
        return cls(bandwidth, PooledSample.from_dataset(dataset), floor, leave_one_out)

    @property
    def schema(self) -> ColumnSchema:
        return self.sample.schema

    @property
    def training_size(self) -> int:
        return self.sample.size

    def evaluate(self, x0: NDArray[np.float64], z: NDArray[np.float64]) -> NDArray[np.float64]:
        raw = self.sample.raw_density(x0, z, self.bandwidth)
        return np.maximum(np.nan_to_num(raw, nan=0.0), self.floor)

    def record_densities(self, dataset: Dataset) -> tuple[NDArray[np.float64], int]:
        """Clipped density at each stored record and the number of floor hits."""
        raw = self.sample.raw_density(dataset.x0, dataset.z, self.bandwidth, self.leave_one_out)
        raw = np.nan_to_num(raw, nan=0.0)
        hits = int(np.count_nonzero(raw < self.floor))
        return np.maximum(raw, self.floor), hits


def conditional_density(model: DensityModel, x0: float, z: Sequence[float]) -> float:
    return float(model.evaluate(np.array([x0]), np.asarray(z, dtype=float).reshape(1, -1))[0])


def delta_terms(x0: NDArray[np.float64], dens: NDArray[np.float64], delta: float) -> NDArray[np.float64]:
    """Per-record average of the indicator-difference ratio over both orientations.

    For a canonical record the difference is ``I(-d < x0 <= 0)``; for its
    mirror it is ``I(0 <= x0 < d)``.  Both share the same density value.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if delta == 0:
        return np.zeros_like(x0)
    ind = ((x0 > -delta) & (x0 <= 0)).astype(float) + ((x0 >= 0) & (x0 < delta)).astype(float)
    return 0.5 * ind / dens


def delta_hat_from_densities(x0: NDArray[np.float64], dens: NDArray[np.float64], delta: float) -> float:
    terms = delta_terms(x0, dens, delta)
    return float(terms.mean()) if terms.size else 0.0


def delta_hat(model: DensityModel, dataset: Dataset, delta: float) -> float:
    if not 0 <= delta <= 1:
        raise ValueError(f"delta must lie in [0, 1], got {delta}")
    dens, _ = model.record_densities(dataset)
    return delta_hat_from_densities(dataset.x0, dens, delta)


def default_grid(dataset: Dataset, sample: PooledSample | None = None) -> list[float]:
    sample = sample or PooledSample.from_dataset(dataset)
    base = sample.x0_sd * sample.size ** (-1.0 / (sample.p1 + 5))
    if not base > 0:
        base = 1.0
    return [c * base for c in GRID_MULTIPLIERS]


@dataclass(frozen=True)
class BandwidthSelection:
    bandwidth: float
    grid: list[float]
    criterion: list[float]
    delta_hats: NDArray[np.float64]
    deltas: tuple[float, ...]
    densities: NDArray[np.float64] = field(repr=False)
    floor_hits: int = 0


def bandwidth_criterion(
    x0: NDArray[np.float64], dens: NDArray[np.float64], deltas: Sequence[float]
) -> tuple[float, NDArray[np.float64]]:
    est = np.array([delta_hat_from_densities(x0, dens, d) for d in deltas])
    return float(np.sum((np.asarray(deltas) - est) ** 2)), est


def select_bandwidth(
    dataset: Dataset,
    grid: Sequence[float] | None = None,
    deltas: Sequence[float] = DEFAULT_DELTAS,
    floor: float = DEFAULT_FLOOR,
    leave_one_out: bool = False,
) -> BandwidthSelection:
    """Exhaustive grid search; ties go to the smallest bandwidth.

    Record densities are computed once per grid member and reused for every
    ``delta`` and, for the winner, by the estimator.
    """
    sample = PooledSample.from_dataset(dataset)
    grid = list(default_grid(dataset, sample) if grid is None else grid)
    if not grid:
        raise ValueError("bandwidth grid is empty")
    if any(not h > 0 for h in grid):
        raise ValueError("bandwidths must be positive")
    deltas = tuple(deltas)
    crit: list[float] = []
    ests = np.empty((len(grid), len(deltas)))
    best = None
    for k, h in enumerate(grid):
        model = DensityModel(h, sample, floor, leave_one_out)
        dens, hits = model.record_densities(dataset)
        c, ests[k] = bandwidth_criterion(dataset.x0, dens, deltas)
        crit.append(c)
        if best is None or c < crit[best[0]] or (c == crit[best[0]] and h < grid[best[0]]):
            best = (k, dens, hits)
    assert best is not None
    k, dens, hits = best
    logger.debug("bandwidth %.4g selected (%s backend)", grid[k], BACKEND)
    return BandwidthSelection(grid[k], grid, crit, ests, deltas, dens, hits)
