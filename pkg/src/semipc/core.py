"""Data model for paired-comparison datasets.

Items are labelled ``0..n`` with item 0 as the reference (its merit is fixed
at zero).  Records are stored columnar and always in canonical orientation
``head < tail``; the mirrored comparison ``(tail, head, t, 1 - a, -x0, -z)``
describes the same event and is never stored alongside it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np
from numpy.typing import NDArray


class DataError(ValueError):
    """Raised for malformed or degenerate comparison data."""


class IdentifiabilityError(DataError):
    """Raised when the comparison graph or covariates cannot identify the parameters."""


@dataclass(frozen=True)
class ComparisonRecord:
    head: int
    tail: int
    occasion: int
    outcome: int
    x0: float
    z: tuple[float, ...]

    def mirror(self) -> "ComparisonRecord":
        return ComparisonRecord(
            self.tail,
            self.head,
            self.occasion,
            1 - self.outcome,
            -self.x0,
            tuple(-v for v in self.z),
        )


def canonicalize(record: ComparisonRecord) -> ComparisonRecord:
    """Return ``record`` oriented so that ``head < tail``."""
    if record.head == record.tail:
        raise DataError(f"degenerate pair: item {record.head} compared with itself")
    if record.outcome not in (0, 1):
        raise DataError(f"outcome must be 0 or 1, got {record.outcome!r}")
    return record if record.head < record.tail else record.mirror()


@dataclass(frozen=True)
class ColumnSchema:
    """Covariate layout: which of the ``p`` columns of ``z`` are continuous.

    ``special_sign`` is the fixed sign of the special regressor coefficient.
    """

    continuous_mask: tuple[bool, ...]
    special_sign: int = 1
    names: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.special_sign not in (1, -1):
            raise DataError(f"special_sign must be +1 or -1, got {self.special_sign!r}")
        if self.names is not None and len(self.names) != len(self.continuous_mask):
            raise DataError("names and continuous_mask differ in length")

    @property
    def p(self) -> int:
        return len(self.continuous_mask)

    @property
    def continuous(self) -> NDArray[np.bool_]:
        return np.asarray(self.continuous_mask, dtype=bool)

    def column_names(self) -> tuple[str, ...]:
        if self.names is not None:
            return self.names
        return tuple(f"eta{k + 1}" for k in range(self.p))

    def with_sign(self, sign: int) -> "ColumnSchema":
        return ColumnSchema(self.continuous_mask, sign, self.names)


@dataclass(frozen=True)
class ParameterSet:
    """Merits ``theta_1..theta_n`` (``theta_0 = 0`` implied) and covariate effects."""

    theta: NDArray[np.float64]
    eta: NDArray[np.float64]

    def theta_full(self) -> NDArray[np.float64]:
        return np.concatenate([[0.0], self.theta])


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable columnar collection of canonical comparison records.

    Use :meth:`from_arrays` or :meth:`from_records`; both canonicalize and
    compute the pair layout.  Pairs are ordered ``(0,1),...,(0,n),(1,2),...``.
    """

    n_items: int
    schema: ColumnSchema
    head: NDArray[np.intp]
    tail: NDArray[np.intp]
    occasion: NDArray[np.intp]
    outcome: NDArray[np.int8]
    x0: NDArray[np.float64]
    z: NDArray[np.float64]
    labels: tuple[str, ...] | None = None
    pairs: NDArray[np.intp] = field(repr=False, default=None)  # type: ignore[assignment]
    pair_of_record: NDArray[np.intp] = field(repr=False, default=None)  # type: ignore[assignment]
    counts: NDArray[np.intp] = field(repr=False, default=None)  # type: ignore[assignment]

    @classmethod
    def from_arrays(
        cls,
        n_items: int,
        schema: ColumnSchema,
        head: Sequence[int] | NDArray,
        tail: Sequence[int] | NDArray,
        outcome: Sequence[int] | NDArray,
        x0: Sequence[float] | NDArray,
        z: NDArray | None = None,
        occasion: Sequence[int] | NDArray | None = None,
        labels: Sequence[str] | None = None,
    ) -> "Dataset":
        head = np.asarray(head, dtype=np.intp).copy()
        tail = np.asarray(tail, dtype=np.intp).copy()
        outcome = np.asarray(outcome).astype(np.int8)
        x0 = np.asarray(x0, dtype=np.float64).copy()
        r = head.shape[0]
        if z is None:
            z = np.zeros((r, schema.p))
        z = np.asarray(z, dtype=np.float64).reshape(r, schema.p).copy()
        if n_items < 2:
            raise DataError(f"need at least 2 items, got {n_items}")
        if not (tail.shape[0] == outcome.shape[0] == x0.shape[0] == r):
            raise DataError("record arrays differ in length")
        if np.any(head == tail):
            bad = int(np.flatnonzero(head == tail)[0])
            raise DataError(f"degenerate pair at record {bad}: item {head[bad]} vs itself")
        if r and (min(head.min(), tail.min()) < 0 or max(head.max(), tail.max()) >= n_items):
            raise DataError("item id out of range")
        if not np.isin(outcome, (0, 1)).all():
            raise DataError("outcomes must be 0 or 1")
        if not (np.isfinite(x0).all() and np.isfinite(z).all()):
            raise DataError("covariates contain non-finite values")

        flip = head > tail
        head[flip], tail[flip] = tail[flip], head[flip].copy()
        outcome[flip] = 1 - outcome[flip]
        x0[flip] = -x0[flip]
        z[flip] = -z[flip]

        key = head * n_items + tail
        pair_keys, pair_of_record, counts = np.unique(key, return_inverse=True, return_counts=True)
        pairs = np.column_stack([pair_keys // n_items, pair_keys % n_items]).astype(np.intp)

        if occasion is None:
            occasion = np.empty(r, dtype=np.intp)
            order = np.argsort(pair_of_record, kind="stable")
            starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
            occasion[order] = np.arange(r) - np.repeat(starts, counts) + 1
        else:
            occasion = np.asarray(occasion, dtype=np.intp).copy()
            if r and occasion.min() < 1:
                raise DataError("occasion indices must be positive")

        for arr in (head, tail, occasion, outcome, x0, z, pairs, pair_of_record, counts):
            arr.setflags(write=False)
        if labels is not None:
            labels = tuple(str(s) for s in labels)
            if len(labels) != n_items:
                raise DataError("labels length differs from item count")
        return cls(
            n_items,
            schema,
            head,
            tail,
            occasion,
            outcome,
            x0,
            z,
            labels,
            pairs,
            pair_of_record.astype(np.intp),
            counts.astype(np.intp),
        )

    @classmethod
    def from_records(
        cls,
        n_items: int,
        schema: ColumnSchema,
        records: Iterable[ComparisonRecord],
        labels: Sequence[str] | None = None,
    ) -> "Dataset":
        recs = [canonicalize(r) for r in records]
        z = np.array([r.z for r in recs], dtype=float).reshape(len(recs), schema.p)
        return cls.from_arrays(
            n_items,
            schema,
            [r.head for r in recs],
            [r.tail for r in recs],
            [r.outcome for r in recs],
            [r.x0 for r in recs],
            z,
            occasion=[r.occasion for r in recs],
            labels=labels,
        )

    # -- views -----------------------------------------------------------

    @property
    def n(self) -> int:
        """Number of free merit parameters (items minus the reference)."""
        return self.n_items - 1

    @property
    def n_records(self) -> int:
        return int(self.head.shape[0])

    @property
    def n_pairs(self) -> int:
        return int(self.pairs.shape[0])

    @property
    def is_complete(self) -> bool:
        return self.n_pairs == self.n_items * (self.n_items - 1) // 2

    @property
    def is_balanced(self) -> bool:
        return self.is_complete and bool(np.all(self.counts == self.counts[0]))

    def records(self) -> Iterator[ComparisonRecord]:
        for k in range(self.n_records):
            yield ComparisonRecord(
                int(self.head[k]),
                int(self.tail[k]),
                int(self.occasion[k]),
                int(self.outcome[k]),
                float(self.x0[k]),
                tuple(float(v) for v in self.z[k]),
            )

    def mirrored(self) -> "Dataset":
        """The same comparisons with every record stored tail-first (re-canonicalized)."""
        return Dataset.from_arrays(
            self.n_items,
            self.schema,
            self.tail,
            self.head,
            1 - self.outcome,
            -self.x0,
            -self.z,
            occasion=self.occasion,
            labels=self.labels,
        )

    def with_schema(self, schema: ColumnSchema) -> "Dataset":
        return Dataset.from_arrays(
            self.n_items,
            schema,
            self.head,
            self.tail,
            self.outcome,
            self.x0,
            self.z,
            occasion=self.occasion,
            labels=self.labels,
        )

    def item_label(self, item: int) -> str:
        return self.labels[item] if self.labels is not None else str(item)

    def pair_means(self, values: NDArray[np.float64]) -> NDArray[np.float64]:
        """Average per-record ``values`` (1-D or 2-D) within each pair."""
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 1:
            return np.bincount(self.pair_of_record, values, self.n_pairs) / self.counts
        out = np.empty((self.n_pairs, values.shape[1]))
        for k in range(values.shape[1]):
            out[:, k] = np.bincount(self.pair_of_record, values[:, k], self.n_pairs)
        return out / self.counts[:, None]


@dataclass(frozen=True)
class Diagnostics:
    n_items: int
    n_records: int
    n_pairs: int
    complete: bool
    balanced: bool
    missing_pairs: list[tuple[int, int]]
    count_min: int
    count_max: int
    x0_range: tuple[float, float]
    lambda_min: float
    connected: bool


def validate(dataset: Dataset) -> Diagnostics:
    """Summarize design coverage, support of x0 and the projected-covariate eigenvalue."""
    from .design import DesignOperator

    if dataset.n_items < 2:
        raise DataError("need at least 2 items")
    present = set(map(tuple, dataset.pairs.tolist()))
    missing = [
        (i, j)
        for i in range(dataset.n_items)
        for j in range(i + 1, dataset.n_items)
        if (i, j) not in present
    ]
    op = DesignOperator.from_dataset(dataset)
    connected = op.is_connected()
    lam = float("nan")
    if connected and dataset.schema.p > 0 and dataset.n_records:
        zbar = dataset.pair_means(dataset.z)
        gram = op.projected_gram(zbar) / dataset.n_pairs
        lam = float(np.linalg.eigvalsh(gram)[0])
    rng = (float(dataset.x0.min()), float(dataset.x0.max())) if dataset.n_records else (0.0, 0.0)
    return Diagnostics(
        n_items=dataset.n_items,
        n_records=dataset.n_records,
        n_pairs=dataset.n_pairs,
        complete=dataset.is_complete,
        balanced=dataset.is_balanced,
        missing_pairs=missing,
        count_min=int(dataset.counts.min()) if dataset.n_pairs else 0,
        count_max=int(dataset.counts.max()) if dataset.n_pairs else 0,
        x0_range=rng,
        lambda_min=lam,
        connected=connected,
    )
