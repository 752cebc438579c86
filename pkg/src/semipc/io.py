"""Match-file ingestion, sports feature engineering and table output.

Match files are delimiter-separated with a header containing at least
``date, home, away, home_won``.  The home side is stored as the head item.
"""

from __future__ import annotations

import csv
import datetime as dt
from bisect import bisect_left
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from numpy.typing import NDArray

from .core import ColumnSchema, DataError, Dataset

REQUIRED_COLUMNS = ("date", "home", "away", "home_won")
EPOCH = dt.date(2000, 1, 1)
FEATURES = {"home": False, "b2b": False}


@dataclass(frozen=True)
class MatchRow:
    date: dt.date
    home: str
    away: str
    home_won: int
    extras: Mapping[str, str] = field(default_factory=dict)
    line: int = 0


def _delimiter_for(header: str) -> str:
    for d in ("\t", ";", "|"):
        if d in header:
            return d
    return ","


def read_matches(path: str | Path, delimiter: str | None = None) -> list[MatchRow]:
    """Parse a match file; errors carry the offending line number."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        text = fh.read()
    lines = text.splitlines(keepends=True)
    first = next((ln for ln in lines if ln.strip()), None)
    if first is None:
        raise DataError(f"{path}: empty file, no matches to read")
    reader = csv.DictReader(lines, delimiter=delimiter or _delimiter_for(first))
    header = [c.strip() for c in reader.fieldnames or []]
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise DataError(f"{path}: header lacks column(s) {', '.join(missing)}")
    reader.fieldnames = header
    rows = []
    for raw in reader:
        ln = reader.line_num
        if all(v in (None, "") for v in raw.values()):
            continue
        if None in raw or any(v is None for v in raw.values()):
            raise DataError(f"{path}:{ln}: wrong number of fields")
        try:
            date = dt.date.fromisoformat(raw["date"].strip())
        except ValueError:
            raise DataError(f"{path}:{ln}: unparseable date {raw['date']!r}") from None
        home, away = raw["home"].strip(), raw["away"].strip()
        if not home or not away:
            raise DataError(f"{path}:{ln}: empty item label")
        if home == away:
            raise DataError(f"{path}:{ln}: {home!r} listed against itself")
        won = raw["home_won"].strip()
        if won not in ("0", "1"):
            raise DataError(f"{path}:{ln}: home_won must be 0 or 1, got {won!r}")
        extras = {k: v.strip() for k, v in raw.items() if k not in REQUIRED_COLUMNS}
        rows.append(MatchRow(date, home, away, int(won), extras, ln))
    if not rows:
        raise DataError(f"{path}: empty file, no matches to read")
    return rows


def item_labels(
    matches: Sequence[MatchRow], reference: str | None = None, labels: Sequence[str] | None = None
) -> tuple[str, ...]:
    """Item order: ``labels`` if given (unseen names appended), else the reference then the rest sorted.

    The default reference is the alphabetically first label.
    """
    seen = {m.home for m in matches} | {m.away for m in matches}
    if labels is not None:
        order = list(labels)
        order += sorted(seen - set(order))
        if reference is not None and order[0] != reference:
            if reference not in order:
                raise DataError(f"reference item {reference!r} never appears")
            order.remove(reference)
            order.insert(0, reference)
        return tuple(order)
    if reference is None:
        reference = min(seen)
    elif reference not in seen:
        raise DataError(f"reference item {reference!r} never appears")
    return (reference, *sorted(seen - {reference}))


def _parse_float(m: MatchRow, col: str) -> float:
    try:
        return float(m.extras[col])
    except KeyError:
        raise DataError(f"line {m.line}: missing column {col!r}") from None
    except ValueError:
        raise DataError(f"line {m.line}: column {col!r} is not numeric: {m.extras[col]!r}") from None


def infer_schema(matches: Sequence[MatchRow], special: str = "x0", special_sign: int = 1) -> ColumnSchema:
    """Every extra column except ``special`` is a covariate; ``{-1, 0, 1}``-valued ones are discrete."""
    cols = [c for c in matches[0].extras if c != special]
    mask = []
    for c in cols:
        vals = {_parse_float(m, c) for m in matches}
        mask.append(not vals <= {-1.0, 0.0, 1.0})
    return ColumnSchema(tuple(mask), special_sign, tuple(cols))


def dataset_from_matches(
    matches: Sequence[MatchRow],
    schema: ColumnSchema | None = None,
    *,
    special: str = "x0",
    reference: str | None = None,
    labels: Sequence[str] | None = None,
    x0: NDArray[np.float64] | None = None,
    z: NDArray[np.float64] | None = None,
) -> Dataset:
    """Build a dataset; ``x0`` and ``z`` override the file columns when given (row order of ``matches``)."""
    if not matches:
        raise DataError("no matches: cannot build an empty dataset")
    if schema is None:
        schema = infer_schema(matches, special) if z is None else ColumnSchema((False,) * z.shape[1])
    names = schema.column_names()
    order = sorted(range(len(matches)), key=lambda k: matches[k].date)
    lab = item_labels(matches, reference, labels)
    index = {s: k for k, s in enumerate(lab)}
    ms = [matches[k] for k in order]
    if x0 is None:
        x0 = np.array([_parse_float(m, special) for m in ms])
    else:
        x0 = np.asarray(x0, dtype=float)[order]
    if z is None:
        z = np.array([[_parse_float(m, c) for c in names] for m in ms]).reshape(len(ms), schema.p)
    else:
        z = np.asarray(z, dtype=float).reshape(len(matches), schema.p)[order]
    return Dataset.from_arrays(
        len(lab),
        schema,
        [index[m.home] for m in ms],
        [index[m.away] for m in ms],
        [m.home_won for m in ms],
        x0,
        z,
        labels=lab,
    )


def ingest(
    path: str | Path,
    schema: ColumnSchema | None = None,
    *,
    special: str = "x0",
    reference: str | None = None,
    labels: Sequence[str] | None = None,
) -> Dataset:
    """Read a match file whose special regressor and covariates are already columns."""
    return dataset_from_matches(read_matches(path), schema, special=special, reference=reference, labels=labels)


def fmt(value: object) -> str:
    """Full-precision, locale-independent text for a table cell."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def emit_dataset(dataset: Dataset, path: str | Path, special: str = "x0") -> Path:
    """Write canonical records as a match file; occasion ``t`` becomes a date ``t - 1`` days after 2000-01-01."""
    path = Path(path)
    labels = dataset.labels or tuple(str(k) for k in range(dataset.n_items))
    names = dataset.schema.column_names()
    rows = []
    for r in dataset.records():
        date = EPOCH + dt.timedelta(days=r.occasion - 1)
        rows.append([date.isoformat(), labels[r.head], labels[r.tail], r.outcome, r.x0, *r.z])
    return write_table(path, [*REQUIRED_COLUMNS, special, *names], rows)


# -- sports features -----------------------------------------------------------


def read_projections(path: str | Path) -> dict[str, float]:
    """Two leading columns: item label and projected win share.  ``#`` lines are comments."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"projection file {path} does not exist")
    out = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(ln for ln in fh if not ln.lstrip().startswith("#"))
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty projection file")
        for k, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                out[row[0].strip()] = float(row[1])
            except (IndexError, ValueError):
                raise DataError(f"{path}: malformed projection row {k}: {row!r}") from None
    return out


@dataclass(frozen=True)
class FeatureTable:
    x0: NDArray[np.float64]
    z: NDArray[np.float64]
    names: tuple[str, ...]
    win_share: NDArray[np.float64] = field(repr=False)

    @property
    def schema(self) -> ColumnSchema:
        return ColumnSchema(tuple(FEATURES[n] for n in self.names), 1, self.names)


def _month(d: dt.date) -> tuple[int, int]:
    return d.year, d.month


def monthly_win_share(matches: Sequence[MatchRow]) -> dict[str, dict[tuple[int, int], float]]:
    wins: dict[str, dict[tuple[int, int], list[int]]] = defaultdict(lambda: defaultdict(lambda: [0, 0]))
    for m in matches:
        key = _month(m.date)
        for team, won in ((m.home, m.home_won), (m.away, 1 - m.home_won)):
            cell = wins[team][key]
            cell[0] += won
            cell[1] += 1
    return {t: {k: w / g for k, (w, g) in months.items()} for t, months in wins.items()}


def build_features(
    matches: Sequence[MatchRow],
    features: Sequence[str] = ("home", "b2b"),
    projections: Mapping[str, float] | None = None,
) -> FeatureTable:
    """Covariates and the win-share special regressor for each match, in input order.

    ``home`` is +1 for every row because the home side is the head.  ``b2b``
    is -1 when the away side also played away the previous day (the away
    side's own orientation carries +1), else 0.  ``x0`` is the home side's
    win share over the latest earlier calendar month in which it played minus
    the away side's; sides without such a month use ``projections``.
    """
    unknown = [f for f in features if f not in FEATURES]
    if unknown:
        raise ValueError(f"unknown feature(s) {unknown}; choose from {sorted(FEATURES)}")
    if not matches:
        raise DataError("no matches")
    share = monthly_win_share(matches)
    months = {t: sorted(v) for t, v in share.items()}
    away_days: dict[str, set[dt.date]] = defaultdict(set)
    for m in matches:
        away_days[m.away].add(m.date)

    def w(team: str, date: dt.date) -> float:
        ms = months[team]
        k = bisect_left(ms, _month(date))
        if k > 0:
            return share[team][ms[k - 1]]
        if projections is None:
            raise DataError(
                f"{team} has games on {date} with no earlier month; a projections file is required"
            )
        try:
            return float(projections[team])
        except KeyError:
            raise DataError(f"no projected win share for {team}") from None

    r = len(matches)
    ws = np.empty((r, 2))
    z = np.zeros((r, len(features)))
    for k, m in enumerate(matches):
        ws[k] = w(m.home, m.date), w(m.away, m.date)
        for c, f in enumerate(features):
            if f == "home":
                z[k, c] = 1.0
            elif (m.date - dt.timedelta(days=1)) in away_days[m.away]:
                z[k, c] = -1.0
    return FeatureTable(ws[:, 0] - ws[:, 1], z, tuple(features), ws)


def load_season(
    path: str | Path,
    projections: str | Path | Mapping[str, float] | None = None,
    features: Sequence[str] = ("home", "b2b"),
    *,
    special_sign: int = 1,
    reference: str | None = None,
) -> Dataset:
    """Ingest a bare match file and derive covariates with :func:`build_features`."""
    matches = read_matches(path)
    proj = read_projections(projections) if isinstance(projections, (str, Path)) else projections
    feats = build_features(matches, features, proj)
    return dataset_from_matches(
        matches, feats.schema.with_sign(special_sign), reference=reference, x0=feats.x0, z=feats.z
    )


# -- tables ------------------------------------------------------------------------


def write_table(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[object]], delimiter: str = ",") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def format_table(header: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
    """Aligned plain-text rendering (six significant digits)."""

    def cell(v: object) -> str:
        if isinstance(v, (float, np.floating)):
            return f"{float(v):.6g}"
        return fmt(v)

    body = [[cell(v) for v in row] for row in rows]
    widths = [max([len(h)] + [len(r[k]) for r in body]) for k, h in enumerate(header)]
    lines = ["  ".join(h.rjust(wd) for h, wd in zip(header, widths))]
    lines.append("  ".join("-" * wd for wd in widths))
    lines += ["  ".join(c.rjust(wd) for c, wd in zip(r, widths)) for r in body]
    return "\n".join(lines)


Table = tuple[list[str], list[list[object]]]


def estimates_table(report) -> Table:
    header = ["parameter", "estimate", "std_error", "ci_lower", "ci_upper", "p_value"]
    rows: list[list[object]] = []
    for k, name in enumerate(report.eta_names or [f"eta{k + 1}" for k in range(report.eta_hat.size)]):
        rows.append([name, report.eta_hat[k], report.se_eta[k], *report.ci_eta[k], report.p_eta[k]])
    labels = report.labels
    p_theta = report.p_theta
    for i in range(report.theta_hat.size):
        name = f"theta[{labels[i + 1]}]" if labels else f"theta{i + 1}"
        rows.append([name, report.theta_hat[i], report.se_theta[i], *report.ci_theta[i], p_theta[i]])
    return header, rows


def ranks_table(report) -> Table:
    full = report.theta_full
    labels = report.labels or tuple(str(k) for k in range(full.size))
    order = np.argsort(report.ranks, kind="stable")
    return ["rank", "item", "label", "theta"], [[report.ranks[i], i, labels[i], full[i]] for i in order]


def diagnostics_table(report) -> Table:
    d = report.diagnostics
    rows: list[list[object]] = [
        ["mode", d.mode],
        ["covariates", d.covariates],
        ["bandwidth", d.bandwidth if d.bandwidth is not None else "supplied-densities"],
        ["special_sign", report.special_sign],
        ["ci_level", report.ci_level],
        ["lambda_min", d.lambda_min],
        ["floor_hits", d.floor_hits],
        ["n_records", d.n_records],
        ["n_pairs", d.n_pairs],
        ["residual_dof", d.residual_dof],
        ["variance_unreliable", d.variance_unreliable],
        ["weighted", d.weighted],
        ["variance_note", d.variance_note],
    ]
    return ["key", "value"], rows


def criterion_table(selection) -> Table:
    return ["bandwidth", "criterion", "selected"], [
        [h, c, h == selection.bandwidth] for h, c in zip(selection.grid, selection.criterion)
    ]


def metrics_table(table) -> Table:
    return ["parameter", "truth", "bias", "sd", "cp"], [
        [r.parameter, r.truth, r.bias, r.sd, r.cp] for r in table.rows
    ]


def comparison_table(table) -> Table:
    return ["parameter", "truth", "semiparametric_bias", "mle_bias"], [
        [n, t, s, m] for n, t, s, m in zip(table.names, table.truth, table.semi_bias, table.mle_bias)
    ]


def qq_table(table) -> Table:
    return ["theoretical", "sample"], [[t, s] for t, s in zip(table.theoretical, table.sample)]


def sign_table(check) -> Table:
    rows = [
        [k + 1, check.edges[k], check.edges[k + 1], check.counts[k], check.win_rates[k]]
        for k in range(check.win_rates.size)
    ]
    return ["bucket", "lower", "upper", "count", "win_rate"], rows
