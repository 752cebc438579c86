"""Command-line front end: ``semipc <command> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ColumnSchema, DataError, Dataset
from .density import DEFAULT_FLOOR, select_bandwidth
from .estimator import fit, trend_sign_check
from .io import (
    Table,
    comparison_table,
    criterion_table,
    diagnostics_table,
    estimates_table,
    format_table,
    ingest,
    load_season,
    metrics_table,
    qq_table,
    ranks_table,
    sign_table,
    write_table,
)
from .simulation import NOISES, SimConfig, compare_estimators, qq_export, run_monte_carlo

log = logging.getLogger("semipc")


def parse_schema(text: str, special_sign: int = 1) -> ColumnSchema:
    """``"name:c,name:d"``; ``c`` marks a continuous covariate, ``d`` a discrete one."""
    names, mask = [], []
    for part in filter(None, (p.strip() for p in text.split(","))):
        name, _, kind = part.partition(":")
        kind = kind.strip().lower() or "c"
        if kind not in ("c", "d"):
            raise DataError(f"schema entry {part!r}: kind must be 'c' or 'd'")
        names.append(name.strip())
        mask.append(kind == "c")
    if not names:
        raise DataError("schema names no covariates")
    return ColumnSchema(tuple(mask), special_sign, tuple(names))


def read_config(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for k, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise DataError(f"{path}:{k}: expected key = value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _sign(text: str) -> int | str:
    t = text.strip().lower()
    if t == "auto":
        return "auto"
    if t in ("+1", "1"):
        return 1
    if t == "-1":
        return -1
    raise argparse.ArgumentTypeError(f"sign must be +1, -1 or auto, got {text!r}")


def _bandwidth(text: str) -> float | str:
    if str(text).strip().lower() == "auto":
        return "auto"
    h = float(text)
    if not h > 0:
        raise argparse.ArgumentTypeError("bandwidth must be positive")
    return h


def _bool(text: str | bool) -> bool:
    if isinstance(text, bool):
        return text
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="match file (date, home, away, home_won, ...)")
    p.add_argument("--schema", help="covariate columns, e.g. 'home:d,rest:c' (default: inferred)")
    p.add_argument("--special", default="x0", help="special regressor column (default x0)")
    p.add_argument("--sign", type=_sign, default=1, help="+1, -1 or auto (trend check)")
    p.add_argument("--reference", help="item mapped to index 0 (default: alphabetically first)")
    p.add_argument("--features", help="derive covariates from a bare match file, e.g. 'home,b2b'")
    p.add_argument("--projections", help="preseason win-share file used with --features")


def _sim_flags(p: argparse.ArgumentParser, reps: int) -> None:
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--T", type=int, default=3)
    p.add_argument("--noise", choices=NOISES, default="gauss")
    p.add_argument("--reps", type=int, default=reps)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sparse", type=_bool, nargs="?", const=True, default=False)
    p.add_argument("--bandwidth", type=_bandwidth, default="auto")
    p.add_argument("--floor", type=float, default=DEFAULT_FLOOR)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--covariates", choices=("pair", "record"), default="record")
    p.add_argument("--density", choices=("kernel", "oracle"), default="kernel")
    p.add_argument("--workers", type=int, default=1)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default="semipc-out", help="output directory")
    p.add_argument("--format", choices=("csv", "table"), default="csv")
    p.add_argument("--config", help="flat key = value file; command-line flags win")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semipc", description="Semiparametric paired-comparison ranking.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("fit", help="estimate merits and covariate effects")
    _data_flags(p)
    p.add_argument("--bandwidth", type=_bandwidth, default="auto")
    p.add_argument("--floor", type=float, default=DEFAULT_FLOOR)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--covariates", choices=("pair", "record"), default="pair")
    p.add_argument("--weighted", type=_bool, nargs="?", const=True, default=False)
    p.add_argument("--K", type=int, default=5, help="buckets for --sign auto")
    _common(p)

    p = sub.add_parser("bandwidth", help="bandwidth criterion trace")
    _data_flags(p)
    p.add_argument("--floor", type=float, default=DEFAULT_FLOOR)
    p.add_argument("--grid", help="comma-separated bandwidths (default: rate-based grid)")
    _common(p)

    p = sub.add_parser("sign-check", help="win rate across buckets of the special regressor")
    _data_flags(p)
    p.add_argument("--K", type=int, default=5)
    _common(p)

    p = sub.add_parser("simulate", help="Monte Carlo bias / SD / coverage table")
    _sim_flags(p, reps=100)
    _common(p)

    p = sub.add_parser("compare", help="semiparametric vs Bradley-Terry bias")
    _sim_flags(p, reps=100)
    p.set_defaults(T=1, n=100)
    _common(p)

    p = sub.add_parser("qq", help="quantile pairs of standardized estimates")
    _sim_flags(p, reps=100)
    p.add_argument("--param", default="eta1")
    _common(p)
    return parser


def _config_path(argv: Sequence[str]) -> str | None:
    for k, a in enumerate(argv):
        if a == "--config" and k + 1 < len(argv):
            return argv[k + 1]
        if a.startswith("--config="):
            return a.split("=", 1)[1]
    return None


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    """Config values become subcommand defaults, so explicit flags still win."""
    path = _config_path(argv)
    command = next((a for a in argv if a in COMMANDS), None)
    if path and command:
        sub = parser._subparsers._group_actions[0].choices[command]  # type: ignore[union-attr]
        known = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, value in read_config(path).items():
            if key not in known or key in ("help", "config"):
                raise DataError(f"{path}: unknown key {key!r} for {command}")
            action = known[key]
            try:
                defaults[key] = action.type(value) if action.type else value
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise DataError(f"{path}: bad value for {key}: {exc}") from None
            action.required = False
        sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _load(args: argparse.Namespace, sign: int = 1) -> Dataset:
    if args.features or args.projections:
        feats = tuple(f.strip() for f in (args.features or "home,b2b").split(",") if f.strip())
        return load_season(args.input, args.projections, feats, special_sign=sign, reference=args.reference)
    schema = parse_schema(args.schema, sign) if args.schema else None
    ds = ingest(args.input, schema, special=args.special, reference=args.reference)
    return ds if schema else ds.with_schema(ds.schema.with_sign(sign))


def _emit(args: argparse.Namespace, name: str, table: Table) -> Path:
    out = Path(args.out)
    header, rows = table
    if args.format == "csv":
        return write_table(out / f"{name}.csv", header, rows)
    path = out / f"{name}.txt"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_table(header, rows) + "\n", encoding="utf-8")
    return path


def _sim_config(args: argparse.Namespace) -> SimConfig:
    return SimConfig(
        n=args.n,
        T=args.T,
        noise=args.noise,
        reps=args.reps,
        seed=args.seed,
        sparse=args.sparse,
        bandwidth=args.bandwidth,
        floor=args.floor,
        level=args.level,
        covariates=args.covariates,
        density=args.density,
    )


def cmd_fit(args: argparse.Namespace) -> list[Path]:
    sign = args.sign
    written = []
    if sign == "auto":
        check = trend_sign_check(_load(args, 1), args.K)
        if check.low_confidence:
            warnings.warn("trend in win rates is weak; the chosen sign is a low-confidence guess", stacklevel=1)
        sign = check.sign
        written.append(_emit(args, "sign_check", sign_table(check)))
    ds = _load(args, sign)
    report = fit(
        ds,
        args.bandwidth,
        floor=args.floor,
        level=args.level,
        covariates=args.covariates,
        weighted=args.weighted,
    )
    written += [
        _emit(args, "estimates", estimates_table(report)),
        _emit(args, "ranks", ranks_table(report)),
        _emit(args, "diagnostics", diagnostics_table(report)),
    ]
    if report.diagnostics.bandwidth_selection is not None:
        written.append(_emit(args, "criterion", criterion_table(report.diagnostics.bandwidth_selection)))
    header, rows = estimates_table(report)
    print(format_table(header, rows[: report.eta_hat.size]))
    return written


def cmd_bandwidth(args: argparse.Namespace) -> list[Path]:
    ds = _load(args, 1 if args.sign == "auto" else args.sign)
    grid = [float(g) for g in args.grid.split(",")] if args.grid else None
    sel = select_bandwidth(ds, grid=grid, floor=args.floor)
    print(f"selected bandwidth {sel.bandwidth!r}")
    return [_emit(args, "criterion", criterion_table(sel))]


def cmd_sign_check(args: argparse.Namespace) -> list[Path]:
    check = trend_sign_check(_load(args, 1), args.K)
    print(f"recommended sign {check.sign:+d}" + (" (low confidence)" if check.low_confidence else ""))
    print("win rates " + " ".join(f"{w:.3f}" for w in check.win_rates))
    return [_emit(args, "sign_check", sign_table(check))]


def cmd_simulate(args: argparse.Namespace) -> list[Path]:
    res = run_monte_carlo(_sim_config(args), workers=args.workers)
    table = metrics_table(res.metrics())
    print(format_table(*table))
    return [_emit(args, "metrics", table)]


def cmd_compare(args: argparse.Namespace) -> list[Path]:
    table = comparison_table(compare_estimators(_sim_config(args), workers=args.workers))
    print(format_table(*table))
    return [_emit(args, "comparison", table)]


def cmd_qq(args: argparse.Namespace) -> list[Path]:
    res = run_monte_carlo(_sim_config(args), workers=args.workers)
    qq = qq_export(res, args.param)
    if qq.degenerate:
        log.warning("estimates of %s are constant; quantile pairs are degenerate", args.param)
    return [_emit(args, "qq", qq_table(qq))]


COMMANDS = {
    "fit": cmd_fit,
    "bandwidth": cmd_bandwidth,
    "sign-check": cmd_sign_check,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "qq": cmd_qq,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (DataError, OSError, ValueError) as exc:
        print(f"semipc: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        written = COMMANDS[args.command](args)
    except (DataError, OSError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"semipc: error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        log.info("wrote %s", path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
