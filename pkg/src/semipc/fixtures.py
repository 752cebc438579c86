"""Deterministic synthetic basketball-style season used by examples and tests.

Thirty clubs play a double round robin plus one extra meeting inside each
conference.  Outcomes come from a threshold model in which the gap in the
previous month's win share enters with a negative coefficient, so the win
rate falls across buckets of that gap.  Preseason projections are invented
and labelled as such.
"""

from __future__ import annotations

import datetime as dt
from importlib import resources
from pathlib import Path

import numpy as np

from .io import MatchRow, build_features, write_table

EAST = (
    "Milwaukee Bucks", "Toronto Raptors", "Philadelphia 76ers", "Boston Celtics", "Indiana Pacers",
    "Orlando Magic", "Brooklyn Nets", "Detroit Pistons", "Miami Heat", "Charlotte Hornets",
    "Washington Wizards", "Atlanta Hawks", "Chicago Bulls", "Cleveland Cavaliers", "New York Knicks",
)
WEST = (
    "Golden State Warriors", "Denver Nuggets", "Houston Rockets", "Portland Trail Blazers", "Utah Jazz",
    "Oklahoma City Thunder", "San Antonio Spurs", "LA Clippers", "Sacramento Kings", "Los Angeles Lakers",
    "Minnesota Timberwolves", "New Orleans Pelicans", "Dallas Mavericks", "Memphis Grizzlies", "Phoenix Suns",
)
TEAMS = EAST + WEST
SEASON_START = dt.date(2018, 10, 16)
MATCH_FILE = "synthetic_season.csv"
PROJECTION_FILE = "synthetic_projections.csv"

WIN_SHARE_COEF = -2.0
HOME_EDGE = 0.1
B2B_PENALTY = 0.1


def _schedule(rng: np.random.Generator) -> list[tuple[dt.date, int, int]]:
    m = len(TEAMS)
    games = [(h, a) for h in range(m) for a in range(m) if h != a]
    for conf in (range(15), range(15, 30)):
        for x in conf:
            for y in conf:
                if x < y:
                    games.append((x, y) if (x + y) % 2 else (y, x))
    order = list(rng.permutation(len(games)))
    out = []
    day = SEASON_START
    while order:
        busy: set[int] = set()
        cap = int(rng.integers(4, 10))
        keep = []
        for g in order:
            h, a = games[g]
            if len(busy) < 2 * cap and h not in busy and a not in busy:
                busy.update((h, a))
                out.append((day, h, a))
            else:
                keep.append(g)
        order = keep
        day += dt.timedelta(days=1)
    return out


def synthetic_season(seed: int = 2018) -> tuple[list[MatchRow], dict[str, float]]:
    """Simulate one season month by month; returns the matches and the invented projections."""
    rng = np.random.default_rng(seed)
    strength = np.sort(rng.normal(0.0, 0.25, len(TEAMS)))[::-1]
    strength = strength[rng.permutation(len(TEAMS))]
    proj_raw = 0.5 + 0.25 * np.tanh(strength / 0.25) + rng.normal(0, 0.03, len(TEAMS))
    projections = {t: float(np.clip(round(p, 3), 0.15, 0.85)) for t, p in zip(TEAMS, proj_raw)}
    sched = _schedule(rng)
    months = sorted({(d.year, d.month) for d, _, _ in sched})
    played: list[MatchRow] = []
    for month in months:
        todo = [(d, h, a) for d, h, a in sched if (d.year, d.month) == month]
        blank = [MatchRow(d, TEAMS[h], TEAMS[a], 0) for d, h, a in todo]
        feats = build_features(played + blank, ("home", "b2b"), projections)
        x0 = feats.x0[len(played):]
        b2b = feats.z[len(played):, 1]
        for (d, h, a), x, zb in zip(todo, x0, b2b):
            index = strength[h] - strength[a] + WIN_SHARE_COEF * x + HOME_EDGE + B2B_PENALTY * (-zb)
            won = int(index > rng.standard_normal())
            played.append(MatchRow(d, TEAMS[h], TEAMS[a], won))
    return played, projections


def write_synthetic_season(directory: str | Path, seed: int = 2018) -> tuple[Path, Path]:
    directory = Path(directory)
    matches, proj = synthetic_season(seed)
    games = write_table(
        directory / MATCH_FILE,
        ["date", "home", "away", "home_won"],
        ([m.date.isoformat(), m.home, m.away, m.home_won] for m in matches),
    )
    projections = write_table(
        directory / PROJECTION_FILE,
        ["team", "projected_win_share", "source"],
        ([t, p, "synthetic"] for t, p in proj.items()),
    )
    return games, projections


def bundled(name: str) -> Path:
    """Path of a file shipped in the package data directory."""
    return Path(str(resources.files("semipc") / "data" / name))
