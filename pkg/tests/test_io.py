import datetime as dt

import numpy as np
import pytest

from semipc.core import ColumnSchema, DataError
from semipc.fixtures import MATCH_FILE, PROJECTION_FILE, bundled, write_synthetic_season
from semipc.io import (
    build_features,
    dataset_from_matches,
    emit_dataset,
    fmt,
    format_table,
    ingest,
    load_season,
    read_matches,
    read_projections,
)


def write(tmp_path, text, name="m.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_two_rows(tmp_path):
    p = write(tmp_path, "date,home,away,home_won,x0\n2020-01-01,a,b,1,0.5\n2020-01-02,b,a,0,-0.2\n")
    ds = ingest(p, ColumnSchema(()))
    assert ds.n_records == 2 and ds.n_items == 2
    assert ds.labels == ("a", "b")
    # second row is stored mirrored: a beat b, x0 flipped
    np.testing.assert_array_equal(ds.outcome, [1, 1])
    np.testing.assert_allclose(ds.x0, [0.5, 0.2])


def test_repeat_meetings_get_successive_occasions(tmp_path):
    p = write(
        tmp_path,
        "date,home,away,home_won,x0\n2020-01-05,a,b,1,1\n2020-01-01,b,a,1,2\n2020-01-03,a,c,0,3\n",
    )
    ds = ingest(p, ColumnSchema(()))
    ab = (ds.head == 0) & (ds.tail == 1)
    order = np.argsort(ds.occasion[ab])
    np.testing.assert_array_equal(ds.occasion[ab][order], [1, 2])
    # the earlier date is occasion 1
    assert ds.x0[ab][order][0] == -2


def test_semicolon_delimiter(tmp_path):
    p = write(tmp_path, "date;home;away;home_won;x0;z1\n2020-01-01;a;b;1;0.5;1\n")
    ds = ingest(p)
    assert ds.schema.p == 1 and not ds.schema.continuous_mask[0]


def test_empty_file(tmp_path):
    with pytest.raises(DataError, match="empty"):
        read_matches(write(tmp_path, ""))
    with pytest.raises(DataError, match="empty"):
        read_matches(write(tmp_path, "date,home,away,home_won\n"))


@pytest.mark.parametrize(
    "row, message",
    [
        ("2020-13-01,a,b,1", "date"),
        ("2020-01-01,a,a,1", "itself"),
        ("2020-01-01,a,b,2", "home_won"),
        ("2020-01-01,a,,1", "empty item"),
    ],
)
def test_malformed_row_reports_line(tmp_path, row, message):
    p = write(tmp_path, f"date,home,away,home_won\n2020-01-01,a,b,1\n{row}\n")
    with pytest.raises(DataError, match=rf":3: .*{message}"):
        read_matches(p)


def test_missing_header_column(tmp_path):
    with pytest.raises(DataError, match="home_won"):
        read_matches(write(tmp_path, "date,home,away\n2020-01-01,a,b\n"))


def test_round_trip(tmp_path, rng):
    from conftest import random_dataset

    ds = random_dataset(rng, 5, T=2, p=2, continuous=(True, False))
    ds = ds.__class__.from_arrays(
        ds.n_items, ds.schema, ds.head, ds.tail, ds.outcome, ds.x0, ds.z, ds.occasion,
        labels=[f"team{k}" for k in range(ds.n_items)],
    )
    path = emit_dataset(ds, tmp_path / "out.csv")
    back = ingest(path, ds.schema, labels=ds.labels)
    key = lambda d: np.lexsort((d.occasion, d.tail, d.head))
    a, b = key(ds), key(back)
    for f in ("head", "tail", "occasion", "outcome", "x0", "z"):
        np.testing.assert_array_equal(getattr(ds, f)[a], getattr(back, f)[b])


def test_fmt_is_full_precision():
    assert float(fmt(0.1 + 0.2)) == 0.1 + 0.2
    assert fmt(True) == "1" and fmt(np.int64(3)) == "3"
    assert "0.333333" in format_table(["v"], [[1 / 3]])


def test_explicit_reference(tmp_path):
    p = write(tmp_path, "date,home,away,home_won,x0\n2020-01-01,a,b,1,0\n2020-01-02,c,b,1,0\n")
    ds = ingest(p, ColumnSchema(()), reference="c")
    assert ds.labels == ("c", "a", "b")
    with pytest.raises(DataError):
        ingest(p, ColumnSchema(()), reference="zz")


# Three sides over four months.  Jan win shares: A 1, B 0, C 0.5.  Feb: A 0,
# B 0.5, C 1.  Mar: A 0, B 1.  C sits out March, so in April it still uses Feb.
SEASON = """date,home,away,home_won
2019-01-05,A,B,1
2019-01-06,C,B,1
2019-01-07,A,C,1
2019-02-03,B,A,1
2019-02-04,C,B,1
2019-03-01,A,B,0
2019-04-02,C,A,1
"""
PROJ = "team,projected_win_share\n# preseason guesses\nA,0.6\nB,0.4\nC,0.5\n"


def test_win_share_feature_by_hand(tmp_path):
    matches = read_matches(write(tmp_path, SEASON))
    feats = build_features(matches, ("home", "b2b"), read_projections(write(tmp_path, PROJ, "p.csv")))
    np.testing.assert_allclose(feats.x0, [0.2, 0.1, 0.1, -1.0, 0.5, -0.5, 1.0])
    np.testing.assert_array_equal(feats.z[:, 0], 1.0)
    np.testing.assert_array_equal(feats.z[:, 1], [0, -1, 0, 0, 0, 0, 0])


def test_home_flag_flips_with_orientation(tmp_path):
    ds = load_season(write(tmp_path, SEASON), write(tmp_path, PROJ, "p.csv"))
    assert ds.labels == ("A", "B", "C")
    # records are date-sorted; the fourth game had B at home against A
    assert ds.z[0, 0] == 1.0 and ds.z[3, 0] == -1.0
    assert ds.x0[3] == 1.0 and ds.outcome[3] == 0


def test_projections_required(tmp_path):
    season = write(tmp_path, SEASON)
    with pytest.raises(DataError, match="projections"):
        load_season(season)
    with pytest.raises(DataError, match="does not exist"):
        load_season(season, tmp_path / "nope.csv")
    with pytest.raises(DataError, match="no projected"):
        load_season(season, {"A": 0.5, "B": 0.5})


def test_unknown_feature(tmp_path):
    with pytest.raises(ValueError):
        build_features(read_matches(write(tmp_path, SEASON)), ("travel",), {})


def test_bundled_fixture_regenerates(tmp_path):
    games, proj = write_synthetic_season(tmp_path)
    assert games.read_bytes() == bundled(MATCH_FILE).read_bytes()
    assert proj.read_bytes() == bundled(PROJECTION_FILE).read_bytes()


def test_bundled_fixture_shape():
    ds = load_season(bundled(MATCH_FILE), bundled(PROJECTION_FILE))
    assert ds.n_items == 30 and ds.n_records == 1080 and ds.is_complete
    assert ds.schema.column_names() == ("home", "b2b")
    assert not any(ds.schema.continuous_mask)
    first = min(m.date for m in read_matches(bundled(MATCH_FILE)))
    assert first == dt.date(2018, 10, 16)
