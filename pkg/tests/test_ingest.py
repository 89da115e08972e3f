import logging

import numpy as np
import pandas as pd
import pytest

from playerval import synthetic
from playerval.ingest import (DATASET_COLUMNS, FEATURE_NAMES, TABLE_COLUMNS, Codebook, EncodingError,
                              IngestError, JoinError, ParseError, RawFeatureTable, SchemaError,
                              ValidationError, average_seasons, build_dataset, clean_players,
                              encode_categoricals, join_feature_tables, load_dataset, make_codebook,
                              read_raw_table, save_dataset)


def player_row(name, club, league="Premier League", pos="Defenders", minutes=900.0, gls=2.0,
               salary=50000.0, **overrides):
    row = {"PLAYER": name, "CLUB": club, "LEAGUE": league, "POS": pos, "CURRENT_AGE": 25,
           "STARTS": 10, "MIN": minutes, "GLS": gls, "AST": 1, "CRDY": 2, "CRDR": 0,
           "SH": 10, "SOT": 4, "G_SH": 0.2, "PASS_ATT": 300, "CMP": 240, "CMP_PER": 80.0,
           "TKLW": 5, "BLOCKS": 3, "INT": 4, "CLR": 6, "DRIBBLE_ATT": 10, "DRIBBLE_SUCC": 5,
           "DRIBBLE_SUCC_PER": 50.0, "CARRIES": 100, "TARG": 50, "REC": 40, "REC_PER": 80.0,
           "WEEKLY_GROSS": salary, "LEAGUE_RANK": 1, "UCL_RANK": None, "LEAGUECUP_RANK": 2}
    row.update(overrides)
    return row


def split_tables(rows, season="2021", skip=()):
    """Six per-kind tables for ``rows``; ``skip`` maps kind -> names to leave out."""
    tables = []
    for kind, cols in TABLE_COLUMNS.items():
        keep = [r for r in rows if r["PLAYER"] not in dict(skip).get(kind, ())]
        extra = ["LEAGUE"] if kind == "salary" else []
        frame = pd.DataFrame([{c: r[c] for c in ("PLAYER", "CLUB", *extra, *cols)} for r in keep],
                             columns=["PLAYER", "CLUB", *extra, *cols])
        tables.append(RawFeatureTable(kind, season, frame))
    return tables


class TestJoin:
    def test_all_columns_merged(self):
        merged = join_feature_tables(split_tables([player_row("A", "Arsenal")]), "2021")
        assert merged.n == 1
        for cols in TABLE_COLUMNS.values():
            assert set(cols) <= set(merged.frame.columns)
        assert merged.meta["join_dropped"] == 0

    def test_missing_salary_row_dropped(self):
        rows = [player_row("A", "Arsenal"), player_row("B", "Arsenal")]
        merged = join_feature_tables(split_tables(rows, skip={"salary": ["B"]}), "2021")
        assert merged.frame["PLAYER"].tolist() == ["A"]
        assert merged.meta["join_dropped"] == 1

    def test_same_name_different_clubs(self):
        rows = [player_row("Abdoulaye", "Lille", salary=88438.0),
                player_row("Abdoulaye", "Nantes", salary=88438.0)]
        merged = join_feature_tables(split_tables(rows), "2021")
        assert sorted(merged.frame["CLUB"]) == ["Lille", "Nantes"]

    def test_duplicate_key(self):
        rows = [player_row("A", "Arsenal"), player_row("A", "Arsenal")]
        with pytest.raises(JoinError, match="'A', 'Arsenal'"):
            join_feature_tables(split_tables(rows), "2021")

    def test_order_independent(self):
        rows = [player_row(n, c) for n, c in [("B", "Lyon"), ("A", "Arsenal"), ("C", "Arsenal")]]
        tables = split_tables(rows)
        a = join_feature_tables(tables, "2021").frame
        b = join_feature_tables(tables[::-1], "2021").frame
        pd.testing.assert_frame_equal(a, b)

    def test_requires_salary_and_one_season(self):
        tables = split_tables([player_row("A", "Arsenal")])
        with pytest.raises(JoinError):
            join_feature_tables(tables[:-1], "2021")
        other = split_tables([player_row("A", "Arsenal")], season="2022")
        with pytest.raises(JoinError):
            join_feature_tables(tables[:3] + other[3:], "2021")

    def test_permitted_columns(self):
        with pytest.raises(SchemaError):
            RawFeatureTable("shooting", "2021", pd.DataFrame({"PLAYER": ["A"], "CLUB": ["X"], "MIN": [1]}))
        with pytest.raises(SchemaError):
            RawFeatureTable("standard", "2021", pd.DataFrame({"PLAYER": [""], "CLUB": ["X"]}))


class TestClean:
    def merged(self, rows):
        return join_feature_tables(split_tables(rows), "2021")

    def test_minutes_boundary(self):
        out = clean_players(self.merged([player_row("A", "X", minutes=90), player_row("B", "X", minutes=91)]))
        assert out.frame["PLAYER"].tolist() == ["B"]
        assert out.meta["minutes_dropped"] == 1

    def test_all_zero_minutes_warns(self, caplog):
        with caplog.at_level(logging.WARNING):
            out = clean_players(self.merged([player_row("A", "X", minutes=0)]))
        assert out.n == 0
        assert "90 minutes" in caplog.text

    def test_idempotent(self):
        once = clean_players(self.merged([player_row("A", "X"), player_row("B", "X", minutes=10)]))
        twice = clean_players(once)
        pd.testing.assert_frame_equal(once.frame, twice.frame)

    def test_missing_min_column(self):
        table = RawFeatureTable("merged", "2021", pd.DataFrame({"PLAYER": ["A"], "CLUB": ["X"]}))
        with pytest.raises(SchemaError):
            clean_players(table)

    def test_drops_helper_columns_and_derives_ratios(self):
        rows = [player_row("A", "X", SH=0, GLS=0)]
        merged = self.merged(rows)
        merged.frame = merged.frame.drop(columns="G_SH")
        out = clean_players(merged).frame
        assert "SH" not in out.columns and "CMP" not in out.columns
        assert out["G_SH"].tolist() == [0.0]

    def test_missing_numeric_cell_is_zero(self, caplog):
        merged = self.merged([player_row("A", "X", AST=None)])
        with caplog.at_level(logging.WARNING):
            out = clean_players(merged).frame
        assert out["AST"].tolist() == [0.0]
        assert "AST" in caplog.text


class TestEncode:
    def frame(self, clubs, pos="Defenders", league="Premier League"):
        return RawFeatureTable("cleaned", "2021", pd.DataFrame(
            {"PLAYER": [f"p{i}" for i in range(len(clubs))], "CLUB": clubs,
             "POS": pos, "LEAGUE": league}))

    def test_codes(self):
        out, book = encode_categoricals(self.frame(["AC Milan", "Zenit"], league="Series A"))
        assert out.frame["POS_NUM"].tolist() == [1, 1]
        assert out.frame["CLUB_NUM"].tolist() == [1, 2]
        assert out.frame["LEAGUE_NUM"].tolist() == [5, 5]

    def test_alphabetical_clubs(self):
        _, book = encode_categoricals(self.frame(["Arsenal", "Alaves", "Angers"]))
        assert book.clubs == {"Alaves": 1, "Angers": 2, "Arsenal": 3}

    def test_goalkeeper_rejected(self):
        with pytest.raises(EncodingError, match="Goalkeeper"):
            encode_categoricals(self.frame(["X"], pos="Goalkeeper"))

    def test_unknown_league(self):
        with pytest.raises(EncodingError, match="Eredivisie"):
            encode_categoricals(self.frame(["X"], league="Eredivisie"))

    def test_round_trip(self):
        labels = ["Strikes", "Defenders", "Midfields"]
        book = Codebook()
        assert book.decode("position", book.encode("position", labels)) == labels

    def test_custom_codebook(self, tmp_path):
        path = tmp_path / "pos.csv"
        path.write_text("label,code\nGoalkeeper,4\nDefenders,1\n")
        book = make_codebook(positions=path)
        assert book.encode("position", ["Goalkeeper"]).tolist() == [4]


class TestAverage:
    def season(self, label, rows):
        merged = join_feature_tables(split_tables(rows, season=label), label)
        return clean_players(merged)

    def test_mean_over_three_seasons(self):
        seasons = [self.season(s, [player_row("A", "X", gls=g)]) for s, g in
                   (("2019", 4), ("2020", 6), ("2021", 8))]
        book = Codebook().with_clubs(["X"])
        ds = average_seasons([encode_categoricals(t, book)[0] for t in seasons])
        assert ds.n == 1 and ds.column("Gls")[0] == 6.0

    def test_latest_club_wins(self):
        seasons = [self.season("2019", [player_row("A", "Arsenal", salary=100)]),
                   self.season("2020", [player_row("A", "Bayern", league="Bundesliga", salary=300)])]
        book = Codebook().with_clubs(["Arsenal", "Bayern"])
        ds = average_seasons([encode_categoricals(t, book)[0] for t in seasons[::-1]])
        assert ds.clubs == ("Bayern",) and ds.club_code.tolist() == [2]
        assert ds.league_code.tolist() == [2] and ds.y.tolist() == [200.0]

    def test_identical_copies(self):
        rows = [player_row("A", "X", gls=3), player_row("B", "Y", gls=1, minutes=500)]
        one = encode_categoricals(self.season("2021", rows))[0]
        copies = [RawFeatureTable("encoded", s, one.frame, {}) for s in ("2019", "2020", "2021")]
        a, b = average_seasons([one]), average_seasons(copies)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.y, b.y)

    def test_empty(self):
        with pytest.raises(IngestError):
            average_seasons([])

    def test_grade_feature(self):
        ds, _ = build_dataset(split_tables([player_row("A", "X")]))
        assert ds.column("grade_value")[0] == 4.5 + 0.5
        assert ds.feature_names == FEATURE_NAMES


class TestLoad:
    def test_fixture(self, fixture30):
        assert fixture30.n == 30 and fixture30.features.shape == (30, 24)
        assert fixture30.league_count <= 5 and fixture30.club_count <= 98

    def test_round_trip(self, tmp_path, players300):
        save_dataset(players300, tmp_path / "d.csv")
        back = load_dataset(tmp_path / "d.csv")
        np.testing.assert_allclose(back.features, players300.features, rtol=1e-15)
        np.testing.assert_array_equal(back.y, players300.y)

    def write(self, tmp_path, lines):
        path = tmp_path / "in.csv"
        path.write_text("\n".join([",".join(DATASET_COLUMNS)] + lines) + "\n")
        return path

    def row(self, **kw):
        values = {c: "1" for c in DATASET_COLUMNS}
        values.update(PLAYER="A", CLUB="Arsenal", LEAGUE="Premier League", POS="Defenders",
                      MIN="500", CMP_PER="50", UCL_RANK="", WEEKLY_GROSS="1000")
        values.update(kw)
        return ",".join(values[c] for c in DATASET_COLUMNS)

    def test_ranks_to_grade(self, tmp_path):
        ds = load_dataset(self.write(tmp_path, [self.row()]))
        assert ds.column("grade_value")[0] == 5.5

    def test_parse_error_has_line_number(self, tmp_path):
        path = self.write(tmp_path, [self.row(), self.row(PLAYER="B", GLS="lots")])
        with pytest.raises(ParseError, match=r"in\.csv:3: column GLS"):
            load_dataset(path)

    def test_field_count(self, tmp_path):
        with pytest.raises(ParseError, match=":2:"):
            load_dataset(self.write(tmp_path, ["A,B"]))

    def test_header(self, tmp_path):
        path = tmp_path / "in.csv"
        path.write_text("PLAYER,CLUB\nA,B\n")
        with pytest.raises(ParseError, match="header"):
            load_dataset(path)

    def test_validation_names_record(self, tmp_path):
        with pytest.raises(ValidationError, match="'Bob'"):
            load_dataset(self.write(tmp_path, [self.row(PLAYER="Bob", CMP_PER="140")]))
        with pytest.raises(ValidationError, match="'Ann'"):
            load_dataset(self.write(tmp_path, [self.row(PLAYER="Ann", MIN="90")]))

    def test_bad_rank(self, tmp_path):
        with pytest.raises(ValidationError):
            load_dataset(self.write(tmp_path, [self.row(LEAGUE_RANK="0")]))


def test_read_raw_table_case_insensitive(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text("player,club,sh,sot,g_sh\nA , X,3,1,0.3\n")
    t = read_raw_table(path, "shooting", "2021")
    assert t.frame["PLAYER"].tolist() == ["A"] and "SOT" in t.frame.columns
    with pytest.raises(SchemaError):
        read_raw_table(path, "keeping", "2021")


def test_synthetic_players_validate(players300):
    players300.validate()
    assert players300.club_count == 20
