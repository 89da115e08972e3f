"""Loading, joining, cleaning, encoding and season-averaging of player tables."""
from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass, field, replace as dc_replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .achievement import grades_from_columns

logger = logging.getLogger(__name__)

FEATURE_NAMES = (
    "Current_Age", "POS", "grade_value", "Starts", "Min", "Gls", "Ast", "CrdY",
    "CrdR", "SoT", "G_Sh", "Pass_Att", "Cmp_per", "TklW", "Blocks", "Int", "Clr",
    "Dribble_Att", "Dribble_Succ_per", "Carries", "Targ", "Rec_per",
    "League_num", "Club_num",
)
PERCENT_FEATURES = ("Cmp_per", "Dribble_Succ_per", "Rec_per")
MIN_MINUTES = 90

# upper-case CSV column -> model feature name, for the plain numeric columns
NUMERIC_COLUMNS = {
    "CURRENT_AGE": "Current_Age", "STARTS": "Starts", "MIN": "Min", "GLS": "Gls",
    "AST": "Ast", "CRDY": "CrdY", "CRDR": "CrdR", "SOT": "SoT", "G_SH": "G_Sh",
    "PASS_ATT": "Pass_Att", "CMP_PER": "Cmp_per", "TKLW": "TklW", "BLOCKS": "Blocks",
    "INT": "Int", "CLR": "Clr", "DRIBBLE_ATT": "Dribble_Att",
    "DRIBBLE_SUCC_PER": "Dribble_Succ_per", "CARRIES": "Carries", "TARG": "Targ",
    "REC_PER": "Rec_per",
}
RANK_COLUMNS = ("LEAGUE_RANK", "UCL_RANK", "LEAGUECUP_RANK")
DATASET_COLUMNS = (
    "PLAYER", "CLUB", "LEAGUE", "POS", "CURRENT_AGE", "STARTS", "MIN", "GLS", "AST",
    "CRDY", "CRDR", "SOT", "G_SH", "PASS_ATT", "CMP_PER", "TKLW", "BLOCKS", "INT",
    "CLR", "DRIBBLE_ATT", "DRIBBLE_SUCC_PER", "CARRIES", "TARG", "REC_PER",
    "LEAGUE_RANK", "UCL_RANK", "LEAGUECUP_RANK", "WEEKLY_GROSS",
)
GRADE_COLUMN = "GRADE_VALUE"

KEY_COLUMNS = ("PLAYER", "CLUB")
TABLE_COLUMNS = {
    "standard": ("POS", "CURRENT_AGE", "STARTS", "MIN", "GLS", "AST", "CRDY", "CRDR"),
    "shooting": ("SH", "SOT", "G_SH"),
    "passing": ("PASS_ATT", "CMP", "CMP_PER"),
    "defensive": ("TKLW", "BLOCKS", "INT", "CLR"),
    "possession": (
        "DRIBBLE_ATT", "DRIBBLE_SUCC", "DRIBBLE_SUCC_PER", "CARRIES", "TARG", "REC",
        "REC_PER",
    ),
    "salary": ("WEEKLY_GROSS",) + RANK_COLUMNS,
}
TABLE_KINDS = tuple(TABLE_COLUMNS)
# (ratio column, numerator, denominator, scale)
RATIO_RULES = (
    ("G_SH", "GLS", "SH", 1.0),
    ("CMP_PER", "CMP", "PASS_ATT", 100.0),
    ("DRIBBLE_SUCC_PER", "DRIBBLE_SUCC", "DRIBBLE_ATT", 100.0),
    ("REC_PER", "REC", "TARG", 100.0),
)
CLEAN_COLUMNS = KEY_COLUMNS + ("LEAGUE", "POS") + tuple(NUMERIC_COLUMNS) + RANK_COLUMNS + (
    "WEEKLY_GROSS",
)

DEFAULT_POSITIONS = {"Defenders": 1, "Midfields": 2, "Strikes": 3}
DEFAULT_LEAGUES = {
    "Premier League": 1, "Bundesliga": 2, "La Liga": 3, "League 1": 4, "Series A": 5,
}
# common spellings in exported data; they resolve to the same codes
POSITION_ALIASES = {
    "DF": "Defenders", "Defender": "Defenders", "MF": "Midfields",
    "Midfielder": "Midfields", "Midfielders": "Midfields", "FW": "Strikes",
    "Striker": "Strikes", "Strikers": "Strikes", "Forward": "Strikes",
    "Forwards": "Strikes",
}
LEAGUE_ALIASES = {"Ligue 1": "League 1", "Serie A": "Series A", "LaLiga": "La Liga"}


class IngestError(ValueError):
    """Base class for input problems."""


class JoinError(IngestError):
    pass


class SchemaError(IngestError):
    pass


class EncodingError(IngestError):
    pass


class ParseError(IngestError):
    pass


class ValidationError(IngestError):
    pass


@dataclass
class RawFeatureTable:
    """One exported table (or a merged/cleaned/encoded derivative of them).

    ``frame`` always carries the ``PLAYER`` and ``CLUB`` key columns; the
    permitted value columns depend on ``kind``.  ``meta`` collects provenance
    counters (join losses, filter drops).
    """

    kind: str
    season: str
    frame: pd.DataFrame
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for col in KEY_COLUMNS:
            if col not in self.frame.columns:
                raise SchemaError(f"{self.kind} table for {self.season} lacks column {col}")
        names = self.frame["PLAYER"]
        if names.isna().any() or (names.astype(str).str.strip() == "").any():
            raise SchemaError(f"{self.kind} table for {self.season} has an empty PLAYER")
        if self.kind in TABLE_COLUMNS:
            allowed = set(KEY_COLUMNS) | {"LEAGUE"} | set(TABLE_COLUMNS[self.kind])
            extra = [c for c in self.frame.columns if c not in allowed]
            if extra:
                raise SchemaError(f"columns {extra} not permitted in a {self.kind} table")

    @property
    def n(self) -> int:
        return len(self.frame)


@dataclass(frozen=True)
class PlayerRecord:
    player_name: str
    club_code: int
    league_code: int
    position_code: int
    features: tuple
    weekly_gross: float


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-oriented player table feeding both models."""

    players: tuple
    clubs: tuple
    leagues: tuple
    positions: tuple
    features: np.ndarray
    feature_names: tuple
    y: np.ndarray
    club_code: np.ndarray
    league_code: np.ndarray
    position_code: np.ndarray

    def __post_init__(self):
        n = len(self.y)
        if self.features.shape != (n, len(self.feature_names)):
            raise ValueError(
                f"features shape {self.features.shape} does not match "
                f"{n} rows x {len(self.feature_names)} names"
            )
        for name in ("players", "clubs", "leagues", "positions"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has wrong length")
        for name in ("club_code", "league_code", "position_code"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has wrong length")

    @classmethod
    def from_arrays(
        cls,
        X,
        y,
        feature_names: Sequence[str] | None = None,
        *,
        players: Sequence[str] | None = None,
        club_code=None,
        league_code=None,
        position_code=None,
        clubs: Sequence[str] | None = None,
        leagues: Sequence[str] | None = None,
        positions: Sequence[str] | None = None,
    ) -> "Dataset":
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(y, dtype=float)
        n, p = X.shape
        if feature_names is None:
            feature_names = [f"x{j}" for j in range(p)]
        ones = np.ones(n, dtype=np.int64)
        club_code = ones if club_code is None else np.asarray(club_code, dtype=np.int64)
        league_code = ones if league_code is None else np.asarray(league_code, dtype=np.int64)
        position_code = (
            ones if position_code is None else np.asarray(position_code, dtype=np.int64)
        )
        return cls(
            players=tuple(players) if players is not None else tuple(f"p{i}" for i in range(n)),
            clubs=tuple(clubs) if clubs is not None else tuple(f"club{c}" for c in club_code),
            leagues=tuple(leagues) if leagues is not None else tuple(f"league{c}" for c in league_code),
            positions=tuple(positions) if positions is not None else tuple(str(c) for c in position_code),
            features=X,
            feature_names=tuple(feature_names),
            y=y,
            club_code=club_code,
            league_code=league_code,
            position_code=position_code,
        )

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def X(self) -> np.ndarray:
        return self.features

    @property
    def club_count(self) -> int:
        return len(np.unique(self.club_code))

    @property
    def league_count(self) -> int:
        return len(np.unique(self.league_code))

    def column(self, name: str) -> np.ndarray:
        try:
            return self.features[:, self.feature_names.index(name)]
        except ValueError:
            raise KeyError(f"no feature named {name!r}") from None

    @property
    def records(self) -> list[PlayerRecord]:
        return [
            PlayerRecord(
                self.players[i], int(self.club_code[i]), int(self.league_code[i]),
                int(self.position_code[i]), tuple(float(v) for v in self.features[i]),
                float(self.y[i]),
            )
            for i in range(self.n)
        ]

    def replace(self, **changes) -> "Dataset":
        return dc_replace(self, **changes)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.intp)
        pick = lambda seq: tuple(seq[i] for i in idx)  # noqa: E731
        return Dataset(
            players=pick(self.players), clubs=pick(self.clubs), leagues=pick(self.leagues),
            positions=pick(self.positions), features=self.features[idx],
            feature_names=self.feature_names, y=self.y[idx],
            club_code=self.club_code[idx], league_code=self.league_code[idx],
            position_code=self.position_code[idx],
        )

    def validate(self) -> None:
        """Check the invariants of a full 24-feature player dataset."""
        if tuple(self.feature_names) != FEATURE_NAMES:
            raise ValidationError("feature ordering differs from the 24-feature layout")
        minutes = self.column("Min")
        for i in np.flatnonzero(~(minutes > MIN_MINUTES)):
            raise ValidationError(
                f"record {self.players[i]!r} ({self.clubs[i]}): Min={minutes[i]:g} "
                f"does not exceed {MIN_MINUTES}"
            )
        for name in PERCENT_FEATURES:
            col = self.column(name)
            for i in np.flatnonzero((col < 0) | (col > 100)):
                raise ValidationError(
                    f"record {self.players[i]!r} ({self.clubs[i]}): {name}={col[i]:g} "
                    "outside [0, 100]"
                )
        if not np.all(np.isfinite(self.features)) or not np.all(np.isfinite(self.y)):
            raise ValidationError("non-finite value in dataset")
        for i in np.flatnonzero((self.club_code < 1) | (self.league_code < 1) | (self.position_code < 1)):
            raise ValidationError(f"record {self.players[i]!r}: category codes must be >= 1")


# --------------------------------------------------------------------------
# codebook


@dataclass
class Codebook:
    """Label -> code maps for positions, leagues and clubs."""

    positions: dict = field(default_factory=lambda: dict(DEFAULT_POSITIONS))
    leagues: dict = field(default_factory=lambda: dict(DEFAULT_LEAGUES))
    clubs: dict = field(default_factory=dict)
    position_aliases: dict = field(default_factory=lambda: dict(POSITION_ALIASES))
    league_aliases: dict = field(default_factory=lambda: dict(LEAGUE_ALIASES))

    def _lookup(self, kind: str, label) -> int:
        text = str(label).strip()
        if kind == "position":
            # exports sometimes list several positions ("DF,MF"); the first one wins
            text = text.split(",")[0].strip()
            table, aliases = self.positions, self.position_aliases
        elif kind == "league":
            table, aliases = self.leagues, self.league_aliases
        elif kind == "club":
            table, aliases = self.clubs, {}
        else:
            raise ValueError(kind)
        if text in table:
            return table[text]
        if aliases.get(text) in table:
            return table[aliases[text]]
        raise EncodingError(f"unknown {kind} label {text!r}")

    def encode(self, kind: str, labels: Iterable) -> np.ndarray:
        codes, unknown = [], []
        for label in labels:
            try:
                codes.append(self._lookup(kind, label))
            except EncodingError:
                unknown.append(str(label))
        if unknown:
            raise EncodingError(f"unknown {kind} label(s): {sorted(set(unknown))}")
        return np.array(codes, dtype=np.int64)

    def decode(self, kind: str, codes: Iterable[int]) -> list[str]:
        table = {"position": self.positions, "league": self.leagues, "club": self.clubs}[kind]
        inverse = {v: k for k, v in table.items()}
        return [inverse[int(c)] for c in codes]

    def with_clubs(self, club_names: Iterable[str]) -> "Codebook":
        """Copy with clubs numbered 1..N in alphabetical order."""
        names = sorted(set(str(c).strip() for c in club_names), key=lambda s: (s.casefold(), s))
        return dc_replace(self, clubs={name: i + 1 for i, name in enumerate(names)})


def load_codebook(path) -> dict:
    """Read a two-column ``label,code`` CSV into a dict."""
    mapping = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 2:
                raise ParseError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            label, code = row[0].strip(), row[1].strip()
            if lineno == 1 and label.lower() == "label" and code.lower() == "code":
                continue
            try:
                value = int(code)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: code {code!r} is not an integer") from None
            if value < 1:
                raise ParseError(f"{path}:{lineno}: code must be positive")
            mapping[label] = value
    return mapping


def make_codebook(positions=None, leagues=None) -> Codebook:
    """Codebook with optional replacement position/league maps (dicts or CSV paths)."""
    book = Codebook()
    if positions is not None:
        book.positions = dict(load_codebook(positions) if isinstance(positions, (str, Path)) else positions)
        book.position_aliases = {}
    if leagues is not None:
        book.leagues = dict(load_codebook(leagues) if isinstance(leagues, (str, Path)) else leagues)
        book.league_aliases = {}
    return book


# --------------------------------------------------------------------------
# table pipeline


def read_raw_table(path, kind: str, season: str) -> RawFeatureTable:
    """Read one exported CSV; column names are matched case-insensitively."""
    if kind not in TABLE_KINDS:
        raise SchemaError(f"unknown table kind {kind!r}; expected one of {TABLE_KINDS}")
    frame = pd.read_csv(path, dtype={"PLAYER": str, "CLUB": str})
    frame.columns = [str(c).strip().upper() for c in frame.columns]
    for col in KEY_COLUMNS:
        if col in frame.columns:
            frame[col] = frame[col].astype(str).str.strip()
    return RawFeatureTable(kind, str(season), frame)


def _column_order(columns) -> list[str]:
    known = list(KEY_COLUMNS) + ["LEAGUE"]
    for kind in TABLE_KINDS:
        known += [c for c in TABLE_COLUMNS[kind] if c not in known]
    rest = sorted(c for c in columns if c not in known)
    return [c for c in known if c in columns] + rest


def join_feature_tables(tables: Sequence[RawFeatureTable], season: str) -> RawFeatureTable:
    """Inner-join one season's tables on ``(PLAYER, CLUB)``.

    The result is independent of the order of ``tables``: columns follow a
    fixed canonical order and rows are sorted by key.  ``meta["join_dropped"]``
    counts players missing from at least one table.
    """
    if not tables:
        raise JoinError("no tables to join")
    seasons = {t.season for t in tables}
    if seasons != {str(season)}:
        raise JoinError(f"tables span seasons {sorted(seasons)}, expected {season!r}")
    kinds = [t.kind for t in tables]
    if "salary" not in kinds:
        raise JoinError(f"season {season}: salary table missing")
    if len(set(kinds)) != len(kinds):
        raise JoinError(f"season {season}: duplicate table kinds {kinds}")

    keysets = []
    frames = []
    for t in sorted(tables, key=lambda t: TABLE_KINDS.index(t.kind) if t.kind in TABLE_KINDS else 99):
        dup = t.frame.duplicated(list(KEY_COLUMNS), keep=False)
        if dup.any():
            row = t.frame.loc[dup].iloc[0]
            raise JoinError(
                f"{t.kind} table ({season}) lists key ({row['PLAYER']!r}, {row['CLUB']!r}) "
                "more than once"
            )
        frame = t.frame
        if t.kind != "salary" and "LEAGUE" in frame.columns:
            frame = frame.drop(columns="LEAGUE")
        keysets.append(set(zip(frame["PLAYER"], frame["CLUB"])))
        frames.append(frame)

    merged = frames[0]
    for frame in frames[1:]:
        overlap = (set(merged.columns) & set(frame.columns)) - set(KEY_COLUMNS)
        if overlap:
            raise JoinError(f"column(s) {sorted(overlap)} supplied by more than one table")
        merged = merged.merge(frame, on=list(KEY_COLUMNS), how="inner")
    union = set().union(*keysets)
    dropped = len(union) - len(merged)
    merged = merged[_column_order(merged.columns)]
    merged = merged.sort_values(list(KEY_COLUMNS), kind="mergesort").reset_index(drop=True)
    if dropped:
        logger.info("season %s: %d player(s) missing from at least one table", season, dropped)
    return RawFeatureTable("merged", str(season), merged, {"join_dropped": dropped})


def _derive_ratios(frame: pd.DataFrame) -> pd.DataFrame:
    frame = frame.copy()
    for target, num, den, scale in RATIO_RULES:
        if target in frame.columns or num not in frame.columns or den not in frame.columns:
            continue
        numer = pd.to_numeric(frame[num], errors="coerce").fillna(0.0).to_numpy(float)
        denom = pd.to_numeric(frame[den], errors="coerce").fillna(0.0).to_numpy(float)
        out = np.zeros(len(frame))
        ok = denom != 0
        out[ok] = scale * numer[ok] / denom[ok]
        frame[target] = out
    return frame


def clean_players(table: RawFeatureTable) -> RawFeatureTable:
    """Keep players with more than 90 minutes and only the modelling columns.

    Ratio columns missing from the export are derived from their counts
    (zero denominators give 0).  Missing numeric cells become 0 and are logged.
    """
    frame = table.frame
    if "MIN" not in frame.columns:
        raise SchemaError(f"season {table.season}: table has no MIN column")
    frame = _derive_ratios(frame)
    keep = [c for c in CLEAN_COLUMNS if c in frame.columns]
    frame = frame[keep].copy()
    for col in NUMERIC_COLUMNS:
        if col not in frame.columns:
            continue
        values = pd.to_numeric(frame[col], errors="coerce")
        n_missing = int(values.isna().sum())
        if n_missing:
            logger.warning("season %s: %d missing %s value(s) set to 0", table.season, n_missing, col)
        frame[col] = values.fillna(0.0).astype(float)
    before = len(frame)
    frame = frame[frame["MIN"] > MIN_MINUTES].reset_index(drop=True)
    dropped = before - len(frame)
    if len(frame) == 0:
        logger.warning("season %s: no player exceeds %d minutes", table.season, MIN_MINUTES)
    meta = dict(table.meta)
    meta["minutes_dropped"] = meta.get("minutes_dropped", 0) + dropped
    return RawFeatureTable("cleaned", table.season, frame, meta)


def encode_categoricals(
    table: RawFeatureTable, codebook: Codebook | None = None
) -> tuple[RawFeatureTable, Codebook]:
    """Add integer ``POS_NUM``, ``LEAGUE_NUM`` and ``CLUB_NUM`` columns.

    Without a codebook the default position/league maps are used and clubs are
    numbered alphabetically over this table.  A codebook that already has
    clubs is used as is, which keeps codes consistent across seasons.
    """
    frame = table.frame
    for col in ("POS", "LEAGUE", "CLUB"):
        if col not in frame.columns:
            raise SchemaError(f"season {table.season}: missing {col} column for encoding")
    book = codebook if codebook is not None else Codebook()
    if not book.clubs:
        book = book.with_clubs(frame["CLUB"])
    frame = frame.copy()
    frame["POS_NUM"] = book.encode("position", frame["POS"])
    frame["LEAGUE_NUM"] = book.encode("league", frame["LEAGUE"])
    frame["CLUB_NUM"] = book.encode("club", frame["CLUB"])
    return RawFeatureTable("encoded", table.season, frame, dict(table.meta)), book


def _season_grades(frame: pd.DataFrame) -> np.ndarray:
    if GRADE_COLUMN in frame.columns:
        return pd.to_numeric(frame[GRADE_COLUMN]).to_numpy(float)
    cols = []
    for name in RANK_COLUMNS:
        if name in frame.columns:
            cols.append(pd.to_numeric(frame[name], errors="coerce").to_list())
        else:
            cols.append([None] * len(frame))
    return grades_from_columns(*cols)


def _feature_matrix(frame: pd.DataFrame) -> np.ndarray:
    n = len(frame)
    out = np.zeros((n, len(FEATURE_NAMES)))
    inverse = {v: k for k, v in NUMERIC_COLUMNS.items()}
    for j, name in enumerate(FEATURE_NAMES):
        if name == "POS":
            out[:, j] = frame["POS_NUM"].to_numpy(float)
        elif name == "grade_value":
            out[:, j] = _season_grades(frame)
        elif name == "League_num":
            out[:, j] = frame["LEAGUE_NUM"].to_numpy(float)
        elif name == "Club_num":
            out[:, j] = frame["CLUB_NUM"].to_numpy(float)
        else:
            col = inverse[name]
            if col in frame.columns:
                out[:, j] = frame[col].to_numpy(float)
            else:
                logger.warning("column %s absent; feature %s set to 0", col, name)
    return out


def _exact_mean(rows: np.ndarray) -> np.ndarray:
    # anchored on the first season so identical seasons average to themselves exactly
    return rows[0] + np.mean(rows - rows[0], axis=0)


def average_seasons(per_season: Sequence[RawFeatureTable]) -> Dataset:
    """Collapse 1-3 cleaned and encoded season tables into one row per player.

    Numeric features and salary are averaged over the seasons a player appears
    in; club, league and position come from the latest season (seasons are
    ordered by their labels, which must sort chronologically).  Players are
    matched across seasons by name, unless the name is shared by several
    clubs within a season, in which case ``(name, club)`` is the identity.
    """
    if not per_season:
        raise IngestError("average_seasons needs at least one season table")
    tables = sorted(per_season, key=lambda t: t.season)
    if len({t.season for t in tables}) != len(tables):
        raise IngestError("duplicate season labels")

    ambiguous = set()
    for t in tables:
        counts = t.frame.groupby("PLAYER")["CLUB"].nunique()
        ambiguous |= set(counts[counts > 1].index)

    acc: dict = {}
    order: list = []
    for t in tables:
        frame = t.frame
        feats = _feature_matrix(frame)
        y = pd.to_numeric(frame["WEEKLY_GROSS"], errors="coerce").to_numpy(float)
        if np.isnan(y).any():
            bad = frame["PLAYER"][np.isnan(y)].iloc[0]
            raise ValidationError(f"season {t.season}: missing WEEKLY_GROSS for {bad!r}")
        for i in range(len(frame)):
            name, club = frame["PLAYER"].iat[i], frame["CLUB"].iat[i]
            key = (name, club) if name in ambiguous else (name, None)
            if key not in acc:
                acc[key] = {"feats": [], "y": []}
                order.append(key)
            entry = acc[key]
            entry["feats"].append(feats[i])
            entry["y"].append(y[i])
            # later seasons overwrite the categorical identity
            entry["club"] = club
            entry["league"] = frame["LEAGUE"].iat[i]
            entry["pos"] = frame["POS"].iat[i]
            entry["codes"] = (
                int(frame["CLUB_NUM"].iat[i]), int(frame["LEAGUE_NUM"].iat[i]),
                int(frame["POS_NUM"].iat[i]),
            )

    order.sort(key=lambda k: (k[0], acc[k]["club"]))
    n = len(order)
    features = np.zeros((n, len(FEATURE_NAMES)))
    y = np.zeros(n)
    codes = np.zeros((n, 3), dtype=np.int64)
    j_pos, j_league, j_club = (FEATURE_NAMES.index(c) for c in ("POS", "League_num", "Club_num"))
    for i, key in enumerate(order):
        entry = acc[key]
        features[i] = _exact_mean(np.asarray(entry["feats"]))
        y[i] = float(_exact_mean(np.asarray(entry["y"])))
        codes[i] = entry["codes"]
        features[i, j_club], features[i, j_league], features[i, j_pos] = codes[i]
    return Dataset(
        players=tuple(k[0] for k in order),
        clubs=tuple(acc[k]["club"] for k in order),
        leagues=tuple(acc[k]["league"] for k in order),
        positions=tuple(acc[k]["pos"] for k in order),
        features=features,
        feature_names=FEATURE_NAMES,
        y=y,
        club_code=codes[:, 0],
        league_code=codes[:, 1],
        position_code=codes[:, 2],
    )


def build_dataset(
    tables: Sequence[RawFeatureTable], codebook: Codebook | None = None
) -> tuple[Dataset, dict]:
    """Full pipeline over raw tables of one or more seasons.

    Returns the averaged dataset and a provenance dict with per-season join
    losses and 90-minute filter drops.
    """
    by_season: dict = {}
    for t in tables:
        by_season.setdefault(t.season, []).append(t)
    cleaned = []
    provenance = {"seasons": {}}
    for season in sorted(by_season):
        merged = join_feature_tables(by_season[season], season)
        clean = clean_players(merged)
        cleaned.append(clean)
        provenance["seasons"][season] = {
            "joined_rows": merged.n,
            "join_dropped": clean.meta.get("join_dropped", 0),
            "minutes_dropped": clean.meta.get("minutes_dropped", 0),
            "kept_rows": clean.n,
        }
    book = codebook if codebook is not None else Codebook()
    if not book.clubs:
        book = book.with_clubs(c for t in cleaned for c in t.frame["CLUB"])
    encoded = [encode_categoricals(t, book)[0] for t in cleaned]
    dataset = average_seasons(encoded)
    provenance["join_dropped"] = sum(s["join_dropped"] for s in provenance["seasons"].values())
    provenance["minutes_dropped"] = sum(s["minutes_dropped"] for s in provenance["seasons"].values())
    provenance["players"] = dataset.n
    provenance["clubs"] = dataset.club_count
    provenance["leagues"] = dataset.league_count
    return dataset, provenance


# --------------------------------------------------------------------------
# processed dataset CSV


def _parse_number(text: str, path, lineno: int, col: str) -> float | None:
    text = text.strip()
    if text == "":
        return None
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{path}:{lineno}: column {col}: {text!r} is not a number") from None
    if not np.isfinite(value):
        raise ParseError(f"{path}:{lineno}: column {col}: non-finite value {text!r}")
    return value


def load_dataset(path, codebook: Codebook | None = None, validate: bool = True) -> Dataset:
    """Parse a player CSV with the ``DATASET_COLUMNS`` header.

    An optional trailing ``GRADE_VALUE`` column (written by ``save_dataset``)
    takes precedence over the rank columns.  Empty numeric cells are set to 0
    and logged; empty rank cells mean the competition was not played.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().upper() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        expected = list(DATASET_COLUMNS)
        has_grade = header == expected + [GRADE_COLUMN]
        if header != expected and not has_grade:
            missing = [c for c in expected if c not in header]
            extra = [c for c in header if c not in expected + [GRADE_COLUMN]]
            raise ParseError(
                f"{path}:1: header mismatch (missing {missing}, unexpected {extra}); "
                f"columns must be exactly {','.join(expected)}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            rows.append((lineno, dict(zip(header, row))))
    if not rows:
        raise ParseError(f"{path}: no data rows")

    n = len(rows)
    players, clubs, leagues, positions = [], [], [], []
    numeric = {c: np.zeros(n) for c in NUMERIC_COLUMNS}
    ranks = {c: [None] * n for c in RANK_COLUMNS}
    grade = np.zeros(n)
    y = np.zeros(n)
    missing_counts: dict = {}
    for i, (lineno, row) in enumerate(rows):
        name = row["PLAYER"].strip()
        if not name:
            raise ParseError(f"{path}:{lineno}: empty PLAYER")
        players.append(name)
        clubs.append(row["CLUB"].strip())
        leagues.append(row["LEAGUE"].strip())
        positions.append(row["POS"].strip())
        for col in NUMERIC_COLUMNS:
            value = _parse_number(row[col], path, lineno, col)
            if value is None:
                missing_counts[col] = missing_counts.get(col, 0) + 1
                value = 0.0
            numeric[col][i] = value
        for col in RANK_COLUMNS:
            ranks[col][i] = _parse_number(row[col], path, lineno, col)
        salary = _parse_number(row["WEEKLY_GROSS"], path, lineno, "WEEKLY_GROSS")
        if salary is None:
            raise ParseError(f"{path}:{lineno}: WEEKLY_GROSS is empty")
        y[i] = salary
        if has_grade:
            g = _parse_number(row[GRADE_COLUMN], path, lineno, GRADE_COLUMN)
            grade[i] = np.nan if g is None else g
    for col, count in sorted(missing_counts.items()):
        logger.warning("%s: %d empty %s cell(s) set to 0", path.name, count, col)

    try:
        from_ranks = grades_from_columns(*(ranks[c] for c in RANK_COLUMNS))
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    if has_grade:
        grade = np.where(np.isnan(grade), from_ranks, grade)
    else:
        grade = from_ranks

    book = codebook if codebook is not None else Codebook()
    if not book.clubs:
        book = book.with_clubs(clubs)
    pos_codes = _encode_positions(positions, book)
    league_codes = book.encode("league", leagues)
    club_codes = book.encode("club", clubs)

    features = np.zeros((n, len(FEATURE_NAMES)))
    for j, name in enumerate(FEATURE_NAMES):
        if name == "POS":
            features[:, j] = pos_codes
        elif name == "grade_value":
            features[:, j] = grade
        elif name == "League_num":
            features[:, j] = league_codes
        elif name == "Club_num":
            features[:, j] = club_codes
        else:
            features[:, j] = numeric[{v: k for k, v in NUMERIC_COLUMNS.items()}[name]]
    data = Dataset(
        players=tuple(players), clubs=tuple(clubs), leagues=tuple(leagues),
        positions=tuple(positions), features=features, feature_names=FEATURE_NAMES,
        y=y, club_code=club_codes, league_code=league_codes, position_code=pos_codes,
    )
    _check_nesting(data)
    if validate:
        data.validate()
    return data


def _encode_positions(labels, book: Codebook) -> np.ndarray:
    # integer codes already present in the file are accepted as they are
    valid = set(book.positions.values())
    if all(re.fullmatch(r"\d+", s) and int(s) in valid for s in labels):
        return np.array([int(s) for s in labels], dtype=np.int64)
    return book.encode("position", labels)


def _check_nesting(data: Dataset) -> None:
    seen: dict = {}
    for club, league, name in zip(data.clubs, data.leagues, data.players):
        if seen.setdefault(club, league) != league:
            raise ValidationError(
                f"club {club!r} appears under leagues {seen[club]!r} and {league!r} "
                f"(record {name!r})"
            )


def _fmt(value: float) -> str:
    return repr(float(value)) if value != int(value) else str(int(value))


def save_dataset(data: Dataset, path) -> None:
    """Write ``data`` with the loader's header plus ``GRADE_VALUE``.

    Rank cells are left empty: averaged data carries the grade directly.
    """
    inverse = {v: k for k, v in NUMERIC_COLUMNS.items()}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(DATASET_COLUMNS) + [GRADE_COLUMN])
        for i in range(data.n):
            row = {
                "PLAYER": data.players[i], "CLUB": data.clubs[i],
                "LEAGUE": data.leagues[i], "POS": data.positions[i],
                "WEEKLY_GROSS": _fmt(data.y[i]),
            }
            for name in FEATURE_NAMES:
                if name in inverse:
                    row[inverse[name]] = _fmt(data.column(name)[i])
            for col in RANK_COLUMNS:
                row[col] = ""
            row[GRADE_COLUMN] = _fmt(data.column("grade_value")[i])
            writer.writerow([row[c] for c in DATASET_COLUMNS] + [row[GRADE_COLUMN]])
