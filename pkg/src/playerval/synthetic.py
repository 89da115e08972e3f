"""Synthetic data generators for testing, benchmarking and demos."""
from __future__ import annotations

import numpy as np

from .ingest import DEFAULT_LEAGUES, DEFAULT_POSITIONS, FEATURE_NAMES, Dataset


def nested_lmm_data(n_leagues=5, clubs_per_league=20, players_per_club=20, beta=(50.0, 3.0, -2.0),
                    var_league=40.0, var_club=15.0, var_residual=25.0, rng=None):
    """Balanced nested data from ``y = b0 + X b + u_league + u_club + e``.

    Returns ``(dataset, truth)``; covariates are named ``x1 .. x{p}`` and
    ``truth`` holds the generating parameters and the noiseless conditional
    mean ``eta``.
    """
    rng = np.random.default_rng(rng)
    beta = np.asarray(beta, dtype=float)
    n_clubs = n_leagues * clubs_per_league
    n = n_clubs * players_per_club
    club = np.repeat(np.arange(1, n_clubs + 1), players_per_club)
    league = (club - 1) // clubs_per_league + 1
    X = rng.normal(size=(n, len(beta) - 1))
    u_league = rng.normal(scale=np.sqrt(var_league), size=n_leagues)
    u_club = rng.normal(scale=np.sqrt(var_club), size=n_clubs)
    eta = beta[0] + X @ beta[1:] + u_league[league - 1] + u_club[club - 1]
    y = eta + rng.normal(scale=np.sqrt(var_residual), size=n)
    names = [f"x{j + 1}" for j in range(X.shape[1])]
    ds = Dataset.from_arrays(X, y, names, club_code=club, league_code=league)
    truth = {"beta": beta, "var_league": var_league, "var_club": var_club,
             "var_residual": var_residual, "u_league": u_league, "u_club": u_club, "eta": eta}
    return ds, truth


def player_dataset(n_players=300, n_clubs=20, rng=None) -> Dataset:
    """A plausible 24-feature player table that passes ``Dataset.validate``.

    Salaries depend on goals, minutes, achievement grade and club/league
    effects, with multiplicative noise; all salaries are positive.
    """
    rng = np.random.default_rng(rng)
    n_leagues = len(DEFAULT_LEAGUES)
    club_league = 1 + np.arange(n_clubs) % n_leagues
    club = rng.integers(1, n_clubs + 1, size=n_players)
    league = club_league[club - 1]
    pos = rng.integers(1, len(DEFAULT_POSITIONS) + 1, size=n_players)
    starts = rng.integers(1, 39, size=n_players)
    minutes = np.maximum(91, starts * 85 + rng.integers(0, 400, size=n_players))
    cols = {
        "Current_Age": rng.integers(17, 37, size=n_players),
        "POS": pos,
        "grade_value": np.round(rng.uniform(0.3, 6.0, size=n_players), 3),
        "Starts": starts,
        "Min": minutes,
        "Gls": rng.poisson(minutes / 900.0 * (pos == 3) + 0.5),
        "Ast": rng.poisson(minutes / 1500.0 + 0.2),
        "CrdY": rng.poisson(minutes / 700.0),
        "CrdR": rng.poisson(0.1, size=n_players),
        "SoT": rng.poisson(minutes / 400.0),
        "G_Sh": np.round(rng.uniform(0.0, 0.3, size=n_players), 2),
        "Pass_Att": rng.poisson(minutes / 2.5),
        "Cmp_per": np.round(rng.uniform(55.0, 93.0, size=n_players), 1),
        "TklW": rng.poisson(minutes / 150.0),
        "Blocks": rng.poisson(minutes / 120.0),
        "Int": rng.poisson(minutes / 130.0),
        "Clr": rng.poisson(minutes / 60.0 * (pos == 1) + 2),
        "Dribble_Att": rng.poisson(minutes / 80.0),
        "Dribble_Succ_per": np.round(rng.uniform(20.0, 80.0, size=n_players), 1),
        "Carries": rng.poisson(minutes / 3.0),
        "Targ": rng.poisson(minutes / 3.5),
        "Rec_per": np.round(rng.uniform(60.0, 99.0, size=n_players), 1),
        "League_num": league,
        "Club_num": club,
    }
    X = np.column_stack([np.asarray(cols[name], dtype=float) for name in FEATURE_NAMES])
    club_effect = rng.normal(0.0, 0.3, size=n_clubs)
    log_y = (10.0 + 0.15 * cols["Gls"] + 0.0002 * minutes + 0.12 * cols["grade_value"]
             + 0.1 * league + club_effect[club - 1] + rng.normal(0.0, 0.25, size=n_players))
    y = np.round(np.exp(log_y), -2)
    league_names = {v: k for k, v in DEFAULT_LEAGUES.items()}
    pos_names = {v: k for k, v in DEFAULT_POSITIONS.items()}
    return Dataset.from_arrays(
        X, y, FEATURE_NAMES,
        players=[f"Player {i + 1:04d}" for i in range(n_players)],
        club_code=club, league_code=league, position_code=pos,
        clubs=[f"Club {c:02d}" for c in club],
        leagues=[league_names[l] for l in league],
        positions=[pos_names[p] for p in pos],
    )
