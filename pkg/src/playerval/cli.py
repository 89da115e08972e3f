"""Command-line front end: ingest, train, estimate, cv, report.

Every command writes into ``--out`` (a directory).  A failed run leaves a
``_FAILED`` file there holding the error message; a successful run removes
any stale marker.  Option values come from command-line flags first, then
the ``--config`` JSON file, then built-in defaults.
"""
from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import __version__
from ._io import read_csv, write_csv, write_json_text
from .estimate import estimate_by_interval, estimate_by_smape, summarize, write_estimates
from .evaluate import (forest_factory, grid_search, lmm_factory, metric_report, write_residuals,
                       write_score_table)
from .forest import ForestModel, ForestParams, fit_forest, read_json
from .ingest import TABLE_KINDS, Codebook, build_dataset, load_codebook, load_dataset, read_raw_table, save_dataset
from .mixedmodel import (MixedModelFit, MixedModelSpec, fit_reml, fixed_effect_table,
                         information_criteria, prediction_interval, r2_nakagawa, write_intervals)

logger = logging.getLogger("playerval")

FAILED_MARKER = "_FAILED"
DEFAULTS = {
    "model": "rf", "rng_state": 2, "level": 0.90, "k": 5, "threshold": None,
    "method": None, "n_draws": 1000, "plots": False,
}
RF_MODEL_FILE = "model_rf.json.gz"
LMM_MODEL_FILE = "model_lmm.json"
_RAW_NAME = re.compile(r"^(?P<season>.+)_(?P<kind>" + "|".join(TABLE_KINDS) + r")\.csv$", re.I)


class CliError(Exception):
    pass


# --------------------------------------------------------------------------
# configuration


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise CliError(f"config {path} must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in doc.items()}


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags over config over defaults into one settings dict."""
    config = _load_config(getattr(args, "config", None))
    settings = dict(DEFAULTS)
    settings.update(config)
    for key, value in vars(args).items():
        if value is not None and key not in ("func", "config"):
            settings[key] = value
    if settings.get("out") is None:
        raise CliError("--out is required (flag or config)")
    return settings


def _forest_params(settings) -> ForestParams:
    overrides = dict(settings.get("forest") or {})
    known = {f.name for f in fields(ForestParams)}
    unknown = sorted(set(overrides) - known)
    if unknown:
        raise CliError(f"unknown forest parameter(s): {unknown}")
    overrides.setdefault("base_rng_state", int(settings["rng_state"]))
    return ForestParams(**overrides)


def _lmm_spec(settings) -> MixedModelSpec:
    return MixedModelSpec(**dict(settings.get("lmm") or {}))


def _need(settings, key, flag=None):
    if settings.get(key) is None:
        raise CliError(f"--{flag or key.replace('_', '-')} is required")
    return settings[key]


# --------------------------------------------------------------------------
# commands


def _raw_inputs(entries) -> list:
    """``DIR`` (files named SEASON_KIND.csv) or ``SEASON/KIND=PATH`` entries."""
    tables = []
    for entry in entries:
        path = Path(entry)
        if path.is_dir():
            found = sorted(p for p in path.iterdir() if _RAW_NAME.match(p.name))
            if not found:
                raise CliError(f"{path}: no SEASON_KIND.csv files")
            for p in found:
                m = _RAW_NAME.match(p.name)
                tables.append(read_raw_table(p, m["kind"].lower(), m["season"]))
            continue
        m = re.fullmatch(r"(?P<season>[^/=]+)/(?P<kind>\w+)=(?P<path>.+)", entry)
        if not m:
            raise CliError(f"input {entry!r}: expected a directory or SEASON/KIND=PATH")
        tables.append(read_raw_table(m["path"], m["kind"].lower(), m["season"]))
    return tables


def _codebook(specs) -> Codebook:
    book = Codebook()
    for item in specs or []:
        kind, sep, path = item.partition("=")
        if not sep or kind not in ("positions", "leagues", "clubs"):
            raise CliError(f"--codebook {item!r}: expected positions=PATH, leagues=PATH or clubs=PATH")
        mapping = load_codebook(path)
        setattr(book, kind, mapping)
        if kind == "positions":
            book.position_aliases = {}
        elif kind == "leagues":
            book.league_aliases = {}
    return book


def cmd_ingest(settings) -> dict:
    inputs = settings.get("input")
    if not inputs:
        raise CliError("--input is required")
    inputs = inputs if isinstance(inputs, list) else [inputs]
    out = Path(settings["out"])
    dataset, provenance = build_dataset(_raw_inputs(inputs), _codebook(settings.get("codebook")))
    dataset.validate()
    save_dataset(dataset, out / "dataset.csv")
    write_json_text(out / "provenance.json", provenance)
    return provenance


def _single_input(settings) -> str:
    value = _need(settings, "input")
    if isinstance(value, list):
        if len(value) != 1:
            raise CliError("this command takes exactly one --input")
        value = value[0]
    return value


def _load_model(path):
    doc = read_json(path)
    fmt = doc.get("format", "")
    if fmt.startswith("playerval.forest"):
        return "rf", ForestModel.from_dict(doc)
    if fmt.startswith("playerval.lmm"):
        return "lmm", MixedModelFit.from_dict(doc)
    raise CliError(f"{path}: unrecognised model format {fmt!r}")


def _predict(kind, model, dataset) -> np.ndarray:
    return model.predict(dataset.features) if kind == "rf" else model.predict(dataset)


def cmd_train(settings) -> dict:
    dataset = load_dataset(_single_input(settings))
    out = Path(settings["out"])
    kind = settings["model"]
    if kind == "rf":
        model = fit_forest(dataset, params=_forest_params(settings))
        path = out / RF_MODEL_FILE
        model.save(path)
    elif kind == "lmm":
        model = fit_reml(dataset, _lmm_spec(settings))
        path = out / LMM_MODEL_FILE
        model.save(path)
    else:
        raise CliError(f"unknown model kind {kind!r}")
    pred = _predict(kind, model, dataset)
    metrics = {"model": kind, "protocol": "in-sample (trained and scored on the full dataset)",
               **metric_report(dataset.y, pred).as_dict()}
    if kind == "lmm":
        aic, bic = information_criteria(model)
        marginal, conditional = r2_nakagawa(model, dataset)
        metrics.update(aic=aic, bic=bic, r2_marginal=marginal, r2_conditional=conditional,
                       reml_loglik=model.reml_loglik, var_league=model.var_league,
                       var_club_in_league=model.var_club_in_league, var_residual=model.var_residual)
        write_csv(out / "fixed_effects.csv", ["TERM", "ESTIMATE", "T_VALUE", "P_VALUE", "SIGNIF"],
                  fixed_effect_table(model))
    else:
        order = np.argsort(-model.importances, kind="stable")
        write_csv(out / "feature_importance.csv", ["RANK", "FEATURE", "IMPORTANCE"],
                  ((r + 1, model.feature_names[j], model.importances[j]) for r, j in enumerate(order)))
    metrics["model_file"] = path.name
    write_json_text(out / "metrics.json", metrics)
    return metrics


def cmd_estimate(settings) -> dict:
    dataset = load_dataset(_single_input(settings))
    out = Path(settings["out"])
    model_path = settings.get("model_path")
    if model_path is None:
        default = out / (RF_MODEL_FILE if settings["model"] == "rf" else LMM_MODEL_FILE)
        if not default.exists():
            raise CliError("--model-path is required")
        model_path = default
    kind, model = _load_model(model_path)
    method = settings.get("method") or ("interval" if kind == "lmm" else "smape")
    if method == "interval":
        if kind != "lmm":
            raise CliError("the interval method needs a mixed-model fit")
        level = float(settings["level"])
        intervals = prediction_interval(model, dataset, level, int(settings["n_draws"]),
                                        rng_state=int(settings["rng_state"]))
        rows = estimate_by_interval(dataset.players, dataset.y, intervals)
        write_intervals(out / "intervals.csv", intervals, dataset.y)
        pred = np.array([iv.predicted for iv in intervals])
        summary = summarize([r.label for r in rows], "interval", level)
    elif method == "smape":
        pred = _predict(kind, model, dataset)
        threshold = settings.get("threshold")
        rows, threshold = estimate_by_smape(dataset.players, dataset.y, pred,
                                            None if threshold is None else float(threshold))
        summary = summarize([r.label for r in rows], "smape_threshold", threshold)
    else:
        raise CliError(f"unknown estimation method {method!r}")
    write_estimates(out / "estimates.csv", rows, method)
    write_csv(out / "pred_vs_true.csv", ["PLAYER", "TRUE", "PRED"], zip(dataset.players, dataset.y, pred))
    write_residuals(out / "residuals.csv", dataset.players, dataset.y, pred)
    if kind == "rf":
        order = np.argsort(-model.importances, kind="stable")
        write_csv(out / "feature_importance.csv", ["RANK", "FEATURE", "IMPORTANCE"],
                  ((r + 1, model.feature_names[j], model.importances[j]) for r, j in enumerate(order)))
    doc = {"model": kind, "model_file": Path(model_path).name, **summary.as_dict()}
    write_json_text(out / "estimate_summary.json", doc)
    if settings.get("plots"):
        _plots(out, dataset, pred, model if kind == "rf" else None)
    return doc


def cmd_cv(settings) -> dict:
    dataset = load_dataset(_single_input(settings))
    out = Path(settings["out"])
    kind = settings["model"]
    grid = settings.get("grid")
    if isinstance(grid, str):
        grid = _load_config(grid)
    if kind == "rf":
        base = asdict(_forest_params(settings))
        grid = grid or {"n_estimators": [base["n_estimators"]]}
        builder = lambda **p: forest_factory(**{**base, **p})  # noqa: E731
    elif kind == "lmm":
        base = _lmm_spec(settings).to_dict()
        grid = grid or {"fixed_effects": [base["fixed_effects"]]}
        builder = lambda **p: lmm_factory(**{**base, **p})  # noqa: E731
    else:
        raise CliError(f"unknown model kind {kind!r}")
    best, table = grid_search(dataset, grid, int(settings["k"]), int(settings["rng_state"]), builder)
    write_score_table(out / "cv_scores.csv", table)
    best_mean = max(c.mean for c in table if c.status == "ok")
    doc = {"model": kind, "protocol": f"{int(settings['k'])}-fold cross-validation (shuffled)",
           "k": int(settings["k"]), "rng_state": int(settings["rng_state"]),
           "best_params": best, "best_mean_r_square": best_mean}
    write_json_text(out / "cv_best.json", doc)
    return doc


def _read_json_if(path):
    return json.loads(path.read_text(encoding="utf-8")) if path.exists() else None


def cmd_report(settings) -> str:
    """Summarise whatever run artifacts exist in ``--input`` (default: ``--out``)."""
    out = Path(settings["out"])
    src = Path(settings["input"][0] if isinstance(settings.get("input"), list) else settings.get("input") or out)
    lines = ["# Salary model report", ""]
    metrics = _read_json_if(src / "metrics.json")
    if metrics:
        lines += [f"## Training metrics ({metrics['model']})", "",
                  f"Protocol: {metrics['protocol']}", ""]
        for key in ("n", "r_square", "rmse", "smape", "aic", "bic", "r2_marginal", "r2_conditional",
                    "var_league", "var_club_in_league", "var_residual"):
            if key in metrics:
                value = metrics[key]
                shown = f"{100 * value:.2f}%" if key == "smape" else f"{value:.6g}"
                lines.append(f"- {key}: {shown}")
        lines.append("")
    fe = src / "fixed_effects.csv"
    if fe.exists():
        header, rows = read_csv(fe)
        lines += ["## Fixed effects", "", "| " + " | ".join(header) + " |",
                  "|" + "---|" * len(header)]
        lines += ["| " + " | ".join(r) + " |" for r in rows]
        lines.append("")
    fi = src / "feature_importance.csv"
    if fi.exists():
        header, rows = read_csv(fi)
        lines += ["## Feature importance", ""]
        lines += [f"{r[0]}. {r[1]}: {float(r[2]):.4f}" for r in rows]
        lines.append("")
    summary = _read_json_if(src / "estimate_summary.json")
    if summary:
        if summary["method"] == "interval":
            rule = f"prediction interval, level {summary['threshold_or_level']:.2f}"
        else:
            rule = f"SMAPE threshold {100 * summary['threshold_or_level']:.2f}%"
        lines += ["## Estimation labels", "", f"Rule: {rule}; scored in-sample", ""]
        for label, count in summary["counts"].items():
            lines.append(f"- {label}: {count} ({100 * summary['fractions'][label]:.1f}%)")
        lines.append("")
    cv = _read_json_if(src / "cv_best.json")
    if cv:
        lines += ["## Cross-validation", "", f"Protocol: {cv['protocol']}, rng_state {cv['rng_state']}",
                  f"Best mean R²: {cv['best_mean_r_square']:.6g}",
                  f"Best parameters: {json.dumps(cv['best_params'], sort_keys=True)}", ""]
    if len(lines) == 2:
        raise CliError(f"{src}: no run artifacts to report")
    text = "\n".join(lines)
    (out / "report.md").write_text(text, encoding="utf-8")
    if settings.get("plots"):
        pvt = src / "pred_vs_true.csv"
        if pvt.exists():
            _, rows = read_csv(pvt)
            y = np.array([float(r[1]) for r in rows])
            p = np.array([float(r[2]) for r in rows])
            _plots(out, None, p, None, y_true=y)
    return text


def _plots(out: Path, dataset, pred, forest=None, y_true=None):
    """SVG renderings; needs the optional matplotlib dependency."""
    try:
        import matplotlib
    except ImportError:
        raise CliError("--plots needs matplotlib (pip install 'artifact[plots]')") from None
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "playerval"
    y = dataset.y if dataset is not None else y_true
    meta = {"Date": None}
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(y, pred, s=6)
    lim = [min(y.min(), pred.min()), max(y.max(), pred.max())]
    ax.plot(lim, lim, color="grey", lw=1)
    ax.set_xlabel("true weekly salary")
    ax.set_ylabel("predicted weekly salary")
    fig.savefig(out / "pred_vs_true.svg", metadata=meta)
    plt.close(fig)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.scatter(pred, y - pred, s=6)
    ax.axhline(0, color="grey", lw=1)
    ax.set_xlabel("predicted weekly salary")
    ax.set_ylabel("residual")
    fig.savefig(out / "residuals.svg", metadata=meta)
    plt.close(fig)
    if forest is not None:
        order = np.argsort(forest.importances, kind="stable")
        fig, ax = plt.subplots(figsize=(6, 7))
        ax.barh([forest.feature_names[j] for j in order], forest.importances[order])
        ax.set_xlabel("importance")
        fig.tight_layout()
        fig.savefig(out / "feature_importance.svg", metadata=meta)
        plt.close(fig)


# --------------------------------------------------------------------------
# argument parsing


COMMANDS = {"ingest": cmd_ingest, "train": cmd_train, "estimate": cmd_estimate,
            "cv": cmd_cv, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", action="append", help="input path (repeatable for ingest)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--model", choices=["rf", "lmm"])
    common.add_argument("--rng-state", type=int, dest="rng_state")
    common.add_argument("--level", type=float, help="prediction-interval level")
    common.add_argument("--k", type=int, help="number of cross-validation folds")
    common.add_argument("--threshold", type=float, help="SMAPE threshold as a fraction")
    common.add_argument("--config", help="JSON file with option values")
    common.add_argument("-v", "--verbose", action="store_true", default=None)

    parser = argparse.ArgumentParser(prog="playerval", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("ingest", parents=[common], help="raw tables -> processed dataset")
    p.add_argument("--codebook", action="append", metavar="KIND=PATH",
                   help="positions/leagues/clubs label,code CSV (repeatable)")
    sub.add_parser("train", parents=[common], help="fit a forest or mixed model")
    p = sub.add_parser("estimate", parents=[common], help="label players over/under/normal")
    p.add_argument("--model-path", dest="model_path")
    p.add_argument("--method", choices=["interval", "smape"])
    p.add_argument("--n-draws", type=int, dest="n_draws")
    p.add_argument("--plots", action="store_true", default=None, help="also write SVG plots")
    p = sub.add_parser("cv", parents=[common], help="k-fold cross-validated grid search")
    p.add_argument("--grid", help="JSON file mapping parameter -> list of values")
    p = sub.add_parser("report", parents=[common], help="summarise run artifacts as Markdown")
    p.add_argument("--plots", action="store_true", default=None, help="also write SVG plots")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    command = args.command
    del args.command
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = None
    try:
        settings = resolve(args)
        out = Path(settings["out"])
        out.mkdir(parents=True, exist_ok=True)
        marker = out / FAILED_MARKER
        if marker.exists():
            marker.unlink()
        result = COMMANDS[command](settings)
    except Exception as exc:  # noqa: BLE001 - report every failure the same way
        message = f"{command} failed: {type(exc).__name__}: {exc}"
        print(f"playerval: {message}", file=sys.stderr)
        if out is not None:
            try:
                out.mkdir(parents=True, exist_ok=True)
                (out / FAILED_MARKER).write_text(message + "\n", encoding="utf-8")
            except OSError:
                pass
        return 1
    if command == "report":
        print(result)
    else:
        print(json.dumps(result, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
