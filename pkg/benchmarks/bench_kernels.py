"""Compare the compiled and pure-numpy split kernels.

Run with ``python benchmarks/bench_kernels.py [--players N] [--trees T]``.
Each backend grows the same forest; the script checks that both produce
identical trees and prints wall-clock times.
"""
import argparse
import importlib
import time

import numpy as np

from playerval import cart, synthetic
from playerval.forest import ForestParams, fit_forest


def _use(backend_module):
    """Point the tree code at one kernel module."""
    cart._kernels.best_split = backend_module.best_split
    cart._kernels.apply_tree = backend_module.apply_tree
    cart._kernels.Splitter = backend_module.Splitter


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--players", type=int, default=1684)
    ap.add_argument("--trees", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    data = synthetic.player_dataset(args.players, n_clubs=98, rng=0)
    params = ForestParams(n_estimators=args.trees)
    backends = {"python": importlib.import_module("playerval._splitter_py")}
    try:
        backends["cython"] = importlib.import_module("playerval._splitter")
    except ImportError:
        print("compiled extension not built; timing the fallback only")

    results = {}
    print(f"{args.players} players x {data.features.shape[1]} features, {args.trees} trees")
    for name, mod in backends.items():
        _use(mod)
        rows = data.features[np.argsort(data.y)[: min(200, data.n)]]
        t_split, _ = _time(lambda: mod.best_split(data.features, data.y, np.arange(data.n),
                                                  np.arange(data.features.shape[1]), 1, 1e-10),
                           args.repeat)
        t_fit, model = _time(lambda: fit_forest(data, params=params), args.repeat)
        t_pred, _ = _time(lambda: model.predict(data.features), args.repeat)
        results[name] = model.predict(rows)
        print(f"{name:>7}: root split {1e3 * t_split:8.2f} ms | forest fit {t_fit:7.2f} s"
              f" | predict {1e3 * t_pred:7.2f} ms")
    if len(results) == 2:
        same = np.array_equal(results["python"], results["cython"])
        print(f"identical predictions across backends: {same}")


if __name__ == "__main__":
    main()
