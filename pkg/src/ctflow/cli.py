"""Command-line interface: ``ctflow {train,eval,sample,simulate,truth,sse,bench}``."""
from __future__ import annotations

import argparse
import json
import os
import sys
import warnings

import numpy as np

from .exceptions import ConfigError, CTFlowError

THREADS_ENV = "CTFLOW_THREADS"

# key -> (type, default); file keys and flag dests share these names
TRAIN_KEYS = {
    "c0": (float, 0.05),
    "gamma": (float, 0.5),
    "eta": (float, 0.1),
    "phases": (list, ["logistic:6:1000", "mlp(4,4):4:1000"]),
    "min_samples": (int, 10),
    "grid_points": (int, 20),
    "window": (int, 10),
    "max_trees": (int, 2000),
    "validation_fraction": (float, 0.1),
    "seed": (int, 0),
    "eta_scaled": (bool, False),
    "screen_top": (int, 0),
    "rotations": (int, 1),
    "axis_pairs": (list, None),
    "x_bins": (int, 8),
    "margin": (float, 0.01),
    "data": (str, None),
    "x_cols": (list, None),
    "y_cols": (list, None),
    "delimiter": (str, ","),
    "task": (str, None),
    "n": (int, 2000),
    "dequantize": (bool, False),
    "out": (str, None),
    "trace": (str, None),
}


def _fail(msg):
    raise ConfigError(msg)


def _coerce(key, value, typ):
    if value is None:
        return None
    if typ is list:
        if isinstance(value, str) and key == "phases":
            return _split_phases(value)
        if isinstance(value, str):
            return [v.strip() for v in value.split(",") if v.strip()]
        if not isinstance(value, (list, tuple)):
            _fail(f"config key '{key}' must be a list")
        return list(value)
    if typ is bool:
        if isinstance(value, bool):
            return value
        if str(value).lower() in ("1", "true", "yes"):
            return True
        if str(value).lower() in ("0", "false", "no"):
            return False
        _fail(f"config key '{key}' must be a boolean")
    try:
        return typ(value)
    except (TypeError, ValueError):
        _fail(f"config key '{key}' must be of type {typ.__name__}, got {value!r}")


def load_config_file(path) -> dict:
    import yaml
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse config {path}: {e}") from None
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return doc


def resolve_train_config(file_cfg: dict, flags: dict) -> dict:
    unknown = sorted(set(file_cfg) - set(TRAIN_KEYS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    cfg = {}
    for key, (typ, default) in TRAIN_KEYS.items():
        value = default
        if key in file_cfg:
            value = file_cfg[key]
        if flags.get(key) is not None:
            value = flags[key]
        cfg[key] = _coerce(key, value, typ)
    return cfg


def _parse_pairs(items):
    if items is None:
        return None
    pairs = []
    for it in items:
        if isinstance(it, (list, tuple)):
            pairs.append(tuple(int(v) for v in it))
        else:
            a, _, b = str(it).partition("-")
            try:
                pairs.append((int(a), int(b)))
            except ValueError:
                raise ConfigError(f"axis pair '{it}' should look like 0-1") from None
    return pairs


def build_train_config(cfg):
    from .flow import TrainConfig
    return TrainConfig(c0=cfg["c0"], gamma=cfg["gamma"], eta=cfg["eta"], phases=cfg["phases"],
                       min_samples=cfg["min_samples"], n_grid=cfg["grid_points"],
                       window=cfg["window"], max_trees=cfg["max_trees"],
                       validation_fraction=cfg["validation_fraction"], seed=cfg["seed"],
                       eta_scaled=cfg["eta_scaled"], screen_top=cfg["screen_top"])


def _load_data(cfg, seed_name="data"):
    from .data import load_table, simulate_task
    if cfg.get("data"):
        if not cfg.get("x_cols") or not cfg.get("y_cols"):
            raise ConfigError("--x-cols and --y-cols are required with --data")
        return load_table(cfg["data"], cfg["x_cols"], cfg["y_cols"], cfg.get("delimiter", ","))
    if cfg.get("task"):
        from .flow import stream
        return simulate_task(cfg["task"], cfg["n"], stream(cfg["seed"], seed_name))
    raise ConfigError("give either --data with column names or --task")


def set_threads(n):
    if n is None:
        env = os.environ.get(THREADS_ENV)
        n = int(env) if env else None
    if n is None:
        return
    if n < 1:
        raise ConfigError("--threads must be >= 1")
    import numba
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_train(args):
    from .data import Dataset, dequantize, split
    from .flow import stream
    from .rotation import fit_rotation_ensemble, make_rotations
    from . import serialize

    file_cfg = load_config_file(args.config) if args.config else {}
    flags = {k: getattr(args, k, None) for k in TRAIN_KEYS}
    cfg = resolve_train_config(file_cfg, flags)
    if not cfg["out"]:
        raise ConfigError("--out is required")
    tc = build_train_config(cfg)
    ds = _load_data(cfg)
    rot = make_rotations(ds.d, cfg["rotations"], _parse_pairs(cfg["axis_pairs"]))
    if cfg["dequantize"]:
        Y, _ = dequantize(ds.Y, stream(tc.seed, "dequantize"))
        ds = Dataset(ds.X, Y, ds.x_names, ds.y_names)
    train, val = split(ds, tc.validation_fraction, stream(tc.seed, "split"))
    model = fit_rotation_ensemble(train, val, tc, rot, cfg["x_bins"], cfg["margin"])
    model.save(cfg["out"])
    trace = cfg["trace"] or cfg["out"] + ".trace.csv"
    with open(trace, "w") as fh:
        fh.write("member,tree,validation_loglik\n")
        for j, f in enumerate(model.flows):
            for k, v in enumerate(f.trace):
                fh.write(f"{j},{k},{v!r}\n")
    with open(cfg["out"] + ".config.json", "w") as fh:
        json.dump({"run": cfg, "train": tc.to_dict()}, fh, sort_keys=True, indent=1)
        fh.write("\n")
    print(f"wrote {cfg['out']} ({len(model.flows)} member flow(s), "
          f"{sum(f.n_trees for f in model.flows)} trees)")
    return 0


def _model_and_data(args):
    from .rotation import load_model
    model = load_model(args.model)
    cfg = {"data": args.data, "x_cols": _coerce("x_cols", args.x_cols, list),
           "y_cols": _coerce("y_cols", args.y_cols, list), "delimiter": args.delimiter,
           "task": getattr(args, "task", None), "n": getattr(args, "n", 2000),
           "seed": getattr(args, "seed", 0)}
    return model, cfg


def _write_rows(out, header, rows):
    fh = open(out, "w") if out else sys.stdout
    try:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(v if isinstance(v, str) else repr(v) for v in r) + "\n")
    finally:
        if out:
            fh.close()


def cmd_eval(args):
    from .eval import mean_test_loglik
    from .rotation import RotationEnsemble

    model, cfg = _model_and_data(args)
    test = _load_data(cfg, "test")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        mean, se = mean_test_loglik(model, test)
    rows = [("n", test.n), ("mean_loglik", mean), ("stderr", se),
            ("clamped_warnings", len(caught))]
    if isinstance(model, RotationEnsemble) and len(model.flows) > 1:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            member = model.member_log_densities(test.X, test.Y).mean(axis=0)
        best = float(member.max())
        rows += [("best_member_loglik", best),
                 ("mixture_bound_holds", int(mean >= best - np.log(len(model.flows))))]
    _write_rows(args.out, ["metric", "value"], rows)
    return 0


def cmd_sample(args):
    from .data import write_table
    from .flow import stream
    from .rotation import load_model

    model = load_model(args.model)
    x_cols = _coerce("x_cols", args.x_cols, list)
    if not x_cols:
        raise ConfigError("--x-cols is required")
    # outcome columns are not needed; read covariates only
    cov = _read_covariates(args.covariates, x_cols, args.delimiter)
    X = np.repeat(cov, args.n_per_row, axis=0)
    rng = np.random.default_rng(stream(args.seed, "sampling"))
    Y = model.sample(X, rng)
    write_table(args.out, x_cols + [f"y{j + 1}" for j in range(Y.shape[1])],
                list(X.T) + list(Y.T))
    return 0


def _read_covariates(path, x_cols, delimiter):
    import csv
    from .exceptions import DataError
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        header = [h.strip() for h in next(reader, [])]
        missing = [c for c in x_cols if c not in header]
        if missing:
            raise DataError(f"{path}: unknown column(s) {missing}")
        pos = [header.index(c) for c in x_cols]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([float(row[k]) for k in pos])
            except (ValueError, IndexError):
                raise DataError(f"{path}: bad covariate value at line {lineno}") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.array(rows)


def cmd_simulate(args):
    from .data import save_dataset, simulate_task
    ds = simulate_task(args.task, args.n, args.seed)
    save_dataset(args.out, ds)
    return 0


def cmd_truth(args):
    from .data import write_table, truth_density
    from .eval import cell_centers, grid_box
    lo, hi = grid_box(args.task)
    g1, g2 = cell_centers(lo, hi, args.grid)
    xs, a, b, dens = [], [], [], []
    for x in args.x:
        xs.append(np.full(g1.shape, x))
        a.append(g1)
        b.append(g2)
        dens.append(truth_density(args.task, x, g1, g2))
    write_table(args.out, ["x", "y1", "y2", "density"],
                [np.concatenate(xs), np.concatenate(a), np.concatenate(b), np.concatenate(dens)])
    return 0


def cmd_sse(args):
    from .eval import sse_grid
    from .rotation import load_model
    model = load_model(args.model)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = sse_grid(model, args.task, args.grid)
    fh = open(args.out, "w") if args.out else sys.stdout
    try:
        fh.write(rep.header() + "\n")
        fh.write("x,sse\n")
        for x, s in rep.rows():
            fh.write(f"{x!r},{s!r}\n")
        fh.write(f"mean,{rep.mean!r}\n")
    finally:
        if args.out:
            fh.close()
    return 0


def cmd_bench(args):
    from .data import Dataset, fit_normalizer, scaling_data
    from .eval import density_eval_time, scaling_benchmark
    from .flow import PhaseSpec, TrainConfig, train_flow

    ns = [int(v) for v in args.ns.split(",")]
    rows, slope = scaling_benchmark(ns, args.d, args.q, args.trees, args.repeats)
    out = [("fit", n, ndq, t) for n, ndq, t in rows]
    cfg = TrainConfig(phases=(PhaseSpec("logistic", 6, args.trees),), window=args.trees + 1)
    for d in [int(v) for v in args.eval_dims.split(",")] if args.eval_dims else []:
        ds = scaling_data(2000, d, args.q, 0)
        nz = fit_normalizer(ds.Y, 0.01, standardize=True, X=ds.X)
        T = Dataset(nz.transform_x(ds.X), nz.apply(ds.Y))
        flow = train_flow(T, T, cfg)
        out.append(("eval_per_point", d, d * args.q, density_eval_time(flow)))
    _write_rows(args.out, ["kind", "n_or_d", "size", "seconds"], out)
    print(f"log-log slope {slope:.3f}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_train_flags(p):
    p.add_argument("--config", help="YAML or JSON file with train settings; flags override it")
    p.add_argument("--data", help="CSV file with a header row")
    p.add_argument("--x-cols", dest="x_cols", help="comma-separated covariate columns")
    p.add_argument("--y-cols", dest="y_cols", help="comma-separated outcome columns")
    p.add_argument("--delimiter", help="field delimiter (default ',')")
    p.add_argument("--task", help="simulate this task instead of reading --data")
    p.add_argument("--n", type=int, help="rows to simulate with --task (default 2000)")
    p.add_argument("--dequantize", action="store_const", const=True,
                   help="jitter discrete outcome columns before training")
    p.add_argument("--c0", type=float, help="base shrinkage rate (default 0.05)")
    p.add_argument("--gamma", type=float, help="depth exponent of the shrinkage (default 0.5)")
    p.add_argument("--eta", type=float, help="imbalanced-split penalty (default 0.1)")
    p.add_argument("--phases", help="comma-separated kind:depth[:max_trees], "
                                    "e.g. logistic:6:1000,mlp(4,4):4:1000")
    p.add_argument("--min-samples", dest="min_samples", type=int,
                   help="smallest node that may be split (default 10)")
    p.add_argument("--grid-points", dest="grid_points", type=int,
                   help="candidate cuts per axis (default 20)")
    p.add_argument("--window", type=int, help="early-stopping window (default 10)")
    p.add_argument("--max-trees", dest="max_trees", type=int,
                   help="cap on trees over all phases (default 2000)")
    p.add_argument("--validation-fraction", dest="validation_fraction", type=float,
                   help="share of rows held out for early stopping (default 0.1)")
    p.add_argument("--seed", type=int, help="top-level seed (default 0)")
    p.add_argument("--eta-scaled", dest="eta_scaled", action="store_const", const=True,
                   help="multiply the split penalty by the node size")
    p.add_argument("--screen-top", dest="screen_top", type=int,
                   help="fit classifiers only for this many best constant-probability "
                        "candidates (0 = all, default)")
    p.add_argument("--rotations", type=int, help="rotations per axis pair (default 1)")
    p.add_argument("--axis-pairs", dest="axis_pairs",
                   help="comma-separated pairs like 0-1,1-2 (default all pairs)")
    p.add_argument("--x-bins", dest="x_bins", type=int,
                   help="k-means bins for mixture weights (default 8)")
    p.add_argument("--margin", type=float, help="unit-cube margin (default 0.01)")
    p.add_argument("--out", help="model file to write")
    p.add_argument("--trace", help="validation trace CSV (default <out>.trace.csv)")


def _add_model_data_flags(p, need_y=True):
    p.add_argument("--model", required=True, help="model file from 'train'")
    p.add_argument("--data", help="CSV file with a header row")
    p.add_argument("--x-cols", dest="x_cols", help="comma-separated covariate columns")
    if need_y:
        p.add_argument("--y-cols", dest="y_cols", help="comma-separated outcome columns")
    p.add_argument("--delimiter", default=",", help="field delimiter (default ',')")


def build_parser():
    parser = argparse.ArgumentParser(prog="ctflow", description=__doc__.split("\n")[0])
    parser.add_argument("--threads", type=int,
                        help=f"worker threads (default: ${THREADS_ENV} or all cores)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a flow or rotation ensemble")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="mean held-out log-likelihood")
    _add_model_data_flags(p)
    p.add_argument("--task", help="evaluate on a fresh simulated sample of this task")
    p.add_argument("--n", type=int, default=2000, help="rows to simulate with --task")
    p.add_argument("--seed", type=int, default=0, help="seed for --task data")
    p.add_argument("--out", help="metrics CSV (default stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample", help="draw outcomes for each covariate row")
    p.add_argument("--model", required=True, help="model file from 'train'")
    p.add_argument("--covariates", required=True, help="CSV with covariate columns")
    p.add_argument("--x-cols", dest="x_cols", required=True, help="covariate columns")
    p.add_argument("--delimiter", default=",", help="field delimiter (default ',')")
    p.add_argument("--n-per-row", dest="n_per_row", type=int, default=1,
                   help="draws per covariate row (default 1)")
    p.add_argument("--seed", type=int, default=0, help="sampling seed")
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_sample)

    from .data import TASKS, REFERENCE_X
    p = sub.add_parser("simulate", help="write a simulated dataset")
    p.add_argument("--task", required=True, choices=TASKS)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("truth", help="true density on the evaluation grid")
    p.add_argument("--task", required=True, choices=TASKS)
    p.add_argument("--x", type=float, action="append",
                   help="covariate value (repeatable; default the four reference values)")
    p.add_argument("--grid", type=int, default=64, help="cells per axis (default 64)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_truth)

    p = sub.add_parser("sse", help="grid SSE of a model against the true density")
    p.add_argument("--model", required=True)
    p.add_argument("--task", required=True, choices=TASKS)
    p.add_argument("--grid", type=int, default=64)
    p.add_argument("--out", help="report file (default stdout)")
    p.set_defaults(func=cmd_sse)

    p = sub.add_parser("bench", help="training-time scaling and density-evaluation timing")
    p.add_argument("--ns", default="500,1000,2000,4000,8000", help="training sizes")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--q", type=int, default=4)
    p.add_argument("--trees", type=int, default=10)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--eval-dims", dest="eval_dims", default="2,16",
                   help="outcome dimensions for the per-point evaluation timing")
    p.add_argument("--out", help="timing CSV (default stdout)")
    p.set_defaults(func=cmd_bench)
    parser._reference_x = REFERENCE_X
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "x", "unset") is None:
        args.x = list(parser._reference_x)
    if getattr(args, "phases", None) is not None and isinstance(args.phases, str):
        args.phases = _split_phases(args.phases)
    try:
        set_threads(args.threads)
        return args.func(args)
    except CTFlowError as e:
        print(f"ctflow {args.command}: error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"ctflow {args.command}: error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


def _split_phases(text):
    # commas also separate hidden sizes inside mlp(...), so split at depth 0 only
    out, depth, cur = [], 0, ""
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            out.append(cur.strip())
            cur = ""
        else:
            cur += ch
    if cur.strip():
        out.append(cur.strip())
    return out


if __name__ == "__main__":
    sys.exit(main())
