"""``epca`` command line.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
Artifacts are written atomically (temp file, then rename).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from datetime import datetime, timezone

import numpy as np
import scipy.sparse.linalg as spla

from . import __version__
from .decomp import FitConfig, pve, sca, sma, sparse_coding
from .matcore import RankDeficientError, atomic_write, read_csv, read_matrix, write_csv, write_mtx
from .simgen import FOUR_BLOCK_CONNECTIVITY, accuracy, excess_kurtosis, gen_lowrank, gen_sbm, scale_to_degree
from .tune import DEFAULT_FOLDS, cross_validate, make_grid

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
SEED_ENV = "EPCA_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _default_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def dumps(obj) -> str:
    """JSON text; floats use the shortest repr that round-trips exactly."""
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _write_json(path, payload, timestamp):
    doc = {"epca_version": __version__}
    if timestamp:
        doc["created"] = datetime.now(timezone.utc).isoformat()
    doc.update(payload)
    if path in (None, "-"):
        sys.stdout.write(dumps(doc))
    else:
        atomic_write(path, dumps(doc))


def _add_fit_args(p, gamma_z=False):
    p.add_argument("--input", required=True, help="CSV (dense) or .mtx (sparse) matrix")
    p.add_argument("--header", action="store_true", help="CSV input has a header row")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--gamma", type=float, help="l1 budget on loadings (default sqrt(p k))")
    if gamma_z:
        p.add_argument("--gamma-z", type=float, help="l1 budget on Z (default sqrt(n k))")
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--rotation", choices=["varimax", "absmin"], default="varimax")
    p.add_argument("--kaiser", dest="kaiser", action="store_true", default=None,
                   help="row-normalize before varimax")
    p.add_argument("--no-kaiser", dest="kaiser", action="store_false")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output JSON path ('-' for stdout)")
    p.add_argument("--loadings-csv", help="also write the loadings as CSV")
    p.add_argument("--no-timestamp", action="store_true", help="omit the 'created' field")


def build_parser():
    parser = _Parser(prog="epca", description="Sparse component analysis and sparse matrix approximation.")
    parser.add_argument("--version", action="version", version=f"epca {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    _add_fit_args(sub.add_parser("fit", help="sparse component analysis (SCA)"))
    _add_fit_args(sub.add_parser("sma", help="sparse matrix approximation"), gamma_z=True)
    _add_fit_args(sub.add_parser("code", help="sparse coding (SCA on the transpose)"))

    t = sub.add_parser("tune", help="choose k and gamma by K-fold cross-validation")
    t.add_argument("--input", required=True)
    t.add_argument("--header", action="store_true")
    t.add_argument("--k-grid", type=_int_list, required=True)
    t.add_argument("--gamma-grid", type=_float_list, help="default: sqrt(p k) per k")
    t.add_argument("--folds", type=int, default=DEFAULT_FOLDS)
    t.add_argument("--mode", choices=["sca", "sma"], default="sca")
    t.add_argument("--seed", type=int)
    t.add_argument("--jobs", type=int, default=1)
    t.add_argument("--out", required=True, help="CV table CSV (candidate,fold,mse)")
    t.add_argument("--summary", help="JSON summary path (default: OUT with .json suffix)")
    t.add_argument("--no-timestamp", action="store_true")

    sim = sub.add_parser("sim", help="generate synthetic data")
    simsub = sim.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    lr = simsub.add_parser("lowrank", help="sparse-loading low-rank model plus noise")
    lr.add_argument("--n", type=int, default=100)
    lr.add_argument("--p", type=int, default=100)
    lr.add_argument("--k", type=int, default=16)
    lr.add_argument("--truth-gamma", type=float, default=20.0)
    lr.add_argument("--noise-sd", type=float, default=0.1)
    lr.add_argument("--seed", type=int)
    lr.add_argument("--out", required=True, help="data CSV")
    lr.add_argument("--truth", help="sidecar JSON (default: OUT with .truth.json suffix)")
    lr.add_argument("--no-timestamp", action="store_true")
    sb = simsub.add_parser("sbm", help="stochastic block model adjacency")
    sb.add_argument("--n", type=int, default=900)
    sb.add_argument("--blocks", type=int, default=4)
    sb.add_argument("--scale", type=float, default=0.05,
                    help="multiplier on the connectivity pattern")
    sb.add_argument("--expected-degree", type=float,
                    help="rescale connectivity to this mean degree (overrides --scale)")
    sb.add_argument("--connectivity", help="CSV k x k connectivity pattern (default: built-in 4-block)")
    sb.add_argument("--seed", type=int)
    sb.add_argument("--out", required=True, help="adjacency .mtx")
    sb.add_argument("--labels", help="labels CSV (one label per line)")
    sb.add_argument("--truth", help="sidecar JSON (default: OUT with .truth.json suffix)")
    sb.add_argument("--no-timestamp", action="store_true")

    ev = sub.add_parser("eval", help="evaluation metrics")
    evsub = ev.add_subparsers(dest="metric", required=True, parser_class=_Parser)
    e1 = evsub.add_parser("pve", help="proportion of variance explained by loadings")
    e1.add_argument("--input", required=True)
    e1.add_argument("--header", action="store_true")
    e1.add_argument("--loadings", required=True, help="p x k loadings CSV")
    e1.add_argument("--out", default="-")
    e2 = evsub.add_parser("accuracy", help="permutation-matched clustering accuracy")
    e2.add_argument("--labels", required=True)
    e2.add_argument("--truth", required=True)
    e2.add_argument("--k", type=int, required=True)
    e2.add_argument("--out", default="-")
    e3 = evsub.add_parser("kurtosis", help="sample excess kurtosis of each column")
    e3.add_argument("--input", required=True)
    e3.add_argument("--header", action="store_true")
    e3.add_argument("--out", default="-")
    for e in (e1, e2, e3):
        e.add_argument("--no-timestamp", action="store_true")
    return parser


def _seed(args):
    return args.seed if args.seed is not None else _default_seed()


def _config(args, gamma_z=False):
    return FitConfig(k=args.k, gamma=args.gamma, gamma_z=getattr(args, "gamma_z", None) if gamma_z else None,
                     tol=args.tol, max_iter=args.max_iter, rotation=args.rotation,
                     kaiser_normalize=args.kaiser, seed=_seed(args))


def _load(args):
    if not os.path.exists(args.input):
        raise UsageError(f"no such file: {args.input}")
    return read_matrix(args.input, header=args.header)


def _sidecar(out, explicit):
    if explicit:
        return explicit
    root, _ = os.path.splitext(out)
    return root + ".truth.json"


def cmd_fit(args):
    X = _load(args)
    if args.command == "fit":
        fit = sca(X, _config(args))
        payload, loadings = fit.to_dict(), fit.loadings
    elif args.command == "sma":
        fit = sma(X, _config(args, gamma_z=True))
        payload, loadings = fit.to_dict(), fit.loadings
    else:
        fit = sparse_coding(X, _config(args))
        payload, loadings = fit.to_dict(), fit.scores
    payload = {"command": args.command, "input": os.path.basename(args.input), **payload}
    if args.loadings_csv:
        write_csv(args.loadings_csv, loadings)
    _write_json(args.out, payload, not args.no_timestamp)


def cmd_tune(args):
    X = _load(args)
    if any(k < 1 for k in args.k_grid):
        raise UsageError("k values must be positive")
    base = FitConfig(k=1, seed=_seed(args))
    grid = make_grid(args.k_grid, args.gamma_grid, base)
    res = cross_validate(X, grid, K=args.folds, seed=_seed(args), mode=args.mode, jobs=args.jobs)
    lines = ["candidate,fold,mse"] + [f"{c},{f},{v!r}" for c, f, v in res.rows()]
    atomic_write(args.out, "\n".join(lines) + "\n")
    summary = args.summary or os.path.splitext(args.out)[0] + ".json"
    _write_json(summary, {"command": "tune", "folds": args.folds, "seed": _seed(args), **res.summary()},
                not args.no_timestamp)


def cmd_sim(args):
    seed = _seed(args)
    if args.kind == "lowrank":
        inst = gen_lowrank(args.n, args.p, args.k, truth_gamma=args.truth_gamma,
                           noise_sd=args.noise_sd, seed=seed)
        write_csv(args.out, inst.X)
        meta = {"kind": "lowrank", "n": args.n, "p": args.p, "k": args.k,
                "truth_gamma": args.truth_gamma, "noise_sd": args.noise_sd, **inst.truth_dict()}
    else:
        if args.connectivity:
            pattern = read_csv(args.connectivity)
            if pattern.shape != (args.blocks, args.blocks):
                raise UsageError(f"connectivity must be {args.blocks}x{args.blocks}")
        elif args.blocks == 4:
            pattern = FOUR_BLOCK_CONNECTIVITY
        else:
            raise UsageError("--connectivity is required unless --blocks 4")
        sizes = [args.n // args.blocks + (1 if i < args.n % args.blocks else 0) for i in range(args.blocks)]
        if args.expected_degree is not None:
            C = scale_to_degree(sizes, pattern, args.expected_degree)
        else:
            C = args.scale * pattern
        inst = gen_sbm(args.n, sizes, C, seed)
        write_mtx(args.out, inst.adjacency)
        if args.labels:
            atomic_write(args.labels, "".join(f"{v}\n" for v in inst.labels))
        meta = {"kind": "sbm", "n": args.n, "blocks": args.blocks, "scale": args.scale,
                "expected_degree": args.expected_degree, **inst.truth_dict()}
    _write_json(_sidecar(args.out, args.truth), meta, not args.no_timestamp)


def _read_labels(path):
    if not os.path.exists(path):
        raise UsageError(f"no such file: {path}")
    vals = []
    with open(path, encoding="utf-8") as fh:
        for ln in fh:
            ln = ln.strip()
            if ln:
                try:
                    vals.append(int(float(ln.split(",")[0])))
                except ValueError:
                    raise UsageError(f"malformed label {ln!r} in {path}") from None
    return np.array(vals, dtype=np.int64)


def cmd_eval(args):
    if args.metric == "pve":
        X = _load(args)
        if not os.path.exists(args.loadings):
            raise UsageError(f"no such file: {args.loadings}")
        payload = {"pve": pve(X, read_csv(args.loadings))}
    elif args.metric == "accuracy":
        payload = {"accuracy": accuracy(_read_labels(args.labels), _read_labels(args.truth), args.k)}
    else:
        X = _load(args)
        payload = {"kurtosis": [excess_kurtosis(X[:, j]) for j in range(X.shape[1])]}
    _write_json(args.out, {"metric": args.metric, **payload}, not args.no_timestamp)


COMMANDS = {"fit": cmd_fit, "sma": cmd_fit, "code": cmd_fit, "tune": cmd_tune, "sim": cmd_sim,
            "eval": cmd_eval}


def run(argv=None) -> int:
    """Run one command; returns the exit code instead of exiting."""
    try:
        try:
            args = build_parser().parse_args(argv)
        except SystemExit as exc:  # --help / --version
            return int(exc.code or 0)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RankDeficientError, np.linalg.LinAlgError, spla.ArpackNoConvergence, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RuntimeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
