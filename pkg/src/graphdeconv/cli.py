"""Command line entry point ``graphdeconv``.

Exit codes: 0 success, 2 configuration or input error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .bench import ExperimentConfig, aggregate, emit, run_experiment
from .blind import BlindProblem, MMOptions, blind_recover
from .errors import ConfigError, GraphDeconvError, Infeasible, NotDiagonalizable, NumericalBreakdown
from .filter_id import KnownInputProblem, exponential_weights, identify_sparse_filter, identify_subspace_filter
from .graph import Dictionary, GRAPH_DEFAULTS, GraphFilter, generate_graph
from .recovery import KnownFilterProblem, ObservationModel, recover_l1, recover_reweighted
from .sampling import exhaustive_sample, greedy_sample, random_sample

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="graphdeconv", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="run a Monte Carlo experiment from a JSON config")
    b.add_argument("--config", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--trials", type=int, help="override the trial count")

    r = sub.add_parser("recover", help="recover inputs, filters or both from observations")
    r.add_argument("--mode", choices=["known-filter", "known-input", "blind"], required=True)
    r.add_argument("--graph", required=True, help="edge-list CSV or MatrixMarket shift")
    r.add_argument("--n", type=int, help="node count when the edge list omits isolated nodes")
    r.add_argument("--obs", required=True, help="JSON with sampling, y and optional known/x_k/eps")
    r.add_argument("--filter", help="known filter taps (CSV vector), known-filter mode")
    r.add_argument("--input", help="known input (CSV vector), known-input mode")
    r.add_argument("--l", type=int, help="filter length for known-input and blind modes")
    r.add_argument("--subspace", help="input dictionary (CSV or .mtx); filter dictionary in known-input mode")
    r.add_argument("--known", help="JSON {known: [...], x_k: [...]} (overrides the obs file)")
    r.add_argument("--surrogate", help="log|l1 (known filter/input) or logdet|nuclear (blind)")
    r.add_argument("--tau-x", type=float, default=0.0)
    r.add_argument("--tau-h", type=float, default=0.0)
    r.add_argument("--beta", type=float, help="exponential tap weights")
    r.add_argument("--sparse-alpha", action="store_true")
    r.add_argument("--out", help="write the JSON result here instead of stdout")

    s = sub.add_parser("sample", help="choose a sampling set for a matrix")
    s.add_argument("--matrix", required=True, help="MatrixMarket or CSV matrix, one row per node")
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--method", choices=["greedy", "exhaustive", "random"], default="greedy")
    s.add_argument("--seed", type=int, default=0)

    g = sub.add_parser("generate-graph", help="draw a random graph")
    g.add_argument("--model", choices=sorted(GRAPH_DEFAULTS), required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--p", type=float)
    g.add_argument("--m0", type=int)
    g.add_argument("--m", type=int)
    g.add_argument("--k", type=int)
    g.add_argument("--beta", type=float)
    g.add_argument("--out", help="edge-list CSV (default stdout) or .mtx file")
    return ap


def _emit_json(doc, out) -> None:
    text = json.dumps(doc, indent=1)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _cmd_bench(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    if args.trials:
        cfg = ExperimentConfig.from_dict({**cfg.__dict__, "trials": args.trials})
    records = run_experiment(cfg, workers=args.workers)
    emit(records, args.out)
    for row in aggregate(records):
        print(f"{row.surrogate:8s} m={row.m:4d} median_rmse={row.median_rmse:.3e} pr={row.recovery_prob:.3f}")
    return EXIT_OK


def _known_override(args, n, known, x_k):
    if not args.known:
        return known, x_k
    doc = io.read_json(args.known)
    _, _, known, x_k, _ = io.observations_from_json({"sampling": [], "y": [], **doc}, n)
    return known, x_k


def _cmd_recover(args) -> int:
    shift = io.load_shift(args.graph, args.n)
    n = shift.n
    sampling, y, known, x_k, eps = io.observations_from_json(io.read_json(args.obs), n)
    known, x_k = _known_override(args, n, known, x_k)

    if args.mode == "known-filter":
        if not args.filter:
            raise ConfigError("known-filter mode needs --filter")
        dictionary = Dictionary(io.read_matrix(args.subspace)) if args.subspace else None
        prob = KnownFilterProblem(
            shift, GraphFilter(io.read_vector(args.filter)), ObservationModel(sampling, y, known, x_k, eps), dictionary
        )
        res = recover_l1(prob) if args.surrogate == "l1" else recover_reweighted(prob)
        _emit_json(res.to_json_dict(), args.out)
        return EXIT_OK

    if args.mode == "known-input":
        if not args.input:
            raise ConfigError("known-input mode needs --input")
        x = io.read_vector(args.input)
        if args.subspace:
            prob = KnownInputProblem(
                shift,
                x,
                sampling,
                y,
                dictionary=Dictionary(io.read_matrix(args.subspace), kind="filter"),
                sparse_alpha=args.sparse_alpha,
                eps=eps,
            )
            res = identify_subspace_filter(prob)
        else:
            if not args.l:
                raise ConfigError("known-input mode needs --l")
            weights = exponential_weights(args.l, args.beta) if args.beta else None
            prob = KnownInputProblem(shift, x, sampling, y, l=args.l, weights=weights, eps=eps)
            res = identify_sparse_filter(prob, surrogate=args.surrogate or "log")
        _emit_json(res.to_json_dict(), args.out)
        return EXIT_OK

    if not args.l:
        raise ConfigError("blind mode needs --l")
    dictionary = Dictionary(io.read_matrix(args.subspace)) if args.subspace else None
    prob = BlindProblem(
        shift,
        args.l,
        sampling,
        y,
        known=known,
        x_k=x_k,
        eps=eps,
        tau_x=args.tau_x,
        tau_h=args.tau_h,
        weights=exponential_weights(args.l, args.beta) if args.beta else None,
        dictionary=dictionary,
        mm=MMOptions(surrogate=args.surrogate or "logdet"),
    )
    _emit_json(blind_recover(prob).to_json_dict(), args.out)
    return EXIT_OK


def _cmd_sample(args) -> int:
    a = io.read_matrix(args.matrix)
    if args.method == "greedy":
        sel = greedy_sample(a, args.m)
    elif args.method == "exhaustive":
        sel = exhaustive_sample(a, args.m)
    else:
        sel = random_sample(a.shape[0], args.m, np.random.default_rng(args.seed))
    print(sel.to_json())
    return EXIT_OK


def _cmd_generate(args) -> int:
    params = {k: getattr(args, k) for k in ("p", "m0", "m", "k", "beta") if getattr(args, k) is not None}
    allowed = set(GRAPH_DEFAULTS[args.model])
    stray = set(params) - allowed
    if stray:
        raise ConfigError(f"{args.model} graphs take {sorted(allowed)}, not {sorted(stray)}")
    shift = generate_graph(args.model, args.n, args.seed, **params)
    if args.out and Path(args.out).suffix in (".mtx", ".mm"):
        io.write_matrix_market(args.out, shift)
    else:
        io.write_edge_list(args.out or sys.stdout, shift)
    return EXIT_OK


COMMANDS = {"bench": _cmd_bench, "recover": _cmd_recover, "sample": _cmd_sample, "generate-graph": _cmd_generate}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (Infeasible, NumericalBreakdown, NotDiagonalizable) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (GraphDeconvError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
