"""Command-line interface: graph generation, simulation, identification,
prediction, evaluation, and config-driven experiment runs."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .basis import LibrarySpec, build_library
from .dynamics import SYSTEMS, default_params, initial_state, simulate
from .errors import ConfigError, NetidentError
from .experiment import ExperimentConfig, run, sweep
from .fitting import FitConfig, fit
from .graph import generate, load_edge_list, remove_edges, remove_nodes, save_edge_list
from .metrics import smape, trajectory_report
from .model import ModelSpec, equation_strings
from .predict import segment_predict
from .support import SparseCoefficients, SupportConfig, SupportMask, discover_support
from .trajectory import load_binary, load_csv, save_binary, save_csv

logger = logging.getLogger("netident")


def _load_traj(path: str):
    return load_csv(path) if path.endswith(".csv") else load_binary(path)


def _out_dir(value: str | None) -> str:
    return value if value is not None else os.environ.get("NETIDENT_OUT", "out")


def _emit(payload: dict, path: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if path:
        Path(path).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _cmd_gen_graph(args) -> int:
    params = {}
    if args.model == "ba":
        params["m"] = args.m
    elif args.model == "ws":
        params["k"], params["p"] = args.k, args.p
    elif args.model == "er":
        params["p"] = args.p
    elif args.model == "sbm":
        params["sizes"] = [int(s) for s in args.sizes.split(",")]
        rows = [r.split(",") for r in args.probs.split(";")]
        params["probs"] = np.array([[float(v) for v in row] for row in rows])
    elif args.model == "rgm":
        params["radius"] = args.radius
    g = generate(args.model, n=args.n, seed=args.seed, **params)
    save_edge_list(g, args.out)
    print(f"wrote {args.out}: n={g.n} edges={g.num_edges}")
    return 0


def _cmd_simulate(args) -> int:
    g = load_edge_list(args.graph)
    constants = json.loads(args.constants) if args.constants else {}
    params = default_params(args.system, n=g.n, seed=args.seed, coupling=args.coupling, **constants)
    x0 = initial_state(params, g.n, args.seed)
    traj = simulate(params, g, x0, dt=args.dt, n_steps=args.steps, integrator=args.integrator)
    if args.out.endswith(".csv"):
        save_csv(traj, args.out)
    else:
        save_binary(traj, args.out)
    print(f"wrote {args.out}: T={traj.n_steps} n={traj.n_nodes} d={traj.state_dim}")
    return 0


def _cmd_perturb(args) -> int:
    g = load_edge_list(args.graph)
    if args.drop_nodes:
        g, index_map = remove_nodes(g, args.drop_nodes, args.seed)
        if args.map_out:
            Path(args.map_out).write_text(
                "\n".join(str(int(v)) for v in index_map) + "\n", encoding="utf-8"
            )
    if args.drop_edges:
        g = remove_edges(g, args.drop_edges, args.seed)
    save_edge_list(g, args.out)
    print(f"wrote {args.out}: n={g.n} edges={g.num_edges}")
    return 0


def _library_from_args(args, state_dim: int):
    spec_dict = json.loads(args.library) if args.library else {}
    return build_library(LibrarySpec.from_dict(spec_dict), state_dim=state_dim)


def _cmd_identify(args) -> int:
    traj = _load_traj(args.traj)
    g = load_edge_list(args.graph)
    lib = _library_from_args(args, traj.state_dim)
    if args.phase in ("1", "both"):
        sup_cfg = SupportConfig(
            k_sample=min(args.k_sample, g.n),
            lam=args.lam,
            eps=args.eps,
            m_min=args.m_min,
            delta=args.delta,
            seed=args.seed,
        )
        sup = discover_support(traj, g, lib, sup_cfg, threads=args.threads)
        phase1 = {
            "mask": sup.mask.to_dict(),
            "init_coefficients": {
                "self": sup.init_coefficients.self_coef.tolist(),
                "pair": sup.init_coefficients.pair_coef.tolist(),
            },
            "sampled_nodes": [int(v) for v in sup.sampled_nodes],
            "labels": [int(v) for v in sup.labels],
            "per_node_coefficients": [
                {"self": c.self_coef.tolist(), "pair": c.pair_coef.tolist()} for c in sup.per_node
            ],
        }
        if args.phase == "1":
            _emit(phase1, args.out)
            return 0
        mask, init = sup.mask, sup.init_coefficients
    else:
        if not args.mask:
            raise ConfigError("phase 2 requires --mask", field="mask")
        payload = json.loads(Path(args.mask).read_text(encoding="utf-8"))
        mask = SupportMask.from_dict(payload["mask"])
        init = None
        if "init_coefficients" in payload:
            init = SparseCoefficients(
                self_coef=np.asarray(payload["init_coefficients"]["self"], dtype=float),
                pair_coef=np.asarray(payload["init_coefficients"]["pair"], dtype=float),
            )
    fit_cfg = FitConfig(horizon=args.horizon, batch=args.batch, max_iters=args.max_iters, seed=args.seed)
    result = fit(traj, g, mask, lib, fit_cfg, init=init)
    model = result.model
    payload = model.to_dict()
    payload["fit"] = {"iterations": result.n_iters, "converged": result.converged}
    _emit(payload, args.out)
    for line in equation_strings(model):
        print(line, file=sys.stderr)
    return 0


def _cmd_predict(args) -> int:
    model = ModelSpec.load(args.model)
    g = load_edge_list(args.graph)
    traj = _load_traj(args.init)
    seg = segment_predict(model, g, traj, args.segment_len, integrator=args.integrator)
    save_binary(seg.trajectory, args.out)
    if seg.failed_segments:
        print(f"failed segments: {seg.failed_segments}", file=sys.stderr)
    print(f"wrote {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    payload: dict = {}
    if args.truth and args.pred:
        truth, pred = _load_traj(args.truth), _load_traj(args.pred)
        payload.update(trajectory_report(truth, pred))
    if args.model and args.truth_model:
        payload["smape"] = smape(ModelSpec.load(args.model), ModelSpec.load(args.truth_model))
    if not payload:
        raise ConfigError("evaluate needs --truth/--pred and/or --model/--truth-model", field="evaluate")
    _emit(payload, args.out)
    return 0


def _cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    report = run(cfg, out_dir=_out_dir(args.out) if args.out or "NETIDENT_OUT" in os.environ else None, threads=args.threads)
    smape_val = report.get("smape")
    print(f"run complete: smape={smape_val if smape_val is not None else 'n/a'}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    values = [json.loads(v) for v in args.values.split(",")]
    rows = sweep(
        cfg,
        axis=args.axis,
        values=values,
        repeats=args.repeats,
        out_dir=_out_dir(args.out) if args.out or "NETIDENT_OUT" in os.environ else None,
        threads=args.threads,
    )
    print(f"sweep complete: {len(rows)} runs")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netident",
        description="Infer node-invariant governing equations of networked dynamics and predict by integration.",
    )
    parser.add_argument("--threads", type=int, default=1, help="worker cap for parallel stages")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-graph", help="generate a random graph and write its edge list")
    p.add_argument("--model", required=True, choices=["ba", "ws", "er", "sbm", "rgm"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--p", type=float, default=0.1)
    p.add_argument("--sizes", default="")
    p.add_argument("--probs", default="")
    p.add_argument("--radius", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_graph)

    p = sub.add_parser("simulate", help="integrate a benchmark system on a graph")
    p.add_argument("--system", required=True, choices=list(SYSTEMS))
    p.add_argument("--graph", required=True)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--coupling", type=float, default=None)
    p.add_argument("--constants", default="", help="JSON dict of system constants")
    p.add_argument("--integrator", choices=["rk4", "euler"], default="rk4")
    p.add_argument("--out", required=True, help=".bin (packed) or .csv")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("perturb", help="drop nodes and/or edges from a graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--drop-nodes", type=float, default=0.0)
    p.add_argument("--drop-edges", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--map-out", default="", help="write the old-to-new node index map")
    p.set_defaults(func=_cmd_perturb)

    p = sub.add_parser("identify", help="infer the support mask and/or coefficients")
    p.add_argument("--phase", choices=["1", "2", "both"], default="both")
    p.add_argument("--traj", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--library", default="", help="JSON library spec")
    p.add_argument("--mask", default="", help="phase-1 output JSON (phase 2 only)")
    p.add_argument("--k-sample", type=int, default=50)
    p.add_argument("--lam", type=float, default=None)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--m-min", type=int, default=5)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--horizon", type=int, default=100)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--max-iters", type=int, default=150)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="", help="output JSON path (stdout when omitted)")
    p.set_defaults(func=_cmd_identify)

    p = sub.add_parser("predict", help="segment-wise prediction from an inferred model")
    p.add_argument("--model", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--init", required=True, help="trajectory supplying segment initial states")
    p.add_argument("--segment-len", type=int, default=100)
    p.add_argument("--integrator", choices=["rk4", "euler"], default="rk4")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("evaluate", help="trajectory metrics and/or coefficient error")
    p.add_argument("--truth", default="")
    p.add_argument("--pred", default="")
    p.add_argument("--model", default="")
    p.add_argument("--truth-model", default="")
    p.add_argument("--out", default="")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("run", help="full pipeline from a JSON experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="repeat runs along one config axis")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", required=True, help="dotted config path, e.g. noise.snr_db")
    p.add_argument("--values", required=True, help="comma-separated JSON values")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--out", default="")
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as err:
        field = f" (field: {err.field})" if err.field else ""
        print(f"error [config]: {err}{field}", file=sys.stderr)
        return 2
    except FileNotFoundError as err:
        print(f"error [config]: {err}", file=sys.stderr)
        return 2
    except NetidentError as err:
        stage = getattr(err, "stage", None)
        tag = f"[{stage}] " if stage else ""
        print(f"error {tag}{type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
