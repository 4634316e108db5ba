"""Reproducible experiment driver: one config in, model + report files out."""
from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .basis import LibrarySpec, build_library, dominant_periods
from .dynamics import default_params, initial_state, simulate, true_coefficients
from .errors import ConfigError, NetidentError, ParameterError
from .fitting import FitConfig, fit, refine_mask
from .graph import Graph, generate, load_edge_list, remove_edges, remove_nodes
from .metrics import smape, trajectory_report
from .model import ModelSpec, equation_strings
from .predict import segment_predict
from .support import SupportConfig, discover_support
from .trajectory import Trajectory, add_noise, save_binary, subsample, truncate

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

_DEFAULTS = {
    "noise": {"snr_db": None},
    "degradation": {"stride": 1, "truncate": None, "drop_nodes": 0.0, "drop_edges": 0.0},
    "library": {},
    "support": {},
    "fit": {"integrator": "midpoint"},
    "predict": {"enabled": True, "segment_len": 100, "integrator": "rk4"},
}

# offsets applied to the master seed, one independent stream per random stage
_SEED_GRAPH = 0
_SEED_X0 = 1
_SEED_NOISE = 2
_SEED_DROP_NODES = 3
_SEED_DROP_EDGES = 4
_SEED_SUPPORT = 5
_SEED_FIT = 6
_SEED_OMEGA = 7


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a full pipeline run needs, JSON round-trippable."""

    seed: int
    graph: dict
    system: dict
    simulation: dict
    train_fraction: float = 0.8
    noise: dict = field(default_factory=dict)
    degradation: dict = field(default_factory=dict)
    library: dict = field(default_factory=dict)
    support: dict = field(default_factory=dict)
    fit: dict = field(default_factory=dict)
    predict: dict = field(default_factory=dict)
    refine_threshold: float = 0.02  # per-dimension post-fit pruning; 0 disables
    output_dir: str = "out"
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if not 0.0 < self.train_fraction <= 1.0:
            raise ConfigError("train_fraction must be in (0, 1]", field="train_fraction")
        if "path" not in self.graph and "model" not in self.graph:
            raise ConfigError("graph requires 'model' or 'path'", field="graph")
        if "name" not in self.system:
            raise ConfigError("system requires 'name'", field="system.name")
        for key in ("dt", "steps"):
            if key not in self.simulation:
                raise ConfigError(f"simulation requires '{key}'", field=f"simulation.{key}")
        for name in ("noise", "degradation", "library", "support", "fit", "predict"):
            merged = dict(_DEFAULTS.get(name, {}))
            merged.update(getattr(self, name))
            object.__setattr__(self, name, merged)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "seed": self.seed,
            "graph": dict(self.graph),
            "system": dict(self.system),
            "simulation": dict(self.simulation),
            "train_fraction": self.train_fraction,
            "noise": dict(self.noise),
            "degradation": dict(self.degradation),
            "library": dict(self.library),
            "support": dict(self.support),
            "fit": dict(self.fit),
            "predict": dict(self.predict),
            "refine_threshold": self.refine_threshold,
            "output_dir": self.output_dir,
        }

    @staticmethod
    def from_dict(d: dict) -> "ExperimentConfig":
        d = dict(d)
        d.pop("schema_version", None)
        try:
            return ExperimentConfig(**d)
        except TypeError as err:
            raise ConfigError(str(err), field="config") from None

    @staticmethod
    def load(path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return ExperimentConfig.from_dict(json.load(fh))


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _build_graph(cfg: ExperimentConfig) -> Graph:
    spec = dict(cfg.graph)
    if "path" in spec:
        path = spec["path"]
        if not Path(path).exists():
            raise ConfigError(f"graph path '{path}' does not exist", field="graph.path")
        return load_edge_list(path, directed=bool(spec.get("directed", False)))
    model = spec.pop("model")
    n = int(spec.pop("n"))
    return generate(model, n=n, seed=cfg.seed + _SEED_GRAPH, **spec)


def _finite_rows(values: np.ndarray) -> np.ndarray:
    return np.isfinite(values).all(axis=(1, 2))


def run(config: ExperimentConfig | dict, out_dir=None, threads: int = 1) -> dict:
    """Execute the full pipeline and write model.json, pred.bin, report.json,
    and a manifest embedding the config and library for provenance."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    walltimes: dict[str, float] = {}
    stage = "setup"
    try:
        stage = "graph"
        tic = time.perf_counter()
        g_true = _build_graph(cfg)
        walltimes[stage] = time.perf_counter() - tic

        stage = "simulate"
        tic = time.perf_counter()
        sys_spec = dict(cfg.system)
        params = default_params(
            sys_spec["name"],
            n=g_true.n,
            seed=cfg.seed + _SEED_OMEGA,
            coupling=sys_spec.get("coupling"),
            **sys_spec.get("constants", {}),
        )
        sim = cfg.simulation
        x0 = initial_state(params, g_true.n, cfg.seed + _SEED_X0)
        clean = simulate(
            params,
            g_true,
            x0,
            dt=float(sim["dt"]),
            n_steps=int(sim["steps"]),
            integrator=sim.get("integrator", "rk4"),
        )
        walltimes[stage] = time.perf_counter() - tic

        stage = "degrade"
        tic = time.perf_counter()
        observed = add_noise(clean, cfg.noise.get("snr_db"), cfg.seed + _SEED_NOISE)
        deg = cfg.degradation
        g_infer = g_true
        if deg.get("drop_nodes"):
            g_infer, index_map = remove_nodes(g_infer, float(deg["drop_nodes"]), cfg.seed + _SEED_DROP_NODES)
            observed = observed.select_nodes(index_map)
            clean = clean.select_nodes(index_map)
        if deg.get("drop_edges"):
            g_infer = remove_edges(g_infer, float(deg["drop_edges"]), cfg.seed + _SEED_DROP_EDGES)
        stride = int(deg.get("stride") or 1)
        if stride > 1:
            observed = subsample(observed, stride)
            clean = subsample(clean, stride)
        if deg.get("truncate"):
            observed = truncate(observed, int(deg["truncate"]))
            clean = truncate(clean, int(deg["truncate"]))
        walltimes[stage] = time.perf_counter() - tic

        stage = "library"
        lib_spec_dict = dict(cfg.library)
        auto_periods = int(lib_spec_dict.pop("auto_periods", 0) or 0)
        t_train = max(int(np.floor(cfg.train_fraction * observed.n_steps)), 2)
        train = truncate(observed, t_train)
        discovered: list[float] = []
        if auto_periods > 0:
            discovered = dominant_periods(train, auto_periods)
            declared = list(lib_spec_dict.get("time_periods", []))
            lib_spec_dict["time_periods"] = declared + [p for p in discovered if p not in declared]
        lib = build_library(LibrarySpec.from_dict(lib_spec_dict), state_dim=params.state_dim)

        stage = "support"
        tic = time.perf_counter()
        sup_cfg = SupportConfig(**{**cfg.support, "seed": cfg.support.get("seed", cfg.seed + _SEED_SUPPORT)})
        sup = discover_support(train, g_infer, lib, sup_cfg, threads=threads)
        walltimes[stage] = time.perf_counter() - tic

        stage = "fit"
        tic = time.perf_counter()
        fit_cfg = FitConfig(**{**cfg.fit, "seed": cfg.fit.get("seed", cfg.seed + _SEED_FIT)})
        result = fit(train, g_infer, sup.mask, lib, fit_cfg, init=sup.init_coefficients)
        model = result.model
        if cfg.refine_threshold > 0:
            # pruning a spurious term removes the flat direction it rode on,
            # so prune and refit until the support stabilizes
            for _ in range(3):
                new_mask, pruned = refine_mask(model, cfg.refine_threshold, per_dimension=True)
                if new_mask.n_active == model.n_active:
                    break
                logger.info("refine pruned %d terms; refitting", model.n_active - new_mask.n_active)
                result = fit(train, g_infer, new_mask, lib, fit_cfg, init=_as_sparse(pruned))
                model = result.model
        model.save(out / "model.json")
        walltimes[stage] = time.perf_counter() - tic

        stage = "predict"
        tic = time.perf_counter()
        pred_cfg = cfg.predict
        seg = None
        if pred_cfg.get("enabled", True):
            seg = segment_predict(
                model,
                g_infer,
                observed,
                int(pred_cfg.get("segment_len", 100)),
                integrator=pred_cfg.get("integrator", "rk4"),
            )
            save_binary(seg.trajectory, out / "pred.bin")
        walltimes[stage] = time.perf_counter() - tic

        stage = "evaluate"
        tic = time.perf_counter()
        truth_model = true_coefficients(params, lib)
        if truth_model is not None:
            _write_json(out / "truth_model.json", truth_model.to_dict())
        report = {
            "schema_version": SCHEMA_VERSION,
            "smape": smape(model, truth_model) if truth_model is not None else None,
            "n_active": model.n_active,
            "equations": equation_strings(model),
            "mask": model.mask.to_dict(),
            "failed_segments": seg.failed_segments if seg is not None else None,
            "fit": {
                "iterations": result.n_iters,
                "restarts": result.restarts,
                "converged": result.converged,
                "final_loss": min(result.loss_history) if result.loss_history else None,
            },
            "discovered_periods": discovered,
        }
        for name, lo, hi in (
            ("train", 0, t_train),
            ("test", t_train, observed.n_steps),
        ):
            if seg is None or hi - lo < 1:
                report[name] = None
                continue
            rows = _finite_rows(seg.trajectory.values[lo:hi])
            if not rows.any():
                report[name] = None
                continue
            report[name] = trajectory_report(
                clean.values[lo:hi][rows], seg.trajectory.values[lo:hi][rows]
            )
        _write_json(out / "report.json", report)
        walltimes[stage] = time.perf_counter() - tic

        manifest = {
            "schema_version": SCHEMA_VERSION,
            "package_version": __version__,
            "numpy_version": np.__version__,
            "config": cfg.to_dict(),
            "library": {
                "spec": lib.spec.to_dict(),
                "self_terms": lib.self_names,
                "pair_terms": lib.pair_names,
            },
            "graph": {"n": g_infer.n, "edges": g_infer.num_edges},
            "sampled_nodes": [int(v) for v in sup.sampled_nodes],
            "walltimes_sec": {k: round(v, 4) for k, v in walltimes.items()},
        }
        _write_json(out / "manifest.json", manifest)
        return report
    except NetidentError as err:
        if not getattr(err, "stage", None):
            err.stage = stage  # type: ignore[attr-defined]
        raise


def _as_sparse(model: ModelSpec):
    from .support import SparseCoefficients

    return SparseCoefficients(self_coef=model.w_self, pair_coef=model.w_pair)


# ---------------------------------------------------------------------------
# Parameter sweeps
# ---------------------------------------------------------------------------


def _set_path(d: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    cur = d
    for k in keys[:-1]:
        if k not in cur or not isinstance(cur[k], dict):
            raise ParameterError(f"sweep axis '{dotted}' not found in config")
        cur = cur[k]
    if keys[-1] not in cur:
        raise ParameterError(f"sweep axis '{dotted}' not found in config")
    cur[keys[-1]] = value


def sweep(
    config: ExperimentConfig | dict,
    axis: str,
    values: list,
    repeats: int,
    out_dir=None,
    threads: int = 1,
) -> list[dict]:
    """Run the pipeline repeats times per axis value with derived seeds;
    writes per-run rows (sweep.csv) and per-value mean/std/median (summary.csv)."""
    if not values:
        raise ParameterError("sweep needs at least one axis value")
    if repeats < 1:
        raise ParameterError("repeats must be >= 1")
    if not isinstance(config, ExperimentConfig):
        config = ExperimentConfig.from_dict(config)
    base = config.to_dict()  # stage defaults merged, so every axis is addressable
    out = Path(out_dir if out_dir is not None else base.get("output_dir", "out"))
    out.mkdir(parents=True, exist_ok=True)

    jobs = []
    for vi, value in enumerate(values):
        for rep in range(repeats):
            cfg_dict = json.loads(json.dumps(base))  # deep copy
            _set_path(cfg_dict, axis, value)
            cfg_dict["seed"] = int(base.get("seed", 0)) + rep
            run_dir = out / f"{axis.replace('.', '_')}={value}" / f"rep{rep}"
            jobs.append((vi, value, rep, cfg_dict, run_dir))

    def one(job):
        vi, value, rep, cfg_dict, run_dir = job
        report = run(cfg_dict, out_dir=run_dir, threads=1)
        test = report.get("test") or {}
        return {
            "axis": axis,
            "value": value,
            "repeat": rep,
            "seed": cfg_dict["seed"],
            "smape": report.get("smape"),
            "test_mape_percent": test.get("mape_percent"),
            "test_mse": test.get("mse"),
            "test_r2": test.get("r2"),
        }

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, jobs))
    else:
        rows = [one(job) for job in jobs]

    fields = ["axis", "value", "repeat", "seed", "smape", "test_mape_percent", "test_mse", "test_r2"]
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)

    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["axis", "value", "metric", "mean", "std", "median"])
        for value in values:
            group = [r for r in rows if r["value"] == value]
            for metric in ("smape", "test_mape_percent", "test_mse", "test_r2"):
                vals = np.array([r[metric] for r in group if r[metric] is not None], dtype=float)
                if len(vals) == 0:
                    continue
                writer.writerow(
                    [axis, value, metric, float(vals.mean()), float(vals.std()), float(np.median(vals))]
                )
    return rows
