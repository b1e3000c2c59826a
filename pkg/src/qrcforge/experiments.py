"""Experiment drivers behind the command-line subcommands.

Every driver resolves its configuration fully (derived seeds included),
writes its outputs with deterministic formatting and finishes with a
manifest.  Wall-clock time goes to a separate ``runtime.json`` so that all
other files are reproducible byte for byte.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from . import ga as ga_mod
from . import tasks as T
from .config import ConfigError, ExperimentConfig, derive_seed
from .esn import EsnParams, EsnReservoir, esn_multi_task_loss, init_esn_population, task_encodings
from .infometrics import ChannelPartition, Bipartition, eigenstate_entanglement, tripartite_mutual_info
from .pipeline import (
    EpisodeSplit, PipelineConfig, QuantumReservoir, TaskDataset, TaskResult,
    evaluate_reservoir, multi_task_loss, nmse,
)
from .qcore import ReservoirParams, build_hamiltonian, propagator

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- output helpers

def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def finish(out: Path, cfg: ExperimentConfig, seeds: dict, metrics: dict, started: float) -> dict:
    config = cfg.to_dict()
    # a resumed GA run reproduces the uninterrupted one, so the manifest
    # describes the run without the (deleted) checkpoint
    config["resume"] = None
    manifest = {
        "tool_version": __version__,
        "config": config,
        "derived_seeds": seeds,
        "metrics": metrics,
    }
    write_json(out / "manifest.json", manifest)
    write_json(out / "runtime.json", {"wall_clock_seconds": round(time.perf_counter() - started, 3)})
    return manifest


# ---------------------------------------------------------------- tasks from config

ODE_TASKS = {
    "repressilator": (T.RepressilatorParams, {"train": T.REPRESSILATOR_TRAIN, "test": T.REPRESSILATOR_TEST},
                      T.REPRESSILATOR_INIT, T.gen_repressilator),
    "motif": (T.MotifParams, {"train": T.MOTIF_TRAIN, "test": T.MOTIF_TEST}, T.MOTIF_INIT,
              T.gen_chaotic_motif),
    "chua": (T.ChuaParams, {"train": T.CHUA_TRAIN, "test": T.CHUA_TEST}, T.CHUA_INIT,
             T.gen_fractional_chua),
}


def _split_from(value, default: EpisodeSplit) -> EpisodeSplit:
    if value is None:
        return default
    if isinstance(value, dict):
        return EpisodeSplit(**value)
    return EpisodeSplit(*value)


def _split_list(s: EpisodeSplit) -> list[int]:
    return [s.G0, s.G1, s.K]


def resolve_task(spec: dict, master_seed: int, index: int) -> dict:
    """Fill every default of a task spec; resolving twice changes nothing."""
    spec = dict(spec)
    kind = spec.get("task")
    name = spec.get("name")
    if kind in ODE_TASKS:
        cls, presets, init, _ = ODE_TASKS[kind]
        preset = spec.get("preset", "train")
        if preset not in presets:
            raise ConfigError(f"task {kind}: unknown preset {preset!r}")
        try:
            params = replace(presets[preset], **spec.get("params", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"task {kind}: {exc}") from None
        if spec.get("split") is not None:
            split = _split_from(spec["split"], T.DEFAULT_SPLIT)
        elif params.steps >= T.DEFAULT_SPLIT.K:
            split = EpisodeSplit(T.DEFAULT_SPLIT.G0, T.DEFAULT_SPLIT.G1, params.steps)
        else:
            K = params.steps
            split = EpisodeSplit(K * T.DEFAULT_SPLIT.G0 // T.DEFAULT_SPLIT.K, K * T.DEFAULT_SPLIT.G1 // T.DEFAULT_SPLIT.K, K)
        return {"task": kind, "name": name or f"{kind}_{preset}", "preset": preset,
                "params": asdict(params), "init": [float(v) for v in spec.get("init", init)],
                "split": _split_list(split)}
    if kind == "binary":
        b = T.BinaryTaskSpec(kind=spec.get("kind", "STM"), tau_b=int(spec.get("tau_b", 1)),
                             length=int(spec.get("length", T.BINARY_SPLIT.K)),
                             seed=int(spec.get("seed", derive_seed(master_seed, f"task-{index}"))))
        default = T.BINARY_SPLIT if b.length == T.BINARY_SPLIT.K else \
            EpisodeSplit(b.length // 5, 4 * b.length // 5, b.length)
        split = _split_from(spec.get("split"), default)
        return {"task": "binary", "name": name or f"{b.kind}{b.tau_b}", "kind": b.kind, "tau_b": b.tau_b,
                "length": b.length, "seed": b.seed, "split": _split_list(split)}
    if kind == "identity":
        length = int(spec.get("length", 600))
        split = _split_from(spec.get("split"), EpisodeSplit(length // 5, 4 * length // 5, length))
        return {"task": "identity", "name": name or "identity", "d_in": int(spec.get("d_in", 1)),
                "length": length, "seed": int(spec.get("seed", derive_seed(master_seed, f"task-{index}"))),
                "split": _split_list(split)}
    if kind == "fx":
        out = {"task": "fx", "window": int(spec.get("window", 6)),
               "denoise_levels": spec.get("denoise_levels", 2), "causal": bool(spec.get("causal", True))}
        if "path" in spec:
            out["path"] = spec["path"]
            out["name"] = name or Path(spec["path"]).stem
        else:
            syn = dict(spec.get("synthetic", {}))
            syn.setdefault("length", 1100 + out["window"])
            syn.setdefault("seed", derive_seed(master_seed, f"task-{index}"))
            syn.setdefault("noise", 0.005)
            syn.setdefault("level", 1.0)
            out["synthetic"] = syn
            out["name"] = name or f"synthetic_{index}"
        default_k = (out["synthetic"]["length"] if "synthetic" in out else None)
        if spec.get("split") is not None:
            out["split"] = _split_list(_split_from(spec["split"], T.FX_SPLIT))
        elif default_k is not None:
            k = default_k - out["window"]
            out["split"] = _split_list(EpisodeSplit(T.FX_SPLIT.G0, min(T.FX_SPLIT.G1, k - 1), min(T.FX_SPLIT.K, k)))
        else:
            out["split"] = None
        return out
    if kind == "dataset":
        if "path" not in spec:
            raise ConfigError("dataset task needs a path")
        return {"task": "dataset", "name": name or Path(spec["path"]).stem, "path": spec["path"]}
    raise ConfigError(f"unknown task type {kind!r}")


def build_task(spec: dict):
    """Dataset for a resolved spec; FX specs return an FxWindowTask."""
    kind = spec["task"]
    if kind in ODE_TASKS:
        cls, _, _, gen = ODE_TASKS[kind]
        split = EpisodeSplit(*spec["split"])
        ds = gen(cls(**spec["params"]), spec["init"], split)
        ds.name = spec["name"]
        return ds
    if kind == "binary":
        b = T.BinaryTaskSpec(spec["kind"], spec["tau_b"], spec["length"], spec["seed"])
        ds = T.gen_binary_task(b, EpisodeSplit(*spec["split"]))
        ds.name = spec["name"]
        return ds
    if kind == "identity":
        rng = np.random.default_rng(spec["seed"])
        s = rng.uniform(0, 1, size=(spec["length"], spec["d_in"]))
        return TaskDataset(s, s.copy(), EpisodeSplit(*spec["split"]), mode=T.OPEN_LOOP, name=spec["name"])
    if kind == "fx":
        if "path" in spec:
            series = T.load_fx_csv(spec["path"])
        else:
            syn = spec["synthetic"]
            series = T.synthetic_fx_series(syn["length"], seed=syn["seed"], noise=syn["noise"],
                                           level=syn["level"], name=spec["name"])
        split = None if spec["split"] is None else EpisodeSplit(*spec["split"])
        return T.sliding_window(series, spec["window"], split, spec["denoise_levels"], spec["causal"],
                                name=spec["name"])
    if kind == "dataset":
        return T.load_dataset(spec["path"])
    raise ConfigError(f"unknown task type {kind!r}")


def _dataset(obj) -> TaskDataset:
    return obj.dataset if isinstance(obj, T.FxWindowTask) else obj


def resolve_tasks(cfg: ExperimentConfig) -> None:
    cfg.tasks = [resolve_task(t, cfg.seed, i) for i, t in enumerate(cfg.tasks)]
    cfg.eval_tasks = [resolve_task(t, cfg.seed, 1000 + i) for i, t in enumerate(cfg.eval_tasks)]


# ---------------------------------------------------------------- objectives

class QrcObjective:
    """Summed test NMSE of a quantum genome over a task list (picklable)."""

    def __init__(self, n: int, tasks: list[TaskDataset], cfg: PipelineConfig):
        self.n, self.tasks, self.cfg = n, tasks, cfg

    def __call__(self, genome: np.ndarray) -> float:
        return multi_task_loss(ReservoirParams.from_genome(genome, self.n), self.tasks, self.cfg)


class EsnObjective:
    def __init__(self, encodings: list[np.ndarray], tasks: list[TaskDataset], ridge_lambda: float):
        self.encodings, self.tasks, self.ridge_lambda = encodings, tasks, ridge_lambda

    def __call__(self, genome: np.ndarray) -> float:
        N = self.encodings[0].shape[0]
        return esn_multi_task_loss(genome.reshape(N, N), self.encodings, self.tasks, self.ridge_lambda)


# ---------------------------------------------------------------- reporting

PREFIXES = (80, 100)


def task_report(ds: TaskDataset, res: TaskResult) -> dict:
    rep = {"name": ds.name, "mode": ds.mode, "test_nmse": res.test_nmse, "train_nmse": res.train_nmse,
           "clamp_events": res.clamp_events, "test_steps": int(res.targets.shape[0])}
    rows = ds.rows(ds.split.G1, ds.split.K)
    for p in PREFIXES:
        if p <= res.targets.shape[0]:
            sel = rows[:p]
            pred, tgt = res.predictions[:p][sel], res.targets[:p][sel]
            rep[f"nmse_first_{p}"] = nmse(pred, tgt) if np.all(np.isfinite(pred)) else math.inf
    return rep


def evaluate_suite(make_reservoir, datasets: list[TaskDataset], ridge_lambda: float, out: Path,
                   prefix: str) -> dict:
    """Fit and score each task; writes per-step error and prediction CSVs."""
    reports, err_rows, pred_rows = [], [], []
    for i, ds in enumerate(datasets):
        res = evaluate_reservoir(make_reservoir(i, ds), ds, ridge_lambda)
        reports.append(task_report(ds, res))
        for t in range(res.targets.shape[0]):
            err_rows.append([ds.name, t + 1, float(res.per_step_error[t])])
            for j in range(res.targets.shape[1]):
                pred_rows.append([ds.name, ds.split.G1 + t, j + 1, float(res.targets[t, j]),
                                  float(res.predictions[t, j])])
    write_csv(out / f"{prefix}per_step_error.csv", ["task", "step", "error"], err_rows)
    write_csv(out / f"{prefix}predictions.csv", ["task", "k", "component", "truth", "prediction"], pred_rows)
    total = float(sum(r["test_nmse"] for r in reports))
    return {"tasks": reports, "total_test_nmse": total}


def _task_datasets(specs) -> list[TaskDataset]:
    return [_dataset(build_task(s)) for s in specs]


def _check_fits(datasets: list[TaskDataset], n: int, pcfg: PipelineConfig) -> None:
    for ds in datasets:
        m = pcfg.encoding.qubits_for(ds.d_in)
        if m > n or ds.d_in > pcfg.encoding.capacity(m):
            raise ConfigError(f"task {ds.name!r} (d_in={ds.d_in}) needs {m} injected qubits; model has n={n}")


def _populations_rows(history):
    for gen, pop, fit in history:
        for i, (g, f) in enumerate(zip(pop, fit)):
            yield [gen, i, float(f)] + [float(v) for v in g]


# ---------------------------------------------------------------- commands

def cmd_gen_task(cfg: ExperimentConfig, out: Path) -> dict:
    started = time.perf_counter()
    resolve_tasks(cfg)
    if not cfg.tasks:
        raise ConfigError("gen-task needs at least one task")
    files = []
    for spec in cfg.tasks:
        ds = _dataset(build_task(spec))
        path = out / f"{spec['name']}.csv"
        T.save_dataset(ds, path, extra={"spec": spec})
        files.append(path.name)
    return finish(out, cfg, {}, {"files": files}, started)


def _checkpointer(out: Path, history: list):
    def save(state: dict) -> None:
        state = dict(state, history=[[g, p.tolist(), f.tolist()] for g, p, f in history])
        tmp = out / "checkpoint.json.tmp"
        tmp.write_text(json.dumps(state) + "\n", encoding="utf-8")
        os.replace(tmp, out / "checkpoint.json")
    return save


def _resume_state(cfg: ExperimentConfig):
    if cfg.resume is None:
        return {}, []
    state = json.loads(Path(cfg.resume).read_text(encoding="utf-8"))
    history = [(g, np.asarray(p), np.asarray(f)) for g, p, f in state.get("history", [])]
    return state, history


def _run_ga(cfg: ExperimentConfig, out: Path, objective, genome_len: int, ga_cfg: ga_mod.GaConfig,
            workers: int, initial=None):
    state, history = _resume_state(cfg)
    if state:
        initial = np.asarray(state["population"])
    on_gen = lambda gen, pop, fit, tr: history.append((gen, pop.copy(), fit.copy()))
    best, trace = ga_mod.run(
        objective, genome_len, ga_cfg, initial_population=initial, workers=workers,
        on_generation=on_gen, start_generation=state.get("generation", 0),
        best=(state.get("best_loss", math.inf), state.get("best_genome")),
        on_checkpoint=_checkpointer(out, history),
    )
    # full trace across a resume, rebuilt from the stored history
    full = ga_mod.GaTrace()
    for gen, pop, fit in history:
        full.record(pop, fit)
    full.write_csv(out / "trace.csv")
    L = genome_len
    write_csv(out / "populations.csv", ["generation", "member", "loss"] + [f"g_{i}" for i in range(L)],
              _populations_rows(history))
    (out / "checkpoint.json").unlink(missing_ok=True)
    return best, full


def _ga_with_seeds(cfg: ExperimentConfig) -> ga_mod.GaConfig:
    # seed genomes from options.seed_genome_file are inlined when the config is parsed
    return cfg.ga_config()


def cmd_train_qrc(cfg: ExperimentConfig, out: Path, workers: int = 1) -> dict:
    started = time.perf_counter()
    resolve_tasks(cfg)
    if not cfg.tasks:
        raise ConfigError("train-qrc needs at least one task")
    n = cfg.model.n
    pcfg = cfg.model.pipeline()
    tasks = _task_datasets(cfg.tasks)
    eval_sets = _task_datasets(cfg.eval_tasks)
    _check_fits(tasks + eval_sets, n, pcfg)
    ga_cfg = _ga_with_seeds(cfg)
    objective = QrcObjective(n, tasks, pcfg)
    best, trace = _run_ga(cfg, out, objective, ReservoirParams.num_free(n), ga_cfg, workers)
    best_loss = float(min(trace.best_so_far))
    ga_mod.save_genome(out / "genome.json", best, "quantum", n, loss=best_loss, seed=cfg.seed)

    reservoir = QuantumReservoir(ReservoirParams.from_genome(best, n), pcfg)
    metrics = {"best_loss": best_loss, "generations": trace.generations, "evaluations": trace.evaluations,
               "train": evaluate_suite(lambda i, ds: reservoir, tasks, pcfg.ridge_lambda, out, "train_")}
    if cfg.eval_tasks:
        metrics["test"] = evaluate_suite(lambda i, ds: reservoir, eval_sets, pcfg.ridge_lambda, out, "test_")
    write_json(out / "metrics.json", metrics)
    return finish(out, cfg, {"ga": ga_cfg.seed}, metrics, started)


def cmd_train_esn(cfg: ExperimentConfig, out: Path, workers: int = 1) -> dict:
    started = time.perf_counter()
    resolve_tasks(cfg)
    if not cfg.tasks:
        raise ConfigError("train-esn needs at least one task")
    N = cfg.model.n_nodes
    tasks = _task_datasets(cfg.tasks)
    enc_seed = derive_seed(cfg.seed, "esn-encoding")
    encodings = task_encodings(N, tasks, enc_seed)
    ga_cfg = _ga_with_seeds(cfg)
    _check_reference_ga(cfg, ga_cfg)
    initial = None
    if cfg.resume is None and ga_cfg.init_mode == ga_mod.RANDOM_ONLY:
        initial = init_esn_population(ga_mod.init_population(ga_cfg, N * N), cfg.model.esn_radius)
    objective = EsnObjective(encodings, tasks, cfg.model.ridge_lambda)
    best, trace = _run_ga(cfg, out, objective, N * N, ga_cfg, workers, initial)
    best_loss = float(min(trace.best_so_far))
    ga_mod.save_genome(out / "genome.json", best, "esn", N, loss=best_loss, seed=cfg.seed,
                       encodings=[D.tolist() for D in encodings], encoding_seed=enc_seed)
    M = best.reshape(N, N)

    def make(i, ds):
        return EsnReservoir(EsnParams(M, _encoding_for(encodings, i, ds)))

    metrics = {"best_loss": best_loss, "generations": trace.generations, "evaluations": trace.evaluations,
               "train": evaluate_suite(make, tasks, cfg.model.ridge_lambda, out, "train_")}
    if cfg.eval_tasks:
        metrics["test"] = evaluate_suite(make, _task_datasets(cfg.eval_tasks), cfg.model.ridge_lambda,
                                         out, "test_")
    write_json(out / "metrics.json", metrics)
    return finish(out, cfg, {"ga": ga_cfg.seed, "esn_encoding": enc_seed}, metrics, started)


def _check_reference_ga(cfg: ExperimentConfig, ga_cfg: ga_mod.GaConfig) -> None:
    """The classical baseline must be searched with the quantum run's GA settings."""
    ref = cfg.options.get("reference_manifest")
    if ref is None:
        return
    if not Path(ref).exists():
        raise ConfigError(f"reference manifest not found: {ref}")
    ref_ga = json.loads(Path(ref).read_text(encoding="utf-8"))["config"]["ga"]
    if ga_mod.GaConfig.from_dict(ref_ga) != ga_cfg:
        diff = sorted(k for k, v in ga_cfg.to_dict().items() if ref_ga.get(k) != v)
        raise ConfigError(f"GA settings differ from {ref}: {diff}")


def _encoding_for(encodings: list[np.ndarray], i: int, ds: TaskDataset) -> np.ndarray:
    if i < len(encodings) and encodings[i].shape[1] == ds.d_in:
        return encodings[i]
    raise ConfigError(f"no stored ESN encoding with d_in={ds.d_in} for task {i} ({ds.name})")


def cmd_evaluate(cfg: ExperimentConfig, out: Path) -> dict:
    started = time.perf_counter()
    resolve_tasks(cfg)
    if cfg.genome is None:
        raise ConfigError("evaluate needs a genome file")
    doc = ga_mod.load_genome(cfg.genome)
    datasets = _task_datasets(cfg.tasks)
    if doc["kind"] == "quantum":
        n = int(doc["n"])
        if n != cfg.model.n:
            raise ConfigError(f"genome is for n={n} but the model section says n={cfg.model.n}")
        pcfg = cfg.model.pipeline()
        _check_fits(datasets, n, pcfg)
        reservoir = QuantumReservoir(ReservoirParams.from_genome(doc["values"], n), pcfg)
        report = evaluate_suite(lambda i, ds: reservoir, datasets, pcfg.ridge_lambda, out, "")
    elif doc["kind"] == "esn":
        N = int(doc["n_nodes"])
        encodings = [np.asarray(D) for D in doc["encodings"]]
        M = np.asarray(doc["values"]).reshape(N, N)
        report = evaluate_suite(lambda i, ds: EsnReservoir(EsnParams(M, _encoding_for(encodings, i, ds))),
                                datasets, cfg.model.ridge_lambda, out, "")
    else:
        raise ConfigError(f"unknown genome kind {doc['kind']!r}")
    write_json(out / "metrics.json", report)
    return finish(out, cfg, {}, report, started)


# ---------------------------------------------------------------- coherence sweep

COHERENCE_DEFAULTS = {
    "models": ["permutation", "unitary"],
    "etas": [0.0, math.pi / 8, math.pi / 4, 3 * math.pi / 8, math.pi / 2],
    "tau_bs": [1, 2, 3],
    "replicates": 20,
    "n": 8,
    "num_swaps": 10,
    "split": [1000, 4000, 5000],
}


def _coherence_unit(args):
    from .coherence import sweep_unit
    return sweep_unit(*args)


def cmd_coherence_sweep(cfg: ExperimentConfig, out: Path, workers: int = 1) -> dict:
    started = time.perf_counter()
    opts = dict(COHERENCE_DEFAULTS)
    unknown = set(cfg.options) - set(opts)
    if unknown:
        raise ConfigError(f"unknown coherence-sweep options {sorted(unknown)}")
    opts.update(cfg.options)
    opts["etas"] = [float(e) for e in opts["etas"]]
    split = EpisodeSplit(*opts["split"])
    opts["split"] = _split_list(split)
    cfg.options = opts
    for model in opts["models"]:
        if model not in ("permutation", "unitary"):
            raise ConfigError(f"unknown reservoir model {model!r}")
    seeds = {}
    units = []
    for r in range(int(opts["replicates"])):
        s_in = derive_seed(cfg.seed, f"coherence-inputs-{r}")
        s_u = derive_seed(cfg.seed, f"coherence-unitary-{r}")
        seeds[f"replicate_{r}"] = {"inputs": s_in, "unitary": s_u}
        for model in opts["models"]:
            units.append((model, r, opts["n"], opts["num_swaps"], s_u, s_in, opts["etas"], opts["tau_bs"],
                          _split_list(split), cfg.model.ridge_lambda))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_coherence_unit, units))
    else:
        results = [_coherence_unit(u) for u in units]
    rows = sorted((row for res in results for row in res),
                  key=lambda r: (opts["models"].index(r[0]), r[1], r[2], r[3]))
    write_csv(out / "coherence.csv", ["model", "eta", "tau_b", "seed", "stm_accuracy", "pc_accuracy", "qc"],
              rows)
    from .coherence import summarize
    summary = summarize(rows, opts["etas"], opts["tau_bs"])
    write_json(out / "summary.json", summary)
    return finish(out, cfg, seeds, summary, started)


# ---------------------------------------------------------------- information metrics

def _read_populations(path) -> dict[int, list[tuple[float, np.ndarray]]]:
    gens: dict[int, list] = {}
    with Path(path).open(encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            gens.setdefault(int(row[0]), []).append((float(row[2]), np.array(row[3:], dtype=float)))
    return gens


def info_metrics_rows(genomes: list[np.ndarray], n: int, tau: float, sizes, base: str = "bits") -> list[tuple]:
    """(|A|, mean S_A, mean I3, degenerate count) averaged over the genomes."""
    out = []
    per = {k: ([], []) for k in sizes}
    degenerate = 0
    for g in genomes:
        H = build_hamiltonian(ReservoirParams.from_genome(g, n))
        U = propagator(H, tau)
        for k in sizes:
            rep = eigenstate_entanglement(H, Bipartition(tuple(range(k)), n), base, report=True)
            per[k][0].append(rep.mean)
            per[k][1].append(tripartite_mutual_info(U, ChannelPartition.leading(k, n), base))
            if k == sizes[0]:
                degenerate += int(rep.degenerate)
    for k in sizes:
        out.append((k, float(np.mean(per[k][0])), float(np.mean(per[k][1])), degenerate))
    return out


def cmd_info_metrics(cfg: ExperimentConfig, out: Path) -> dict:
    started = time.perf_counter()
    opts = {"populations": None, "genome_files": [], "sizes": [1, 2, 3], "members": "all", "top_k": 10,
            "every": 1, "entropy_base": "bits"}
    opts.update(cfg.options)
    cfg.options = opts
    n, tau = cfg.model.n, cfg.model.tau
    sizes = [int(k) for k in opts["sizes"]]
    if any(not 1 <= k < n for k in sizes):
        raise ConfigError(f"region sizes {sizes} must lie in [1, {n - 1}]")
    if opts["entropy_base"] not in ("bits", "nats"):
        raise ConfigError("entropy_base must be 'bits' or 'nats'")
    groups: list[tuple[int, list]] = []
    if opts["populations"]:
        if not Path(opts["populations"]).exists():
            raise ConfigError(f"populations file not found: {opts['populations']}")
        for gen, members in sorted(_read_populations(opts["populations"]).items()):
            if gen % int(opts["every"]):
                continue
            members = sorted(members, key=lambda m: m[0])
            if opts["members"] == "top":
                members = members[: int(opts["top_k"])]
            groups.append((gen, [m[1] for m in members]))
    for i, path in enumerate(opts["genome_files"]):
        if not Path(path).exists():
            raise ConfigError(f"genome file not found: {path}")
        groups.append((i, [ga_mod.load_genome(path)["values"]]))
    if cfg.genome:
        groups.append((len(groups), [ga_mod.load_genome(cfg.genome)["values"]]))
    if not groups:
        raise ConfigError("info-metrics needs options.populations, options.genome_files or a genome")
    rows = []
    for gen, genomes in groups:
        for k, sa, i3, deg in info_metrics_rows(genomes, n, tau, sizes, opts["entropy_base"]):
            rows.append([gen, k, sa, i3, deg])
    write_csv(out / "info_metrics.csv", ["generation", "A_size", "mean_SA", "mean_I3", "degenerate"], rows)
    return finish(out, cfg, {}, {"rows": len(rows)}, started)


# ---------------------------------------------------------------- FX forecasting

def cmd_fx_forecast(cfg: ExperimentConfig, out: Path, workers: int = 1) -> dict:
    started = time.perf_counter()
    opts = {"window": 6, "denoise_levels": 2, "causal": True}
    opts.update(cfg.options)
    cfg.options = opts
    base = {"task": "fx", "window": opts["window"], "denoise_levels": opts["denoise_levels"],
            "causal": opts["causal"]}
    if not cfg.tasks:
        if "train_paths" in opts:
            cfg.tasks = [dict(base, path=p) for p in opts["train_paths"]]
        else:
            cfg.tasks = [dict(base, name=f"synthetic_train_{i}") for i in range(2)]
    if not cfg.eval_tasks:
        if "test_path" in opts:
            cfg.eval_tasks = [dict(base, path=opts["test_path"])]
        else:
            cfg.eval_tasks = [dict(base, name="synthetic_test")]
    resolve_tasks(cfg)
    if len(cfg.tasks) < 1 or len(cfg.eval_tasks) != 1:
        raise ConfigError("fx-forecast needs training series and exactly one test series")
    n = cfg.model.n
    pcfg = cfg.model.pipeline()
    train = [build_task(s) for s in cfg.tasks]
    test = build_task(cfg.eval_tasks[0])
    _check_fits([t.dataset for t in train] + [test.dataset], n, pcfg)
    ga_cfg = _ga_with_seeds(cfg)
    objective = QrcObjective(n, [t.dataset for t in train], pcfg)
    best, trace = _run_ga(cfg, out, objective, ReservoirParams.num_free(n), ga_cfg, workers)
    ga_mod.save_genome(out / "genome.json", best, "quantum", n, loss=float(min(trace.best_so_far)),
                       seed=cfg.seed)
    reservoir = QuantumReservoir(ReservoirParams.from_genome(best, n), pcfg)
    res = evaluate_reservoir(reservoir, test.dataset, pcfg.ridge_lambda)
    G1 = test.dataset.split.G1
    n_test = res.predictions.shape[0]
    raw_pred = test.norm.invert(res.predictions[:, 0])
    raw_true = test.raw_targets[G1:G1 + n_test]
    persistence = test.raw_previous[G1:G1 + n_test]
    report = {
        "pair": test.dataset.name,
        "test_steps": int(n_test),
        "nmse": nmse(raw_pred, raw_true),
        "baseline_nmse": nmse(persistence, raw_true),
        "normalized_nmse": res.test_nmse,
        "train_loss": float(min(trace.best_so_far)),
    }
    report["sqrt_nmse"] = math.sqrt(report["nmse"])
    report["baseline_sqrt_nmse"] = math.sqrt(report["baseline_nmse"])
    report["beats_baseline"] = bool(report["nmse"] < report["baseline_nmse"])
    write_csv(out / "forecast.csv", ["k", "truth", "prediction", "persistence"],
              [[G1 + t, float(raw_true[t]), float(raw_pred[t]), float(persistence[t])] for t in range(n_test)])
    write_json(out / "report.json", report)
    return finish(out, cfg, {"ga": ga_cfg.seed}, report, started)


COMMANDS = {
    "gen-task": cmd_gen_task,
    "train-qrc": cmd_train_qrc,
    "train-esn": cmd_train_esn,
    "evaluate": cmd_evaluate,
    "coherence-sweep": cmd_coherence_sweep,
    "info-metrics": cmd_info_metrics,
    "fx-forecast": cmd_fx_forecast,
}
PARALLEL = {"train-qrc", "train-esn", "coherence-sweep", "fx-forecast"}


def run_experiment(cfg: ExperimentConfig, out, workers: int = 1) -> dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    fn = COMMANDS[cfg.kind]
    if cfg.kind in PARALLEL:
        return fn(cfg, out, workers)
    return fn(cfg, out)
