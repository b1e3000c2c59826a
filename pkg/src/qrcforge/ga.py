"""Real-valued genetic algorithm: tournament selection, uniform crossover,
Gaussian mutation and elitism.

Every generation draws from its own counter-derived RNG stream, so a run
is replayable bit-exactly regardless of how fitness evaluation is spread
over worker processes.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)

RANDOM_ONLY = "RandomOnly"
SEEDED_HALF = "SeededHalf"
PATIENCE_TOL = 1e-12

# spawn-key offsets that keep the init stream apart from the per-generation ones
_INIT_STREAM = 0
_GEN_STREAM = 1


@dataclass(frozen=True)
class GaConfig:
    population: int = 200
    generations: int = 50
    elite_count: int = 2
    tournament_size: int = 4
    crossover_rate: float = 0.7
    mutation_sigma: float = 0.1
    mutation_rate: float = 0.1
    init_mode: str = RANDOM_ONLY
    seed_genomes: tuple = ()
    param_range: tuple[float, float] = (-1.0, 1.0)
    seed: int = 0
    patience: int | None = None

    def __post_init__(self):
        if self.population < 2 or self.population % 2:
            raise ValueError("population must be an even number >= 2")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if not 0 <= self.elite_count < self.population + 1:
            raise ValueError("elite_count must lie in [0, population]")
        if not 1 <= self.tournament_size <= self.population:
            raise ValueError("tournament_size must lie in [1, population]")
        for name in ("crossover_rate", "mutation_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.mutation_sigma < 0:
            raise ValueError("mutation_sigma must be >= 0")
        lo, hi = self.param_range
        if not lo < hi:
            raise ValueError("param_range must be an increasing interval")
        if self.init_mode not in (RANDOM_ONLY, SEEDED_HALF):
            raise ValueError(f"unknown init_mode {self.init_mode!r}")
        if self.init_mode == SEEDED_HALF and len(self.seed_genomes) == 0:
            raise ValueError("SeededHalf initialization needs at least one seed genome")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be >= 1 or None")
        object.__setattr__(self, "seed_genomes",
                           tuple(tuple(float(v) for v in g) for g in self.seed_genomes))
        object.__setattr__(self, "param_range", (float(lo), float(hi)))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seed_genomes"] = [list(g) for g in self.seed_genomes]
        d["param_range"] = list(self.param_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GaConfig":
        d = dict(d)
        if "seed_genomes" in d:
            d["seed_genomes"] = tuple(tuple(g) for g in d["seed_genomes"])
        if "param_range" in d:
            d["param_range"] = tuple(d["param_range"])
        return cls(**d)


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def init_population(cfg: GaConfig, genome_len: int) -> np.ndarray:
    if genome_len <= 0:
        raise ValueError("genome_len must be positive")
    lo, hi = cfg.param_range
    pop = stream(cfg.seed, _INIT_STREAM).uniform(lo, hi, size=(cfg.population, genome_len))
    if cfg.init_mode == SEEDED_HALF:
        seeds = np.asarray(cfg.seed_genomes, dtype=float)
        if seeds.ndim != 2 or seeds.shape[1] != genome_len:
            raise ValueError(f"seed genomes must have length {genome_len}")
        half = cfg.population // 2
        pop[half:] = seeds[np.arange(cfg.population - half) % len(seeds)]
    return pop


def evaluate_fitness(genome: np.ndarray, objective: Callable[[np.ndarray], float]) -> float:
    """Objective value, with failures and non-finite values mapped to +inf."""
    try:
        val = float(objective(np.asarray(genome, dtype=float)))
    except (ArithmeticError, ValueError, np.linalg.LinAlgError, RuntimeError) as exc:
        log.warning("fitness evaluation failed (%s: %s); scoring +inf", type(exc).__name__, exc)
        return math.inf
    if not math.isfinite(val):
        log.info("non-finite loss %r scored as +inf", val)
        return math.inf
    return val


def _rank(fitnesses: np.ndarray) -> np.ndarray:
    # stable sort: ties keep population order
    return np.argsort(fitnesses, kind="stable")


def _tournament(fitnesses: np.ndarray, size: int, rng: np.random.Generator) -> int:
    contenders = rng.choice(fitnesses.size, size=size, replace=False)
    best = contenders[0]
    for c in contenders[1:]:
        if fitnesses[c] < fitnesses[best] or (fitnesses[c] == fitnesses[best] and c < best):
            best = c
    return int(best)


def step_generation(population: np.ndarray, fitnesses: np.ndarray, cfg: GaConfig,
                    rng: np.random.Generator) -> np.ndarray:
    pop = np.asarray(population, dtype=float)
    fit = np.asarray(fitnesses, dtype=float)
    if fit.shape != (pop.shape[0],):
        raise ValueError("fitnesses must align with the population")
    P, L = pop.shape
    lo, hi = cfg.param_range
    out = np.empty_like(pop)
    n_elite = min(cfg.elite_count, P)
    out[:n_elite] = pop[_rank(fit)[:n_elite]]
    i = n_elite
    while i < P:
        a = pop[_tournament(fit, cfg.tournament_size, rng)]
        b = pop[_tournament(fit, cfg.tournament_size, rng)]
        swap = rng.random(L) < cfg.crossover_rate
        children = (np.where(swap, b, a), np.where(swap, a, b))
        for child in children:
            if i >= P:
                break
            mutate = rng.random(L) < cfg.mutation_rate
            noise = rng.normal(0.0, cfg.mutation_sigma, size=L)
            out[i] = np.clip(np.where(mutate, child + noise, child), lo, hi)
            i += 1
    return out


@dataclass
class GaTrace:
    best: list = field(default_factory=list)
    mean: list = field(default_factory=list)
    p25: list = field(default_factory=list)
    p75: list = field(default_factory=list)
    failed: list = field(default_factory=list)
    best_so_far: list = field(default_factory=list)
    best_genomes: list = field(default_factory=list)
    evaluations: int = 0
    first_generation: int = 0
    initial_best: float = math.inf

    def record(self, pop: np.ndarray, fit: np.ndarray) -> None:
        finite = fit[np.isfinite(fit)]
        self.best.append(float(fit.min()))
        self.mean.append(float(finite.mean()) if finite.size else math.inf)
        with np.errstate(invalid="ignore"):
            # interpolating between two +inf losses gives nan; report it as +inf
            q25, q75 = np.nan_to_num(np.quantile(fit, [0.25, 0.75]), nan=math.inf)
        self.p25.append(float(q25))
        self.p75.append(float(q75))
        self.failed.append(int(fit.size - finite.size))
        prev = self.best_so_far[-1] if self.best_so_far else self.initial_best
        self.best_so_far.append(min(prev, self.best[-1]))
        self.best_genomes.append(pop[int(_rank(fit)[0])].tolist())
        self.evaluations += fit.size

    @property
    def generations(self) -> int:
        return len(self.best)

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["generation", "best", "mean", "p25", "p75"])
            for g in range(self.generations):
                w.writerow([g + self.first_generation, repr(self.best[g]), repr(self.mean[g]),
                            repr(self.p25[g]), repr(self.p75[g])])


def _evaluate_all(pop: np.ndarray, objective, pool: ProcessPoolExecutor | None) -> np.ndarray:
    if pool is None:
        return np.array([evaluate_fitness(g, objective) for g in pop])
    return np.array(list(pool.map(evaluate_fitness, pop, [objective] * len(pop))))


def run(objective: Callable[[np.ndarray], float], genome_len: int, cfg: GaConfig,
        initial_population: np.ndarray | None = None, workers: int = 1,
        on_generation: Callable[[int, np.ndarray, np.ndarray, GaTrace], None] | None = None,
        start_generation: int = 0, best: tuple[float, Sequence[float] | None] = (math.inf, None),
        on_checkpoint: Callable[[dict], None] | None = None):
    """Minimize ``objective``; returns (best genome, trace).

    A run resumed with the population and best-so-far from a checkpoint
    taken before generation ``start_generation`` continues exactly as the
    uninterrupted run would.  With ``workers > 1`` the objective must be
    picklable; evaluation order never affects the result.
    """
    pop = init_population(cfg, genome_len) if initial_population is None else \
        np.array(initial_population, dtype=float)
    if pop.shape != (cfg.population, genome_len):
        raise ValueError(f"initial population must be {(cfg.population, genome_len)}, got {pop.shape}")
    best_val = float(best[0])
    trace = GaTrace(first_generation=start_generation, initial_best=best_val)
    best_genome = pop[0].copy() if best[1] is None else np.asarray(best[1], dtype=float)
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        for gen in range(start_generation, cfg.generations):
            fit = _evaluate_all(pop, objective, pool)
            trace.record(pop, fit)
            top = int(_rank(fit)[0])
            if fit[top] < best_val:
                best_val, best_genome = float(fit[top]), pop[top].copy()
            if on_generation is not None:
                on_generation(gen, pop, fit, trace)
            log.info("generation %d: best %.4g, best-so-far %.4g", gen, fit[top], best_val)
            done = gen + 1 >= cfg.generations
            if cfg.patience is not None and trace.generations > cfg.patience:
                old = trace.best_so_far[-1 - cfg.patience]
                if not (old - best_val >= PATIENCE_TOL):
                    log.info("stopping: no improvement over %d generations", cfg.patience)
                    done = True
            if done:
                break
            pop = step_generation(pop, fit, cfg, stream(cfg.seed, _GEN_STREAM, gen))
            if on_checkpoint is not None:
                on_checkpoint({"generation": gen + 1, "population": pop.tolist(),
                               "best_loss": best_val, "best_genome": best_genome.tolist()})
    finally:
        if pool is not None:
            pool.shutdown()
    return best_genome, trace


# ---------------------------------------------------------------- genome files

def save_genome(path, values: Sequence[float], kind: str, size: int, **meta) -> None:
    """JSON genome file; ``size`` is n for quantum genomes, N_node for ESN."""
    key = "n" if kind == "quantum" else "n_nodes"
    doc = {"kind": kind, key: int(size), "values": [float(v) for v in values]}
    doc.update(meta)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_genome(path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if "values" not in doc or "kind" not in doc:
        raise ValueError(f"{path}: genome file needs 'kind' and 'values'")
    vals = np.asarray(doc["values"], dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError(f"{path}: genome has non-finite entries")
    doc["values"] = vals
    return doc


def load_seed_genomes(path) -> list[list[float]]:
    """A genome file holding either one genome or a list under 'genomes'."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if "genomes" in doc:
        return [list(map(float, g)) for g in doc["genomes"]]
    return [list(map(float, doc["values"]))]
