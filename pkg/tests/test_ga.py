import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qrcforge import ga


def sphere(g):
    return float(np.sum(np.asarray(g) ** 2))


class Shifted:
    def __init__(self, c):
        self.c = np.asarray(c, dtype=float)

    def __call__(self, g):
        return float(np.sum((g - self.c) ** 2))


class Counting:
    def __init__(self):
        self.calls = 0

    def __call__(self, g):
        self.calls += 1
        return sphere(g)


def flaky(g):
    if g[0] > 0.5:
        raise ArithmeticError("integration blew up")
    if g[0] < -0.5:
        return math.nan
    return sphere(g)


# ---------------------------------------------------------------- configuration

@pytest.mark.parametrize("kw", [
    {"population": 7}, {"population": 0}, {"elite_count": 9, "population": 8},
    {"crossover_rate": 1.5}, {"mutation_rate": -0.1}, {"tournament_size": 0},
    {"init_mode": "SeededHalf"}, {"param_range": (1.0, -1.0)}, {"patience": 0},
    {"init_mode": "Bogus"},
])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        ga.GaConfig(**kw)


def test_config_round_trip():
    cfg = ga.GaConfig(population=8, init_mode=ga.SEEDED_HALF, seed_genomes=[[0.1, 0.2]], patience=3)
    assert ga.GaConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


# ---------------------------------------------------------------- initialization

def test_init_replayable_and_in_range():
    cfg = ga.GaConfig(population=4, seed=11, param_range=(-0.5, 2.0))
    a = ga.init_population(cfg, 5)
    assert a.tobytes() == ga.init_population(cfg, 5).tobytes()
    assert a.min() >= -0.5 and a.max() <= 2.0
    assert not np.array_equal(a, ga.init_population(ga.GaConfig(population=4, seed=12), 5))


def test_seeded_half_repeats_seeds():
    seeds = [[0.1] * 3, [-0.2] * 3]
    cfg = ga.GaConfig(population=8, init_mode=ga.SEEDED_HALF, seed_genomes=seeds)
    pop = ga.init_population(cfg, 3)
    assert np.array_equal(pop[4:], np.array(seeds * 2))
    with pytest.raises(ValueError):
        ga.init_population(cfg, 4)


def test_init_rejects_empty_genome():
    with pytest.raises(ValueError):
        ga.init_population(ga.GaConfig(population=4), 0)


# ---------------------------------------------------------------- fitness

def test_fitness_exact_and_repeatable():
    g = np.array([0.3, -0.4, 1.0])
    f = Shifted([0.1, 0.1, 0.1])
    assert ga.evaluate_fitness(g, f) == pytest.approx(0.04 + 0.25 + 0.81, abs=1e-15)
    assert ga.evaluate_fitness(g, f) == ga.evaluate_fitness(g, f)


def test_fitness_failures_become_inf(caplog):
    assert ga.evaluate_fitness(np.array([0.9]), flaky) == math.inf
    assert "blew up" in caplog.text
    assert ga.evaluate_fitness(np.array([-0.9]), flaky) == math.inf


# ---------------------------------------------------------------- generation step

def test_step_identity_when_all_elite():
    cfg = ga.GaConfig(population=6, elite_count=6, mutation_rate=0, crossover_rate=0)
    pop = np.random.default_rng(0).uniform(-1, 1, (6, 4))
    fit = np.arange(6.0)
    assert np.array_equal(ga.step_generation(pop, fit, cfg, ga.stream(0, 1)), pop)


@settings(max_examples=20)
@given(st.integers(0, 2**31))
def test_step_keeps_best_and_clamps(seed):
    r = np.random.default_rng(seed)
    cfg = ga.GaConfig(population=10, elite_count=1, mutation_sigma=5.0, mutation_rate=1.0)
    pop = r.uniform(-1, 1, (10, 6))
    fit = r.uniform(size=10)
    new = ga.step_generation(pop, fit, cfg, ga.stream(seed, 1))
    assert np.array_equal(new[0], pop[np.argmin(fit)])
    assert new.min() >= -1 and new.max() <= 1


def test_step_without_variation_copies_parents():
    cfg = ga.GaConfig(population=8, elite_count=0, mutation_rate=0, crossover_rate=0)
    pop = np.arange(16.0).reshape(8, 2) / 20
    new = ga.step_generation(pop, np.arange(8.0), cfg, ga.stream(3, 1))
    assert all(any(np.array_equal(row, p) for p in pop) for row in new)


def test_tournament_prefers_lower_loss():
    fit = np.array([5.0, 1.0, 3.0, 1.0])
    # a tournament over the whole population picks the first of the tied best
    assert ga._tournament(fit, 4, np.random.default_rng(0)) == 1


def test_step_rejects_misaligned_fitness():
    with pytest.raises(ValueError):
        ga.step_generation(np.zeros((4, 2)), np.zeros(3), ga.GaConfig(population=4), ga.stream(0))


# ---------------------------------------------------------------- full runs

def test_sphere_benchmark():
    best, trace = ga.run(sphere, 10, ga.GaConfig(population=200, generations=50, seed=0))
    assert sphere(best) < 1e-2
    assert trace.best_so_far[-1] == sphere(best)


def test_run_is_replayable_and_monotone():
    cfg = ga.GaConfig(population=20, generations=15, seed=4)
    a_best, a = ga.run(sphere, 5, cfg)
    b_best, b = ga.run(sphere, 5, cfg)
    assert a.best == b.best and a.mean == b.mean and np.array_equal(a_best, b_best)
    assert all(y <= x for x, y in zip(a.best_so_far, a.best_so_far[1:]))
    # with elitism the per-generation best itself never worsens
    assert all(y <= x for x, y in zip(a.best, a.best[1:]))


def test_evaluation_count():
    f = Counting()
    _, trace = ga.run(f, 3, ga.GaConfig(population=12, generations=7))
    assert f.calls == 12 * 7 == trace.evaluations


def test_failed_evaluations_do_not_stop_run():
    best, trace = ga.run(flaky, 3, ga.GaConfig(population=20, generations=5, seed=2))
    assert trace.generations == 5
    assert sum(trace.failed) > 0
    assert math.isfinite(flaky(best))


def test_parallel_matches_serial():
    cfg = ga.GaConfig(population=16, generations=4, seed=9)
    obj = Shifted(np.linspace(-0.5, 0.5, 6))
    s_best, s = ga.run(obj, 6, cfg)
    p_best, p = ga.run(obj, 6, cfg, workers=2)
    assert s.best == p.best and s.mean == p.mean and np.array_equal(s_best, p_best)


def test_patience_stops_early():
    cfg = ga.GaConfig(population=8, generations=50, patience=3, mutation_rate=0, crossover_rate=0)
    _, trace = ga.run(lambda g: 1.0, 2, cfg)
    assert trace.generations == 4


def test_resume_continues_identically():
    cfg = ga.GaConfig(population=10, generations=8, seed=5)
    full_best, full = ga.run(sphere, 4, cfg)
    snaps = {}
    ga.run(sphere, 4, ga.GaConfig(population=10, generations=3, seed=5),
           on_checkpoint=lambda d: snaps.update({d["generation"]: d}))
    snap = snaps[2]
    best, tail = ga.run(sphere, 4, cfg, initial_population=np.array(snap["population"]),
                        start_generation=snap["generation"],
                        best=(snap["best_loss"], snap["best_genome"]))
    assert tail.best == full.best[2:]
    assert tail.best_so_far == full.best_so_far[2:]
    assert np.array_equal(best, full_best)


def test_genome_files(tmp_path):
    ga.save_genome(tmp_path / "g.json", [0.1, -0.2, 0.3], "quantum", 2, loss=0.5)
    doc = ga.load_genome(tmp_path / "g.json")
    assert doc["n"] == 2 and doc["values"].tolist() == [0.1, -0.2, 0.3] and doc["loss"] == 0.5
    assert ga.load_seed_genomes(tmp_path / "g.json") == [[0.1, -0.2, 0.3]]
    (tmp_path / "bad.json").write_text('{"kind": "quantum", "values": [NaN]}')
    with pytest.raises(ValueError):
        ga.load_genome(tmp_path / "bad.json")
