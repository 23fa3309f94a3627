"""Generational GA over directly encoded network weights.

Controllers are single-hidden-layer perceptrons shared by every robot of a
group.  Selection ranks the population either by fitness alone or by
Pareto dominance over (fitness, novelty).  All randomness derives from the
master seed through counter-keyed seed sequences, so results do not depend
on evaluation order and runs can resume mid-way bit-exactly.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import characterisation as ch
from . import novelty as nov
from .tasks import Task

WEIGHT_CLIP = 10.0

# seed stream tags; (master, tag, ...) identifies every random decision
_SEED_INIT = 1
_SEED_EVAL = 2
_SEED_OPS = 3
_SEED_ARCHIVE = 4

METHODS = ("fit", "ns-ts", "ns-sd", "ns-sd+")


@dataclass(frozen=True)
class ControllerSpec:
    """Feed-forward topology; outputs map through a logistic onto the
    actuator range."""

    inputs: int
    hidden: int
    outputs: int
    out_low: float = -1.0
    out_high: float = 1.0

    @property
    def genome_length(self) -> int:
        return (self.inputs + 1) * self.hidden + (self.hidden + 1) * self.outputs


class MlpController:
    """tanh hidden layer, logistic output scaled to the actuator range."""

    def __init__(self, w1: np.ndarray, w2: np.ndarray, out_low: float, out_high: float):
        self.w1 = w1
        self.w2 = w2
        self.out_low = out_low
        self.out_high = out_high

    def __call__(self, x: np.ndarray) -> np.ndarray:
        h = np.tanh(x @ self.w1[:, :-1].T + self.w1[:, -1])
        o = h @ self.w2[:, :-1].T + self.w2[:, -1]
        logistic = 1.0 / (1.0 + np.exp(-o))
        return self.out_low + (self.out_high - self.out_low) * logistic

    def act(self, sensors: Sequence[float]) -> tuple[float, ...]:
        """Single-robot convenience: sensor tuple to effector tuple."""
        return tuple(self(np.asarray(sensors, dtype=float)[None, :])[0])


def build_controller(genome: np.ndarray, spec: ControllerSpec) -> MlpController:
    """Deterministic genome-to-network construction."""
    g = np.asarray(genome, dtype=float)
    if g.shape != (spec.genome_length,):
        raise ValueError(
            f"genome length {g.shape} does not match spec ({spec.genome_length},)"
        )
    n1 = (spec.inputs + 1) * spec.hidden
    w1 = g[:n1].reshape(spec.hidden, spec.inputs + 1)
    w2 = g[n1:].reshape(spec.outputs, spec.hidden + 1)
    return MlpController(w1, w2, spec.out_low, spec.out_high)


class StackedControllers:
    """Many genomes driving disjoint blocks of one big trial batch.

    Sensor rows arrive as (K * M, inputs) with individual k owning rows
    [k*M, (k+1)*M); each block goes through its own network.  Numerically
    identical to running the individuals one at a time.
    """

    def __init__(self, genomes: np.ndarray, spec: ControllerSpec):
        if genomes.ndim != 2 or genomes.shape[1] != spec.genome_length:
            raise ValueError("genomes must be (K, genome_length)")
        k = genomes.shape[0]
        n1 = (spec.inputs + 1) * spec.hidden
        self.w1 = genomes[:, :n1].reshape(k, spec.hidden, spec.inputs + 1)
        self.w2 = genomes[:, n1:].reshape(k, spec.outputs, spec.hidden + 1)
        self.k = k
        self.out_low = spec.out_low
        self.out_high = spec.out_high

    def __call__(self, x: np.ndarray) -> np.ndarray:
        m = x.shape[0] // self.k
        xb = x.reshape(self.k, m, x.shape[1])
        h = np.tanh(
            np.einsum("kmi,khi->kmh", xb, self.w1[:, :, :-1]) + self.w1[:, :, -1][:, None, :]
        )
        o = np.einsum("kmh,koh->kmo", h, self.w2[:, :, :-1]) + self.w2[:, :, -1][:, None, :]
        logistic = 1.0 / (1.0 + np.exp(-o))
        out = self.out_low + (self.out_high - self.out_low) * logistic
        return out.reshape(self.k * m, -1)


def mutate(
    g: np.ndarray,
    rng: np.random.Generator,
    p_gene: float,
    sigma: float,
    clip: float = WEIGHT_CLIP,
) -> np.ndarray:
    """Per-gene Gaussian perturbation with probability p_gene, clamped."""
    if not (0.0 <= p_gene <= 1.0) or sigma <= 0.0:
        raise ValueError("need 0 <= p_gene <= 1 and sigma > 0")
    hit = rng.random(g.shape) < p_gene
    noise = rng.normal(0.0, sigma, g.shape)
    return np.clip(g + hit * noise, -clip, clip)


def crossover(a: np.ndarray, b: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Single-point crossover; the cut lands uniformly in [1, L-1]."""
    if a.shape != b.shape:
        raise ValueError("parent genomes differ in length")
    cut = int(rng.integers(1, len(a)))
    return np.concatenate([a[:cut], b[cut:]])


def trial_seeds(master_seed: int, generation: int, index: int, trials: int) -> list[int]:
    """Per-trial integer seeds keyed by (master, generation, individual, trial)."""
    return [
        int(
            np.random.SeedSequence(
                entropy=master_seed, spawn_key=(_SEED_EVAL, generation, index, t)
            ).generate_state(1)[0]
        )
        for t in range(trials)
    ]


def stream_rng(master_seed: int, tag: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=master_seed, spawn_key=(tag, *key))
    )


@dataclass
class EvaluationResult:
    """Trial-averaged outcome of evaluating one genome."""

    fitness: float
    raw_characterisation: ch.RawCharacterisation
    ts_characterisation: np.ndarray
    trial_fitness: np.ndarray
    trial_seeds: list[int]
    trial_raw: np.ndarray | None = None  # (trials, 2F+1) when kept


def evaluate(
    genome: np.ndarray,
    task: Task,
    spec: ControllerSpec,
    seeds: Sequence[int],
    keep_trials: bool = False,
) -> EvaluationResult:
    """Run one genome over seeded trials and average the results."""
    results = evaluate_population(
        np.asarray(genome, dtype=float)[None, :], task, spec, [list(seeds)], keep_trials
    )
    return results[0]


def evaluate_population(
    genomes: np.ndarray,
    task: Task,
    spec: ControllerSpec,
    seeds_per_genome: Sequence[Sequence[int]],
    keep_trials: bool = False,
) -> list[EvaluationResult]:
    """Evaluate many genomes in one flat trial batch.

    Trials of different genomes never interact, so stacking them yields
    the same numbers as evaluating one genome at a time, only with the
    per-step array overhead shared across the whole generation.
    """
    k = genomes.shape[0]
    if len(seeds_per_genome) != k:
        raise ValueError("one seed list per genome required")
    trials = len(seeds_per_genome[0])
    if trials < 1 or any(len(s) != trials for s in seeds_per_genome):
        raise ValueError("every genome needs the same positive trial count")
    controller = StackedControllers(genomes, spec)
    flat_seeds = [s for seeds in seeds_per_genome for s in seeds]
    batch = task.simulate(controller, flat_seeds)
    schema = task.char_schema()
    raw = ch.aggregate_batch(batch.features, batch.steps, task.max_steps)
    results = []
    for i in range(k):
        sl = slice(i * trials, (i + 1) * trials)
        per_trial = [
            ch.RawCharacterisation(values=raw[j], schema=schema)
            for j in range(i * trials, (i + 1) * trials)
        ]
        mean_char, mean_fit = ch.aggregate_trials(per_trial, batch.fitness[sl])
        results.append(
            EvaluationResult(
                fitness=mean_fit,
                raw_characterisation=mean_char,
                ts_characterisation=batch.ts_chars[sl].mean(axis=0),
                trial_fitness=batch.fitness[sl],
                trial_seeds=list(seeds_per_genome[i]),
                trial_raw=raw[sl] if keep_trials else None,
            )
        )
    return results


@dataclass
class Individual:
    id: int
    genome: np.ndarray
    result: EvaluationResult | None = None


@dataclass
class GenerationStats:
    generation: int
    best_fitness: float
    mean_fitness: float
    best_id: int
    best_so_far: float
    archive_size: int
    evaluations: int
    wall_time: float


@dataclass
class GenerationDetail:
    """Per-individual arrays exposed to logging hooks after each generation."""

    ids: np.ndarray
    fitness: np.ndarray
    sdbc_raw: np.ndarray            # (P, 2F+1), computed for every method
    ts: np.ndarray                  # (P, 4)
    transformed: np.ndarray | None  # standardised (and weighted) view, sd modes
    novelty: np.ndarray | None
    coefficients: ch.StandardisationCoefficients | None
    weights: ch.FeatureWeights | None
    order: list[int]


@dataclass
class EvolutionState:
    """Everything the generational loop carries between generations."""

    task: Task
    method: str
    spec: ControllerSpec
    master_seed: int
    population_size: int = 100
    trials: int = 10
    tournament_size: int = 2
    p_crossover: float = 0.5
    p_gene_mutation: float = 0.05
    mutation_sigma: float = 0.5
    elites: int = 2
    init_range: float = 1.0
    novelty_k: int = 15
    archive_rate: float = 0.025
    delta: float = 0.25
    mi_bins_min: int = 4
    mi_bins_max: int = 16
    weight_update_period: int = 1

    population: list[Individual] = field(default_factory=list)
    generation: int = 0
    next_id: int = 0
    archive: nov.NoveltyArchive = field(default_factory=nov.NoveltyArchive)
    best_so_far: float = -np.inf
    best_genome: np.ndarray | None = None
    best_result: EvaluationResult | None = None
    best_generation: int = -1
    weights: ch.FeatureWeights | None = None

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if not (1 <= self.elites <= self.population_size):
            raise ValueError("elites must be in [1, population size]")


def init_population(state: EvolutionState) -> None:
    rng = stream_rng(state.master_seed, _SEED_INIT)
    state.population = []
    for _ in range(state.population_size):
        genome = rng.uniform(-state.init_range, state.init_range, state.spec.genome_length)
        state.population.append(Individual(id=state.next_id, genome=genome))
        state.next_id += 1


def _uses_sdbc(method: str) -> bool:
    return method in ("ns-sd", "ns-sd+")


def run_generation(state: EvolutionState) -> tuple[GenerationStats, GenerationDetail]:
    """One full generation: evaluate, transform, score, rank, breed."""
    t0 = time.perf_counter()
    gen = state.generation
    fresh = [
        (idx, ind) for idx, ind in enumerate(state.population) if ind.result is None
    ]
    evaluations = len(fresh)
    if fresh:
        genomes = np.stack([ind.genome for _, ind in fresh])
        seeds = [
            trial_seeds(state.master_seed, gen, idx, state.trials) for idx, _ in fresh
        ]
        for (_, ind), result in zip(
            fresh, evaluate_population(genomes, state.task, state.spec, seeds)
        ):
            ind.result = result

    fitness = np.array([ind.result.fitness for ind in state.population])
    ids = np.array([ind.id for ind in state.population])
    sdbc_raw = np.stack(
        [ind.result.raw_characterisation.values for ind in state.population]
    )
    ts = np.stack([ind.result.ts_characterisation for ind in state.population])
    transformed = None
    novelty_arr = None
    coeffs = None

    if state.method == "fit":
        order = sorted(
            range(len(state.population)),
            key=lambda i: (-fitness[i], state.population[i].id),
        )
    else:
        if _uses_sdbc(state.method):
            selection_raw = sdbc_raw
            coeffs = ch.compute_standardisation(selection_raw)
            transformed = np.stack(
                [ch.apply_standardisation(r, coeffs) for r in selection_raw]
            )
            if state.method == "ns-sd+":
                if state.weights is None or gen % state.weight_update_period == 0:
                    state.weights = ch.compute_weights(
                        selection_raw, fitness,
                        state.delta, state.mi_bins_min, state.mi_bins_max,
                    )
                transformed = transformed * state.weights.weights
            archive_raw = state.archive.raw_matrix()
            if archive_raw.size:
                archive_view = np.stack(
                    [ch.apply_standardisation(r, coeffs) for r in archive_raw]
                )
                if state.method == "ns-sd+":
                    archive_view = archive_view * state.weights.weights
            else:
                archive_view = np.empty((0, 0))
            selection_chars = transformed
        else:  # ns-ts: the hand-designed vector is used as-is
            selection_raw = ts
            selection_chars = ts
            archive_view = state.archive.raw_matrix()

        novelty_arr = nov.novelty_scores(selection_chars, archive_view, state.novelty_k)
        scored = [
            nov.ScoredIndividual(
                id=ind.id,
                fitness=float(fitness[i]),
                characterisation=selection_chars[i],
                novelty=float(novelty_arr[i]),
                raw=selection_raw[i],
            )
            for i, ind in enumerate(state.population)
        ]
        order = nov.rank_population(scored)
        nov.update_archive(
            state.archive,
            scored,
            stream_rng(state.master_seed, _SEED_ARCHIVE, gen),
            state.archive_rate,
            gen,
        )

    best_idx = int(np.lexsort((ids, -fitness))[0])
    if fitness[best_idx] > state.best_so_far:
        state.best_so_far = float(fitness[best_idx])
        state.best_genome = state.population[best_idx].genome.copy()
        state.best_result = state.population[best_idx].result
        state.best_generation = gen

    stats = GenerationStats(
        generation=gen,
        best_fitness=float(fitness[best_idx]),
        mean_fitness=float(fitness.mean()),
        best_id=int(ids[best_idx]),
        best_so_far=state.best_so_far,
        archive_size=len(state.archive),
        evaluations=evaluations,
        wall_time=time.perf_counter() - t0,
    )
    detail = GenerationDetail(
        ids=ids,
        fitness=fitness,
        sdbc_raw=sdbc_raw,
        ts=ts,
        transformed=transformed,
        novelty=novelty_arr,
        coefficients=coeffs,
        weights=state.weights if state.method == "ns-sd+" else None,
        order=order,
    )

    # breed the next generation: elites pass through with their results
    rng = stream_rng(state.master_seed, _SEED_OPS, gen)
    rank_of = np.empty(len(order), dtype=int)
    for pos, i in enumerate(order):
        rank_of[i] = pos
    next_pop = [state.population[i] for i in order[: state.elites]]
    while len(next_pop) < state.population_size:
        parents = []
        for _ in range(2):
            contenders = rng.integers(0, len(state.population), state.tournament_size)
            winner = min(contenders, key=lambda i: rank_of[i])
            parents.append(state.population[winner].genome)
        if rng.random() < state.p_crossover:
            child = crossover(parents[0], parents[1], rng)
        else:
            child = parents[0].copy()
        child = mutate(child, rng, state.p_gene_mutation, state.mutation_sigma)
        next_pop.append(Individual(id=state.next_id, genome=child))
        state.next_id += 1
    state.population = next_pop
    state.generation += 1
    return stats, detail
