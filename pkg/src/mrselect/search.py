"""Tree-encoded candidates, genetic operators, constrained NSGA-II and the
outer restart loop with uncertainty-driven subset refresh.

An individual is a set of at most `chain_budget` transform chains, each at
most `chain_depth` deep. Domination is feasibility-first: any feasible
solution dominates any infeasible one; within the same feasibility class the
usual Pareto rule applies on (coverage up, similarity down, kill ratio up).
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data import LabeledDataset
from .errors import EmptySubset, MalformedFile
from .metrics import CoverageConfig, ObjectiveVector, evaluate
from .model import MlpModel
from .transforms import (
    DEFAULT_BOUNDS,
    BoundsTable,
    HmrChain,
    TransformSpec,
    sample_spec,
)
from .uncertainty import ValidityBound, most_uncertain, set_feasibility


@dataclass
class Individual:
    chains: list
    objectives: ObjectiveVector | None = None

    def copy(self) -> "Individual":
        return Individual([copy.deepcopy(c) for c in self.chains])

    def to_dict(self) -> dict:
        doc = {"chains": [c.to_dict() for c in self.chains]}
        if self.objectives is not None:
            doc["objectives"] = {
                "coverage": self.objectives.coverage,
                "similarity": self.objectives.similarity,
                "kill_ratio": self.objectives.kill_ratio,
                "feasible": self.objectives.feasible,
            }
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "Individual":
        ind = cls([HmrChain.from_dict(c) for c in doc["chains"]])
        if "objectives" in doc:
            o = doc["objectives"]
            ind.objectives = ObjectiveVector(
                o["coverage"], o["similarity"], o["kill_ratio"], o.get("feasible")
            )
        return ind


@dataclass
class SearchConfig:
    population: int = 50
    evaluations: int = 200  # offspring evaluation budget per inner run
    steps: int = 5
    uncertain_fraction: float = 0.04
    subset_fraction: float = 0.10
    crossover_rate: float = 0.8
    mutation_rate: float = 0.2
    mutation_mix: tuple = (0.7, 0.2, 0.1)  # change, nullify, reinit
    chain_budget: int = 5
    chain_depth: int = 3
    gating_subsample: int = 64

    def __post_init__(self):
        for name in ("crossover_rate", "mutation_rate", "uncertain_fraction", "subset_fraction"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1]")
        if abs(sum(self.mutation_mix) - 1.0) > 1e-9:
            raise ValueError("mutation_mix must sum to 1")
        if self.population < 2 or self.chain_budget < 1 or self.chain_depth < 1:
            raise ValueError("population >= 2, chain_budget >= 1, chain_depth >= 1 required")


@dataclass
class ParetoFront:
    individuals: list
    feasible_exists: bool = True


@dataclass
class SearchContext:
    """Everything the inner search needs besides the current subset."""

    model: MlpModel
    coverage: CoverageConfig
    bounds: BoundsTable
    bound: ValidityBound
    reference: dict | None = None
    n_samples: int = 30
    tolerance: float = 0.01
    gate_seed: int = 0


def random_individual(config: SearchConfig, rng, bounds: BoundsTable | None = None) -> Individual:
    bounds = DEFAULT_BOUNDS if bounds is None else bounds
    n_chains = int(rng.integers(1, config.chain_budget + 1))
    chains = []
    for _ in range(n_chains):
        depth = int(rng.integers(1, config.chain_depth + 1))
        chains.append(HmrChain([sample_spec(rng, bounds=bounds) for _ in range(depth)]))
    return Individual(chains)


def random_sets(n: int, config: SearchConfig, rng, bounds: BoundsTable | None = None) -> list:
    return [random_individual(config, rng, bounds) for _ in range(n)]


def crossover(p1: Individual, p2: Individual, rng) -> tuple[Individual, Individual]:
    """Single-point crossover on the chain lists; single-chain parents copy."""
    if len(p1.chains) < 2 or len(p2.chains) < 2:
        return p1.copy(), p2.copy()
    cut = int(rng.integers(1, min(len(p1.chains), len(p2.chains))))
    c1 = Individual([copy.deepcopy(c) for c in p1.chains[:cut] + p2.chains[cut:]])
    c2 = Individual([copy.deepcopy(c) for c in p2.chains[:cut] + p1.chains[cut:]])
    return c1, c2


def mutate(ind: Individual, config: SearchConfig, rng, bounds: BoundsTable | None = None) -> Individual:
    """Node-level mutation: with probability mutation_rate a node is changed
    (params resampled, same kind), nullified, or reinitialized, per the mix.
    Structure (chain count and depth) is preserved.
    """
    bounds = DEFAULT_BOUNDS if bounds is None else bounds
    mix = np.asarray(config.mutation_mix, dtype=np.float64)
    out = ind.copy()
    for chain in out.chains:
        for i, node in enumerate(chain.nodes):
            if rng.random() >= config.mutation_rate:
                continue
            op = int(rng.choice(3, p=mix))
            if op == 0:  # change params, keep kind and active status
                fresh = sample_spec(rng, kind=node.kind, bounds=bounds)
                chain.nodes[i] = TransformSpec(node.kind, fresh.params, node.active)
            elif op == 1:  # nullify
                chain.nodes[i] = TransformSpec(node.kind, node.params, False)
            else:  # reinitialize: new kind and params, reactivated
                chain.nodes[i] = sample_spec(rng, bounds=bounds)
    return out


def _dominates(a: ObjectiveVector, b: ObjectiveVector) -> bool:
    fa = a.feasible is not False
    fb = b.feasible is not False
    if fa != fb:
        return fa
    ge = a.coverage >= b.coverage and a.similarity <= b.similarity and a.kill_ratio >= b.kill_ratio
    gt = a.coverage > b.coverage or a.similarity < b.similarity or a.kill_ratio > b.kill_ratio
    return ge and gt


def nondominated_sort(objectives: list) -> list:
    """Feasibility-first Pareto ranking; returns fronts as lists of indices."""
    n = len(objectives)
    if n == 0:
        raise EmptySubset("cannot sort an empty population")
    dominated_by = [[] for _ in range(n)]
    n_dom = [0] * n
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if _dominates(objectives[i], objectives[j]):
                dominated_by[i].append(j)
            elif _dominates(objectives[j], objectives[i]):
                n_dom[i] += 1
    fronts = [[i for i in range(n) if n_dom[i] == 0]]
    while True:
        nxt = []
        for i in fronts[-1]:
            for j in dominated_by[i]:
                n_dom[j] -= 1
                if n_dom[j] == 0:
                    nxt.append(j)
        if not nxt:
            break
        fronts.append(sorted(nxt))
    return fronts


def crowding_distance(objectives: list) -> np.ndarray:
    """Per-member crowding distance within one front."""
    n = len(objectives)
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    vals = np.array([o.as_tuple() for o in objectives])
    for m in range(vals.shape[1]):
        order = np.argsort(vals[:, m], kind="stable")
        lo, hi = vals[order[0], m], vals[order[-1], m]
        dist[order[0]] = dist[order[-1]] = np.inf
        if hi > lo:
            for k in range(1, n - 1):
                dist[order[k]] += (vals[order[k + 1], m] - vals[order[k - 1], m]) / (hi - lo)
    return dist


def _rank_and_crowding(population: list) -> tuple[np.ndarray, np.ndarray]:
    objs = [ind.objectives for ind in population]
    fronts = nondominated_sort(objs)
    ranks = np.zeros(len(population), dtype=np.int64)
    crowd = np.zeros(len(population))
    for r, front in enumerate(fronts):
        ranks[front] = r
        d = crowding_distance([objs[i] for i in front])
        for local, idx in enumerate(front):
            crowd[idx] = d[local]
    return ranks, crowd


def _tournament(ranks, crowd, rng) -> int:
    i, j = rng.integers(len(ranks)), rng.integers(len(ranks))
    if ranks[i] != ranks[j]:
        return int(i if ranks[i] < ranks[j] else j)
    if crowd[i] != crowd[j]:
        return int(i if crowd[i] > crowd[j] else j)
    return int(min(i, j))


def _evaluate(
    ctx: SearchContext,
    subset: LabeledDataset,
    gate_subset: LabeledDataset,
    ind: Individual,
    trace_cache: dict | None = None,
    gate_cache: dict | None = None,
) -> None:
    obj = evaluate(ctx.model, subset, ind, ctx.coverage, ctx.bounds, ctx.reference, trace_cache)
    obj.feasible = set_feasibility(
        ind, ctx.model, gate_subset, ctx.bound, ctx.n_samples, ctx.gate_seed, ctx.bounds, ctx.tolerance,
        gate_cache,
    )
    ind.objectives = obj


def nsga2(
    ctx: SearchContext,
    subset: LabeledDataset,
    config: SearchConfig,
    rng,
    init_pop: list | None = None,
) -> ParetoFront:
    """One constrained NSGA-II run on the given subset.

    The evaluation budget (`config.evaluations`) counts offspring objective
    evaluations; the initial population is always evaluated. Returns the
    feasible part of the first front, or the whole first front flagged
    feasible_exists=False when no feasible solution was found.
    """
    if len(subset) == 0:
        raise EmptySubset("empty search subset")

    gate_n = min(config.gating_subsample, len(subset))
    gate_idx = np.sort(rng.choice(len(subset), size=gate_n, replace=False))
    gate_subset = subset.subset(gate_idx)

    # Per-run memos: the evaluation subset and gate subset are fixed for the
    # whole run, so per-chain traces and gate verdicts can be reused.
    trace_cache: dict = {}
    gate_cache: dict = {}

    population = [ind.copy() for ind in (init_pop or [])][: config.population]
    while len(population) < config.population:
        population.append(random_individual(config, rng, ctx.bounds))
    for ind in population:
        _evaluate(ctx, subset, gate_subset, ind, trace_cache, gate_cache)

    evals = 0
    while evals < config.evaluations:
        ranks, crowd = _rank_and_crowding(population)
        offspring = []
        while len(offspring) < config.population and evals + len(offspring) < config.evaluations:
            a = population[_tournament(ranks, crowd, rng)]
            b = population[_tournament(ranks, crowd, rng)]
            if rng.random() < config.crossover_rate:
                c1, c2 = crossover(a, b, rng)
            else:
                c1, c2 = a.copy(), b.copy()
            offspring.append(mutate(c1, config, rng, ctx.bounds))
            if len(offspring) < config.population and evals + len(offspring) < config.evaluations:
                offspring.append(mutate(c2, config, rng, ctx.bounds))
        for child in offspring:
            _evaluate(ctx, subset, gate_subset, child, trace_cache, gate_cache)
        evals += len(offspring)
        # elitist (mu + lambda) survival
        combined = population + offspring
        fronts = nondominated_sort([ind.objectives for ind in combined])
        survivors = []
        for front in fronts:
            if len(survivors) + len(front) <= config.population:
                survivors.extend(front)
            else:
                d = crowding_distance([combined[i].objectives for i in front])
                order = sorted(range(len(front)), key=lambda k: (-d[k], front[k]))
                need = config.population - len(survivors)
                survivors.extend(front[k] for k in order[:need])
                break
        population = [combined[i] for i in survivors]

    fronts = nondominated_sort([ind.objectives for ind in population])
    first = [population[i] for i in fronts[0]]
    feasible = [ind for ind in first if ind.objectives.feasible]
    if feasible:
        return ParetoFront(feasible, feasible_exists=True)
    return ParetoFront(first, feasible_exists=False)


@dataclass
class HomrsResult:
    step_fronts: list = field(default_factory=list)
    final_front: ParetoFront | None = None
    bound: ValidityBound | None = None


def homrs(
    model: MlpModel,
    calibration: LabeledDataset,
    config: SearchConfig,
    ctx: SearchContext,
    seed: int,
    out_dir=None,
) -> HomrsResult:
    """Outer selection loop: random subset first, then subsets biased towards
    the most uncertain inputs for the current front; each inner run is seeded
    with the previous Pareto front padded with random individuals. The final
    front is re-evaluated and re-gated on the full calibration set.
    """
    if len(calibration) == 0:
        raise EmptySubset("empty calibration set")
    rng = np.random.default_rng(seed)
    subset_size = max(1, int(round(config.subset_fraction * len(calibration))))
    indices = np.sort(rng.choice(len(calibration), size=subset_size, replace=False))

    result = HomrsResult(bound=ctx.bound)
    front: ParetoFront | None = None
    for step in range(config.steps):
        init_pop = None
        if front is not None:
            init_pop = [ind.copy() for ind in front.individuals]
        front = nsga2(ctx, calibration.subset(indices), config, rng, init_pop=init_pop)
        result.step_fronts.append(front)
        if out_dir is not None:
            save_checkpoint(front, f"{out_dir}/front_step_{step}.json")
        if step < config.steps - 1:
            indices = most_uncertain(
                model,
                calibration,
                front.individuals,
                config.uncertain_fraction,
                subset_size,
                seed=int(rng.integers(2**31)),
                n_samples=ctx.n_samples,
                bounds=ctx.bounds,
            )

    # final re-evaluation and re-gating on the full calibration set
    final = []
    for ind in front.individuals:
        obj = evaluate(model, calibration, ind, ctx.coverage, ctx.bounds, ctx.reference)
        obj.feasible = set_feasibility(
            ind, model, calibration, ctx.bound, ctx.n_samples, ctx.gate_seed, ctx.bounds, ctx.tolerance
        )
        ind.objectives = obj
        final.append(ind)
    feasible = [ind for ind in final if ind.objectives.feasible]
    result.final_front = (
        ParetoFront(feasible, True) if feasible else ParetoFront(final, False)
    )
    if out_dir is not None:
        save_checkpoint(result.final_front, f"{out_dir}/front_final.json")
    return result


def knee_point(front: ParetoFront) -> int:
    """Most balanced member: minimal Chebyshev distance to the ideal point
    after min-max normalizing each objective (ties by index).
    """
    vals = np.array([ind.objectives.as_tuple() for ind in front.individuals])
    # orient so 0 is best on every axis
    regrets = np.empty_like(vals)
    for m, maximize in enumerate((True, False, True)):
        col = vals[:, m]
        lo, hi = col.min(), col.max()
        span = hi - lo if hi > lo else 1.0
        regrets[:, m] = (hi - col) / span if maximize else (col - lo) / span
    return int(np.argmin(regrets.max(axis=1)))


def save_checkpoint(front: ParetoFront, path) -> None:
    doc = {
        "feasible_exists": front.feasible_exists,
        "individuals": [ind.to_dict() for ind in front.individuals],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_checkpoint(path) -> ParetoFront:
    try:
        with open(path) as fh:
            doc = json.load(fh)
        individuals = [Individual.from_dict(d) for d in doc["individuals"]]
        return ParetoFront(individuals, bool(doc["feasible_exists"]))
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise MalformedFile(f"cannot read checkpoint {path}: {exc}") from exc
