"""Genetic search for the mapping matrix that best aligns target to source.

A candidate mapping is scored by training a 1-NN (L1) classifier on the
source representations and measuring its accuracy on the adjusted target
representations of a labelled search split.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_labels, check_matrix
from .exceptions import DimensionMismatch, SpaceTooLarge
from .mapping import (
    apply_genome,
    check_genome,
    check_mapping,
    from_genome,
    genome_adjustment_degree,
    identity_genome,
    to_genome,
    write_genomes,
)
from .neighbors import l1_distances, nearest_index

MAX_EXHAUSTIVE = 10 ** 6


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 100
    elite_fraction: float = 0.2
    patience: int = 200
    mutation_rate: float | None = None  # None means 1/q
    max_generations: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if not 0 < self.elite_fraction < 1:
            raise ValueError("elite_fraction must lie in (0, 1)")
        if self.patience < 1 or self.max_generations < 0:
            raise ValueError("patience must be >= 1, max_generations >= 0")
        if self.mutation_rate is not None and not 0 <= self.mutation_rate <= 1:
            raise ValueError("mutation_rate must lie in [0, 1]")

    @property
    def n_elite(self):
        n = math.ceil(self.elite_fraction * self.population_size)
        return min(max(n, 1), self.population_size - 1)


@dataclass(frozen=True, eq=False)
class FitnessContext:
    """Source representations plus disjoint target search/report splits."""

    source: np.ndarray
    source_labels: np.ndarray
    target_search: np.ndarray
    target_search_labels: np.ndarray
    target_report: np.ndarray
    target_report_labels: np.ndarray

    def __post_init__(self):
        S = check_matrix(self.source, "source")
        T1 = check_matrix(self.target_search, "target_search")
        T2 = check_matrix(self.target_report, "target_report",
                          n_features=T1.shape[1])
        object.__setattr__(self, "source", S)
        object.__setattr__(self, "target_search", T1)
        object.__setattr__(self, "target_report", T2)
        object.__setattr__(self, "source_labels",
                           check_labels(self.source_labels, S.shape[0]))
        object.__setattr__(self, "target_search_labels",
                           check_labels(self.target_search_labels, T1.shape[0]))
        object.__setattr__(self, "target_report_labels",
                           check_labels(self.target_report_labels, T2.shape[0]))

    @property
    def p(self):
        """Target representation width (mapping rows)."""
        return self.target_search.shape[1]

    @property
    def q(self):
        """Source representation width (mapping columns)."""
        return self.source.shape[1]

    @property
    def binary(self):
        return all(np.all((A == 0) | (A == 1)) for A in
                   (self.source, self.target_search, self.target_report))


@dataclass(eq=False)
class SearchResult:
    best_genome: np.ndarray
    best_fitness: float
    fitness_trace: list
    generations_run: int
    report_accuracy: float
    n_target_units: int
    mean_trace: list = field(default_factory=list)
    adjustment_trace: list = field(default_factory=list)
    population: np.ndarray | None = None

    @property
    def best_mapping(self):
        return from_genome(self.best_genome, self.n_target_units)

    @property
    def adjustment_degree(self):
        return self.adjustment_trace[-1] if self.adjustment_trace else None


def stratified_halves(labels, search_fraction=0.5, seed=0):
    """Class-stratified disjoint (search, report) index arrays."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    search, report = [], []
    for c in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == c))
        cut = int(round(search_fraction * members.size))
        search.append(members[:cut])
        report.append(members[cut:])
    return np.sort(np.concatenate(search)), np.sort(np.concatenate(report))


def make_context(source, source_labels, target, target_labels,
                 search_fraction=0.5, seed=0, transductive=False):
    """Build a context, splitting target rows into search and report parts.

    With ``transductive=True`` all target rows serve as both splits.
    """
    target = np.asarray(target)
    target_labels = np.asarray(target_labels)
    if transductive:
        idx = np.arange(target.shape[0])
        return FitnessContext(source, source_labels, target, target_labels,
                              target, target_labels), idx, idx
    s_idx, r_idx = stratified_halves(target_labels, search_fraction, seed)
    ctx = FitnessContext(source, source_labels,
                         target[s_idx], target_labels[s_idx],
                         target[r_idx], target_labels[r_idx])
    return ctx, s_idx, r_idx


class FitnessEvaluator:
    """Memoised batch scorer of genomes against one target split."""

    max_cache = 200_000

    def __init__(self, source, source_labels, target, target_labels,
                 memoize=True):
        self.memoize = memoize
        self.S = np.asarray(source, dtype=np.float64)
        self.ys = np.asarray(source_labels)
        self.T = np.asarray(target, dtype=np.float64)
        self.yt = np.asarray(target_labels)
        self.binary = bool(np.all((self.S == 0) | (self.S == 1))
                           and np.all((self.T == 0) | (self.T == 1)))
        self._padded = np.hstack([np.zeros((self.T.shape[0], 1)), self.T])
        self._S_norm = self.S.sum(axis=1)
        self._cache = {}

    def _score_batch(self, genomes):
        n = self.T.shape[0]
        adjusted = self._padded[:, genomes]  # (n, m, q)
        adjusted = adjusted.transpose(1, 0, 2).reshape(-1, genomes.shape[1])
        if self.binary:
            # L1 between binary rows: |a| + |b| - 2 a.b, exact in float64
            D = (adjusted.sum(axis=1)[:, None] + self._S_norm[None, :]
                 - 2.0 * adjusted @ self.S.T)
        else:
            D = l1_distances(adjusted, self.S)
        pred = self.ys[nearest_index(D)].reshape(genomes.shape[0], n)
        return np.mean(pred == self.yt[None, :], axis=1)

    def __call__(self, genomes, chunk=64):
        genomes = np.atleast_2d(np.asarray(genomes, dtype=np.int64))
        out = np.empty(genomes.shape[0])
        todo = []
        for i, g in enumerate(genomes):
            key = g.tobytes()
            if key in self._cache:
                out[i] = self._cache[key]
            else:
                todo.append(i)
        # duplicates inside one batch are scored once
        unique = {}
        for i in todo:
            unique.setdefault(genomes[i].tobytes(), []).append(i)
        keys = list(unique)
        if not self.memoize or len(self._cache) > self.max_cache:
            self._cache.clear()
        for start in range(0, len(keys), chunk):
            block = keys[start:start + chunk]
            batch = np.stack([genomes[unique[k][0]] for k in block])
            scores = self._score_batch(batch)
            for k, s in zip(block, scores):
                self._cache[k] = float(s)
                out[unique[k]] = s
        return out


def _check_dims(ctx, p, q):
    if (p, q) != (ctx.p, ctx.q):
        raise DimensionMismatch(
            f"mapping is {p}x{q}, context needs {ctx.p}x{ctx.q}")


def fitness(M, ctx, split="search"):
    """Accuracy of 1-NN on source representations over the adjusted target."""
    M = check_mapping(M)
    _check_dims(ctx, *M.shape)
    return genome_fitness(to_genome(M), ctx, split)


def genome_fitness(V, ctx, split="search"):
    V = check_genome(V, ctx.p)
    _check_dims(ctx, ctx.p, V.size)
    T, y = ((ctx.target_search, ctx.target_search_labels) if split == "search"
            else (ctx.target_report, ctx.target_report_labels))
    pred = ctx.source_labels[nearest_index(l1_distances(apply_genome(V, T),
                                                        ctx.source))]
    return float(np.mean(pred == y))


def _rank(population, scores):
    """Sort by descending fitness, then ascending lexicographic genome."""
    keys = [population[:, j] for j in range(population.shape[1] - 1, -1, -1)]
    order = np.lexsort(keys + [-scores])
    return population[order], scores[order]


def _adjustment(V, p):
    return genome_adjustment_degree(V) if V.size == p else None


def evolve(ctx, config=None, initial=None, callback=None):
    """Evolve mapping genomes to maximise search-split fitness.

    Parameters
    ----------
    ctx : FitnessContext
    config : GaConfig, optional
    initial : array-like of shape (m, q), optional
        Genomes placed in the first generation; the population is topped up
        with uniform random genomes. The direct (identity) genome is always
        included.
    callback : callable, optional
        Called as ``callback(generation, population, scores)`` after ranking.

    Returns
    -------
    SearchResult
    """
    config = config or GaConfig()
    p, q = ctx.p, ctx.q
    size = config.population_size
    rng = np.random.default_rng(config.seed)
    rate = 1.0 / q if config.mutation_rate is None else config.mutation_rate
    evaluate = FitnessEvaluator(ctx.source, ctx.source_labels,
                                ctx.target_search, ctx.target_search_labels)

    ident = identity_genome(p, q)
    seeded = [ident]
    if initial is not None:
        for V in np.atleast_2d(np.asarray(initial, dtype=np.int64)):
            seeded.append(check_genome(V, p))
    seeded = np.stack(seeded[:size])
    for V in seeded:
        if V.size != q:
            raise DimensionMismatch(f"initial genome has length {V.size}, "
                                    f"expected {q}")
    population = np.vstack([seeded,
                            rng.integers(0, p + 1, (size - len(seeded), q))])
    scores = evaluate(population)
    population, scores = _rank(population, scores)

    best = scores[0]
    trace = [float(best)]
    mean_trace = [float(scores.mean())]
    adjustment_trace = [_adjustment(population[0], p)]
    if callback is not None:
        callback(0, population, scores)

    n_elite = config.n_elite
    n_child = size - n_elite
    weights = np.arange(size, 0, -1, dtype=np.float64)
    weights /= weights.sum()
    stale = 0
    generation = 0
    while generation < config.max_generations and stale < config.patience:
        generation += 1
        parents = rng.choice(size, size=(n_child, 2), p=weights)
        a, b = population[parents[:, 0]], population[parents[:, 1]]
        children = np.where(rng.random((n_child, q)) < 0.5, a, b)
        mutate = rng.random((n_child, q)) < rate
        children = np.where(mutate, rng.integers(0, p + 1, (n_child, q)),
                            children)
        population = np.vstack([population[:n_elite], children])
        scores = np.concatenate([scores[:n_elite], evaluate(children)])
        population, scores = _rank(population, scores)
        if scores[0] > best:
            best, stale = scores[0], 0
        else:
            stale += 1
        trace.append(float(best))
        mean_trace.append(float(scores.mean()))
        adjustment_trace.append(_adjustment(population[0], p))
        if callback is not None:
            callback(generation, population, scores)

    return SearchResult(
        best_genome=population[0].copy(),
        best_fitness=float(best),
        fitness_trace=trace,
        generations_run=generation,
        report_accuracy=genome_fitness(population[0], ctx, "report"),
        n_target_units=p,
        mean_trace=mean_trace,
        adjustment_trace=adjustment_trace,
        population=population,
    )


def exhaustive_search(ctx, p=None, q=None):
    """Exact argmax over all ``(p+1)**q`` genomes (lexicographic ties)."""
    p = ctx.p if p is None else p
    q = ctx.q if q is None else q
    _check_dims(ctx, p, q)
    space = (p + 1) ** q
    if space > MAX_EXHAUSTIVE:
        raise SpaceTooLarge(f"{space} genomes exceed the {MAX_EXHAUSTIVE} limit")
    evaluate = FitnessEvaluator(ctx.source, ctx.source_labels,
                                ctx.target_search, ctx.target_search_labels,
                                memoize=False)
    best_V, best = None, -np.inf
    chunk = 4096
    for start in range(0, space, chunk):
        codes = np.arange(start, min(start + chunk, space))
        # base-(p+1) digits, most significant first, give lexicographic order
        genomes = np.stack([(codes // (p + 1) ** (q - 1 - j)) % (p + 1)
                            for j in range(q)], axis=1)
        scores = evaluate(genomes)
        i = int(np.argmax(scores))
        if scores[i] > best:
            best, best_V = scores[i], genomes[i].copy()
    return SearchResult(best_V, float(best), [float(best)], 0,
                        genome_fitness(best_V, ctx, "report"), p,
                        [float(best)], [_adjustment(best_V, p)])


def write_trace_csv(result, path):
    """Per-generation CSV: generation, best_fitness, mean_fitness, adjustment."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["generation", "best_fitness", "mean_fitness",
                    "adjustment_degree_of_best"])
        for g, (b, m, a) in enumerate(zip(result.fitness_trace,
                                          result.mean_trace,
                                          result.adjustment_trace)):
            w.writerow([g, repr(b), repr(m), "" if a is None else repr(a)])


def write_checkpoint(result, directory):
    """Write ``population.txt``, ``best.txt`` and ``trace.csv``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_genomes(directory / "population.txt", result.population)
    write_genomes(directory / "best.txt", [result.best_genome])
    write_trace_csv(result, directory / "trace.csv")


class ConceptMappingSearch(BaseEstimator):
    """Estimator wrapper around :func:`evolve`.

    ``fit(X_source, y_source, X_target, y_target)`` learns the mapping from
    labelled source codes and a labelled target search sample; ``transform``
    then adjusts any target codes into the source unit order.
    """

    def __init__(self, population_size=100, elite_fraction=0.2, patience=200,
                 mutation_rate=None, max_generations=2000, random_state=0):
        self.population_size = population_size
        self.elite_fraction = elite_fraction
        self.patience = patience
        self.mutation_rate = mutation_rate
        self.max_generations = max_generations
        self.random_state = random_state

    def fit(self, X_source, y_source, X_target, y_target, initial=None):
        ctx = FitnessContext(X_source, y_source, X_target, y_target,
                             X_target, y_target)
        config = GaConfig(self.population_size, self.elite_fraction,
                          self.patience, self.mutation_rate,
                          self.max_generations, self.random_state)
        self.result_ = evolve(ctx, config, initial=initial)
        self.genome_ = self.result_.best_genome
        self.mapping_ = from_genome(self.genome_, ctx.p)
        self.fitness_ = self.result_.best_fitness
        self.n_features_in_ = ctx.p
        return self

    def transform(self, X):
        check_is_fitted(self, "genome_")
        return apply_genome(self.genome_,
                            check_matrix(X, n_features=self.n_features_in_))
