"""Adaptation methods and baselines evaluated with a 1-NN (L1) classifier.

Every method trains on the source train set (labelled) and the target train
set (unlabelled), and is scored on the *report* half of a labelled target
evaluation set. Methods that search a mapping use only the disjoint *search*
half for fitness.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_matrix, fingerprint
from .autoencoder import (
    DaeConfig,
    SdaeModel,
    binarize,
    chain_sizes,
    encode,
    grid_search_stack,
    layer_seeds,
    load_model,
    save_model,
    train_dae,
)
from .exceptions import NonFiniteLoss, RankDeficient
from .gasearch import (
    FitnessContext,
    GaConfig,
    evolve,
    genome_fitness,
    stratified_halves,
)
from .mapping import (
    block_concat_genome,
    genome_adjustment_degree,
    identity_genome,
)
from .neighbors import (
    L1NearestNeighborClassifier,
    accuracy,
    knn_classify,
    knn_train,
)

__all__ = [
    "EvalReport", "SdaeSettings", "ModelCache", "TargetSplit",
    "knn_train", "knn_classify", "accuracy", "L1NearestNeighborClassifier",
    "no_adapt_baseline", "joint_baseline", "conceptual_adapt", "concat_adapt",
    "subspace_alignment_baseline", "principal_directions", "SubspaceAlignment",
]

DEFAULT_SUBSPACE_DIM = 30


@dataclass
class EvalReport:
    method: str
    scenario: str
    depth: int | None
    seed: int
    accuracy: float
    adjustment_degree: float | None = None
    config_hash: str = ""
    wall_seconds: float = 0.0
    details: dict = field(default_factory=dict)
    search_indices: np.ndarray | None = field(default=None, repr=False)
    report_indices: np.ndarray | None = field(default=None, repr=False)
    search_result: object = field(default=None, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy {self.accuracy} outside [0, 1]")


@dataclass(frozen=True)
class SdaeSettings:
    """How every per-domain stack is trained (fixed settings or grid)."""

    learning_rate: float = 1.0
    corruption: float = 0.3
    tau: int = 20
    max_iters: int = 500
    patience: int = 20
    size_fraction: Fraction = Fraction(2, 3)
    grid_search: bool = False

    def layer_configs(self, n_input, depth, seed):
        sizes = chain_sizes(n_input, depth, self.size_fraction)[1:]
        return [DaeConfig(h, self.learning_rate, self.tau, self.corruption,
                          self.max_iters, self.patience, s)
                for h, s in zip(sizes, layer_seeds(seed, depth))]

    def key(self):
        d = asdict(self)
        d["size_fraction"] = str(self.size_fraction)
        return json.dumps(d, sort_keys=True)


def _config_key(configs):
    return hashlib.sha256(
        json.dumps([asdict(c) for c in configs], sort_keys=True).encode()
    ).hexdigest()[:16]


class ModelCache:
    """Trained stacks keyed by (data fingerprint, per-layer config hash).

    Layer-wise training makes a depth-k stack the k-layer prefix of any
    deeper stack with the same leading configs, so every prefix is stored
    and deeper requests resume from the longest cached prefix.
    """

    def __init__(self, directory=None):
        self.directory = Path(directory) if directory else None
        if self.directory:
            self.directory.mkdir(parents=True, exist_ok=True)
        self._models = {}
        self.hits = 0
        self.misses = 0

    def _lookup(self, key):
        if key in self._models:
            return self._models[key]
        if self.directory:
            path = self.directory / f"{key}.sdae"
            if path.exists():
                model = load_model(path)
                self._models[key] = model
                return model
        return None

    def _store(self, key, model):
        self._models[key] = model
        if self.directory:
            save_model(model, self.directory / f"{key}.sdae")

    def get(self, X, settings, depth, seed):
        X = np.asarray(X, dtype=np.float64)
        fp = fingerprint(X)
        if settings.grid_search:
            key = f"{fp}-grid-{depth}-{seed}-" + hashlib.sha256(
                settings.key().encode()).hexdigest()[:12]
            model = self._lookup(key)
            if model is not None:
                self.hits += 1
                return model
            self.misses += 1
            model, _ = grid_search_stack(X, depth, tau=settings.tau,
                                         max_iters=settings.max_iters,
                                         patience=settings.patience, seed=seed)
            self._store(key, model)
            return model

        configs = settings.layer_configs(X.shape[1], depth, seed)
        keys = [f"{fp}-{_config_key(configs[:k])}"
                for k in range(1, depth + 1)]
        start, layers, H = 0, [], X
        for k in range(depth, 0, -1):
            model = self._lookup(keys[k - 1])
            if model is not None:
                if k == depth:
                    self.hits += 1
                    return model
                start, layers = k, list(model.layers)
                H = encode(model, X)
                break
        self.misses += 1
        for k in range(start, depth):
            try:
                layer = train_dae(H, configs[k])
            except NonFiniteLoss as exc:
                raise NonFiniteLoss(str(exc), layer=k + 1) from exc
            layers.append(layer)
            H = layer.encode(H)
            self._store(keys[k], SdaeModel(layers))
        return SdaeModel(layers)


@dataclass(frozen=True, eq=False)
class TargetSplit:
    """Labelled target evaluation set cut into disjoint search/report parts."""

    X: np.ndarray
    y: np.ndarray
    search: np.ndarray
    report: np.ndarray

    @classmethod
    def make(cls, target, target_eval=None, search_fraction=0.5, seed=0,
             transductive=False):
        ds = target if target_eval is None else target_eval
        if transductive:
            idx = np.arange(len(ds.y))
            return cls(ds.X, ds.y, idx, idx)
        search, report = stratified_halves(ds.y, search_fraction, seed)
        return cls(ds.X, ds.y, search, report)

    def context(self, source_reps, source_labels, target_reps):
        return FitnessContext(source_reps, source_labels,
                              target_reps[self.search], self.y[self.search],
                              target_reps[self.report], self.y[self.report])


def _finish(method, scenario, depth, seed, acc, split, start, **kw):
    return EvalReport(method, scenario, depth, seed, float(acc),
                      wall_seconds=time.perf_counter() - start,
                      search_indices=split.search, report_indices=split.report,
                      **kw)


def _nn_accuracy(train, y_train, test, y_test):
    return accuracy(knn_classify(knn_train(train, y_train), test), y_test)


def no_adapt_baseline(source, target, *, target_eval=None, split=None, seed=0,
                      scenario=""):
    """1-NN on raw pixels, trained on source, scored on the target report part."""
    start = time.perf_counter()
    split = split or TargetSplit.make(target, target_eval, seed=seed)
    acc = _nn_accuracy(source.X, source.y, split.X[split.report],
                       split.y[split.report])
    return _finish("no_adapt", scenario, None, seed, acc, split, start)


def joint_baseline(source, target, depth=5, *, target_eval=None, split=None,
                   settings=None, cache=None, seed=0, scenario=""):
    """One stack trained on source and target together; direct unit mapping."""
    start = time.perf_counter()
    settings = settings or SdaeSettings()
    cache = cache if cache is not None else ModelCache()
    split = split or TargetSplit.make(target, target_eval, seed=seed)
    model = cache.get(np.vstack([source.X, target.X]), settings, depth, seed)
    R_s = binarize(encode(model, source.X))
    R_t = binarize(encode(model, split.X))
    ctx = split.context(R_s, source.y, R_t)
    acc = genome_fitness(identity_genome(ctx.p, ctx.q), ctx, "report")
    return _finish("joint", scenario, depth, seed, acc, split, start,
                   adjustment_degree=0.0,
                   details={"layer_sizes": model.layer_sizes})


def _separate_reps(source, target, split, depth, settings, cache, seed,
                   binary):
    m_s = cache.get(source.X, settings, depth, seed)
    m_t = cache.get(target.X, settings, depth, seed)
    R_s = encode(m_s, source.X)
    R_t = encode(m_t, split.X)
    if binary:
        R_s, R_t = binarize(R_s), binarize(R_t)
    return R_s, R_t, m_s, m_t


def _search_report(method, scenario, depth, seed, split, ctx, ga, start,
                   initial=None, extra=None):
    ga = ga or GaConfig(seed=seed)
    result = evolve(ctx, ga, initial=initial)
    adj = (genome_adjustment_degree(result.best_genome)
           if ctx.p == ctx.q else None)
    details = {
        "search_fitness": result.best_fitness,
        "identity_accuracy": genome_fitness(identity_genome(ctx.p, ctx.q),
                                            ctx, "report"),
        "generations": result.generations_run,
        "genome": result.best_genome.tolist(),
        **(extra or {}),
    }
    return _finish(method, scenario, depth, seed, result.report_accuracy,
                   split, start, adjustment_degree=adj, details=details,
                   search_result=result)


def conceptual_adapt(source, target, depth=5, ga=None, *, target_eval=None,
                     split=None, settings=None, cache=None, seed=0,
                     scenario="", binary=True):
    """Separate stacks per domain, then genetic search of the unit mapping.

    Returns an :class:`EvalReport` whose accuracy is measured on the report
    split and whose adjustment degree is set when both top layers have the
    same width.
    """
    start = time.perf_counter()
    settings = settings or SdaeSettings()
    cache = cache if cache is not None else ModelCache()
    split = split or TargetSplit.make(target, target_eval, seed=seed)
    R_s, R_t, m_s, m_t = _separate_reps(source, target, split, depth,
                                        settings, cache, seed, binary)
    ctx = split.context(R_s, source.y, R_t)
    return _search_report("separate", scenario, depth, seed, split, ctx, ga,
                          start, extra={"source_sizes": m_s.layer_sizes,
                                        "target_sizes": m_t.layer_sizes})


def concat_initial_population(n, p, q, size, rng):
    """Block-diagonal seeds: direct mapping on the joint block, random on the
    separate block; the first seed leaves the separate block unmapped."""
    ident = identity_genome(n)
    seeds = [block_concat_genome(ident, np.zeros(q, dtype=np.int64), n)]
    for _ in range(size - 1):
        seeds.append(block_concat_genome(ident, rng.integers(0, p + 1, q), n))
    return np.stack(seeds)


def concat_adapt(source, target, depth=5, ga=None, *, target_eval=None,
                 split=None, settings=None, cache=None, seed=0, scenario="",
                 binary=True):
    """Search over concatenated [joint | separate] codes (block-seeded)."""
    start = time.perf_counter()
    settings = settings or SdaeSettings()
    cache = cache if cache is not None else ModelCache()
    ga = ga or GaConfig(seed=seed)
    split = split or TargetSplit.make(target, target_eval, seed=seed)
    m_j = cache.get(np.vstack([source.X, target.X]), settings, depth, seed)
    J_s, J_t = encode(m_j, source.X), encode(m_j, split.X)
    if binary:
        J_s, J_t = binarize(J_s), binarize(J_t)
    S_s, S_t, _, _ = _separate_reps(source, target, split, depth, settings,
                                    cache, seed, binary)
    R_s = np.hstack([J_s, S_s])
    R_t = np.hstack([J_t, S_t])
    ctx = split.context(R_s, source.y, R_t)
    n, p, q = J_s.shape[1], S_t.shape[1], S_s.shape[1]
    rng = np.random.default_rng([ga.seed, 1])
    initial = concat_initial_population(n, p, q, ga.population_size, rng)
    return _search_report("concat", scenario, depth, seed, split, ctx, ga,
                          start, initial=initial,
                          extra={"joint_width": n, "target_width": p,
                                 "source_width": q})


# --------------------------------------------------------------------------
# subspace alignment


def principal_directions(X, d):
    """Top-``d`` covariance eigenvectors (columns), descending eigenvalues.

    Each eigenvector's largest-magnitude component is made positive.

    Returns
    -------
    P : ndarray of shape (n_features, d)
    eigenvalues : ndarray of shape (n_features,)
        All eigenvalues in descending order.
    """
    X = check_matrix(X)
    Xc = X - X.mean(axis=0)
    cov = Xc.T @ Xc / max(X.shape[0] - 1, 1)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    tol = max(vals[0], 0.0) * cov.shape[0] * np.finfo(float).eps
    n_positive = int(np.count_nonzero(vals > tol))
    if d > n_positive:
        raise RankDeficient(f"requested {d} directions, only {n_positive} "
                            "positive eigenvalues")
    P = vecs[:, :d].copy()
    pivots = np.argmax(np.abs(P), axis=0)
    P *= np.sign(P[pivots, np.arange(d)])
    return P, vals


def feasible_dim(X, requested=DEFAULT_SUBSPACE_DIM):
    """Largest usable subspace size not above ``requested``."""
    X = np.asarray(X, dtype=np.float64)
    rank = np.linalg.matrix_rank(X - X.mean(axis=0))
    return max(1, min(requested, rank))


class SubspaceAlignment(TransformerMixin, BaseEstimator):
    """Align the source PCA basis onto the target PCA basis.

    Parameters
    ----------
    n_components : int, default=30

    Attributes
    ----------
    components_source_, components_target_ : ndarray of shape (n_features, d)
    alignment_ : ndarray of shape (d, d)
        ``components_source_.T @ components_target_``.
    """

    def __init__(self, n_components=DEFAULT_SUBSPACE_DIM):
        self.n_components = n_components

    def fit(self, X_source, X_target):
        X_source = check_matrix(X_source, "X_source")
        X_target = check_matrix(X_target, "X_target",
                                n_features=X_source.shape[1])
        d = self.n_components
        self.mean_source_ = X_source.mean(axis=0)
        self.mean_target_ = X_target.mean(axis=0)
        self.components_source_, _ = principal_directions(X_source, d)
        self.components_target_, _ = principal_directions(X_target, d)
        self.alignment_ = self.components_source_.T @ self.components_target_
        self.n_features_in_ = X_source.shape[1]
        return self

    def transform_source(self, X):
        check_is_fitted(self, "alignment_")
        X = check_matrix(X, n_features=self.n_features_in_)
        return (X - self.mean_source_) @ self.components_source_ @ self.alignment_

    def transform(self, X):
        """Project target-domain samples onto the target subspace."""
        check_is_fitted(self, "alignment_")
        X = check_matrix(X, n_features=self.n_features_in_)
        return (X - self.mean_target_) @ self.components_target_


def subspace_alignment_baseline(source, target, d=None, *, target_eval=None,
                                split=None, seed=0, scenario=""):
    start = time.perf_counter()
    split = split or TargetSplit.make(target, target_eval, seed=seed)
    if d is None:
        d = min(feasible_dim(source.X), feasible_dim(target.X))
    sa = SubspaceAlignment(d).fit(source.X, target.X)
    acc = _nn_accuracy(sa.transform_source(source.X), source.y,
                       sa.transform(split.X[split.report]),
                       split.y[split.report])
    return _finish("subspace", scenario, None, seed, acc, split, start,
                   details={"d": d})
