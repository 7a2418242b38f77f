"""Experiment orchestration: scenario configs, method runs and CSV records."""

from __future__ import annotations

import configparser
import csv
import hashlib
import logging
import platform
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy
import sklearn

from . import dataio
from .evalkit import (
    EvalReport,
    ModelCache,
    SdaeSettings,
    TargetSplit,
    concat_adapt,
    conceptual_adapt,
    joint_baseline,
    no_adapt_baseline,
    subspace_alignment_baseline,
)
from .exceptions import ConfigError, DataError
from .gasearch import GaConfig

log = logging.getLogger(__name__)

METHODS = ("no_adapt", "joint", "separate", "concat", "subspace")
CSV_FIELDS = ("scenario", "method", "depth", "seed", "accuracy",
              "adjustment_degree", "wall_seconds", "config_hash")
TRANSFORMS = {"rot90": 90, "rot180": 180, "rot270": 270}
DEPTH_FREE = ("no_adapt", "subspace")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    source: str
    target: str
    depth: int = 5
    methods: tuple = METHODS
    seeds: tuple = (0,)
    n_train_per_class: int = 50
    n_eval_per_class: int = 20
    search_fraction: float = 0.5
    transductive: bool = False
    subspace_dim: int | None = None
    output: str | None = None
    cache_dir: str | None = None
    sdae: SdaeSettings = field(default_factory=SdaeSettings)
    ga: GaConfig = field(default_factory=GaConfig)

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("at least one method is required")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigError(f"unknown methods: {sorted(unknown)}")
        if self.depth < 1:
            raise ConfigError("depth must be >= 1")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if not 0 < self.search_fraction < 1:
            raise ConfigError("search_fraction must lie in (0, 1)")

    def to_ini(self):
        """Canonical config text; its digest is the run's config hash."""
        ga = self.ga
        s = self.sdae
        sections = {
            "scenario": {
                "name": self.name, "source": self.source,
                "target": self.target, "depth": self.depth,
                "methods": ",".join(self.methods),
                "seeds": ",".join(map(str, self.seeds)),
                "search_fraction": self.search_fraction,
                "transductive": str(self.transductive).lower(),
                "subspace_dim": "" if self.subspace_dim is None
                else self.subspace_dim,
            },
            "split": {"n_train_per_class": self.n_train_per_class,
                      "n_eval_per_class": self.n_eval_per_class},
            "autoencoder": {
                "grid_search": str(s.grid_search).lower(),
                "learning_rate": s.learning_rate, "corruption": s.corruption,
                "tau": s.tau, "max_iters": s.max_iters,
                "patience": s.patience, "size_fraction": str(s.size_fraction),
            },
            "ga": {
                "population_size": ga.population_size,
                "elite_fraction": ga.elite_fraction,
                "patience": ga.patience,
                "mutation_rate": "" if ga.mutation_rate is None
                else ga.mutation_rate,
                "max_generations": ga.max_generations,
            },
        }
        lines = []
        for section, values in sections.items():
            lines.append(f"[{section}]")
            lines.extend(f"{k} = {v}" for k, v in values.items())
            lines.append("")
        return "\n".join(lines)

    def config_hash(self):
        return hashlib.sha256(self.to_ini().encode()).hexdigest()[:12]


def _split_list(text):
    return tuple(t.strip() for t in text.split(",") if t.strip())


def parse_config(text):
    """Parse INI-style ``key = value`` text with section headers."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    if not parser.has_section("scenario"):
        raise ConfigError("missing [scenario] section")
    sc = parser["scenario"]
    sp = parser["split"] if parser.has_section("split") else {}
    ae = parser["autoencoder"] if parser.has_section("autoencoder") else {}
    ga = parser["ga"] if parser.has_section("ga") else {}
    try:
        sdae = SdaeSettings(
            learning_rate=float(ae.get("learning_rate", 1.0)),
            corruption=float(ae.get("corruption", 0.3)),
            tau=int(ae.get("tau", 20)),
            max_iters=int(ae.get("max_iters", 500)),
            patience=int(ae.get("patience", 20)),
            size_fraction=Fraction(ae.get("size_fraction", "2/3")),
            grid_search=str(ae.get("grid_search", "false")).lower()
            in ("1", "true", "yes"),
        )
        rate = ga.get("mutation_rate", "")
        ga_cfg = GaConfig(
            population_size=int(ga.get("population_size", 100)),
            elite_fraction=float(ga.get("elite_fraction", 0.2)),
            patience=int(ga.get("patience", 200)),
            mutation_rate=float(rate) if str(rate).strip() else None,
            max_generations=int(ga.get("max_generations", 2000)),
        )
        dim = sc.get("subspace_dim", "")
        return ScenarioConfig(
            name=sc.get("name", "scenario"),
            source=sc["source"],
            target=sc["target"],
            depth=int(sc.get("depth", 5)),
            methods=_split_list(sc.get("methods", ",".join(METHODS))),
            seeds=tuple(int(s) for s in _split_list(sc.get("seeds", "0"))),
            n_train_per_class=int(sp.get("n_train_per_class", 50)),
            n_eval_per_class=int(sp.get("n_eval_per_class", 20)),
            search_fraction=float(sc.get("search_fraction", 0.5)),
            transductive=sc.get("transductive", "false").lower()
            in ("1", "true", "yes"),
            subspace_dim=int(dim) if dim.strip() else None,
            output=sc.get("output") or None,
            cache_dir=sc.get("cache_dir") or None,
            sdae=sdae,
            ga=ga_cfg,
        )
    except KeyError as exc:
        raise ConfigError(f"missing key {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


# --------------------------------------------------------------------------
# datasets


def resolve_domain(spec, n_per_class=70, seed=0):
    """Load a domain from a spec such as ``mnist`` or ``digits|rot90``.

    Base names: ``mnist`` (bundled 5k subset), ``digits`` (bundled optical
    digits), ``usps:PATH``, ``idx:IMAGES,LABELS``, ``npz:PATH`` and
    ``braille[:NOISE_STD]``. Transforms after ``|``: ``rot90``, ``rot180``,
    ``rot270``.
    """
    base, *transforms = [part.strip() for part in spec.split("|")]
    name, _, arg = base.partition(":")
    try:
        if name == "mnist":
            ds = dataio.load_mnist_subset()
        elif name == "digits":
            ds = dataio.load_optical_digits()
        elif name == "usps":
            ds = dataio.load_usps_text(arg)
        elif name == "idx":
            images, labels = arg.split(",")
            ds = dataio.load_idx(images, labels)
        elif name == "npz":
            ds = dataio.load_dataset(arg)
        elif name == "braille":
            ds = dataio.synth_braille(n_per_class, float(arg or 0.1), seed)
        else:
            raise ConfigError(f"unknown domain {name!r}")
    except OSError as exc:
        raise DataError(f"cannot load domain {spec!r}: {exc}") from exc
    for t in transforms:
        if t not in TRANSFORMS:
            raise ConfigError(f"unknown transform {t!r}")
        ds = dataio.rotate_dataset(ds, TRANSFORMS[t])
    return dataio.Dataset(ds.X, ds.y, ds.domain_tag,
                          {**ds.manifest, "spec": spec})


def prepare_domains(cfg, seed):
    """Balanced (source_train, target_train, target_eval) for one seed."""
    need = cfg.n_train_per_class + cfg.n_eval_per_class
    split = dataio.SplitSpec(cfg.n_train_per_class, cfg.n_eval_per_class, seed)
    source = resolve_domain(cfg.source, need, seed)
    target = resolve_domain(cfg.target, need, seed + 1)
    s_train, _ = dataio.subsample_balanced(source, split)
    t_train, t_eval = dataio.subsample_balanced(target, split)
    return s_train, t_train, t_eval


# --------------------------------------------------------------------------
# records


@dataclass
class RunRecord:
    reports: list = field(default_factory=list)
    environment: dict = field(default_factory=dict)
    elapsed: float = 0.0
    failures: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.failures

    def rows(self):
        for r in self.reports:
            yield {
                "scenario": r.scenario,
                "method": r.method,
                "depth": "" if r.depth is None else r.depth,
                "seed": r.seed,
                "accuracy": repr(float(r.accuracy)),
                "adjustment_degree": "" if r.adjustment_degree is None
                else repr(float(r.adjustment_degree)),
                "wall_seconds": f"{r.wall_seconds:.3f}",
                "config_hash": r.config_hash,
            }

    def write_csv(self, path, append=True):
        path = Path(path)
        new = not (append and path.exists() and path.stat().st_size > 0)
        with open(path, "a" if append else "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=CSV_FIELDS)
            if new:
                w.writeheader()
            w.writerows(self.rows())

    def by_method(self, depth=None):
        out = {}
        for r in self.reports:
            if depth is None or r.depth == depth:
                out.setdefault(r.method, []).append(r)
        return out

    def median_accuracy(self, method, depth=None):
        accs = [r.accuracy for r in self.by_method(depth).get(method, [])]
        return float(np.median(accs)) if accs else float("nan")

    def median_adjustment(self, method, depth=None):
        vals = [r.adjustment_degree for r in self.by_method(depth).get(method, [])
                if r.adjustment_degree is not None]
        return float(np.median(vals)) if vals else float("nan")


def read_csv(path):
    """Parse a results CSV back into a :class:`RunRecord`."""
    reports = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            reports.append(EvalReport(
                method=row["method"],
                scenario=row["scenario"],
                depth=int(row["depth"]) if row["depth"] else None,
                seed=int(row["seed"]),
                accuracy=float(row["accuracy"]),
                adjustment_degree=float(row["adjustment_degree"])
                if row["adjustment_degree"] else None,
                config_hash=row["config_hash"],
                wall_seconds=float(row["wall_seconds"]),
            ))
    return RunRecord(reports)


def environment_fingerprint():
    return {
        "python": platform.python_version(),
        "platform": platform.platform(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "sklearn": sklearn.__version__,
    }


# --------------------------------------------------------------------------
# runs


def run_method(method, cfg, source, target, target_eval, seed, cache,
               depth=None):
    depth = cfg.depth if depth is None else depth
    split = TargetSplit.make(target, target_eval, cfg.search_fraction, seed,
                             cfg.transductive)
    common = dict(split=split, seed=seed, scenario=cfg.name)
    ga = replace(cfg.ga, seed=seed)
    if method == "no_adapt":
        return no_adapt_baseline(source, target, **common)
    if method == "subspace":
        return subspace_alignment_baseline(source, target, cfg.subspace_dim,
                                           **common)
    learned = dict(settings=cfg.sdae, cache=cache, **common)
    if method == "joint":
        return joint_baseline(source, target, depth, **learned)
    if method == "separate":
        return conceptual_adapt(source, target, depth, ga, **learned)
    if method == "concat":
        return concat_adapt(source, target, depth, ga, **learned)
    raise ConfigError(f"unknown method {method!r}")


def run_scenario(cfg, cache=None, depths=None, write=True):
    """Run every requested method for every seed (and depth).

    Methods that do not use a stack run once per seed. Method failures are
    logged and recorded without stopping the others.
    Rows are appended to ``cfg.output`` when set.
    """
    start = time.perf_counter()
    cache = cache if cache is not None else ModelCache(cfg.cache_dir)
    depths = depths or [cfg.depth]
    record = RunRecord(environment=environment_fingerprint())
    digest = cfg.config_hash()
    for seed in cfg.seeds:
        source, target, target_eval = prepare_domains(cfg, seed)
        for i, depth in enumerate(depths):
            for method in cfg.methods:
                if i > 0 and method in DEPTH_FREE:
                    continue
                try:
                    report = run_method(method, cfg, source, target,
                                        target_eval, seed, cache, depth)
                except Exception as exc:  # surfaced per method, run continues
                    log.exception("method %s (seed %d, depth %d) failed",
                                  method, seed, depth)
                    record.failures.append((method, seed, depth, repr(exc)))
                    continue
                report.config_hash = digest
                record.reports.append(report)
                log.info("%s seed=%d depth=%s accuracy=%.4f", method, seed,
                         report.depth, report.accuracy)
    record.elapsed = time.perf_counter() - start
    if write and cfg.output:
        record.write_csv(cfg.output)
    return record


def depth_sweep(cfg, depths, cache=None, methods=("separate", "joint")):
    """Separate-and-adjust (and joint) accuracy and adjustment per depth."""
    if not depths or min(depths) < 1:
        raise ConfigError("depths must be a non-empty list of values >= 1")
    cfg = replace(cfg, methods=tuple(methods))
    return run_scenario(cfg, cache=cache, depths=list(depths))


def method_comparison(cfg, cache=None):
    missing = {"joint", "separate", "concat"} - set(cfg.methods)
    if missing:
        raise ConfigError(f"comparison needs methods {sorted(missing)}")
    return run_scenario(cfg, cache=cache)
