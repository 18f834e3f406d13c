"""Experiment configuration and the end-to-end run over a delta grid."""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import analysis, datagen, ingest
from .core import CrossimError, Element, GroupSample, Params, sample_budget, rng_stream
from .learners import (
    EAGER,
    LAZY,
    OVERLAP_SAMPLE,
    OVERLAP_SPACE,
    check_rep_invariants,
    eager_query_count,
    ordered_query_count,
    train_queryopt,
    train_simple,
)
from .oracle import SimulatedOracle, draw_weights

log = logging.getLogger(__name__)

SYNTHETIC = "synthetic"
REAL = "real"
ADVERSARIAL = "adversarial"

DELTA_GRID = (0.1, 0.01, 0.001, 0.0001)
U_VAR_GRID = (0.5, 1.0, 2.0, 4.0)


class ConfigError(CrossimError, ValueError):
    """The experiment configuration is invalid."""


@dataclass
class ExperimentConfig:
    mode: str = SYNTHETIC
    deltas: list[float] = field(default_factory=lambda: [0.1, 0.01])
    epsilon: float = 0.1
    rho: float = 12.0
    overlap: str = OVERLAP_SAMPLE
    u_var: float = 2.0
    dim: int = 20
    components: int = 16
    n_trials: int = 1000
    repeats: int = 1
    seed: int = 0
    seeds: dict[str, int] = field(default_factory=dict)  # per-purpose overrides: weights, data, trials
    n_samples: int | None = None  # overrides the per-group budget
    materialize_limit: int = 10**7
    rare_outer: int = 0  # outer draws for the rare-probability estimate; 0 skips it
    # real mode
    dataset: str | None = None
    schema: str | None = None
    group_column: str | None = None
    group_values: list[str] = field(default_factory=list)
    # adversarial mode
    instance: str = "thm2"
    support_size: int = 10**6
    out: str = "results"
    jobs: int = 1

    def seed_for(self, purpose: str) -> int:
        return int(self.seeds.get(purpose, self.seed))

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> "ExperimentConfig":
        if self.mode not in (SYNTHETIC, REAL, ADVERSARIAL):
            raise ConfigError(f"mode must be synthetic, real or adversarial, got {self.mode!r}")
        if not self.deltas:
            raise ConfigError("delta grid is empty")
        for d in self.deltas:
            if not 0.0 < d < 1.0:
                raise ConfigError(f"delta must lie in (0, 1), got {d}")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not self.rho > 0:
            raise ConfigError(f"rho must be positive, got {self.rho}")
        if self.overlap not in (OVERLAP_SAMPLE, OVERLAP_SPACE):
            raise ConfigError(f"overlap must be {OVERLAP_SAMPLE!r} or {OVERLAP_SPACE!r}")
        if self.n_trials < 1 or self.repeats < 1 or self.jobs < 1:
            raise ConfigError("n_trials, repeats and jobs must be >= 1")
        if self.n_samples is not None and self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        if self.rare_outer < 0:
            raise ConfigError("rare_outer must be >= 0")
        unknown = set(self.seeds) - {"weights", "data", "trials"}
        if unknown:
            raise ConfigError(f"unknown seed purposes {sorted(unknown)}")
        if self.mode == SYNTHETIC:
            if not self.u_var > 0:
                raise ConfigError("u_var must be positive")
            if self.dim < 1 or self.components < 1:
                raise ConfigError("dim and components must be >= 1")
        if self.mode == REAL:
            missing = [k for k in ("dataset", "schema", "group_column") if not getattr(self, k)]
            if missing:
                raise ConfigError(f"real mode needs {missing}")
            if not self.group_values:
                raise ConfigError("real mode needs group_values selecting the first group")
            for k in ("dataset", "schema"):
                if not Path(getattr(self, k)).exists():
                    raise ConfigError(f"{k} file not found: {getattr(self, k)}")
        if self.mode == ADVERSARIAL:
            if self.instance not in ("thm2", "thm4"):
                raise ConfigError("instance must be 'thm2' or 'thm4'")
            if self.instance == "thm2" and self.support_size < 2:
                raise ConfigError("support_size must be >= 2")
            if self.instance == "thm4":
                for d in self.deltas:
                    m = round(1.0 / d)
                    if m < 2 or not math.isclose(m * d, 1.0, rel_tol=1e-9):
                        raise ConfigError(f"thm4 needs integral 1/delta >= 2, got delta={d}")
        return self


def delta_label(delta: float) -> str:
    return f"delta_{delta:g}"


# ---------------------------------------------------------------------------
# Data sources


@dataclass
class Instance:
    samples: list[GroupSample]
    oracle_factory: object  # () -> fresh oracle with its own ledger
    pairs: object  # iterator of (x, y)
    rare_sources: list  # per group: object with draw(n, rng), or None
    extra: dict = field(default_factory=dict)


def _draw_pairs(sources, rng, n_trials):
    X = sources[0].draw(n_trials, rng)
    Y = sources[1].draw(n_trials, rng)
    return ((Element(0, t, X[t]), Element(1, t, Y[t])) for t in range(n_trials))


def _synthetic_instance(cfg: ExperimentConfig, delta: float, repeat: int, n: int) -> Instance:
    spec = draw_weights(cfg.dim, 2, rng_stream(cfg.seed_for("weights"), "weights", repeat))
    mixtures = [
        datagen.make_mixture_group(cfg.dim, cfg.components, cfg.u_var,
                                   rng_stream(cfg.seed_for("data"), "mixture", repeat, g))
        for g in range(2)
    ]
    samples = [
        datagen.sample_from_mixture(mixtures[g], n, g, rng_stream(cfg.seed_for("data"), "samples", repeat, delta, g))
        for g in range(2)
    ]
    pairs = _draw_pairs(mixtures, rng_stream(cfg.seed_for("trials"), "trials", repeat, delta), cfg.n_trials)
    return Instance(samples, lambda: SimulatedOracle(spec), pairs, mixtures,
                    {"oracle_spec": spec.to_json()})


def _adversarial_instance(cfg: ExperimentConfig, delta: float, repeat: int, n: int) -> Instance:
    rng = rng_stream(cfg.seed_for("weights"), "instance", repeat, delta)
    if cfg.instance == "thm2":
        g0, g1, oracle = datagen.thm2_instance(cfg.support_size, 1, rng)
    else:
        g0, g1, oracle = datagen.thm4_instance(delta, 1, rng)
    sources = [g0, g1]
    samples = [GroupSample(g, sources[g].draw(n, rng_stream(cfg.seed_for("data"), "samples", repeat, delta, g)))
               for g in range(2)]

    def factory():
        from .oracle import TableOracle

        return TableOracle(oracle.seed, (oracle.intra_metric(0), oracle.intra_metric(1)))

    pairs = _draw_pairs(sources, rng_stream(cfg.seed_for("trials"), "trials", repeat, delta), cfg.n_trials)
    band = 1.0 - (2 * cfg.epsilon - cfg.epsilon**2)
    return Instance(samples, factory, pairs, sources, {"uniform_guess_error_probability": band})


class SizingError(ConfigError):
    """A real dataset group is too small for the requested samples plus tests."""


def load_real_groups(cfg: ExperimentConfig):
    schema = ingest.load_schema(cfg.schema)
    table = ingest.load_csv(cfg.dataset, schema)
    g1, g2 = ingest.split_groups(table, cfg.group_column, cfg.group_values)
    feature_schema = [c for c in schema if c.name != cfg.group_column]
    matrix, _ = ingest.encode_categoricals(table, feature_schema)
    Z, _, _ = ingest.standardize(matrix)
    return Z[g1], Z[g2], table.dropped


def _real_instance(cfg: ExperimentConfig, delta: float, repeat: int, n: int, groups) -> Instance:
    feats = groups
    for g, F in enumerate(feats):
        if n + cfg.n_trials > len(F):
            raise SizingError(
                f"group {g} has {len(F)} points; {n} samples + {cfg.n_trials} test points do not fit"
            )
    dim = feats[0].shape[1]
    spec = draw_weights(dim, 2, rng_stream(cfg.seed_for("weights"), "weights", repeat))
    samplers = [ingest.PermutationSampler(F, g, rng_stream(cfg.seed_for("data"), "perm", repeat, g))
                for g, F in enumerate(feats)]
    samples = [GroupSample(g, s.take(n)) for g, s in enumerate(samplers)]
    tests = [s.take(cfg.n_trials) for s in samplers]
    pairs = ((Element(0, t, tests[0][t]), Element(1, t, tests[1][t])) for t in range(cfg.n_trials))
    return Instance(samples, lambda: SimulatedOracle(spec), pairs, [None, None],
                    {"oracle_spec": spec.to_json(), "group_sizes": [len(F) for F in feats]})


# ---------------------------------------------------------------------------
# One grid point


def run_point(cfg: ExperimentConfig, delta: float, repeat: int, real_groups=None):
    """Train both learners at one delta and evaluate them. Returns ``(summary, records)``."""
    n = cfg.n_samples if cfg.n_samples is not None else sample_budget(delta)
    if cfg.mode == SYNTHETIC:
        inst = _synthetic_instance(cfg, delta, repeat, n)
    elif cfg.mode == ADVERSARIAL:
        inst = _adversarial_instance(cfg, delta, repeat, n)
    else:
        inst = _real_instance(cfg, delta, repeat, n, real_groups)

    sizes = [len(s) for s in inst.samples]
    eager_count = eager_query_count(sizes)
    simple_mode = EAGER if eager_count <= cfg.materialize_limit else LAZY
    if simple_mode == LAZY:
        log.info("delta=%g: %d simple queries exceed the materialisation limit; using lazy mode", delta, eager_count)

    simple_oracle = inst.oracle_factory()
    simple = train_simple(inst.samples, simple_oracle, simple_mode)
    opt_oracle = inst.oracle_factory()
    params = Params(cfg.epsilon, delta, 2, cfg.rho)
    qopt = train_queryopt(inst.samples, opt_oracle, params, cfg.overlap, cfg.materialize_limit)
    if qopt.mode == LAZY:
        log.info("delta=%g: %d representative pairs exceed the materialisation limit; using lazy mode",
                 delta, qopt.query_count)

    records = analysis.run_trials({"simple": simple, "queryopt": qopt}, simple_oracle, inst.pairs,
                                  cfg.n_trials, cfg.epsilon)
    invariants = check_rep_invariants(qopt)
    cond = analysis.conditional_violations(records, cfg.epsilon, cfg.rho)
    qopt_count = qopt.query_count
    checks = {
        "rep_invariants": invariants,
        "conditional_accuracy": cond,
        "query_dominance": qopt_count <= eager_count,
        # eager: the billed queries are exactly the representative pairs; lazy: never more
        "queryopt_ledger_consistent": (opt_oracle.ledger.count == qopt_count if qopt.mode == EAGER
                                       else opt_oracle.ledger.count <= qopt_count),
    }
    checks["ok"] = bool(
        invariants["ok"]
        and not any(cond["violations"].values())
        and checks["query_dominance"]
        and checks["queryopt_ledger_consistent"]
    )

    rep_sizes = [len(r) for r in qopt.representatives]
    summary = {
        "delta": delta,
        "repeat": repeat,
        "samples_per_group": sizes,
        "queries": {
            "simple": {
                "mode": simple_mode,
                "unordered": eager_count,
                "ordered": ordered_query_count(sizes),
                "materialised": simple_oracle.ledger.count,
            },
            "queryopt": {
                "mode": qopt.mode,
                "unordered": qopt_count,
                "materialised": opt_oracle.ledger.count,
                "ordered": ordered_query_count(rep_sizes),
                "representatives": rep_sizes,
            },
            "decrease_pct": analysis.query_decrease_pct(eager_count, qopt_count),
        },
        "errors": analysis.summarize_errors(records, cfg.epsilon),
        "checks": checks,
        **inst.extra,
    }
    if cfg.rare_outer and cfg.mode != REAL:
        rare = []
        for g, src in enumerate(inst.rare_sources):
            est = analysis.estimate_rare_probability(
                src, qopt.metrics[g], cfg.epsilon, delta, cfg.rare_outer, None,
                rng_stream(cfg.seed_for("trials"), "rare", repeat, delta, g),
            )
            entry = est.to_json()
            entry["expected_rep_bound"] = analysis.expected_rep_bound(delta, est.p_hat, sizes[g])
            entry["representatives"] = rep_sizes[g]
            rare.append(entry)
        summary["rare"] = rare
    return summary, records


# ---------------------------------------------------------------------------
# Artifacts


def _finite(obj):
    """Strict JSON: non-finite floats (open histogram edges) become strings."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_finite(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")


def write_trials_csv(path: Path, records, learners=("simple", "queryopt")) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        head = ["trial", "true_sigma", "proxy_dist_x", "proxy_dist_y"]
        for name in learners:
            head += [f"pred_{name}", f"relerr_pct_{name}", f"abserr_over_eps_{name}"]
        w.writerow(head)
        for t, r in enumerate(records):
            row = [t, repr(r.true_sigma), repr(r.proxy_dist_x), repr(r.proxy_dist_y)]
            for name in learners:
                rel = r.relative_error_pct[name]
                row += [repr(r.predictions[name]), "" if rel is None else repr(rel), repr(r.abs_error_over_eps[name])]
            w.writerow(row)


def write_histograms_csv(path: Path, errors: dict) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["learner", "metric", "bin_lo", "bin_hi", "count"])
        for name, metrics in errors.items():
            for metric in ("relative_error_pct", "abs_error_over_eps"):
                h = metrics[metric]
                for lo, hi, c in zip(h["bins"][:-1], h["bins"][1:], h["counts"]):
                    w.writerow([name, metric, lo, hi, c])


def _point_task(args):
    cfg_dict, delta, repeat, real_groups = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    return run_point(cfg, delta, repeat, real_groups)


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run every (delta, repeat) point, write artifacts, and return the roll-up."""
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    # Output location and parallelism do not affect results; keep them out of the artifacts.
    config_echo = {k: v for k, v in cfg.to_dict().items() if k not in ("out", "jobs")}
    seeds = {p: cfg.seed_for(p) for p in ("weights", "data", "trials")}

    real_groups = None
    if cfg.mode == REAL:
        g1, g2, dropped = load_real_groups(cfg)
        real_groups = (g1, g2)
        log.info("real data: groups of %d and %d rows (%d rows dropped)", len(g1), len(g2), dropped)
        need = max(cfg.n_samples or sample_budget(d) for d in cfg.deltas) + cfg.n_trials
        if need > min(len(g1), len(g2)):
            raise SizingError(
                f"smallest group has {min(len(g1), len(g2))} points but the grid needs {need} "
                f"(samples + {cfg.n_trials} tests)"
            )

    tasks = [(delta, r) for delta in cfg.deltas for r in range(cfg.repeats)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_point_task, [(cfg.to_dict(), d, r, real_groups) for d, r in tasks]))
    else:
        results = [run_point(cfg, d, r, real_groups) for d, r in tasks]

    rollup = {"config": config_echo, "seeds": seeds, "points": [], "by_delta": {}}
    all_ok = True
    for (delta, r), (summary, records) in zip(tasks, results):
        point_dir = out / delta_label(delta)
        if cfg.repeats > 1:
            point_dir = point_dir / f"repeat_{r}"
        point_dir.mkdir(parents=True, exist_ok=True)
        summary = {"config": config_echo, "seeds": seeds, **summary}
        _dump_json(point_dir / "summary.json", summary)
        write_trials_csv(point_dir / "trials.csv", records)
        write_histograms_csv(point_dir / "histograms.csv", summary["errors"])
        all_ok &= summary["checks"]["ok"]
        rollup["points"].append({
            "delta": delta,
            "repeat": r,
            "decrease_pct": summary["queries"]["decrease_pct"],
            "simple_queries": summary["queries"]["simple"]["unordered"],
            "queryopt_queries": summary["queries"]["queryopt"]["unordered"],
            "checks_ok": summary["checks"]["ok"],
        })
    for delta in cfg.deltas:
        dec = np.array([p["decrease_pct"] for p in rollup["points"] if p["delta"] == delta])
        rollup["by_delta"][delta_label(delta)] = {
            "delta": delta,
            "decrease_pct_mean": float(dec.mean()),
            "decrease_pct_min": float(dec.min()),
            "decrease_pct_max": float(dec.max()),
            "decrease_pct_std": float(dec.std()),
        }
    rollup["all_checks_ok"] = bool(all_ok)
    _dump_json(out / "rollup.json", rollup)
    return rollup
