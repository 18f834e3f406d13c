"""Command-line entry point: ``crossim {run,verify,rare,sigma-scan,gen-data}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import BACKEND, analysis, datagen, ingest
from .core import CrossimError, rng_stream, sample_budget
from .experiment import ADVERSARIAL, SYNTHETIC, ConfigError, ExperimentConfig, run_experiment
from .oracle import draw_weights

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_CONFIG = 2

log = logging.getLogger("crossim")

# flag -> ExperimentConfig field
_OVERRIDES = {
    "delta": "deltas",
    "epsilon": "epsilon",
    "rho": "rho",
    "uvar": "u_var",
    "trials": "n_trials",
    "seed": "seed",
    "out": "out",
    "repeats": "repeats",
    "overlap": "overlap",
    "jobs": "jobs",
    "mode": "mode",
    "samples": "n_samples",
    "rare_outer": "rare_outer",
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file with ExperimentConfig fields")
    p.add_argument("--mode", choices=["synthetic", "real", "adversarial"])
    p.add_argument("--delta", type=float, action="append", help="delta grid value (repeatable)")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--uvar", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--repeats", type=int)
    p.add_argument("--overlap", choices=["sample", "space"])
    p.add_argument("--jobs", type=int)
    p.add_argument("--samples", type=int, help="samples per group (default: budget from delta)")
    p.add_argument("--rare-outer", type=int, dest="rare_outer", help="outer draws for p_hat (0 skips)")


def build_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if getattr(args, "config", None) else ExperimentConfig()
    for flag, name in _OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, name, value)
    return cfg.validate()


# ---------------------------------------------------------------------------


def cmd_run(args) -> int:
    cfg = build_config(args)
    rollup = run_experiment(cfg)
    for label, row in rollup["by_delta"].items():
        print(f"{label}: decrease {row['decrease_pct_mean']:.2f}% "
              f"(min {row['decrease_pct_min']:.2f}, max {row['decrease_pct_max']:.2f})")
    print(f"artifacts in {cfg.out}")
    if not rollup["all_checks_ok"]:
        print("invariant check failed; see checks in summary.json", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import all_passed, format_table, run_suites

    try:
        results = run_suites(args.seed or 0, args.suite)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    print(format_table(results))
    return EXIT_OK if all_passed(results) else EXIT_INVARIANT


def cmd_rare(args) -> int:
    cfg = build_config(args)
    if cfg.mode == ADVERSARIAL:
        g0, g1, oracle = (datagen.thm2_instance(cfg.support_size, 1, rng_stream(cfg.seed, "rare", "instance"))
                          if cfg.instance == "thm2"
                          else datagen.thm4_instance(cfg.deltas[0], 1, rng_stream(cfg.seed, "rare", "instance")))
        sources = [g0, g1]
        metrics = [oracle.intra_metric(0), oracle.intra_metric(1)]
    elif cfg.mode == SYNTHETIC:
        spec = draw_weights(cfg.dim, 2, rng_stream(cfg.seed_for("weights"), "weights", 0))
        sources = [datagen.make_mixture_group(cfg.dim, cfg.components, cfg.u_var,
                                              rng_stream(cfg.seed_for("data"), "mixture", 0, g)) for g in range(2)]
        metrics = list(spec.alpha)
    else:
        raise ConfigError("rare supports synthetic and adversarial modes")
    report = {"config": {k: v for k, v in cfg.to_dict().items() if k not in ("out", "jobs")}, "groups": []}
    for delta in cfg.deltas:
        for g, (src, metric) in enumerate(zip(sources, metrics)):
            est = analysis.estimate_rare_probability(
                src, metric, cfg.epsilon, delta, args.outer, args.inner, rng_stream(cfg.seed, "rare", delta, g)
            )
            entry = {"group": g, **est.to_json()}
            report["groups"].append(entry)
            print(f"delta={delta:g} group {g}: p_hat = {est.p_hat:.4f} (M={est.M}, K={est.K})")
    if args.json:
        Path(args.json).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def sigma_scale(n_draws: int, u_var: float, dim: int, k: int, seed: int) -> np.ndarray:
    """Cross similarity of one pair per draw, with fresh weights and mixtures each time."""
    out = np.empty(n_draws)
    for t in range(n_draws):
        rng = rng_stream(seed, "sigma-scan", t)
        spec = draw_weights(dim, 2, rng)
        mix = [datagen.make_mixture_group(dim, k, u_var, rng) for _ in range(2)]
        x, y = mix[0].draw(1, rng)[0], mix[1].draw(1, rng)[0]
        out[t] = spec.beta_for(0, 1).distance(x, y)
    return out


def cmd_sigma_scan(args) -> int:
    s = sigma_scale(args.draws, args.uvar, args.dim, args.components, args.seed or 0)
    summary = {
        "draws": int(s.size),
        "u_var": args.uvar,
        "min": float(s.min()),
        "median": float(np.median(s)),
        "max": float(s.max()),
        "fraction_in_7_8": float(np.mean((s >= 7) & (s < 8))),
        "fraction_gt_3": float(np.mean(s > 3)),
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_gen_data(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed or 0
    n = args.samples if args.samples is not None else sample_budget(args.delta)
    spec = draw_weights(args.dim, 2, rng_stream(seed, "weights", 0))
    (out / "oracle.json").write_text(json.dumps(spec.to_json(), indent=2) + "\n")
    for g in range(2):
        mix = datagen.make_mixture_group(args.dim, args.components, args.uvar, rng_stream(seed, "mixture", 0, g))
        sample = datagen.sample_from_mixture(mix, n, g, rng_stream(seed, "samples", 0, args.delta, g))
        (out / f"mixture_{g}.json").write_text(json.dumps(mix.to_json(), indent=2) + "\n")
        if args.format == "bin":
            ingest.write_matrix_bin(out / f"group_{g}.bin", sample.features)
        else:
            ingest.write_matrix_csv(out / f"group_{g}.csv", sample.features,
                                    header=[f"f{i}" for i in range(args.dim)])
    print(f"wrote {n} samples per group to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crossim", description="Learn cross-group similarity from oracle queries.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train both learners over a delta grid and write artifacts")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="run the property suites")
    p.add_argument("--seed", type=int)
    p.add_argument("--suite", action="append", help="run only this suite (repeatable)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("rare", help="estimate the probability of drawing a rare element")
    _add_config_flags(p)
    p.add_argument("--outer", type=int, default=1000, help="outer draws M")
    p.add_argument("--inner", type=int, default=None, help="inner draws K (default ceil(50/delta))")
    p.add_argument("--json", help="write the report to this file")
    p.set_defaults(func=cmd_rare)

    p = sub.add_parser("sigma-scan", help="distribution of cross similarities on synthetic data")
    p.add_argument("--draws", type=int, default=1000)
    p.add_argument("--uvar", type=float, default=2.0)
    p.add_argument("--dim", type=int, default=20)
    p.add_argument("--components", type=int, default=16)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_sigma_scan)

    p = sub.add_parser("gen-data", help="write synthetic group samples and the oracle weights")
    p.add_argument("--out", required=True)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--samples", type=int)
    p.add_argument("--uvar", type=float, default=2.0)
    p.add_argument("--dim", type=int, default=20)
    p.add_argument("--components", type=int, default=16)
    p.add_argument("--format", choices=["csv", "bin"], default="csv")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gen_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors exit with 2 already
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    log.debug("kernel backend: %s", BACKEND)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CrossimError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
