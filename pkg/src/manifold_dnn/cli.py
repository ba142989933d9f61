"""Config-driven command line: run experiments, validate configs, generate
datasets, and fit empirical convergence rates.

Exit codes: 0 success, 2 configuration error, 3 runtime/numeric error,
4 geometry or coverage error.

Result files in the output directory:

* ``metrics.json`` / ``metrics.csv`` - per-split metric values with mean,
  SD, and SE per family (CSV columns: family, split, metric, value).
* ``provenance.json`` - the normalized config, its fingerprint, and the
  package version.
* ``rate.csv`` - n, mean risk, SD rows for rate-check runs.
* ``metrics.png`` / ``training.png`` / ``rate.png`` - figures rendered
  alongside the delimited output unless ``figures: false``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .config import (
    ExperimentConfig,
    build_dataset,
    load_config,
    model_specs,
    train_config,
)
from .errors import (
    ConfigError,
    GeometryError,
    ManifoldDNNError,
    SpecError,
)
from .experiments import rate_experiment, repeated_splits
from .synthdata import save_dataset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_GEOMETRY = 4


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, SpecError)):
        return EXIT_CONFIG
    if isinstance(exc, GeometryError):
        return EXIT_GEOMETRY
    return EXIT_RUNTIME


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="manifold-dnn",
        description="Manifold neural network experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_run_flags=True):
        p.add_argument("--config", required=True, help="config file (YAML or JSON)")
        if with_run_flags:
            p.add_argument("--seed", type=int, default=None,
                           help="override the config seed")
            p.add_argument("--out", default=None, help="output directory")
            p.add_argument("--jobs", type=int, default=None,
                           help="parallel split workers")
            p.add_argument("--quiet", action="store_true",
                           help="suppress the per-family summary lines")

    add_common(sub.add_parser("run", help="run the configured experiment"))
    add_common(sub.add_parser("validate", help="validate a config file"),
               with_run_flags=False)
    add_common(sub.add_parser("generate", help="generate the dataset only"))
    add_common(sub.add_parser("rate-check",
                              help="run the convergence-rate experiment"))
    return parser


def _load(args) -> ExperimentConfig:
    config, violations = load_config(args.config)
    if violations:
        for v in violations:
            print(f"config violation: {v}", file=sys.stderr)
        raise ConfigError(f"{len(violations)} violation(s) in {args.config}")
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "out", None) is not None:
        config.out_dir = args.out
    if getattr(args, "jobs", None) is not None:
        config.jobs = args.jobs
    return config


def _out_dir(config: ExperimentConfig) -> Path:
    out = Path(config.out_dir or "results")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_provenance(config: ExperimentConfig, out: Path, command: str) -> None:
    doc = {
        "command": command,
        "config": config.canonical(),
        "fingerprint": config.fingerprint(),
        "package_version": __version__,
    }
    (out / "provenance.json").write_text(
        json.dumps(doc, indent=1, sort_keys=True), encoding="utf-8")


def _write_metrics(reports: dict, out: Path, fingerprint: str,
                   extra: dict | None = None) -> None:
    doc = {
        "fingerprint": fingerprint,
        "families": {
            fam: {
                "metric": rep.metric,
                "per_split": rep.per_split,
                "mean": rep.mean,
                "sd": rep.sd,
                "se": rep.se,
                "n_splits": rep.n_splits,
                "wall_clock_s": rep.wall_clock_s,
            }
            for fam, rep in reports.items()
        },
    }
    if extra:
        doc.update(extra)
    (out / "metrics.json").write_text(json.dumps(doc, indent=1, sort_keys=True),
                                      encoding="utf-8")
    lines = ["family,split,metric,value"]
    for fam, rep in reports.items():
        for i, value in enumerate(rep.per_split):
            lines.append(f"{fam},{i},{rep.metric},{format(value, '.12g')}")
    (out / "metrics.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _cmd_validate(args) -> int:
    config, violations = load_config(args.config)
    if violations:
        for v in violations:
            print(f"violation: {v}")
        return EXIT_CONFIG
    print(f"ok: {args.config} is a valid {config.kind} config")
    return EXIT_OK


def _cmd_generate(args) -> int:
    config = _load(args)
    if config.kind == "rate-check":
        raise ConfigError("rate-check configs do not describe a dataset")
    out = _out_dir(config)
    dataset = build_dataset(config)
    csv_path, prov_path = save_dataset(dataset, out / "dataset")
    _write_provenance(config, out, "generate")
    if not getattr(args, "quiet", False):
        print(f"wrote {csv_path} ({len(dataset)} samples, {dataset.manifold})")
    return EXIT_OK


def _run_rate(config: ExperimentConfig, out: Path, quiet: bool) -> int:
    data = config.data
    spec = model_specs(config)[0]
    cfg = train_config(config, spec)
    rate = rate_experiment(
        f0=data["f0"], n_grid=data["n_grid"], spec=spec,
        replications=data["replications"], sigma=data["sigma"],
        seed=config.seed, train_config=cfg, test_size=data["test_size"],
        sphere_dim=data["sphere_dim"])
    lines = ["n,mean_risk,sd"]
    for n, mean, sd in zip(rate.n_grid, rate.mean_risks, rate.sd_risks):
        lines.append(f"{n},{format(mean, '.12g')},{format(sd, '.12g')}")
    (out / "rate.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    doc = {
        "fingerprint": config.fingerprint(),
        "family": spec.family,
        "n_grid": rate.n_grid,
        "mean_risks": rate.mean_risks,
        "sd_risks": rate.sd_risks,
        "per_rep": rate.per_rep,
        "slope": rate.slope,
        "degenerate": rate.degenerate,
    }
    (out / "metrics.json").write_text(json.dumps(doc, indent=1, sort_keys=True),
                                      encoding="utf-8")
    _write_provenance(config, out, "rate-check")
    if config.figures:
        from .report import render_rate_figure

        render_rate_figure(rate, out / "rate.png")
    if not quiet:
        slope = "degenerate" if rate.slope is None else f"{rate.slope:.3f}"
        risks = ", ".join(format(r, ".3g") for r in rate.mean_risks)
        print(f"{spec.family} slope={slope} risks=[{risks}] "
              f"({data['replications']} replications)")
    return EXIT_OK


def _cmd_run(args, force_rate: bool = False) -> int:
    config = _load(args)
    if force_rate and config.kind != "rate-check":
        raise ConfigError("the rate-check command needs a rate-check config")
    out = _out_dir(config)
    if config.kind == "rate-check":
        return _run_rate(config, out, args.quiet)
    dataset = build_dataset(config)
    specs = model_specs(config)
    cfg = train_config(config, specs[0])
    reports, histories = repeated_splits(
        dataset, specs, config.splits, config.seed, cfg, jobs=config.jobs,
        fingerprint=config.fingerprint())
    _write_metrics(reports, out, config.fingerprint())
    _write_provenance(config, out, "run")
    if config.figures:
        from .report import render_history_figure, render_metrics_figure

        render_metrics_figure(reports, out / "metrics.png")
        render_history_figure(histories, out / "training.png")
    if not args.quiet:
        for fam, rep in reports.items():
            print(f"{fam} {100 * rep.mean:.2f}±{100 * rep.sd:.2f} "
                  f"({rep.n_splits} splits)"
                  if rep.metric == "accuracy" else
                  f"{fam} {rep.mean:.4g}±{rep.sd:.4g} ({rep.n_splits} splits)")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "validate":
            return _cmd_validate(args)
        if args.command == "generate":
            return _cmd_generate(args)
        if args.command == "rate-check":
            return _cmd_run(args, force_rate=True)
        return _cmd_run(args)
    except ManifoldDNNError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    except Exception as exc:  # noqa: BLE001 - map to a diagnostic + exit 3
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
