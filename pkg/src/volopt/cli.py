"""Command-line benchmark harness.

Subcommands: ``datagen`` (emit a CSV dataset plus manifest), ``run`` (one
experiment), ``sweep`` (a parameter sweep), ``oracle`` (population optimal
volume).  Configs are key=value text files mirroring the experiment fields;
``VOLOPT_SEED`` overrides the base seed.  Exit codes: 0 success, 2 config
validation failure, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from .bench import (
    ConfigError,
    ExperimentConfig,
    SWEEP_PARAMETERS,
    collect_plot_data,
    emit,
    run_experiment,
    sweep,
)
from .distributions import opt_oracle, parse_spec, sample, spec_to_string

__all__ = ["main"]


def _read_config(path: str) -> dict[str, str]:
    cfg: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        cfg[key.strip()] = value.strip()
    return cfg


_INT_KEYS = {"k", "m", "n_train", "n_calib", "n_test", "replications", "base_seed", "n", "seed"}
_FLOAT_KEYS = {"alpha", "rho", "coverage"}


def _coerce(key: str, value: str):
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    if key == "gamma":
        return None if value in ("", "none", "auto") else float(value)
    return value


def _experiment_config(raw: dict[str, str]) -> ExperimentConfig:
    fields = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(raw) - fields
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    missing = {"distribution", "method"} - set(raw)
    if missing:
        raise ConfigError(f"config must set {sorted(missing)}")
    kwargs = {k: _coerce(k, v) for k, v in raw.items()}
    try:
        cfg = ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg


def _apply_seed_env(cfg: ExperimentConfig) -> ExperimentConfig:
    env = os.environ.get("VOLOPT_SEED")
    if env is None:
        return cfg
    try:
        return dataclasses.replace(cfg, base_seed=int(env))
    except ValueError as exc:
        raise ConfigError(f"VOLOPT_SEED must be an integer, got {env!r}") from exc


def _apply_paper_scale(cfg: ExperimentConfig) -> ExperimentConfig:
    return dataclasses.replace(cfg, replications=100, n_test=5000)


def _cmd_datagen(args) -> int:
    raw = _read_config(args.config)
    for key in ("distribution",):
        if key not in raw:
            raise ConfigError(f"datagen config must set {key}")
    spec = parse_spec(raw["distribution"])
    n = int(raw.get("n", "1000"))
    seed = int(os.environ.get("VOLOPT_SEED", raw.get("seed", "0")))
    data = sample(spec, n, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    if isinstance(data, tuple):
        x, y = data
        d = x.shape[1]
        lines.append(",".join([f"x_{i}" for i in range(d)] + ["y"]))
        for i in range(n):
            lines.append(",".join([repr(float(v)) for v in x[i]] + [repr(float(y[i]))]))
    else:
        lines.append("y")
        lines.extend(repr(float(v)) for v in data)
    (out / "dataset.csv").write_text("\n".join(lines) + "\n")
    manifest = {"spec": spec_to_string(spec), "seed": seed, "n": n}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {out / 'dataset.csv'} and {out / 'manifest.json'}")
    return 0


def _cmd_run(args) -> int:
    cfg = _apply_seed_env(_experiment_config(_read_config(args.config)))
    if args.paper_scale:
        cfg = _apply_paper_scale(cfg)
    rows = run_experiment(cfg, workers=args.workers)
    plot = collect_plot_data(cfg)
    paths = emit(rows, args.out, plot_data=plot)
    for row in rows:
        print(
            f"{row.method} on {row.distribution}: avg_volume={row.avg_volume:.4f} "
            f"coverage={row.coverage_pct:.1f}% (infinite sets: {row.n_infinite})"
        )
    print("wrote: " + ", ".join(str(p) for p in paths))
    return 0


def _cmd_sweep(args) -> int:
    cfg = _apply_seed_env(_experiment_config(_read_config(args.config)))
    if args.paper_scale:
        cfg = _apply_paper_scale(cfg)
    values = [v for v in args.values.split(",") if v]
    if not values:
        raise ConfigError("sweep needs at least one value")
    rows = sweep(cfg, args.param, values, workers=args.workers)
    paths = emit(rows, args.out)
    for row in rows:
        knob = {"k": row.k, "rho": row.rho, "alpha": row.alpha, "n": row.n_train + row.n_calib}[args.param]
        print(
            f"{args.param}={knob}: avg_volume={row.avg_volume:.4f} "
            f"coverage={row.coverage_pct:.1f}%"
        )
    print("wrote: " + ", ".join(str(p) for p in paths))
    return 0


def _cmd_oracle(args) -> int:
    if args.config:
        raw = _read_config(args.config)
        dist = raw.get("distribution", args.dist)
        coverage = float(raw.get("coverage", args.coverage if args.coverage else "nan"))
    else:
        dist, coverage = args.dist, args.coverage
    if dist is None or coverage is None or not np.isfinite(coverage):
        raise ConfigError("oracle needs --dist and --coverage (or a config with both)")
    try:
        spec = parse_spec(dist)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    vol = opt_oracle(spec, float(coverage))
    print(f"optimal_volume({dist}, coverage={coverage}) = {vol!r}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "oracle.json").write_text(
            json.dumps({"distribution": dist, "coverage": coverage, "optimal_volume": vol})
            + "\n"
        )
    return 0


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="volopt", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("datagen", help="emit a CSV dataset with a manifest")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="out")
    p.set_defaults(func=_cmd_datagen)

    p = sub.add_parser("run", help="run one experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="out")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--paper-scale", action="store_true")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="sweep one parameter over values")
    p.add_argument("--config", required=True)
    p.add_argument("--param", required=True, choices=SWEEP_PARAMETERS)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out", default="out")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--paper-scale", action="store_true")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("oracle", help="population optimal volume for a distribution")
    p.add_argument("--dist")
    p.add_argument("--coverage", type=float)
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_oracle)
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - surfaced as runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
