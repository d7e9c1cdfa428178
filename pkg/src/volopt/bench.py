"""Benchmark harness: declarative experiment configs, seeded replications,
parallel execution, and delimited result/plot-data emission.

Every replication r runs with seed ``base_seed + r`` and is a pure function
of the config, so aggregates are independent of worker count and schedule.
Whole-line (infinite-volume) prediction sets are counted separately and
never averaged into volumes.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baselines import KdeConfig, run_cp_kde, run_cqr, run_dcp_qr, run_dcp_qr_star
from .cdf import ConditionalCdf, KnnCdfConfig, empirical_cdf, knn_cdf, oracle_cdf
from .conformal import predict_unsupervised
from .distributions import parse_spec, sample
from .supervised import (
    GridTableCdf,
    load_quantile_grid_csv,
    run_dcp_dp,
    run_dcp_dp_from_grids,
)
from .intervals import WholeLine

__all__ = [
    "ExperimentConfig",
    "ResultRow",
    "ConfigError",
    "run_experiment",
    "sweep",
    "emit",
    "collect_plot_data",
    "RESULT_COLUMNS",
]

UNSUPERVISED_METHODS = ("cp_dp", "cp_kde")
SUPERVISED_METHODS = ("dcp_dp", "cqr", "dcp_qr", "dcp_qr_star")
METHODS = UNSUPERVISED_METHODS + SUPERVISED_METHODS

RESULT_COLUMNS = [
    "method",
    "distribution",
    "alpha",
    "k",
    "m",
    "gamma",
    "delta",
    "rho",
    "cdf",
    "n_train",
    "n_calib",
    "n_test",
    "replications",
    "base_seed",
    "avg_volume",
    "coverage_pct",
    "se_volume",
    "se_coverage",
    "wall_ms",
    "n_infinite",
]


class ConfigError(ValueError):
    """Invalid experiment configuration (maps to CLI exit code 2)."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Full declarative description of a benchmark run."""

    distribution: str
    method: str
    alpha: float = 0.2
    k: int = 3
    m: int = 50
    gamma: float | None = None
    delta: str = "auto"
    rho: float = 0.5
    cdf: str = "oracle"
    n_train: int = 300
    n_calib: int = 300
    n_test: int = 1000
    replications: int = 20
    base_seed: int = 0

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {METHODS}")
        try:
            spec = parse_spec(self.distribution)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        supervised_spec = self.distribution.startswith(("romano", "izbicki"))
        if self.method in SUPERVISED_METHODS and not supervised_spec:
            raise ConfigError(
                f"method {self.method} needs a supervised distribution, got {self.distribution}"
            )
        if self.method in UNSUPERVISED_METHODS and supervised_spec:
            raise ConfigError(
                f"method {self.method} needs a label-only distribution, got {self.distribution}"
            )
        if not (0.0 < self.alpha < 1.0):
            raise ConfigError("alpha must lie in (0, 1)")
        if self.method == "cp_kde" and self.rho <= 0.0:
            raise ConfigError("cp_kde requires a positive bandwidth rho")
        if self.method in ("cp_dp", "dcp_dp") and self.k < 1:
            raise ConfigError("k must be >= 1")
        if min(self.n_train, self.n_calib, self.n_test, self.replications) < 1:
            raise ConfigError("sample sizes and replications must be >= 1")
        self._parse_cdf()
        if self.cdf.startswith("file:") and self.replications != 1:
            raise ConfigError("a file-backed quantile grid supports exactly 1 replication")
        _ = spec

    def _parse_cdf(self):
        if self.cdf == "oracle" or self.cdf == "empirical":
            return self.cdf, None
        if self.cdf.startswith("knn:"):
            try:
                k_nn = int(self.cdf.split(":", 1)[1])
            except ValueError as exc:
                raise ConfigError(f"bad knn provider spec {self.cdf!r}") from exc
            if k_nn < 1:
                raise ConfigError("knn neighbor count must be >= 1")
            return "knn", k_nn
        if self.cdf.startswith("file:"):
            return "file", self.cdf.split(":", 1)[1]
        raise ConfigError(f"unknown cdf provider {self.cdf!r}")

    @property
    def delta_value(self) -> str | float:
        return "auto" if self.delta == "auto" else float(self.delta)


def _make_cdf(cfg: ExperimentConfig, x_train: np.ndarray, y_train: np.ndarray) -> ConditionalCdf:
    kind, arg = cfg._parse_cdf()
    if kind == "oracle":
        return oracle_cdf(parse_spec(cfg.distribution))
    if kind == "empirical":
        return empirical_cdf(y_train)
    if kind == "knn":
        return knn_cdf(x_train, y_train, KnnCdfConfig(arg))
    raise ConfigError("file-backed grids are handled outside the provider path")


def _run_replication(cfg: ExperimentConfig, rep: int) -> dict:
    spec = parse_spec(cfg.distribution)
    seed = cfg.base_seed + rep
    t0 = time.perf_counter()
    if cfg.method in UNSUPERVISED_METHODS:
        data = sample(spec, cfg.n_train + cfg.n_calib, seed, stream=(0,))
        test = sample(spec, cfg.n_test, seed, stream=(3,))
        if cfg.method == "cp_dp":
            ps = predict_unsupervised(
                data, cfg.alpha, cfg.k, m=cfg.m, gamma=cfg.gamma,
                delta=cfg.delta_value, seed=seed,
            )
        else:
            ps = run_cp_kde(data, cfg.alpha, KdeConfig(rho=cfg.rho), seed=seed)
        covered = float(np.mean(ps.contains_many(test)))
        infinite = isinstance(ps.set, WholeLine)
        vol = float("nan") if infinite else ps.volume
        return {
            "rep": rep,
            "volume": vol,
            "coverage": covered,
            "n_infinite": int(infinite),
            "wall_ms": 1000.0 * (time.perf_counter() - t0),
        }

    x_train, y_train = sample(spec, cfg.n_train, seed, stream=(1,))
    x_calib, y_calib = sample(spec, cfg.n_calib, seed, stream=(2,))
    x_test, y_test = sample(spec, cfg.n_test, seed, stream=(3,))
    kind, arg = cfg._parse_cdf()
    if kind == "file":
        ids, grids = load_quantile_grid_csv(arg)
        if len(ids) != cfg.n_calib + cfg.n_test:
            raise ConfigError(
                f"grid file holds {len(ids)} points, need n_calib + n_test = "
                f"{cfg.n_calib + cfg.n_test}"
            )
        if grids.shape[1] != cfg.m + 1:
            raise ConfigError(f"grid file ladder L={grids.shape[1] - 1} must equal m={cfg.m}")
        if cfg.method == "dcp_dp":
            preds = run_dcp_dp_from_grids(
                grids[: cfg.n_calib], y_calib, grids[cfg.n_calib:], x_test,
                cfg.alpha, cfg.k, m=cfg.m, gamma=cfg.gamma, delta=cfg.delta_value,
            )
        else:
            # Baselines consume the same ladders through the row-index adapter.
            table = GridTableCdf(grids)
            idx_c = np.arange(cfg.n_calib, dtype=float)[:, None]
            idx_t = np.arange(cfg.n_calib, cfg.n_calib + cfg.n_test, dtype=float)[:, None]
            if cfg.method == "cqr":
                preds = run_cqr(None, (idx_c, y_calib), idx_t, table, cfg.alpha)
            elif cfg.method == "dcp_qr":
                preds = run_dcp_qr(None, (idx_c, y_calib), idx_t, table, cfg.alpha)
            else:
                preds = run_dcp_qr_star(
                    None, (idx_c, y_calib), idx_t, table, cfg.alpha, L=cfg.m
                )
    else:
        cdf = _make_cdf(cfg, x_train, y_train)
        if cfg.method == "dcp_dp":
            preds = run_dcp_dp(
                (x_train, y_train), (x_calib, y_calib), x_test, cdf,
                cfg.alpha, cfg.k, m=cfg.m, gamma=cfg.gamma, delta=cfg.delta_value,
            )
        elif cfg.method == "cqr":
            preds = run_cqr((x_train, y_train), (x_calib, y_calib), x_test, cdf, cfg.alpha)
        elif cfg.method == "dcp_qr":
            preds = run_dcp_qr((x_train, y_train), (x_calib, y_calib), x_test, cdf, cfg.alpha)
        else:
            preds = run_dcp_qr_star(
                (x_train, y_train), (x_calib, y_calib), x_test, cdf, cfg.alpha, L=cfg.m
            )
    vols = np.array([p.volume for p in preds])
    finite = np.isfinite(vols)
    covered = float(np.mean([p.contains(y) for p, y in zip(preds, y_test)]))
    return {
        "rep": rep,
        "volume": float(np.mean(vols[finite])) if finite.any() else float("nan"),
        "coverage": covered,
        "n_infinite": int(np.sum(~finite)),
        "wall_ms": 1000.0 * (time.perf_counter() - t0),
    }


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> list[ResultRow]:
    """Execute all replications of a config and aggregate one result row.

    Any replication failure aborts the run with the failing seed named.
    """
    cfg.validate()
    reps = list(range(cfg.replications))
    if workers > 1 and len(reps) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_replication, [cfg] * len(reps), reps))
    else:
        results = []
        for r in reps:
            try:
                results.append(_run_replication(cfg, r))
            except Exception as exc:  # noqa: BLE001 - reported with the seed
                raise RuntimeError(
                    f"replication with seed {cfg.base_seed + r} failed: {exc}"
                ) from exc
    results.sort(key=lambda d: d["rep"])
    vols = np.array([d["volume"] for d in results])
    covs = np.array([d["coverage"] for d in results])
    finite = np.isfinite(vols)
    nrep = len(results)
    avg_vol = float(np.mean(vols[finite])) if finite.any() else float("inf")
    se_vol = (
        float(np.std(vols[finite], ddof=1) / np.sqrt(finite.sum()))
        if finite.sum() > 1
        else 0.0
    )
    row = ResultRow(
        method=cfg.method,
        distribution=cfg.distribution,
        alpha=cfg.alpha,
        k=cfg.k,
        m=cfg.m,
        gamma=cfg.gamma,
        delta=str(cfg.delta),
        rho=cfg.rho,
        cdf=cfg.cdf,
        n_train=cfg.n_train,
        n_calib=cfg.n_calib,
        n_test=cfg.n_test,
        replications=cfg.replications,
        base_seed=cfg.base_seed,
        avg_volume=avg_vol,
        coverage_pct=float(np.mean(covs) * 100.0),
        se_volume=se_vol,
        se_coverage=float(np.std(covs, ddof=1) / np.sqrt(nrep) * 100.0) if nrep > 1 else 0.0,
        wall_ms=float(np.sum([d["wall_ms"] for d in results])),
        n_infinite=int(np.sum([d["n_infinite"] for d in results])),
    )
    return [row]


@dataclass(frozen=True)
class ResultRow:
    """One aggregated line of benchmark output."""

    method: str
    distribution: str
    alpha: float
    k: int
    m: int
    gamma: float | None
    delta: str
    rho: float
    cdf: str
    n_train: int
    n_calib: int
    n_test: int
    replications: int
    base_seed: int
    avg_volume: float
    coverage_pct: float
    se_volume: float
    se_coverage: float
    wall_ms: float
    n_infinite: int


SWEEP_PARAMETERS = ("k", "rho", "alpha", "n")


def sweep(
    cfg: ExperimentConfig, parameter: str, values: list, workers: int = 1
) -> list[ResultRow]:
    """One run per parameter value, sharing the base seed so curves compare."""
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMETERS}")
    rows: list[ResultRow] = []
    for v in values:
        if parameter == "n":
            n = int(v)
            if cfg.method in UNSUPERVISED_METHODS:
                sub = dataclasses.replace(cfg, n_train=(n + 1) // 2, n_calib=n // 2)
            else:
                sub = dataclasses.replace(cfg, n_train=n)
        elif parameter == "k":
            sub = dataclasses.replace(cfg, k=int(v))
        elif parameter == "rho":
            sub = dataclasses.replace(cfg, rho=float(v))
        else:
            sub = dataclasses.replace(cfg, alpha=float(v))
        rows.extend(run_experiment(sub, workers=workers))
    return rows


# ---------------------------------------------------------------------------
# Emission


def _row_to_record(row: ResultRow) -> dict:
    rec = dataclasses.asdict(row)
    return {c: rec[c] for c in RESULT_COLUMNS}


def _format_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv_text(rows: list[ResultRow]) -> str:
    lines = [",".join(RESULT_COLUMNS)]
    for row in rows:
        rec = _row_to_record(row)
        lines.append(",".join(_format_cell(rec[c]) for c in RESULT_COLUMNS))
    return "\n".join(lines) + "\n"


_FLOAT_FIELDS = {"alpha", "rho", "avg_volume", "coverage_pct", "se_volume", "se_coverage", "wall_ms"}
_INT_FIELDS = {"k", "m", "n_train", "n_calib", "n_test", "replications", "base_seed", "n_infinite"}


def _record_to_row(rec: dict) -> ResultRow:
    kwargs = {}
    for key in RESULT_COLUMNS:
        v = rec[key]
        if key == "gamma":
            kwargs[key] = None if v in ("", None) else float(v)
        elif key in _FLOAT_FIELDS:
            kwargs[key] = float(v)
        elif key in _INT_FIELDS:
            kwargs[key] = int(v)
        else:
            kwargs[key] = str(v)
    return ResultRow(**kwargs)


def rows_from_csv_text(text: str) -> list[ResultRow]:
    reader = csv.DictReader(text.splitlines())
    return [_record_to_row(rec) for rec in reader]


def rows_to_json_text(rows: list[ResultRow]) -> str:
    return json.dumps([_row_to_record(r) for r in rows], indent=2)


def rows_from_json_text(text: str) -> list[ResultRow]:
    return [_record_to_row(rec) for rec in json.loads(text)]


def collect_plot_data(cfg: ExperimentConfig) -> dict[str, str]:
    """Plot-data files for the first replication, as {filename: text}.

    Unsupervised runs produce a data histogram plus the prediction-set
    intervals (whole-line sets are clipped to the data range and flagged);
    supervised runs produce per-point interval slots.
    """
    cfg.validate()
    spec = parse_spec(cfg.distribution)
    seed = cfg.base_seed
    out: dict[str, str] = {}
    if cfg.method in UNSUPERVISED_METHODS:
        data = sample(spec, cfg.n_train + cfg.n_calib, seed, stream=(0,))
        if cfg.method == "cp_dp":
            ps = predict_unsupervised(
                data, cfg.alpha, cfg.k, m=cfg.m, gamma=cfg.gamma,
                delta=cfg.delta_value, seed=seed,
            )
        else:
            ps = run_cp_kde(data, cfg.alpha, KdeConfig(rho=cfg.rho), seed=seed)
        counts, edges = np.histogram(data, bins=60)
        lines = ["bin_lo,bin_hi,count"]
        for i, c in enumerate(counts):
            lines.append(f"{edges[i]!r},{edges[i + 1]!r},{int(c)}")
        out["plot_histogram.csv"] = "\n".join(lines) + "\n"
        lines = ["lo,hi,clipped"]
        if isinstance(ps.set, WholeLine):
            lines.append(f"{data.min()!r},{data.max()!r},1")
        else:
            for iv in ps.set.intervals:
                lines.append(f"{iv.lo!r},{iv.hi!r},0")
        out["plot_set.csv"] = "\n".join(lines) + "\n"
        return out

    rep = _run_prediction_lists(cfg, seed)
    preds = rep["preds"]
    kmax = max((len(p.set.intervals) for p in preds if not isinstance(p.set, WholeLine)), default=0)
    header = ["point_id", "x"] + [f"{side}_{i}" for i in range(kmax) for side in ("lo", "hi")]
    lines = [",".join(header)]
    for pid, p in enumerate(preds):
        cells = [str(pid), repr(float(np.atleast_1d(p.x)[0]))]
        ivs = [] if isinstance(p.set, WholeLine) else list(p.set.intervals)
        for i in range(kmax):
            if i < len(ivs):
                cells += [repr(ivs[i].lo), repr(ivs[i].hi)]
            else:
                cells += ["", ""]
        lines.append(",".join(cells))
    out["plot_intervals.csv"] = "\n".join(lines) + "\n"
    return out


def _run_prediction_lists(cfg: ExperimentConfig, seed: int) -> dict:
    spec = parse_spec(cfg.distribution)
    x_train, y_train = sample(spec, cfg.n_train, seed, stream=(1,))
    x_calib, y_calib = sample(spec, cfg.n_calib, seed, stream=(2,))
    x_test, _ = sample(spec, cfg.n_test, seed, stream=(3,))
    cdf = _make_cdf(cfg, x_train, y_train)
    if cfg.method == "dcp_dp":
        preds = run_dcp_dp(
            (x_train, y_train), (x_calib, y_calib), x_test, cdf,
            cfg.alpha, cfg.k, m=cfg.m, gamma=cfg.gamma, delta=cfg.delta_value,
        )
    elif cfg.method == "cqr":
        preds = run_cqr((x_train, y_train), (x_calib, y_calib), x_test, cdf, cfg.alpha)
    elif cfg.method == "dcp_qr":
        preds = run_dcp_qr((x_train, y_train), (x_calib, y_calib), x_test, cdf, cfg.alpha)
    else:
        preds = run_dcp_qr_star(
            (x_train, y_train), (x_calib, y_calib), x_test, cdf, cfg.alpha, L=cfg.m
        )
    return {"preds": preds}


def emit(
    rows: list[ResultRow],
    out_dir: str | Path,
    plot_data: dict[str, str] | None = None,
    formats: tuple[str, ...] = ("csv", "json"),
) -> list[Path]:
    """Write results (CSV/JSON) and optional plot-data files; returns paths."""
    if not rows:
        raise ValueError("no result rows to emit")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []
        if "csv" in formats:
            p = out / "results.csv"
            p.write_text(rows_to_csv_text(rows))
            written.append(p)
        if "json" in formats:
            p = out / "results.json"
            p.write_text(rows_to_json_text(rows))
            written.append(p)
        for name, text in (plot_data or {}).items():
            p = out / name
            p.write_text(text)
            written.append(p)
        return written
    except OSError as exc:
        raise OSError(f"failed writing results under {out}: {exc}") from exc
