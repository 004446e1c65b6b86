"""Experiment configuration, seeded batch execution and result export.

Config files are YAML with this layout (every section except the top-level
scalars is optional)::

    preset: SET_II            # SET_II | SET_III | SET_IV; omit for ModelParams defaults
    steps: 80000              # >= 1000
    trials: 50
    master_seed: 1
    model: {gamma: 0.02}      # ModelParams overrides
    hierarchy: {b: 2.0}       # HierarchyParams overrides
    scenario:
      echo: {mode: asymmetric, E: 2.0}
      pnd: {target: 1, T0: 2000, T1: 6000, S: 20.0}
    sweep: {param: b, values: [0.0, 0.5, 2.0]}
    analysis: {level: 90, lags: 0, sample_every: 100, log_prices: false,
               burn_in: 0, merge_gap: 3}
    output: {dir: out, formats: [csv, json], series: false}
    workers: 1

Trial ``i`` of sweep point ``label`` is seeded from
``derive(master_seed, label, i)``; results are ordered by (sweep point,
trial) before export, so output bytes do not depend on the worker count.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from hiermarket.bubbles import bubble_report, critical_value
from hiermarket.dynamics import ModelParams, preset, simulate
from hiermarket.hierarchy import HierarchyParams
from hiermarket.scenarios import EchoConfig, PumpDumpConfig, pnd_evaluate
from hiermarket.seeding import derive_int
from hiermarket.stylized import stylized_report

WORKERS_ENV = "HIERMARKET_WORKERS"
MIN_STEPS = 1000
EXPLOSIVE_LEVEL = 90

TRIAL_COLUMNS = (
    "group", "sweep_param", "sweep_value", "trial", "seed", "status",
    "volatility", "f_sigma", "max_price", "mean_price", "final_price",
    "mean_n_o", "mean_n_p", "mean_n_f",
    "tail_alpha_2_5", "tail_alpha_5", "tail_alpha_10",
    "kurtosis_T1", "kurtosis_T10", "kurtosis_T50",
    "acf_abs", "acf_sq", "decay_a", "decay_beta",
    "bubble_n", "sadf_stat", "gsadf_stat", "sadf_cv", "gsadf_cv",
    "sadf_significant", "gsadf_significant", "explosive", "n_explosive_intervals",
    "pnd_success", "pnd_corrupted_max", "pnd_threshold",
)
SERIES_COLUMNS = ("step", "price", "fundamental", "n_o", "n_p", "n_f")
MEAN_COLUMNS = (
    "volatility", "f_sigma", "max_price", "mean_price",
    "tail_alpha_2_5", "tail_alpha_5", "tail_alpha_10",
    "kurtosis_T1", "kurtosis_T10", "kurtosis_T50",
    "acf_abs", "acf_sq", "decay_a", "decay_beta", "sadf_stat", "gsadf_stat",
)


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending key."""


@dataclass(frozen=True)
class AnalysisConfig:
    level: int = 90
    lags: int = 0
    sample_every: int | None = None  # None: one observation per unit of model time
    log_prices: bool = False
    burn_in: int = 0
    merge_gap: int = 3


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"
    formats: tuple = ("csv", "json")
    series: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelParams
    hierarchy: HierarchyParams
    steps: int
    trials: int
    master_seed: int
    preset: str | None = None
    echo: EchoConfig | None = None
    pnd: PumpDumpConfig | None = None
    sweep: tuple | None = None  # (parameter name, tuple of values)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    workers: int | None = None

    def snapshot(self) -> dict:
        return {
            "preset": self.preset,
            "steps": self.steps,
            "trials": self.trials,
            "master_seed": self.master_seed,
            "model": asdict(self.model),
            "hierarchy": asdict(self.hierarchy),
            "scenario": {
                "echo": None if self.echo is None else {"mode": self.echo.mode.value, "E": self.echo.E},
                "pnd": None if self.pnd is None else asdict(self.pnd),
            },
            "sweep": None if self.sweep is None else {"param": self.sweep[0], "values": list(self.sweep[1])},
            "analysis": asdict(self.analysis),
        }


# ---------------------------------------------------------------------------
# loading and validation
# ---------------------------------------------------------------------------

_TOP_KEYS = {"preset", "steps", "trials", "master_seed", "model", "hierarchy", "scenario",
             "sweep", "analysis", "output", "workers"}
_MODEL_FIELDS = {f.name: f for f in fields(ModelParams)}
_HIER_FIELDS = {f.name: f for f in fields(HierarchyParams)}
_INT_PARAMS = {"L", "k"}


def _check_keys(section: dict, allowed, where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(section).__name__}")
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{where}: unknown key {key!r}")


def _coerce_param(name: str, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name}: expected a number, got {value!r}")
    if name in _INT_PARAMS:
        if int(value) != value:
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _int(raw: dict, key: str, default=None, minimum=None):
    value = raw.get(key, default)
    if value is None:
        raise ConfigError(f"{key}: required")
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{key}: must be >= {minimum}, got {value}")
    return value


def _build(factory, kwargs, where):
    try:
        return factory(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_config(raw: dict, sweep_override=None) -> ExperimentConfig:
    _check_keys(raw, _TOP_KEYS, "config")

    preset_name = raw.get("preset")
    if preset_name is None:
        model, hier = ModelParams(), HierarchyParams()
    else:
        try:
            model, hier = preset(str(preset_name))
        except ValueError as exc:
            raise ConfigError(f"preset: {exc}") from None
        preset_name = str(preset_name).upper()

    model_over = raw.get("model") or {}
    _check_keys(model_over, _MODEL_FIELDS, "model")
    model = _build(lambda **kw: replace(model, **kw),
                   {k: _coerce_param(f"model.{k}", v) for k, v in model_over.items()}, "model")

    hier_over = raw.get("hierarchy") or {}
    _check_keys(hier_over, _HIER_FIELDS, "hierarchy")
    hier = _build(lambda **kw: replace(hier, **kw),
                  {k: _coerce_param(k, v) for k, v in hier_over.items()}, "hierarchy")

    steps = _int(raw, "steps", minimum=MIN_STEPS)
    trials = _int(raw, "trials", default=1, minimum=1)
    master_seed = _int(raw, "master_seed", default=0, minimum=0)
    workers = raw.get("workers")
    if workers is not None:
        workers = _int(raw, "workers", minimum=1)

    echo = pnd = None
    scenario = raw.get("scenario") or {}
    _check_keys(scenario, {"echo", "pnd"}, "scenario")
    if "echo" in scenario:
        _check_keys(scenario["echo"], {"mode", "E"}, "scenario.echo")
        echo = _build(EchoConfig, scenario["echo"], "scenario.echo")
    if "pnd" in scenario:
        _check_keys(scenario["pnd"], {"target", "T0", "T1", "S"}, "scenario.pnd")
        missing = {"target", "T0", "T1", "S"} - set(scenario["pnd"])
        if missing:
            raise ConfigError(f"scenario.pnd: missing {sorted(missing)}")
        pnd = _build(PumpDumpConfig, scenario["pnd"], "scenario.pnd")
        try:
            pnd.validate(hier, steps)
        except ValueError as exc:
            raise ConfigError(f"scenario.pnd: {exc}") from None

    sweep = sweep_override
    if sweep is None and raw.get("sweep") is not None:
        _check_keys(raw["sweep"], {"param", "values"}, "sweep")
        sweep = (raw["sweep"].get("param"), raw["sweep"].get("values"))
    if sweep is not None:
        sweep = _validate_sweep(sweep, model, hier)

    analysis_raw = raw.get("analysis") or {}
    _check_keys(analysis_raw, {f.name for f in fields(AnalysisConfig)}, "analysis")
    analysis = AnalysisConfig(**analysis_raw)
    if analysis.level not in (90, 95, 100):
        raise ConfigError(f"analysis.level: must be 90, 95 or 100, got {analysis.level}")
    if analysis.burn_in < 0 or analysis.burn_in >= steps:
        raise ConfigError(f"analysis.burn_in: must lie in [0, steps), got {analysis.burn_in}")
    if analysis.sample_every is not None and analysis.sample_every < 1:
        raise ConfigError("analysis.sample_every: must be >= 1")

    output_raw = raw.get("output") or {}
    _check_keys(output_raw, {"dir", "formats", "series"}, "output")
    formats = tuple(str(f).lower() for f in output_raw.get("formats", ("csv", "json")))
    for f in formats:
        if f not in ("csv", "json"):
            raise ConfigError(f"output.formats: unknown format {f!r}")
    output = OutputConfig(dir=str(output_raw.get("dir", "out")), formats=formats,
                          series=bool(output_raw.get("series", False)))

    return ExperimentConfig(
        model=model, hierarchy=hier, steps=steps, trials=trials, master_seed=master_seed,
        preset=preset_name, echo=echo, pnd=pnd, sweep=sweep, analysis=analysis,
        output=output, workers=workers,
    )


def _validate_sweep(sweep, model, hier):
    name, values = sweep
    if name not in _MODEL_FIELDS and name not in _HIER_FIELDS:
        raise ConfigError(f"sweep.param: {name!r} is not a ModelParams or HierarchyParams field")
    if not isinstance(values, (list, tuple)) or not values:
        raise ConfigError("sweep.values: expected a non-empty list")
    values = tuple(_coerce_param(f"sweep.values[{name}]", v) for v in values)
    for v in values:
        target = model if name in _MODEL_FIELDS else hier
        _build(lambda **kw: replace(target, **kw), {name: v}, f"sweep.values ({name}={v})")
    return name, values


def load_config(path, sweep_override=None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if raw is None:
        raw = {}
    return parse_config(raw, sweep_override)


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------


@dataclass
class TrialTask:
    group: str
    sweep_param: str | None
    sweep_value: float | None
    trial: int
    seed: int
    model: ModelParams
    hierarchy: HierarchyParams
    steps: int
    echo: EchoConfig | None
    pnd: PumpDumpConfig | None
    analysis: AnalysisConfig
    keep_series: bool


@dataclass
class RunRecord:
    config: dict
    rows: list
    groups: list
    series: dict = field(default_factory=dict)  # (group, trial) -> per-step arrays

    def summary(self) -> dict:
        return {"config": self.config, **_aggregate(self.rows), "groups": self.groups}


def _groups(config: ExperimentConfig):
    if config.sweep is None:
        return [("base", None, None, config.model, config.hierarchy)]
    name, values = config.sweep
    out = []
    for v in values:
        m, h = config.model, config.hierarchy
        if name in _MODEL_FIELDS:
            m = replace(m, **{name: v})
        else:
            h = replace(h, **{name: v})
        out.append((f"{name}={v!r}", name, v, m, h))
    return out


def _tasks(config: ExperimentConfig):
    tasks = []
    for label, param, value, m, h in _groups(config):
        for i in range(config.trials):
            tasks.append(TrialTask(
                group=label, sweep_param=param, sweep_value=value, trial=i,
                seed=derive_int(config.master_seed, label, i), model=m, hierarchy=h,
                steps=config.steps, echo=config.echo, pnd=config.pnd,
                analysis=config.analysis, keep_series=config.output.series,
            ))
    return tasks


def _finite(x):
    if x is None:
        return None
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    x = float(x)
    return x if math.isfinite(x) else None


def analyze_prices(prices, fundamentals, analysis: AnalysisConfig, steps_per_unit: int) -> dict:
    """Stylized-fact and bubble metrics for one price path, as a flat dict."""
    every = analysis.sample_every or steps_per_unit
    prices = np.asarray(prices, dtype=float)
    out = {k: None for k in TRIAL_COLUMNS[6:]}
    out.update(
        max_price=float(prices.max()), mean_price=float(prices.mean()), final_price=float(prices[-1]),
    )
    report = stylized_report(prices, fundamentals, every)
    out["volatility"] = report.sigma
    out["f_sigma"] = report.F_sigma
    for key in ("tail_alpha_2_5", "tail_alpha_5", "tail_alpha_10", "kurtosis_T1", "kurtosis_T10",
                "kurtosis_T50", "acf_abs", "acf_sq", "decay_a", "decay_beta"):
        out[key] = _finite(getattr(report, key))

    sampled = prices[every - 1 :: every]
    try:
        bubbles = bubble_report(sampled, level=analysis.level, lags=analysis.lags, stride=every,
                                log_prices=analysis.log_prices, min_gap=analysis.merge_gap)
    except ValueError:
        bubbles = None
    if bubbles is not None:
        cv90, _ = critical_value("GSADF", bubbles.n, EXPLOSIVE_LEVEL)
        out.update(
            bubble_n=bubbles.n, sadf_stat=_finite(bubbles.sadf_stat), gsadf_stat=_finite(bubbles.gsadf_stat),
            sadf_cv=bubbles.sadf_cv, gsadf_cv=bubbles.gsadf_cv,
            sadf_significant=bubbles.sadf_significant, gsadf_significant=bubbles.gsadf_significant,
            explosive=bool(bubbles.gsadf_stat > cv90),
            n_explosive_intervals=len(bubbles.explosive_intervals),
        )
        out["_intervals"] = [list(iv) for iv in bubbles.explosive_intervals]
    return out


def run_trial(task: TrialTask):
    row = {
        "group": task.group, "sweep_param": task.sweep_param, "sweep_value": task.sweep_value,
        "trial": task.trial, "seed": task.seed, "status": "ok",
    }
    series = None
    try:
        if task.pnd is not None:
            outcome = pnd_evaluate(task.model, task.hierarchy, task.pnd, task.steps, task.seed)
            sim = outcome.corrupted
            row.update(pnd_success=bool(outcome.success), pnd_corrupted_max=outcome.corrupted_max,
                       pnd_threshold=outcome.threshold)
            row["_baseline_maxima"] = [float(x) for x in outcome.baseline_maxima]
        else:
            sim = simulate(task.model, task.hierarchy, task.steps, task.seed, echo=task.echo)
        skip = task.analysis.burn_in
        metrics = analyze_prices(sim.price[skip:], sim.fundamental[skip:], task.analysis,
                                 task.model.steps_per_unit_time)
        metrics.update({k: v for k, v in row.items() if k.startswith("pnd_") and v is not None})
        row.update(metrics)
        row.update(mean_n_o=float(sim.n_o.mean()), mean_n_p=float(sim.n_p.mean()),
                   mean_n_f=float(sim.n_f.mean()))
        if task.keep_series:
            series = {
                "price": sim.price, "fundamental": sim.fundamental,
                "n_o": sim.n_o, "n_p": sim.n_p, "n_f": sim.n_f,
            }
    except Exception as exc:  # recorded per row; aggregates use the successes
        row["status"] = f"error: {type(exc).__name__}: {exc}"
    for key in TRIAL_COLUMNS:
        row.setdefault(key, None)
    return row, series


def resolve_workers(requested: int | None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    return 1


def run_experiment(config: ExperimentConfig, workers: int | None = None) -> RunRecord:
    tasks = _tasks(config)
    n_workers = resolve_workers(workers if workers is not None else config.workers)
    if n_workers == 1:
        results = [run_trial(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(run_trial, tasks))
    rows = [r for r, _ in results]
    series = {(r["group"], r["trial"]): s for r, s in results if s is not None}
    groups = []
    for label, param, value, _, _ in _groups(config):
        group_rows = [r for r in rows if r["group"] == label]
        groups.append({"group": label, "sweep_param": param, "sweep_value": value,
                       **_aggregate(group_rows)})
    return RunRecord(config=config.snapshot(), rows=rows, groups=groups, series=series)


def _mean(values):
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def _aggregate(rows) -> dict:
    ok = [r for r in rows if r["status"] == "ok"]
    out = {"n_trials": len(rows), "n_ok": len(ok)}
    for col in MEAN_COLUMNS:
        out[f"{col}_mean"] = _mean([r[col] for r in ok])
    flags = [r["explosive"] for r in ok if r["explosive"] is not None]
    out["explosive_fraction"] = float(np.mean(flags)) if flags else None
    pnd = [r["pnd_success"] for r in ok if r["pnd_success"] is not None]
    if pnd:
        out["pnd_success_rate"] = float(np.mean(pnd))
    return out


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value)) if math.isfinite(value) else ""
    return str(value)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _series_name(group: str, trial: int) -> str:
    safe = "".join(c if c.isalnum() or c in "-_.=" else "_" for c in group)
    return f"{safe}_trial{trial:04d}.csv"


def write_series_csv(path, series: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_COLUMNS)
        for t in range(len(series["price"])):
            w.writerow([
                t, _fmt(float(series["price"][t])), _fmt(float(series["fundamental"][t])),
                int(series["n_o"][t]), int(series["n_p"][t]), int(series["n_f"][t]),
            ])


def export(record: RunRecord, out_dir, formats=("csv", "json")) -> list[Path]:
    """Write ``trials.csv`` / ``trials.json``, ``summary.json`` and any series files."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    written = []
    if "csv" in formats:
        path = out_dir / "trials.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRIAL_COLUMNS)
            for row in record.rows:
                w.writerow([_fmt(row[c]) for c in TRIAL_COLUMNS])
        written.append(path)
    if "json" in formats:
        path = out_dir / "trials.json"
        rows = []
        for row in record.rows:
            r = {c: row[c] for c in TRIAL_COLUMNS}
            if "_intervals" in row:
                r["explosive_intervals"] = row["_intervals"]
            if "_baseline_maxima" in row:
                r["pnd_baseline_maxima"] = row["_baseline_maxima"]
            rows.append(r)
        path.write_text(json.dumps(_json_safe(rows), indent=2) + "\n")
        written.append(path)
    path = out_dir / "summary.json"
    path.write_text(json.dumps(_json_safe(record.summary()), indent=2) + "\n")
    written.append(path)
    if record.series:
        series_dir = out_dir / "series"
        series_dir.mkdir(exist_ok=True)
        for (group, trial), s in sorted(record.series.items()):
            path = series_dir / _series_name(group, trial)
            write_series_csv(path, s)
            written.append(path)
    return written


def read_trials_csv(path) -> list[dict]:
    """Read ``trials.csv`` back with numeric columns parsed."""
    text_cols = {"group", "sweep_param", "status"}
    rows = []
    with open(path, newline="") as fh:
        for raw in csv.DictReader(fh):
            row = {}
            for k, v in raw.items():
                if k in text_cols:
                    row[k] = v or None
                elif v == "":
                    row[k] = None
                elif v in ("true", "false"):
                    row[k] = v == "true"
                else:
                    row[k] = float(v) if any(c in v for c in ".eEn") else int(v)
            rows.append(row)
    return rows
