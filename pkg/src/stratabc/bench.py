"""Benchmark harness: experiment configs, multi-repetition execution with
paired observations across methods, median/IQR aggregation, and deterministic
CSV/JSON artifact emission."""

import csv
import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import RngStream
from .kernels import KernelPolicy
from .models import get_model, make_observed
from .smc import (
    DEFAULT_MAX_PROPOSALS,
    OBSERVATION_STREAM,
    RunAborted,
    SmcConfig,
    StoppingRule,
    run_model,
)
from .validation import as_thresholds, check_method

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "AggregateTable",
    "PROFILES",
    "parse_config",
    "run_experiment",
    "write_outputs",
    "OUTPUT_DIR_ENV",
]

OUTPUT_DIR_ENV = "STRATABC_OUT_DIR"

ALL_METHODS = tuple(policy.value for policy in KernelPolicy)

#: Named experiment presets: desk-scale variants run in minutes on one core,
#: the full-scale variants match the published benchmark setups.
PROFILES = {
    "gaussian-desk": {
        "model": "gaussian_toy",
        "thresholds": [math.inf, 4, 3, 2, 1],
        "n_particles": 2000,
        "repetitions": 1,
    },
    "gaussian-kl-desk": {
        "model": "gaussian_toy",
        "thresholds": [math.inf, 4, 3, 2, 1, 0.8, 0.6, 0.4, 0.2],
        "n_particles": 20000,
        "repetitions": 5,
        "methods": ["stratified"],
    },
    "banana-desk": {
        "model": "banana",
        "thresholds": [math.inf, 100, 50, 20, 10, 5, 2, 1],
        "n_particles": 500,
        "repetitions": 10,
    },
    "banana-paper": {
        "model": "banana",
        "thresholds": [math.inf, 100, 50, 20, 10, 5, 2, 1],
        "n_particles": 2000,
        "repetitions": 50,
    },
    "lv-desk": {
        "model": "lotka_volterra",
        "thresholds": [math.inf, 200, 100, 90, 80, 70, 60, 50],
        "n_particles": 500,
        "repetitions": 10,
    },
    "lv-paper": {
        "model": "lotka_volterra",
        "thresholds": [math.inf, 200, 100, 90, 80, 70, 60, 50],
        "n_particles": 2000,
        "repetitions": 50,
    },
    "gk-desk": {
        "model": "gk",
        "thresholds": [math.inf, 100, 70, 50, 30, 27, 23, 20],
        "n_particles": 500,
        "repetitions": 10,
    },
    "gk-paper": {
        "model": "gk",
        "thresholds": [math.inf, 100, 70, 50, 30, 27, 23, 20],
        "n_particles": 5000,
        "repetitions": 50,
    },
}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending key."""


@dataclass
class ExperimentConfig:
    """A full benchmark experiment: one model, several methods, R repetitions.

    Each repetition r derives its seed as ``seed + r``, draws one observation,
    and runs every method against that same observation, so methods are
    compared pairwise on identical data and identical base streams.
    """

    model: str
    thresholds: tuple
    n_particles: int = 1000
    methods: tuple = ALL_METHODS
    repetitions: int = 1
    seed: int = 0
    stop_enabled: bool = False
    stop_kl: float = 0.05
    stop_min_count: int = 100
    max_proposals_per_iteration: int = DEFAULT_MAX_PROPOSALS
    model_options: dict = field(default_factory=dict)
    output_dir: str | None = None
    workers: int = 1

    def __post_init__(self):
        try:
            self.thresholds = as_thresholds(self.thresholds).eps
            self.methods = tuple(check_method(m).value for m in self.methods)
        except ValueError as err:
            raise ConfigError(str(err)) from err
        if not self.methods:
            raise ConfigError("methods must not be empty")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError(f"methods must be distinct, got {list(self.methods)}")
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        try:
            # surface model/threshold/stopping problems at parse time
            get_model(self.model, **self.model_options)
            self.smc_config(self.methods[0], 0)
        except (ValueError, TypeError) as err:
            raise ConfigError(str(err)) from err

    def smc_config(self, method, repetition) -> SmcConfig:
        return SmcConfig(
            model=self.model,
            thresholds=self.thresholds,
            n_particles=self.n_particles,
            policy=method,
            seed=self.seed + repetition,
            stopping=StoppingRule(
                enabled=self.stop_enabled,
                kl_threshold=self.stop_kl,
                min_target_count=self.stop_min_count,
            ),
            max_proposals_per_iteration=self.max_proposals_per_iteration,
            model_options=dict(self.model_options),
        )

    def to_dict(self):
        """Experiment definition only: delivery details (output directory,
        worker count) are excluded so identical experiments echo identical
        configs."""
        return {
            "model": self.model,
            "model_options": dict(self.model_options),
            "thresholds": list(self.thresholds),
            "n_particles": self.n_particles,
            "methods": list(self.methods),
            "repetitions": self.repetitions,
            "seed": self.seed,
            "stop_enabled": self.stop_enabled,
            "stop_kl": self.stop_kl,
            "stop_min_count": self.stop_min_count,
            "max_proposals_per_iteration": self.max_proposals_per_iteration,
        }


_CONFIG_KEYS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def parse_config(path=None, profile=None, overrides=None) -> ExperimentConfig:
    """Assemble a config from an optional profile, an optional JSON file and
    explicit overrides, in increasing precedence.  Unknown keys are rejected."""
    data = {}
    if profile is not None:
        if profile not in PROFILES:
            known = ", ".join(sorted(PROFILES))
            raise ConfigError(f"unknown profile {profile!r}; available profiles: {known}")
        data.update(PROFILES[profile])
    if path is not None:
        try:
            with open(path) as fh:
                loaded = json.load(fh)
        except OSError as err:
            raise ConfigError(f"cannot read config file {path}: {err}") from err
        except json.JSONDecodeError as err:
            raise ConfigError(f"config file {path} is not valid JSON: {err}") from err
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        unknown = sorted(set(loaded) - _CONFIG_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        data.update(loaded)
    for key, value in (overrides or {}).items():
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"unknown config key: {key}")
        if value is not None:
            data[key] = value
    missing = [key for key in ("model", "thresholds") if key not in data]
    if missing:
        raise ConfigError(f"missing required config keys: {', '.join(missing)}")
    try:
        return ExperimentConfig(**data)
    except TypeError as err:
        raise ConfigError(str(err)) from err


def _run_repetition(config: ExperimentConfig, repetition: int):
    """All methods for one repetition, paired on a single observation."""
    seed = config.seed + repetition
    model = get_model(config.model, **config.model_options)
    observed = make_observed(model, RngStream(seed).child(OBSERVATION_STREAM))
    records = []
    for method in config.methods:
        try:
            record = run_model(model, config.smc_config(method, repetition), observed).record
        except RunAborted as err:
            record = err.record
        records.append((repetition, record))
    return records


def run_experiment(config: ExperimentConfig, progress=None):
    """Execute every (repetition, method) run and aggregate the results.

    Returns ``(AggregateTable, records)`` where ``records`` is a list of
    ``(repetition, RunRecord)`` in deterministic order.  Aborted repetitions
    are recorded with their partial iterations rather than failing the
    experiment.
    """
    records = []
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for batch in pool.map(
                _run_repetition, [config] * config.repetitions, range(config.repetitions)
            ):
                records.extend(batch)
                if progress is not None:
                    progress(batch)
    else:
        for repetition in range(config.repetitions):
            batch = _run_repetition(config, repetition)
            records.extend(batch)
            if progress is not None:
                progress(batch)
    return aggregate(config, records), records


@dataclass
class AggregateTable:
    """Median and interquartile range per (method, iteration) across
    repetitions, plus the posterior-summary interval rows."""

    acceptance: list
    cumulative: list
    posterior: list
    kl: list


def _quartiles(values):
    q25, q50, q75 = np.percentile(np.asarray(values, dtype=float), [25.0, 50.0, 75.0])
    return float(q50), float(q25), float(q75)


def aggregate(config: ExperimentConfig, records) -> AggregateTable:
    model = get_model(config.model, **config.model_options)
    parameter_names = model.parameter_names
    n_iterations = len(config.thresholds)
    by_policy = {}
    for _, record in records:
        by_policy.setdefault(record.policy, []).append(record)

    acceptance, cumulative, posterior, kl = [], [], [], []
    for policy in sorted(set(config.methods)):
        runs = by_policy.get(policy, [])
        for iteration in range(1, n_iterations + 1):
            present = [r for r in runs if len(r.iterations) >= iteration]
            if not present:
                continue  # missing cell: no repetition reached this iteration
            rates = [r.iterations[iteration - 1].acceptance_rate for r in present]
            med, q25, q75 = _quartiles(rates)
            acceptance.append(
                {"policy": policy, "iteration": iteration, "median": med, "q25": q25, "q75": q75}
            )
            totals = [r.cumulative_generated()[iteration - 1] for r in present]
            med, q25, q75 = _quartiles(totals)
            cumulative.append(
                {"policy": policy, "iteration": iteration, "median": med, "q25": q25, "q75": q75}
            )
            for p, name in enumerate(parameter_names):
                median_mean = float(
                    np.median([r.iterations[iteration - 1].posterior_mean[p] for r in present])
                )
                median_sd = float(
                    np.median([r.iterations[iteration - 1].posterior_sd[p] for r in present])
                )
                posterior.append(
                    {
                        "policy": policy,
                        "iteration": iteration,
                        "parameter": name,
                        "median_mean": median_mean,
                        "median_sd": median_sd,
                        "lo95": median_mean - 1.96 * median_sd,
                        "hi95": median_mean + 1.96 * median_sd,
                    }
                )
            kl_values = [
                r.iterations[iteration - 1].kl_target
                for r in present
                if r.iterations[iteration - 1].kl_target is not None
            ]
            if kl_values:
                med, q25, q75 = _quartiles(kl_values)
                kl.append(
                    {
                        "policy": policy,
                        "iteration": iteration,
                        "median": med,
                        "q25": q25,
                        "q75": q75,
                    }
                )
    return AggregateTable(acceptance=acceptance, cumulative=cumulative, posterior=posterior, kl=kl)


def _format_cell(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(row[key]) for key in header])


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def write_outputs(table: AggregateTable, records, config: ExperimentConfig, out_dir):
    """Emit the experiment artifacts into ``out_dir``.

    Files: ``acceptance_rates.csv``, ``cumulative_samples.csv``,
    ``posterior_summary.csv``, ``kl_trace.csv``, ``runs.json`` (full
    per-repetition records including frequency tensors) and ``config.json``
    (the resolved experiment echo).  Reruns with the same seed produce
    byte-identical files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    quartile_header = ["policy", "iteration", "median", "q25", "q75"]
    _write_csv(out / "acceptance_rates.csv", quartile_header, table.acceptance)
    _write_csv(out / "cumulative_samples.csv", quartile_header, table.cumulative)
    _write_csv(
        out / "posterior_summary.csv",
        ["policy", "iteration", "parameter", "median_mean", "median_sd", "lo95", "hi95"],
        table.posterior,
    )
    _write_csv(out / "kl_trace.csv", quartile_header, table.kl)
    _write_json(
        out / "runs.json",
        {"runs": [{"repetition": rep, **record.to_dict()} for rep, record in records]},
    )
    _write_json(out / "config.json", config.to_dict())
    return sorted(str(p.name) for p in out.iterdir())


def default_output_dir():
    return os.environ.get(OUTPUT_DIR_ENV, "results")
