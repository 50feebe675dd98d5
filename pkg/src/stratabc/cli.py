"""Command-line benchmark harness.

Exit codes: 0 on success, 1 for configuration errors, 2 for runtime aborts.
"""

import sys

import click

from .bench import (
    PROFILES,
    ConfigError,
    default_output_dir,
    parse_config,
    run_experiment,
    write_outputs,
)
from .kernels import KernelPolicy
from .models import MODEL_REGISTRY

METHOD_NAMES = [policy.value for policy in KernelPolicy]


def _parse_model_options(pairs):
    options = {}
    for pair in pairs:
        key, sep, raw = pair.partition("=")
        if not sep or not key:
            raise ConfigError(f"model options take the form key=value, got {pair!r}")
        for cast in (int, float):
            try:
                options[key] = cast(raw)
                break
            except ValueError:
                continue
        else:
            options[key] = raw
    return options


@click.group()
def main():
    """Stratified-distance ABC-SMC benchmark harness."""


@main.command("list-models")
def list_models():
    """List the built-in simulator models."""
    for name in sorted(MODEL_REGISTRY):
        model = MODEL_REGISTRY[name]()
        params = ", ".join(model.parameter_names)
        click.echo(f"{name}: {model.dim} parameters ({params})")


@main.command("validate")
@click.option("--config", "config_path", type=click.Path(), required=True, help="JSON config file.")
def validate(config_path):
    """Check a config file and echo the resolved experiment."""
    try:
        config = parse_config(path=config_path)
    except ConfigError as err:
        click.echo(f"config error: {err}", err=True)
        sys.exit(1)
    click.echo(
        f"ok: model={config.model} thresholds={list(config.thresholds)} "
        f"particles={config.n_particles} methods={list(config.methods)} "
        f"reps={config.repetitions} seed={config.seed}"
    )


@main.command("run")
@click.option("--config", "config_path", type=click.Path(), default=None, help="JSON config file.")
@click.option("--profile", type=click.Choice(sorted(PROFILES)), default=None, help="Named preset.")
@click.option("--model", default=None, help="Simulator model name.")
@click.option(
    "--method",
    "methods",
    multiple=True,
    type=click.Choice(METHOD_NAMES),
    help="Kernel policy; repeat the flag to compare several.",
)
@click.option("--particles", type=int, default=None, help="Particles per iteration.")
@click.option("--thresholds", default=None, help="Comma-separated tolerances, e.g. inf,4,3,2,1.")
@click.option("--reps", type=int, default=None, help="Number of repetitions.")
@click.option("--seed", type=int, default=None, help="Base seed; repetition r uses seed+r.")
@click.option("--out", "out_dir", default=None, help="Output directory.")
@click.option("--stop/--no-stop", "stop_enabled", default=None, help="Enable early stopping.")
@click.option("--stop-kl", type=float, default=None, help="Early-stopping KL threshold.")
@click.option("--stop-min-count", type=int, default=None, help="Minimum final-band sample count.")
@click.option("--workers", type=int, default=None, help="Parallel repetition workers.")
@click.option(
    "--model-option",
    "model_option_pairs",
    multiple=True,
    help="Model constructor override, key=value (e.g. horizon=10 for lotka_volterra).",
)
def run_command(
    config_path,
    profile,
    model,
    methods,
    particles,
    thresholds,
    reps,
    seed,
    out_dir,
    stop_enabled,
    stop_kl,
    stop_min_count,
    workers,
    model_option_pairs,
):
    """Run an experiment and write its CSV/JSON artifacts."""
    try:
        overrides = {
            "model": model,
            "methods": list(methods) or None,
            "n_particles": particles,
            "thresholds": thresholds,
            "repetitions": reps,
            "seed": seed,
            "output_dir": out_dir,
            "stop_enabled": stop_enabled,
            "stop_kl": stop_kl,
            "stop_min_count": stop_min_count,
            "workers": workers,
            "model_options": _parse_model_options(model_option_pairs) or None,
        }
        config = parse_config(path=config_path, profile=profile, overrides=overrides)
    except ConfigError as err:
        click.echo(f"config error: {err}", err=True)
        sys.exit(1)

    def progress(batch):
        for repetition, record in batch:
            status = "aborted" if record.aborted else f"{len(record.iterations)} iterations"
            click.echo(f"repetition {repetition} {record.policy}: {status}", err=True)

    try:
        table, records = run_experiment(config, progress=progress)
        destination = config.output_dir or default_output_dir()
        files = write_outputs(table, records, config, destination)
    except Exception as err:  # infeasible schedules, I/O failures
        click.echo(f"runtime error: {err}", err=True)
        sys.exit(2)
    if all(record.aborted for _, record in records):
        click.echo("all runs aborted; see runs.json for partial records", err=True)
        sys.exit(2)
    click.echo(f"wrote {', '.join(files)} to {destination}")


if __name__ == "__main__":
    main()
