"""
SPD-NN CONSTITUTIVE MODELLING
=============================
Command-line entry point.

    gen-data   reference simulations -> direct / indirect datasets
    train      best-of-restarts training -> checkpoint + loss log
    nn-test    teacher-forced one-step stress predictions
    fem-test   learned model embedded in the dynamic FE solver
    sweep      architecture / transition-parameter grids
    report     per-figure CSV tables from a run directory
"""

# =================================================
# IMPORTS
# =================================================
import logging
import sys

import click

from src.errors import SPDNNError
from src.experiments import EXPERIMENTS, fem_test, gen_data, load_config, nn_test, sweep, train
from src.reports import report

logger = logging.getLogger("spdnn")


# =================================================
# HELPERS
# =================================================
def _setup_logging(verbose: bool):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def _config(ctx, config, experiment, out, seed, restarts, mode, model, full_scale, max_evals=None):
    overrides = {
        "output.dir": out,
        "seed": seed,
        "training.restarts": restarts,
        "training.mode": mode,
        "model.kind": model,
        "full_scale": full_scale or None,
        "optimizer.max_evals": max_evals,
    }
    if ctx.obj["n_jobs"] is not None:
        overrides["n_jobs"] = ctx.obj["n_jobs"]
    return load_config(config, experiment, overrides)


def _run(fn, *args, **kwargs):
    """Run a workflow, mapping library errors to exit codes."""
    try:
        return fn(*args, **kwargs)
    except SPDNNError as exc:
        logger.error(f"{type(exc).__name__}: {exc}")
        sys.exit(exc.exit_code)


def common_options(f):
    options = [
        click.option("--config", "config", type=click.Path(dir_okay=False), default=None,
                     help="TOML experiment configuration."),
        click.option("--experiment", type=click.Choice(EXPERIMENTS), default=None,
                     help="Built-in experiment (overrides [experiment] name)."),
        click.option("--out", type=click.Path(file_okay=False), default=None,
                     help="Run directory."),
        click.option("--seed", type=int, default=None),
        click.option("--restarts", type=int, default=None),
        click.option("--mode", type=click.Choice(["direct", "indirect"]), default=None),
        click.option("--model", type=click.Choice(["spd", "spd-ep", "sigma", "dsigma", "linear"]),
                     default=None),
        click.option("--paper-scale", "full_scale", is_flag=True, default=False,
                     help="Use the full-size plate meshes."),
    ]
    for option in reversed(options):
        f = option(f)
    return f


# =================================================
# COMMANDS
# =================================================
@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Debug logging.")
@click.option("--n-jobs", type=int, default=None, help="Parallel workers (joblib).")
@click.pass_context
def cli(ctx, verbose, n_jobs):
    """SPD-NN constitutive models: data, training and NN-FEM tests."""
    _setup_logging(verbose)
    ctx.ensure_object(dict)
    ctx.obj["n_jobs"] = n_jobs


@cli.command("gen-data")
@common_options
@click.pass_context
def gen_data_cmd(ctx, config, experiment, out, seed, restarts, mode, model, full_scale):
    """Simulate all load cases with the reference material."""
    cfg = _run(_config, ctx, config, experiment, out, seed, restarts, mode, model, full_scale)
    runs = _run(gen_data, cfg)

    click.echo(f"\nDATA GENERATION ({cfg.name})")
    click.echo("-" * 40)
    for case, traj in runs.items():
        split = "train" if case in cfg.load.train_cases else "test"
        click.echo(f"{case:<8} {split:<6} {traj.n_steps} steps  {traj.wall_time:8.2f}s")
    click.echo(f"\nDatasets written to {cfg.out_dir / 'data'}")


@cli.command("train")
@common_options
@click.option("--max-evals", type=int, default=None, help="Optimizer evaluation budget.")
@click.pass_context
def train_cmd(ctx, config, experiment, out, seed, restarts, mode, model, full_scale, max_evals):
    """Train a constitutive model; keeps the best restart."""
    cfg = _run(_config, ctx, config, experiment, out, seed, restarts, mode, model, full_scale, max_evals)
    best = _run(train, cfg)

    click.echo(f"\nTRAINING ({cfg.training.mode}, {best.model.kind})")
    click.echo("-" * 40)
    click.echo(f"Best seed     : {best.seed}")
    click.echo(f"Training loss : {best.loss:.6e}")
    click.echo(f"Status        : {best.history.status}")
    click.echo(f"\nCheckpoint written to {cfg.out_dir / 'model' / 'model.ckpt'}")


@cli.command("nn-test")
@common_options
@click.option("--checkpoint", type=click.Path(dir_okay=False), default=None)
@click.option("--dataset", type=click.Path(dir_okay=False), default=None,
              help="Direct dataset CSV (default: the run's test split).")
@click.pass_context
def nn_test_cmd(ctx, config, experiment, out, seed, restarts, mode, model, full_scale,
                checkpoint, dataset):
    """Teacher-forced one-step stress predictions."""
    cfg = _run(_config, ctx, config, experiment, out, seed, restarts, mode, model, full_scale)
    summary = _run(nn_test, cfg, checkpoint, dataset)

    click.echo("\nNN TEST")
    click.echo("-" * 40)
    for row in summary.itertuples():
        click.echo(f"{row.case:<8} RMSE {row.rmse:.4e}  ({row.relative_rmse:.2%} of peak stress)")


@cli.command("fem-test")
@common_options
@click.option("--checkpoint", default=None,
              help="Model checkpoint, or 'reference' to rerun the reference material.")
@click.pass_context
def fem_test_cmd(ctx, config, experiment, out, seed, restarts, mode, model, full_scale, checkpoint):
    """Forward simulations of the test cases with the learned model."""
    cfg = _run(_config, ctx, config, experiment, out, seed, restarts, mode, model, full_scale)
    summary = _run(fem_test, cfg, checkpoint)

    click.echo("\nNN-FEM TEST")
    click.echo("-" * 40)
    for row in summary.itertuples():
        click.echo(f"{row.case:<8} {row.status:<9} final displacement MSE {row.final_disp_mse:.3e}  "
                   f"{row.wall_time:.2f}s")


@cli.command("sweep")
@common_options
@click.option("--max-evals", type=int, default=None, help="Optimizer evaluation budget per cell.")
@click.pass_context
def sweep_cmd(ctx, config, experiment, out, seed, restarts, mode, model, full_scale, max_evals):
    """Train and FEM-test every cell of the configured grid."""
    cfg = _run(_config, ctx, config, experiment, out, seed, restarts, mode, model, full_scale)
    frame = _run(sweep, cfg, max_evals)

    click.echo("\nSWEEP")
    click.echo("-" * 40)
    click.echo(frame.to_string(index=False))


@cli.command("report")
@click.argument("run_dir", type=click.Path(file_okay=False))
@click.option("--out", type=click.Path(file_okay=False), default=None)
def report_cmd(run_dir, out):
    """Collect per-figure CSV tables from a run directory."""
    manifest = _run(report, run_dir, out)
    click.echo("\nREPORT")
    click.echo("-" * 40)
    for name in manifest["produced"]:
        click.echo(f"written  {name}")
    for item in manifest["missing"]:
        click.echo(f"missing  {item['file']} (run {item['needs']})")


# =================================================
# ENTRY POINT
# =================================================
if __name__ == "__main__":
    cli()
