"""Command-line entry points: generate / train / evaluate / report / sweep."""

from __future__ import annotations

import os
import sys
from dataclasses import replace

import click

from . import harness, nn, synthbench


def _echo(msg):
    click.echo(msg)


@click.group()
def cli():
    """Regression uncertainty benchmark under distribution shift."""


@cli.command()
@click.option("--kind", type=click.Choice(synthbench.KINDS), default="none", show_default=True)
@click.option("--level", type=click.IntRange(0, 4), default=4, show_default=True,
              help="Shift intensity (0 = none, 4 = full tails/gap).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--small", is_flag=True, help="CI preset: 1000/200/1000 rows.")
@click.option("--out", type=click.Path(), default="dataset.csv", show_default=True)
def generate(kind, level, seed, small, out):
    """Generate a synthetic shifted dataset as CSV (plus a provenance manifest)."""
    sizes = harness.SMALL_SIZES if small else {}
    spec = synthbench.ShiftSpec(kind=kind, level=level, seed=seed, **sizes)
    dataset = synthbench.generate(spec)
    synthbench.save_csv(dataset, out)
    synthbench.save_manifest(spec, os.path.splitext(out)[0] + ".manifest.json")
    _echo(f"wrote {len(dataset)} rows to {out}")


@cli.command()
@click.option("--data", type=click.Path(exists=True), required=True, help="Dataset CSV.")
@click.option("--head", type=click.Choice(nn.HEADS), default="direct", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--epochs", type=int, default=75, show_default=True)
@click.option("--alpha", type=float, default=0.1, show_default=True)
@click.option("--out", type=click.Path(), default="model.json", show_default=True)
def train(data, head, seed, epochs, alpha, out):
    """Train one model on the train split of a dataset CSV."""
    dataset = synthbench.load_csv(data)
    X, y = dataset.split_xy("train")
    arch = nn.Architecture(input_dim=X.shape[1], head=head)
    model = nn.init_model(arch, seed)
    model = nn.train(model, X, y, nn.TrainHyper(epochs=epochs, seed=seed), alpha=alpha)
    nn.save_model(model, out)
    _echo(f"final train loss {model.train_loss_history[-1]:.6g}; checkpoint at {out}")


def _finish(config, out):
    rows = harness.run_experiment(config, log=_echo)
    written = harness.emit_report(rows, out, config=config)
    for path in written:
        _echo(f"wrote {path}")


@cli.command()
@click.option("--config", "config_path", type=click.Path(), required=True,
              help="Experiment TOML file.")
@click.option("--alpha", type=float, default=None, help="Override miscoverage rate.")
@click.option("--seed", type=int, default=None, help="Override experiment seed.")
@click.option("--small", is_flag=True, help="CI preset: small pools and datasets.")
@click.option("--out", type=click.Path(), default=None, help="Output directory.")
def evaluate(config_path, alpha, seed, small, out):
    """Run the experiment grid described by a config file."""
    if not os.path.exists(config_path):
        raise ValueError(f"config file not found: {config_path}")
    config = harness.config_from_toml(config_path)
    if alpha is not None:
        config = replace(config, alpha=alpha)
    if seed is not None:
        config = replace(config, seed=seed)
    if small:
        config = harness.apply_small_preset(config)
    _finish(config, out or config.output_dir)


@cli.command()
@click.option("--results", type=click.Path(), default="results/results.json",
              show_default=True, help="Existing results.json to reformat.")
@click.option("--out", type=click.Path(), default=None, help="Output directory.")
def report(results, out):
    """Re-emit CSV/JSON reports from an existing results.json."""
    if not os.path.exists(results):
        raise ValueError(f"results file not found: {results}")
    rows = harness.rows_from_json(results)
    for path in harness.emit_report(rows, out or os.path.dirname(results) or "."):
        _echo(f"wrote {path}")


@cli.command()
@click.option("--kind", type=click.Choice(("tails", "gap")), default="tails", show_default=True)
@click.option("--levels", type=click.IntRange(2, 5), default=5, show_default=True)
@click.option("--alpha", type=float, default=0.1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--small", is_flag=True, help="CI preset: small pools and datasets.")
@click.option("--out", type=click.Path(), default="results", show_default=True)
def sweep(kind, levels, alpha, seed, small, out):
    """Shift-intensity ladder: non-selective methods across levels 0..levels-1."""
    datasets = [synthbench.ShiftSpec(kind=kind, level=l, seed=seed) for l in range(levels)]
    config = harness.ExperimentConfig(datasets=datasets,
                                      methods=harness.NON_SELECTIVE_METHODS,
                                      alpha=alpha, seed=seed, output_dir=out)
    if small:
        config = harness.apply_small_preset(config)
    _finish(config, out)


def main(argv=None) -> int:
    """Run the CLI; exit 0 on success, 1 on validation error, 2 on runtime failure."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except (ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except RuntimeError as exc:
        click.echo(f"runtime failure: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
