"""Command line entry point: ``adtvlc {simulate,baseline,steer,illuminance,compare}``."""

from __future__ import annotations

import csv
import dataclasses
import logging
import sys
from pathlib import Path

import click

from .scenario import (
    TRACE_COLUMNS,
    ConfigError,
    ScenarioConfig,
    Simulation,
    export_results,
    format_value,
    illuminance_rows,
    load_config,
    trace_rows,
    write_csv,
)


def _parse_pos(text: str, cfg: ScenarioConfig) -> tuple[float, float]:
    try:
        parts = [float(v) for v in text.split(",")]
    except ValueError:
        raise click.BadParameter(f"expected x,y or x,y,z, got {text!r}", param_hint="--pos") from None
    if len(parts) not in (2, 3):
        raise click.BadParameter(f"expected x,y or x,y,z, got {text!r}", param_hint="--pos")
    if len(parts) == 3 and abs(parts[2] - cfg.cf_height) > 1e-9:
        raise click.BadParameter(f"z must equal the communication floor height {cfg.cf_height}", param_hint="--pos")
    return parts[0], parts[1]


def _config(ctx: click.Context, positions: tuple[str, ...], **overrides) -> ScenarioConfig:
    try:
        cfg = load_config(ctx.obj["config"])
        if positions:
            overrides["positions"] = tuple(_parse_pos(p, cfg) for p in positions)
        return dataclasses.replace(cfg, **overrides) if overrides else cfg
    except (ConfigError, OSError) as exc:
        raise click.UsageError(str(exc)) from None


def _table(header, rows) -> None:
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([format_value(v) for v in r])


pos_option = click.option("--pos", "positions", multiple=True, help="Receiver position x,y[,z]; repeatable.")
out_option = click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None, help="Output directory.")
threads_option = click.option("--threads", default=1, show_default=True, type=click.IntRange(1), help="Worker threads.")


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Flat TOML scenario file; missing keys take the defaults.")
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def main(ctx: click.Context, config_path, verbose):
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")
    ctx.obj = {"config": config_path}


def _report(result, out_dir) -> None:
    rows = []
    for p in result.positions:
        m = p.metrics
        x, y, _ = p.position
        rows.append((x, y, None, None, None) if m is None else (x, y, m.delay_spread, m.snr_db, m.best_branch_index))
    _table(("x_m", "y_m", "delay_spread_s", "snr_db", "adr_branch"), rows)
    click.echo(f"max_data_rate_bps,{format_value(result.max_data_rate)}")
    if out_dir:
        for f in export_results(result, out_dir):
            click.echo(f"wrote {f}", err=True)


@main.command()
@pos_option
@out_option
@threads_option
@click.pass_context
def simulate(ctx, positions, out_dir, threads):
    """Run the proposed steered system."""
    sim = Simulation(_config(ctx, positions, mode="steered"))
    _report(sim.run_proposed(threads), out_dir)


@main.command()
@pos_option
@out_option
@threads_option
@click.pass_context
def baseline(ctx, positions, out_dir, threads):
    """Run the baseline system (all units transmit, no steering)."""
    sim = Simulation(_config(ctx, positions, mode="baseline"))
    _report(sim.run_baseline(threads), out_dir)


@main.command()
@click.option("--pos", "position", default="2,4,1", show_default=True, help="Receiver position x,y[,z].")
@click.pass_context
def steer(ctx, position):
    """Branch selection and quadrant search at one position; prints the search trace."""
    cfg = _config(ctx, (position,))
    sim = Simulation(cfg)
    x, y = cfg.positions[0]
    state = sim.steer(x, y)
    click.echo(f"# selected unit {state.unit_id} branch {state.branch_id}")
    _table(TRACE_COLUMNS, trace_rows(state.trace))
    cell = state.cell
    click.echo(f"# final cell center ({cell.center[0]:.4f}, {cell.center[1]:.4f}) "
               f"half-widths ({cell.half_width_x:.4f}, {cell.half_width_y:.4f}) m")


@main.command()
@click.option("--calibrate", "target", type=float, default=None,
              help="Scale luminous flux so the grid minimum equals this value (lx).")
@out_option
@click.pass_context
def illuminance(ctx, target, out_dir):
    """Direct illuminance over the evaluation grid."""
    overrides = {"calibrate": False} if target is None else {"calibrate": True, "target_min_lux": target}
    cfg = _config(ctx, (), **overrides)
    sim = Simulation(cfg)
    il = sim.illuminance(sim.adt_units + sim.illum_units)
    click.echo(f"min_lux,{format_value(il.min_lux)}")
    click.echo(f"max_lux,{format_value(il.max_lux)}")
    click.echo(f"flux_scale,{format_value(il.flux_scale)}")
    if out_dir:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        path = Path(out_dir) / "illuminance.csv"
        write_csv(path, ("x_m", "y_m", "lux"), illuminance_rows(il))
        click.echo(f"wrote {path}", err=True)


@main.command()
@pos_option
@out_option
@threads_option
@click.pass_context
def compare(ctx, positions, out_dir, threads):
    """Run both systems and tabulate delay spread and SNR side by side."""
    cfg = _config(ctx, positions)
    sim = Simulation(cfg)
    steered = sim.run_proposed(threads)
    base = sim.run_baseline(threads)
    rows = []
    for s, b in zip(steered.positions, base.positions):
        x, y, _ = s.position
        ms, mb = s.metrics, b.metrics
        ratio = None
        if ms and mb and ms.delay_spread > 0:
            ratio = mb.delay_spread / ms.delay_spread
        rows.append((x, y, mb and mb.delay_spread, ms and ms.delay_spread, ratio, mb and mb.snr_db, ms and ms.snr_db))
    _table(("x_m", "y_m", "delay_spread_baseline_s", "delay_spread_steered_s", "delay_spread_ratio",
            "snr_baseline_db", "snr_steered_db"), rows)
    if out_dir:
        for sub, res in (("steered", steered), ("baseline", base)):
            for f in export_results(res, Path(out_dir) / sub):
                click.echo(f"wrote {f}", err=True)
