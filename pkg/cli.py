"""Command-line entry point: every subcommand emits a plot-ready CSV or JSON table."""
import io
import logging
from pathlib import Path
from typing import List, Optional

import click
import numpy as np
import pandas as pd

import config
from analysis import (
    fit_exponential,
    quantum_diff_dist,
    residual_metric,
    scaling_study,
    transition_scan,
)
from calibration import calibrate
from classical_model import classical_full
from errors import FormatError, WfhdError
from ingest import (
    RunConfig,
    bin_pulse_energies,
    build_tally,
    diff_dist_frame,
    load_run_config,
    photon_dist_frame,
    read_count_summary,
    read_diff_dist,
    read_pulses,
    read_tally,
    read_transition_points,
    tally_frame,
    transition_frame,
    write_json,
    write_table,
)
from nonclassicality import analyze_tally, model_tally, sample_tally
from quantum_model import DetectorParams, ExperimentParams, interference_visibility
from states import (
    engineered_herald_dist,
    g2_of_dist,
    heralded_signal_dist,
    quadrature_grid,
    wigner_grid,
)

logger = logging.getLogger(__name__)


class WfhdGroup(click.Group):
    """Reports library errors as `error=<code> message=<text>` and exits with status 2.

    Usage errors get the same line with code usage_error, followed by click's own message.
    """

    def parse_args(self, ctx: click.Context, args: List[str]) -> List[str]:
        try:
            return super().parse_args(ctx, args)
        except click.UsageError as e:
            click.echo(f"error=usage_error message={e.format_message()}", err=True)
            raise

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except WfhdError as e:
            logger.debug("command failed", exc_info=True)
            click.echo(f"error={e.code} message={e}", err=True)
            ctx.exit(2)
        except click.UsageError as e:
            click.echo(f"error=usage_error message={e.format_message()}", err=True)
            raise


def _parse_floats(text: str, what: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise FormatError(f"{what} must be a comma-separated list of numbers, got '{text}'")


def _parse_ints(text: str, what: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise FormatError(f"{what} must be a comma-separated list of integers, got '{text}'")


def _parse_range(text: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) != 3:
        raise FormatError(f"grid must look like low:high:count, got '{text}'")
    try:
        low, high, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise FormatError(f"grid must look like low:high:count, got '{text}'")
    if count < 1 or high < low:
        raise FormatError(f"grid needs count >= 1 and high >= low, got '{text}'")
    return np.linspace(low, high, count)


def _run_config(ctx: click.Context, preset: Optional[str]) -> RunConfig:
    run_config: RunConfig = ctx.obj["run_config"]
    if preset is not None:
        run_config = run_config.model_copy(update={"preset": preset})
    return run_config


def _params(ctx: click.Context, preset: Optional[str], alpha_sq: float) -> ExperimentParams:
    return _run_config(ctx, preset).experiment_params(alpha_sq)


def _output_path(out: str) -> Path:
    # Relative targets land in the run configuration's output directory
    output_dir = click.get_current_context().find_root().obj["run_config"].output_dir
    path = output_dir / out
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _emit_table(frame: pd.DataFrame, out: str) -> None:
    if out == "-":
        buffer = io.StringIO()
        write_table(frame, buffer)
        click.echo(buffer.getvalue(), nl=False)
    else:
        write_table(frame, _output_path(out))
        logger.info(f"wrote {len(frame)} rows to {out}")


def _emit_json(payload: dict, out: str) -> None:
    if out == "-":
        buffer = io.StringIO()
        write_json(payload, buffer)
        click.echo(buffer.getvalue(), nl=False)
    else:
        write_json(payload, _output_path(out))
        logger.info(f"wrote {out}")


preset_option = click.option("--preset", type=click.Choice(sorted(config.PRESETS)), default=None,
                             help="Load measured parameters instead of the ideal defaults.")
out_option = click.option("--out", default="-", show_default=True, help="Output file, '-' for stdout.")


@click.group(cls=WfhdGroup)
@click.option("--jobs", type=click.IntRange(min=1), default=None,
              help="Worker processes for grid evaluations (WFH_SIM_JOBS overrides).")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="YAML run configuration.")
@click.option("--verbose", is_flag=True, help="Debug logging.")
@click.pass_context
def main(ctx: click.Context, jobs: Optional[int], config_path: Optional[str], verbose: bool):
    """Weak-field homodyne detection models and analysis."""
    logging.basicConfig(
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        level=logging.DEBUG if verbose else logging.INFO,
    )
    ctx.ensure_object(dict)
    run_config = load_run_config(config_path) if config_path else RunConfig()
    ctx.obj["run_config"] = run_config
    ctx.obj["jobs"] = jobs if jobs is not None else run_config.jobs


@main.command("model-quantum")
@click.option("--j", "j", type=click.IntRange(min=0), required=True, help="Herald outcome.")
@click.option("--alpha-sq", type=float, required=True, help="Coherent state mean photon number.")
@preset_option
@out_option
@click.pass_context
def model_quantum(ctx, j: int, alpha_sq: float, preset: Optional[str], out: str):
    """Photon-number difference distribution from the full quantum model."""
    dist = quantum_diff_dist(j, _params(ctx, preset, alpha_sq))
    _emit_table(diff_dist_frame(dist), out)


@main.command("model-classical")
@click.option("--j", "j", type=click.IntRange(min=0), required=True, help="Herald outcome.")
@click.option("--alpha-sq", type=float, required=True, help="Coherent state mean photon number.")
@preset_option
@out_option
@click.pass_context
def model_classical(ctx, j: int, alpha_sq: float, preset: Optional[str], out: str):
    """Difference distribution in the classical-field approximation."""
    dist = classical_full(j, _params(ctx, preset, alpha_sq))
    _emit_table(diff_dist_frame(dist), out)


@main.command("residual-metric")
@click.option("--observed", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), required=True)
@out_option
def residual_metric_command(observed: str, model_path: str, out: str):
    """Mean squared residual between two difference distributions."""
    s, nu = residual_metric(read_diff_dist(observed), read_diff_dist(model_path))
    _emit_json({"s_classical": s, "nu": nu}, out)


@main.command("transition-scan")
@click.option("--j", "j", type=click.IntRange(min=0), required=True, help="Herald outcome.")
@click.option("--grid", default=None, help="Comma-separated alpha_sq values.")
@click.option("--tally", "tallies", multiple=True,
              help="Observed tally per grid point as ALPHA_SQ=PATH; model data when omitted.")
@click.option("--reference", type=click.Choice(["classical", "quantum"]), default="classical", show_default=True)
@preset_option
@out_option
@click.pass_context
def transition_scan_command(ctx, j: int, grid: Optional[str], tallies, reference: str,
                            preset: Optional[str], out: str):
    """Residual metric against the classical model across an alpha_sq grid."""
    run_config = _run_config(ctx, preset)
    alpha_sq_grid = _parse_floats(grid, "--grid") if grid else run_config.alpha_sq_grid
    observed = None
    if tallies:
        observed = {}
        for item in tallies:
            key, sep, path = item.partition("=")
            if not sep:
                raise FormatError(f"--tally expects ALPHA_SQ=PATH, got '{item}'")
            observed[_parse_floats(key, "--tally")[0]] = read_tally(path)
    points = transition_scan(j, alpha_sq_grid, run_config.experiment_params(), observed,
                             reference, jobs=ctx.obj["jobs"])
    _emit_table(transition_frame(points), out)


@main.command("fit-alpha-min")
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--threshold", type=float, default=config.TRANSITION_THRESHOLD, show_default=True)
@click.option("--lower-cut", type=float, default=config.FIT_LOWER_CUT, show_default=True)
@click.option("--refine", is_flag=True, help="Nonlinear least-squares refinement of the log-space fit.")
@out_option
def fit_alpha_min(in_path: str, threshold: float, lower_cut: float, refine: bool, out: str):
    """Exponential fit of a transition scan and the alpha_sq where it crosses the threshold."""
    fit = fit_exponential(read_transition_points(in_path), threshold, lower_cut, refine)
    _emit_json(fit.to_json_dict(), out)


@main.command("scaling")
@click.option("--grid", default=None, help="Comma-separated alpha_sq values.")
@click.option("--outcomes", default=None, help="Comma-separated herald outcomes.")
@click.option("--threshold", type=float, default=None)
@click.option("--lower-cut", type=float, default=None)
@preset_option
@out_option
@click.pass_context
def scaling_command(ctx, grid: Optional[str], outcomes: Optional[str], threshold: Optional[float],
                    lower_cut: Optional[float], preset: Optional[str], out: str):
    """alpha_sq_min against the signal mean photon number for several herald outcomes."""
    run_config = _run_config(ctx, preset)
    result = scaling_study(
        _parse_ints(outcomes, "--outcomes") if outcomes else run_config.herald_outcomes,
        run_config.experiment_params(),
        _parse_floats(grid, "--grid") if grid else run_config.alpha_sq_grid,
        threshold if threshold is not None else run_config.threshold,
        lower_cut if lower_cut is not None else run_config.lower_cut,
        jobs=ctx.obj["jobs"],
    )
    _emit_json({
        "rows": [row.to_json_dict() for row in result.rows],
        "slope": result.slope,
        "intercept": result.intercept,
    }, out)


@main.command("nonclassicality")
@click.option("--tally", "tally_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--resamples", type=click.IntRange(min=2), default=config.BOOTSTRAP_RESAMPLES, show_default=True)
@click.option("--seed", type=int, default=None)
@out_option
@click.pass_context
def nonclassicality_command(ctx, tally_path: str, resamples: int, seed: Optional[int], out: str):
    """Submultinomial and sub-Poissonian witnesses per herald outcome."""
    seed = seed if seed is not None else ctx.obj["run_config"].seed
    summaries = analyze_tally(read_tally(tally_path), resamples=resamples, seed=seed, jobs=ctx.obj["jobs"])
    _emit_json({"sign_convention": "subtract", "results": [s.to_json_dict() for s in summaries]}, out)


@main.command("simulate-tally")
@click.option("--alpha-sq", type=float, default=0.0, show_default=True)
@click.option("--events", type=click.IntRange(min=1), default=1_000_000, show_default=True)
@click.option("--expected", is_flag=True, help="Expectation-valued counts instead of a sampled tally.")
@click.option("--seed", type=int, default=None)
@preset_option
@out_option
@click.pass_context
def simulate_tally(ctx, alpha_sq: float, events: int, expected: bool, seed: Optional[int],
                   preset: Optional[str], out: str):
    """Event tally generated from the quantum model."""
    params = _params(ctx, preset, alpha_sq)
    if expected:
        tally = model_tally(params, events)
    else:
        tally = sample_tally(params, events, seed if seed is not None else ctx.obj["run_config"].seed)
    _emit_table(tally_frame(tally), out)


@main.command("engineer")
@click.option("--m", "m", type=click.IntRange(min=0), required=True, help="Photons detected at c.")
@click.option("--n", "n", type=click.IntRange(min=0), required=True, help="Photons detected at d.")
@click.option("--alpha-sq", type=float, required=True)
@click.option("--no-interference", is_flag=True, help="Remove the overlap with the coherent state.")
@preset_option
@out_option
@click.pass_context
def engineer(ctx, m: int, n: int, alpha_sq: float, no_interference: bool, preset: Optional[str], out: str):
    """Herald-mode photon statistics conditioned on a detector outcome."""
    dist = engineered_herald_dist(m, n, _params(ctx, preset, alpha_sq), interfering=not no_interference)
    _emit_table(photon_dist_frame(dist), out)
    click.echo(f"g2={g2_of_dist(dist):.{config.SIGNIFICANT_DIGITS}g}", err=True)


@main.command("calibrate")
@click.option("--counts", "counts_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--alpha-sq", type=float, default=None, help="Also report the coincidence-dip visibility.")
@out_option
def calibrate_command(counts_path: str, alpha_sq: Optional[float], out: str):
    """Parameter table from calibration counts."""
    summary = read_count_summary(counts_path)
    record = calibrate(summary.counts(), summary.mean_herald_photons, summary.mean_herald_photons_stderr,
                       coherent_means=summary.coherent_means(),
                       coherent_means_stderr=summary.coherent_means_stderr(),
                       mode_overlap=summary.mode_overlap)
    if alpha_sq is not None:
        detector = DetectorParams(min(record.values["eta_c"], 1.0), min(record.values["eta_d"], 1.0),
                                  record.values.get("mode_overlap", 1.0), alpha_sq)
        record.values["visibility"] = interference_visibility(detector)
    _emit_json(record.to_json_dict(), out)


@main.command("states")
@click.option("--j", "j", type=click.IntRange(min=0), required=True, help="Herald outcome.")
@click.option("--kind", type=click.Choice(["photon", "quadrature", "wigner"]), default="photon", show_default=True)
@click.option("--grid", "--wigner-grid", "grid", default="-5:5:101", show_default=True,
              help="Quadrature grid as low:high:count.")
@preset_option
@out_option
@click.pass_context
def states_command(ctx, j: int, kind: str, grid: str, preset: Optional[str], out: str):
    """Photon-number, quadrature or Wigner representation of the heralded signal."""
    dist = heralded_signal_dist(j, _params(ctx, preset, 0.0).source)
    if kind == "photon":
        _emit_table(photon_dist_frame(dist), out)
        return
    xs = _parse_range(grid)
    if kind == "quadrature":
        frame = pd.DataFrame({"x": xs, "density": quadrature_grid(dist, xs)})
    else:
        w = wigner_grid(dist, xs, xs)
        x, p = np.meshgrid(xs, xs, indexing="ij")
        frame = pd.DataFrame({"x": x.ravel(), "p": p.ravel(), "w": w.ravel()})
    _emit_table(frame, out)


@main.command("bin-pulses")
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--tally-out", default=None, help="Where to write the tally CSV.")
@out_option
def bin_pulses(in_path: str, tally_out: Optional[str], out: str):
    """Photon-number bins for each detector channel and the resulting tally."""
    records = read_pulses(in_path)
    binnings = {ch: bin_pulse_energies(records, ch) for ch in ("herald", "c", "d")}
    tally = build_tally({ch: b.labels for ch, b in binnings.items()})
    if tally_out:
        _emit_table(tally_frame(tally), tally_out)
    _emit_json({
        ch: {
            "boundaries": [float(v) for v in b.boundaries],
            "peaks": [float(v) for v in b.peaks],
            "overflow_trials": b.overflow,
            "warnings": b.warnings,
        }
        for ch, b in binnings.items()
    }, out)


if __name__ == "__main__":
    main()
