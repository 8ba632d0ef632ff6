"""Batch command-line front end.

Every subcommand consumes one JSON experiment config (or the built-in
reference experiment when ``--config`` is omitted), runs a pipeline stage,
and writes provenance-stamped files into the output directory.  Identical
configs and seeds produce byte-identical outputs for any ``--workers``.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import click
import numpy as np

from . import carpet, gibbs, io_utils, pressure, spectra, verify
from .config import (
    ConfigError,
    ExperimentConfig,
    load_raw,
    parse_config,
)
from .numerics import mean_and_stderr
from .reference import default_config
from .symbolic import CapExceededError, depth_map


def _load_experiment(
    config_path: str | None,
    out_dir: str | None,
    seed: int | None,
    depth_max: int | None,
) -> ExperimentConfig:
    data = load_raw(config_path) if config_path else default_config()
    if seed is not None:
        data.setdefault("sampling", {})["masterSeed"] = int(seed)
    if out_dir is not None:
        data.setdefault("output", {})["directory"] = str(out_dir)
    if depth_max is not None:
        grids = data.setdefault("grids", {})
        schedule = grids.get("depthSchedule", list(default_config()["grids"]["depthSchedule"]))
        clipped = [n for n in schedule if n <= depth_max]
        grids["depthSchedule"] = clipped or [max(1, depth_max - 1), depth_max]
        sampling = data.setdefault("sampling", {})
        sampling["depth"] = min(
            int(sampling.get("depth", default_config()["sampling"]["depth"])), depth_max
        )
    return parse_config(data)


def _common_options(fn):
    fn = click.option(
        "--config", "config_path", type=click.Path(exists=True, dir_okay=False),
        default=None, help="JSON experiment config (default: built-in reference).",
    )(fn)
    fn = click.option(
        "--workers", type=click.IntRange(min=1), default=1, show_default=True,
        help="Worker threads for the outer reductions (never changes results).",
    )(fn)
    fn = click.option(
        "--out", "out_dir", type=click.Path(file_okay=False), default=None,
        help="Output directory (overrides the config).",
    )(fn)
    fn = click.option(
        "--seed", type=click.IntRange(min=0), default=None,
        help="Master seed override for sampling commands.",
    )(fn)
    fn = click.option(
        "--depth-max", type=click.IntRange(min=2), default=None,
        help="Clip the depth schedule and sampling depth.",
    )(fn)
    return fn


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


@click.group()
@click.version_option(io_utils.TOOL_VERSION, prog_name=io_utils.TOOL_NAME)
def main() -> None:
    """Multifractal spectra of product-shift cylinder weights and their
    Sierpinski-carpet realizations."""


def _curve_rows(curve: pressure.PressureCurve):
    for i, q in enumerate(curve.q_grid):
        yield (
            float(q),
            *(float(curve.finite_values[n][i]) for n in curve.depths),
            float(curve.extrapolated[i]),
            float(curve.error_estimate[i]),
        )


def _curve_payload(curve: pressure.PressureCurve) -> dict:
    return {
        "kind": curve.kind,
        "qGrid": curve.q_grid,
        "finiteValues": {str(n): curve.finite_values[n] for n in curve.depths},
        "extrapolated": curve.extrapolated,
        "errorEstimate": curve.error_estimate,
        "monotoneWithinError": curve.monotone_within_error,
    }


def _write_curve(cfg: ExperimentConfig, curve: pressure.PressureCurve, out: Path) -> None:
    comments = io_utils.provenance_comments(cfg.sha256)
    if "csv" in cfg.formats:
        header = ["q", *(f"value_n{n}" for n in curve.depths), "extrapolated", "error"]
        io_utils.write_csv(
            out / f"pressure_{curve.kind}.csv", header, _curve_rows(curve), comments
        )
    if "json" in cfg.formats:
        io_utils.write_json(
            out / f"pressure_{curve.kind}.json", _curve_payload(curve), cfg.sha256
        )


def _both_curves(
    cfg: ExperimentConfig, workers: int
) -> tuple[pressure.PressureCurve, pressure.PressureCurve]:
    t_curve = pressure.pressure_curve(
        cfg.weight, cfg.q_grid, cfg.depth_schedule, kind="T", workers=workers
    )
    b_curve = pressure.pressure_curve(
        cfg.weight, cfg.q_grid, cfg.depth_schedule, kind="beta", workers=workers
    )
    return t_curve, b_curve


@main.command("pressure")
@_common_options
def cmd_pressure(config_path, workers, out_dir, seed, depth_max) -> None:
    """Pressure curves T and beta over the q-grid, with extrapolation."""
    try:
        cfg = _load_experiment(config_path, out_dir, seed, depth_max)
        out = Path(cfg.output_dir)
        t_curve, b_curve = _both_curves(cfg, workers)
        _write_curve(cfg, t_curve, out)
        _write_curve(cfg, b_curve, out)
    except (ConfigError, CapExceededError, ValueError) as exc:
        _fail(str(exc))
    try:
        support = -t_curve.value_at(0.0)
        click.echo(f"support dimension -T(0) = {support!r}")
    except KeyError:
        click.echo("support dimension: q = 0 not on the grid")
    try:
        residual = b_curve.value_at(1.0)
        click.echo(f"beta(1) residual = {residual!r}")
    except KeyError:
        click.echo("beta(1) residual: q = 1 not on the grid")
    click.echo(f"wrote pressure curves to {out}")


def _spectrum_rows(spec: spectra.Spectrum):
    label = "beta" if spec.source_kind == spectra.SOURCE_BIRKHOFF_CARPET else "alpha"
    header = ["q", label, "dimension", "flag"]
    rows = [
        (float(q), float(a), float(d), flag)
        for q, a, d, flag in zip(spec.q, spec.alpha, spec.dimension, spec.flags)
    ]
    return header, rows


def _spectrum_payload(spec: spectra.Spectrum) -> dict:
    return {
        "sourceKind": spec.source_kind,
        "q": spec.q,
        "alpha": spec.alpha,
        "dimension": spec.dimension,
        "flags": list(spec.flags),
        "infimumDefect": spec.infimum_defect,
        "levelTolerance": spec.level_tolerance,
    }


@main.command("spectrum")
@_common_options
def cmd_spectrum(config_path, workers, out_dir, seed, depth_max) -> None:
    """Legendre spectra: Birkhoff, Gibbs local-dimension, and carpet-mapped."""
    try:
        cfg = _load_experiment(config_path, out_dir, seed, depth_max)
        out = Path(cfg.output_dir)
        t_curve, b_curve = _both_curves(cfg, workers)
        spectra_out = {
            "spectrum_birkhoff": spectra.legendre(t_curve),
            "spectrum_gibbs": spectra.legendre(b_curve),
            "spectrum_carpet": spectra.birkhoff_spectrum_carpet(t_curve, cfg.system),
        }
    except (ConfigError, CapExceededError, ValueError) as exc:
        _fail(str(exc))
    comments = io_utils.provenance_comments(cfg.sha256)
    for stem, spec in spectra_out.items():
        header, rows = _spectrum_rows(spec)
        if "csv" in cfg.formats:
            io_utils.write_csv(out / f"{stem}.csv", header, rows, comments)
        if "json" in cfg.formats:
            io_utils.write_json(out / f"{stem}.json", _spectrum_payload(spec), cfg.sha256)
    io_utils.write_plot_script(
        out / "spectrum.gp",
        [
            ("spectrum_birkhoff.csv", 2, 3, "Birkhoff levels"),
            ("spectrum_gibbs.csv", 2, 3, "Gibbs local dimensions"),
        ],
        title="Multifractal spectra",
        xlabel="level",
        ylabel="dimension",
        comments=comments,
    )
    click.echo(f"wrote 3 spectra and plot script to {out}")


@main.command("sample")
@_common_options
def cmd_sample(config_path, workers, out_dir, seed, depth_max) -> None:
    """Draw tilted sample paths; dump per-path statistics and a summary."""
    try:
        cfg = _load_experiment(config_path, out_dir, seed, depth_max)
        out = Path(cfg.output_dir)
        psi = cfg.weight
        q = cfg.sample_q
        kind = "beta" if cfg.sample_variant == gibbs.VARIANT_PSI_Q else "T"
        fn = pressure.finite_beta if kind == "beta" else pressure.finite_T
        level = pressure.extrapolate_pressure(
            {n: fn(psi, q, n, workers=workers) for n in cfg.depth_schedule[-3:]}
        ).value
        aux = gibbs.make_auxiliary(psi, q, level, cfg.sample_variant)
        depth = cfg.sample_depth
        horizon = cfg.sample_horizon or depth_map(cfg.system, depth)
        log_r2 = math.log(cfg.system.r2)
        rows = []
        local_dims = []
        birkhoffs = []
        for i in range(cfg.n_samples):
            path = gibbs.sample_path(
                aux, depth, horizon=horizon,
                master_seed=cfg.master_seed, sample_index=i, mass_weight=psi,
            )
            local = (
                float(path.log_ball_mass[depth - 1]) / (-depth * log_r2)
                if path.log_ball_mass is not None
                and np.isfinite(path.log_ball_mass[depth - 1])
                else float("nan")
            )
            birkhoff = (
                float(path.birkhoff[depth - 1]) / depth
                if path.birkhoff is not None
                else float("nan")
            )
            rows.append((i, birkhoff, local))
            if np.isfinite(local):
                local_dims.append(local)
            if np.isfinite(birkhoff):
                birkhoffs.append(birkhoff)
    except (ConfigError, CapExceededError, ValueError) as exc:
        _fail(str(exc))
    comments = io_utils.provenance_comments(cfg.sha256)
    io_utils.write_csv(
        out / "samples.csv",
        ["sampleIndex", "birkhoffAverage", "localDimension"],
        rows,
        comments,
    )
    summary: dict = {
        "q": q,
        "variant": cfg.sample_variant,
        "depth": depth,
        "horizon": horizon,
        "nSamples": cfg.n_samples,
        "levelConstant": level,
        "masterSeed": cfg.master_seed,
    }
    if len(local_dims) >= 2:
        mean, stderr = mean_and_stderr(np.array(local_dims))
        summary["meanLocalDimension"] = mean
        summary["stderrLocalDimension"] = stderr
    if len(birkhoffs) >= 2:
        mean, stderr = mean_and_stderr(np.array(birkhoffs))
        summary["meanBirkhoffAverage"] = mean
        summary["stderrBirkhoffAverage"] = stderr
    io_utils.write_json(out / "summary.json", summary, cfg.sha256)
    click.echo(f"wrote {cfg.n_samples} samples to {out}")


@main.command("render")
@_common_options
@click.option(
    "--depth", "render_depth", type=click.IntRange(min=1), default=4,
    show_default=True, help="Ball depth n of the rendered grid.",
)
def cmd_render(config_path, workers, out_dir, seed, depth_max, render_depth) -> None:
    """Render the measure on the r1**g(n) x r2**n grid (PGM + CSV)."""
    try:
        cfg = _load_experiment(config_path, out_dir, seed, depth_max)
        out = Path(cfg.output_dir)
        n = min(render_depth, depth_max) if depth_max else render_depth
        render = carpet.render_measure(cfg.weight, n, workers=workers)
    except (ConfigError, CapExceededError, ValueError) as exc:
        _fail(str(exc))
    out.mkdir(parents=True, exist_ok=True)
    comments = io_utils.provenance_comments(cfg.sha256)
    carpet.write_pgm16(render, out / f"render_n{n}.pgm", comments)
    carpet.write_grid_csv(render, out / f"render_n{n}.csv", comments)
    click.echo(
        f"rendered {render.column_count} x {render.row_count} grid "
        f"(total log mass {float(render.total_log_mass())!r}) into {out}"
    )


@main.command("boxcount")
@_common_options
@click.option(
    "--depth", "box_depth", type=click.IntRange(min=1), default=4,
    show_default=True, help="Ball depth n for the coarse moments.",
)
def cmd_boxcount(config_path, workers, out_dir, seed, depth_max, box_depth) -> None:
    """Coarse moment scaling tau_n(q) of the rendered measure."""
    try:
        cfg = _load_experiment(config_path, out_dir, seed, depth_max)
        out = Path(cfg.output_dir)
        n = min(box_depth, depth_max) if depth_max else box_depth
        render = carpet.render_measure(cfg.weight, n, workers=workers)
        taus = carpet.box_count_tau(render, cfg.q_grid)
    except (ConfigError, CapExceededError, ValueError) as exc:
        _fail(str(exc))
    comments = io_utils.provenance_comments(cfg.sha256)
    io_utils.write_csv(
        out / f"boxcount_n{n}.csv",
        ["q", "tau"],
        zip((float(q) for q in cfg.q_grid), taus),
        comments,
    )
    click.echo(f"wrote moment curve at depth {n} to {out}")


@main.command("check")
@_common_options
def cmd_check(config_path, workers, out_dir, seed, depth_max) -> None:
    """Evaluate the separation predicates P1, P2 and probe P3."""
    del workers
    try:
        cfg = _load_experiment(config_path, out_dir, seed, depth_max)
        out = Path(cfg.output_dir)
        p1 = carpet.check_P1(cfg.system)
        p2 = carpet.check_P2(cfg.system)
        schedule = [n for n in cfg.depth_schedule if n <= 16] or [2, 4]
        report = carpet.p3_scan(cfg.system, cfg.weight, depth_schedule=schedule)
    except (ConfigError, CapExceededError, ValueError) as exc:
        _fail(str(exc))
    payload = {
        "P1": p1,
        "P2": p2,
        "P3": {
            "verdict": "indicative" if report.holds else "indeterminate",
            "subsetHolds": report.subset_holds,
            "terminalDefect": report.terminal_defect,
            "depths": list(report.depths),
            "defects": list(report.defects),
        },
    }
    io_utils.write_json(out / "check.json", payload, cfg.sha256)
    click.echo(json.dumps(io_utils.jsonable(payload), indent=2, sort_keys=True))


@main.command("verify")
@_common_options
def cmd_verify(config_path, workers, out_dir, seed, depth_max) -> None:
    """Run the verification suite; exit 0 only if every criterion passes."""
    del seed, depth_max
    try:
        cfg = (
            _load_experiment(config_path, out_dir, None, None)
            if config_path
            else None
        )
    except ConfigError as exc:
        _fail(str(exc))
    results = verify.run_all(workers=workers, config=cfg)
    width = max(len(r.name) for r in results)
    failed = 0
    for r in results:
        line = f"[{r.status:>4}] {r.index:>2}. {r.name:<{width}}  {r.elapsed:6.2f}s  {r.detail}"
        click.echo(line)
        if r.passed is False:
            failed += 1
    applicable = sum(1 for r in results if r.passed is not None)
    click.echo(
        f"{applicable - failed}/{applicable} applicable criteria passed"
        + (f", {len(results) - applicable} not applicable" if applicable < len(results) else "")
    )
    if failed:
        sys.exit(1)


if __name__ == "__main__":
    main()
