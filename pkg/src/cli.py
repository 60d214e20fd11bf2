import logging
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import typer
import yaml
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from .exceptions import ConfigError, DesignDomainError, NetworkError
from .globals import DEFAULT_THREADS
from .lib.design.isolator import (
    optimal_detuning,
    optimal_loop_phase,
    optimal_transmission_difference,
    optimize_design,
)
from .lib.expansion.expanded import build_expanded_network, edge_list
from .lib.expansion.reduction import depth_convergence, effective_from_network
from .lib.fit.noise_fit import fit_noise
from .lib.fit.problem import FitProblem, NoiseFitProblem
from .lib.fit.scattering_fit import fit_scattering
from .lib.io.config import RunConfig, load_config
from .lib.io.tables import NOISE_COLUMNS, SWEEP_COLUMNS, OutputFormat, get_writer, load_observed
from .lib.network.scattering import sweep_scattering, to_db
from .lib.noise.spectra import noise_map

logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

DESIGN_COLUMNS = (
    "branch",
    "phase_deg",
    "delta3",
    "delta4",
    "delta_T",
    "bandwidth_hz",
    "closed_form_phase_deg",
    "closed_form_delta3",
    "closed_form_delta4",
    "closed_form_delta_T",
)
EDGE_COLUMNS = ("mode_a", "mode_b", "drive", "beta", "cooperativity", "signal_freq_a", "signal_freq_b")
FIT_COLUMNS = ("parameter", "value", "standard_error")

app = typer.Typer(
    help="Coupled-mode network models of a two-cavity optomechanical isolator.",
    no_args_is_help=True,
    add_completion=False,
)
# Summaries go to stderr so tables on stdout stay machine-readable
console = Console(stderr=True)

ConfigOption = typer.Option(..., "--config", "-c", help="YAML or JSON run configuration")
OutOption = typer.Option(None, "--out", "-o", help="Output file; stdout when omitted")
FormatOption = typer.Option(None, "--format", help="Output format, overrides the config")
ThreadsOption = typer.Option(DEFAULT_THREADS, "--threads", min=1, help="Worker threads for phase sweeps")


def _run(action: Callable[[], None]) -> None:
    try:
        action()
    except NetworkError as e:
        console.print(f"[bold red]Numerical failure:[/bold red] {e}")
        raise typer.Exit(EXIT_NUMERICAL)
    except (ConfigError, ValidationError, ValueError, yaml.YAMLError, OSError) as e:
        console.print(f"[bold red]Configuration error:[/bold red] {e}")
        raise typer.Exit(EXIT_CONFIG)


def _emit(config: RunConfig, out: Optional[Path], fmt: Optional[OutputFormat], columns, rows, extra=None) -> None:
    header = config.resolved()
    if extra:
        header.update(extra)
    path = out if out is not None else (Path(config.output.path) if config.output.path else None)
    writer = get_writer(fmt or config.output.format, config.output.precision)
    text = writer.write(path, columns, rows, header)
    if path is None:
        typer.echo(text, nl=False)


def _center_summary(result, title: str) -> None:
    center = int(np.argmin(np.abs(result.offsets)))
    table = Table(title=f"{title} at offset {result.offsets[center]:.4g} Hz")
    table.add_column("phase (deg)", justify="right")
    for port_out, port_in in result.ports:
        table.add_column(f"|S({port_out},{port_in})|² dB", justify="right")
    for p, phase in enumerate(result.phases):
        values = [f"{float(to_db(v)):.2f}" for v in result.power[p, center]]
        table.add_row(f"{np.degrees(phase):.2f}", *values)
    console.print(table)


def _scattering_rows(config: RunConfig, threads: int, summary: str):
    model = config.scattering_model()
    network = model.network()
    phases = config.sweep.phases(default=network.loop_phase)
    result = sweep_scattering(network, config.sweep.offsets(), phases, config.sweep.ports, threads=threads)
    _center_summary(result, summary)
    return list(result.rows())


@app.command()
def spectrum(
    config: Path = ConfigOption,
    out: Optional[Path] = OutOption,
    fmt: Optional[OutputFormat] = FormatOption,
    threads: int = ThreadsOption,
):
    """|S|² against probe offset for the configured port pairs."""

    def action():
        run = load_config(config)
        rows = _scattering_rows(run, threads, "Spectrum")
        _emit(run, out, fmt, SWEEP_COLUMNS, rows)

    _run(action)


@app.command()
def sweep(
    config: Path = ConfigOption,
    out: Optional[Path] = OutOption,
    fmt: Optional[OutputFormat] = FormatOption,
    threads: int = ThreadsOption,
):
    """|S|² maps over the offset by loop-phase grid."""

    def action():
        run = load_config(config)
        rows = _scattering_rows(run, threads, "Sweep center")
        _emit(run, out, fmt, SWEEP_COLUMNS, rows)

    _run(action)


@app.command()
def design(
    config: Path = ConfigOption,
    out: Optional[Path] = OutOption,
    fmt: Optional[OutputFormat] = FormatOption,
):
    """Optimal loop phase, detunings and transmission difference."""

    def action():
        run = load_config(config)
        if run.isolator is None:
            raise ConfigError("design needs an isolator section")
        spec = run.isolator
        pair = optimize_design(
            spec.C3, spec.C4, spec.eta1, spec.eta2, spec.gamma3_hz, spec.gamma4_hz, spec.edge_cooperativities
        )
        try:
            closed_phase = optimal_loop_phase(spec.C3, spec.C4)[0]
            closed_delta = optimal_detuning(spec.C3, spec.C4, closed_phase)[0]
            closed_delta_T = optimal_transmission_difference(spec.C3, spec.C4, spec.eta1, spec.eta2)
        except DesignDomainError as e:
            logger.warning(f"No closed-form optimum: {e}")
            closed_phase, closed_delta, closed_delta_T = float("nan"), (float("nan"),) * 2, float("nan")

        rows = []
        table = Table(title=f"Isolator design, C3={spec.C3:g}, C4={spec.C4:g}")
        for column in ("branch", "phase (deg)", "δ3", "δ4", "ΔT", "Γ_NR (Hz)"):
            table.add_column(column, justify="right")
        for branch, point, sign in (("forward", pair.forward, 1.0), ("reverse", pair.reverse, -1.0)):
            bandwidth = point.bandwidth if point.bandwidth is not None else float("nan")
            rows.append(
                {
                    "branch": branch,
                    "phase_deg": float(np.degrees(point.phase_opt)),
                    "delta3": point.delta_opt,
                    "delta4": point.delta4,
                    "delta_T": point.delta_T,
                    "bandwidth_hz": float(bandwidth),
                    "closed_form_phase_deg": sign * float(np.degrees(closed_phase)),
                    "closed_form_delta3": float(closed_delta[0]),
                    "closed_form_delta4": float(closed_delta[1]),
                    "closed_form_delta_T": sign * float(closed_delta_T),
                }
            )
            table.add_row(
                branch,
                f"{np.degrees(point.phase_opt):.3f}",
                f"{point.delta_opt:.4f}",
                f"{point.delta4:.4f}",
                f"{point.delta_T:.4f}",
                f"{bandwidth:.4g}",
            )
        console.print(table)
        console.print(
            f"Closed form: phase {np.degrees(closed_phase):.3f} deg, "
            f"δ = ({closed_delta[0]:.4f}, {closed_delta[1]:.4f}), ΔT = {closed_delta_T:.4f}"
        )
        _emit(run, out, fmt, DESIGN_COLUMNS, rows)

    _run(action)


@app.command()
def noise(
    config: Path = ConfigOption,
    out: Optional[Path] = OutOption,
    fmt: Optional[OutputFormat] = FormatOption,
    threads: int = ThreadsOption,
):
    """Output noise of each port over the offset by loop-phase grid."""

    def action():
        run = load_config(config)
        network = run.scattering_model().network()
        phases = run.sweep.phases(default=network.loop_phase)
        result = noise_map(
            network, run.noise.amplifier_chain(), run.noise.ports, run.sweep.offsets(), phases, threads=threads
        )
        table = Table(title="Peak output noise (quanta)")
        table.add_column("phase (deg)", justify="right")
        for port in result.ports:
            table.add_column(port, justify="right")
        for p, phase in enumerate(result.phases):
            peaks = [f"{np.nanmax(result.quanta[p, :, q]):.3f}" for q in range(len(result.ports))]
            table.add_row(f"{np.degrees(phase):.2f}", *peaks)
        console.print(table)
        _emit(run, out, fmt, NOISE_COLUMNS, list(result.rows()))

    _run(action)


@app.command()
def reduce(
    config: Path = ConfigOption,
    out: Optional[Path] = OutOption,
    fmt: Optional[OutputFormat] = FormatOption,
):
    """Effective four-mode parameters of the expanded device, with its edge list."""

    def action():
        run = load_config(config)
        if run.device is None or run.drives is None:
            raise ConfigError("reduce needs device and drives sections")
        tones = run.drives.drive_tones(run.device)
        network = build_expanded_network(run.device, tones, run.model.depth)
        effective = effective_from_network(network)
        console.print(f"[bold]{effective.mode_count} modes, {effective.coupling_count} couplings[/bold]")

        table = Table(title="Effective parameters")
        table.add_column("quantity")
        table.add_column("mech1", justify="right")
        table.add_column("mech2", justify="right")
        table.add_row("Γ_eff (Hz)", *(f"{g:.5g}" for g in effective.gamma_eff))
        table.add_row("n_eff", *(f"{n:.4g}" for n in effective.n_eff))
        table.add_row("frequency pull (Hz)", *(f"{p:.4g}" for p in effective.frequency_pull))
        console.print(table)
        console.print(
            "C_eff: " + ", ".join(f"C{label}={value:.4g}" for label, value in effective.cooperativities.items())
        )

        extra = {"effective": effective.model_dump(mode="json")}
        if run.model.convergence_depths:
            convergence = depth_convergence(run.device, tones, run.model.convergence_depths)
            extra["convergence"] = convergence
            for row in convergence:
                console.print(
                    f"depth {row['depth']}: {row['modes']} modes, {row['couplings']} couplings, "
                    f"Γ_eff = {row['gamma1_eff_hz']:.5g} / {row['gamma2_eff_hz']:.5g} Hz"
                )
        _emit(run, out, fmt, EDGE_COLUMNS, edge_list(network), extra)

    _run(action)


@app.command()
def fit(
    config: Path = ConfigOption,
    data: Optional[Path] = typer.Option(None, "--data", help="Measured table; defaults to the fit section's path"),
    kind: Optional[str] = typer.Option(None, "--kind", help="scattering or noise"),
    out: Optional[Path] = OutOption,
    fmt: Optional[OutputFormat] = FormatOption,
    seed: Optional[int] = typer.Option(None, "--seed", help="Seed for the perturbed restarts"),
):
    """Least-squares fit of a measured map to the model."""

    def action():
        run = load_config(config)
        source = data if data is not None else (Path(run.fit.data) if run.fit.data else None)
        if source is None:
            raise ConfigError("fit needs --data or a fit.data path")
        fit_kind = kind or run.fit.kind
        if fit_kind not in ("scattering", "noise"):
            raise ConfigError(f"Unknown fit kind {fit_kind!r}")
        observed = load_observed(source)
        model = run.scattering_model()

        if fit_kind == "scattering":
            problem = FitProblem(data=observed, model=model, free=run.fit.free)
            report = fit_scattering(problem, restarts=run.fit.restarts, seed=seed)
        else:
            problem = NoiseFitProblem(
                data=observed,
                chain=run.noise.amplifier_chain(),
                baths=run.fit.baths,
                fit_added_noise=run.fit.fit_added_noise,
            )
            report = fit_noise(problem, model)

        table = Table(title=f"{fit_kind.capitalize()} fit")
        for column in FIT_COLUMNS:
            table.add_column(column, justify="right")
        for name, value in report.parameters.items():
            table.add_row(name, f"{value:.6g}", f"{report.standard_errors[name]:.3g}")
        console.print(table)
        console.print(f"Residual norm {report.initial_residual_norm:.4e} -> {report.residual_norm:.4e}")
        if report.rank_deficient:
            console.print(f"[yellow]Unidentifiable combinations:[/yellow] {report.null_space}")

        rows = [
            {"parameter": name, "value": value, "standard_error": report.standard_errors[name]}
            for name, value in report.parameters.items()
        ]
        _emit(run, out, fmt, FIT_COLUMNS, rows, {"fit": report.model_dump(mode="json")})

    _run(action)


if __name__ == "__main__":
    app()
