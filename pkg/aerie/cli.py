"""Command-line interface for aerie."""

import io
from contextlib import contextmanager
from dataclasses import asdict
from pathlib import Path
from typing import Callable, Iterator, List, Optional

import numpy as np
import typer
from rich.console import Console
from rich.panel import Panel
from rich.progress import BarColumn, MofNCompleteColumn, Progress, SpinnerColumn, TextColumn
from rich.table import Table

from aerie import trainer as tr
from aerie import vqc
from aerie.agents import CLASSICAL, QUANTUM, parameter_counts
from aerie.channel import MCS_TABLE, write_mcs_table
from aerie.config import ConfigManager, ExperimentConfig
from aerie.environment import NUM_ACTIONS
from aerie.errors import AerieError, ConfigurationError, NumericError, UsageError
from aerie.gradcheck import DEFAULT_TOLERANCE, run_gradient_checks
from aerie.log import configure_logging
from aerie.metrics import (
    EpochMetrics,
    export_plot_data,
    summarize,
    write_json,
    write_metrics_csv,
    write_rows_csv,
)

app = typer.Typer(
    name="aerie",
    help="Aerie - quantum multi-agent actor-critic for UAV base-station placement",
    add_completion=False,
)
console = Console()

STOCHASTIC_CAVEAT = (
    "Single training runs are stochastic; the comparison is directional and may flip "
    "on small seed counts."
)


def _config_option():
    return typer.Option(None, "--config", "-c", help="TOML experiment config")


def _set_option():
    return typer.Option(None, "--set", "-s", help="Override a setting, dotted.key=value (repeatable)")


def _seed_option():
    return typer.Option(None, "--seed", help="Root seed (overrides the config)")


def _out_option():
    return typer.Option(None, "--out", "-o", help="Output directory (overrides the config and AERIE_OUT_DIR)")


def _verbose_option():
    return typer.Option(False, "--verbose", "-v", help="Debug logging")


def _report(exc: AerieError) -> None:
    console.print(f"error[{exc.kind}]: {exc}", style="bold red", markup=False, soft_wrap=True)


@contextmanager
def _handled() -> Iterator[None]:
    """Map aerie errors to exit codes: 2 for bad input, 1 for runtime failures."""
    try:
        yield
    except (ConfigurationError, UsageError) as exc:
        _report(exc)
        raise typer.Exit(2)
    except AerieError as exc:
        _report(exc)
        raise typer.Exit(1)


def _load(
    config: Optional[Path],
    overrides: Optional[List[str]],
    seed: Optional[int] = None,
    out: Optional[Path] = None,
    verbose: bool = False,
) -> ExperimentConfig:
    configure_logging(verbose)
    return ConfigManager(config).load(overrides or [], seed=seed, out_dir=out)


def _seed_list(cfg: ExperimentConfig, seeds: int) -> list[int]:
    if seeds < 1:
        raise UsageError(f"--seeds must be at least 1, got {seeds}")
    return list(range(cfg.seed, cfg.seed + seeds))


@contextmanager
def _progress(description: str, total: int) -> Iterator[Callable[..., None]]:
    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        MofNCompleteColumn(),
        console=console,
        transient=True,
    ) as progress:
        task = progress.add_task(description, total=total)
        yield lambda *_: progress.advance(task)


def _write_run(cfg: ExperimentConfig, run_dir: Path, metrics: list[EpochMetrics], **extra) -> dict:
    write_metrics_csv(run_dir / cfg.output.metrics_file, metrics, cfg.fingerprint(), cfg.seed)
    summary = summarize(metrics)
    summary.update(config_sha256=cfg.fingerprint(), seed=cfg.seed, **extra)
    write_json(run_dir / cfg.output.summary_file, summary)
    return summary


def _show_summary(title: str, summary: dict, run_dir: Path) -> None:
    lines = [
        f"reward              {summary['reward']['mean']:.4f} ± {summary['reward']['std']:.4f}",
        f"support rate        {summary['support_rate']['mean']:.3f}",
        f"QoS total           {summary['qos_total']['mean']:.3f}",
        f"energy remaining    {summary['energy_remaining_mean']['mean']:.0f} J",
        f"trailing window     {summary['window']} of {summary['records']}",
        f"output              {run_dir}",
    ]
    console.print(Panel("\n".join(lines), title=title, expand=False))


def _merge(cfg: ExperimentConfig, base: Path, seeds: list[int], summaries: list[dict]) -> None:
    rewards = np.array([s["reward"]["mean"] for s in summaries])
    merged = {
        "config_sha256": cfg.fingerprint(),
        "seeds": seeds,
        "runs": summaries,
        "trailing_reward": {"mean": float(rewards.mean()), "std": float(rewards.std())},
    }
    write_json(base / cfg.output.summary_file, merged)
    console.print(
        f"[bold]{len(seeds)} seeds:[/bold] trailing reward {rewards.mean():.4f} ± {rewards.std():.4f}"
    )


def _train_runs(cfg: ExperimentConfig, command: str, seeds: int, runner) -> None:
    base = Path(cfg.output.out_dir) / command
    seed_list = _seed_list(cfg, seeds)
    summaries = []
    for seed in seed_list:
        run_cfg = cfg.model_copy(update={"seed": seed})
        run_dir = base if len(seed_list) == 1 else base / f"seed-{seed}"
        with _progress(f"{command} seed {seed}", run_cfg.train.epochs) as advance:
            result = runner(run_cfg, run_dir / cfg.output.checkpoint_file, on_epoch=advance)
        summary = _write_run(run_cfg, run_dir, result.metrics, epochs=result.trainer.epochs_done)
        _show_summary(f"{command} · seed {seed}", summary, run_dir)
        summaries.append(summary)
    if len(seed_list) > 1:
        _merge(cfg, base, seed_list, summaries)


@app.command()
def train(
    config: Optional[Path] = _config_option(),
    overrides: Optional[List[str]] = _set_option(),
    seed: Optional[int] = _seed_option(),
    out: Optional[Path] = _out_option(),
    seeds: int = typer.Option(1, "--seeds", help="Independent runs on consecutive seeds"),
    verbose: bool = _verbose_option(),
):
    """Train quantum actors and the centralized quantum critic."""
    with _handled():
        cfg = _load(config, overrides, seed, out, verbose)
        _train_runs(cfg, "train", seeds, tr.train)


@app.command("baseline-classical")
def baseline_classical(
    config: Optional[Path] = _config_option(),
    overrides: Optional[List[str]] = _set_option(),
    seed: Optional[int] = _seed_option(),
    out: Optional[Path] = _out_option(),
    seeds: int = typer.Option(1, "--seeds", help="Independent runs on consecutive seeds"),
    verbose: bool = _verbose_option(),
):
    """Train the same loop with single-hidden-layer perceptrons."""
    with _handled():
        cfg = _load(config, overrides, seed, out, verbose)
        _train_runs(cfg, "baseline-classical", seeds, tr.baseline_classical)


@app.command("baseline-random")
def baseline_random(
    config: Optional[Path] = _config_option(),
    overrides: Optional[List[str]] = _set_option(),
    seed: Optional[int] = _seed_option(),
    out: Optional[Path] = _out_option(),
    seeds: int = typer.Option(1, "--seeds", help="Independent runs on consecutive seeds"),
    episodes: Optional[int] = typer.Option(None, "--episodes", help="Episodes per run"),
    verbose: bool = _verbose_option(),
):
    """Roll out UAVs that move uniformly at random."""
    with _handled():
        cfg = _load(config, overrides, seed, out, verbose)
        base = Path(cfg.output.out_dir) / "baseline-random"
        seed_list = _seed_list(cfg, seeds)
        count = episodes or cfg.train.inference_episodes
        summaries = []
        for run_seed in seed_list:
            run_cfg = cfg.model_copy(update={"seed": run_seed})
            run_dir = base if len(seed_list) == 1 else base / f"seed-{run_seed}"
            with _progress(f"random walk seed {run_seed}", count) as advance:
                metrics = tr.baseline_random_walk(run_cfg, count, on_episode=advance)
            summary = _write_run(run_cfg, run_dir, metrics)
            _show_summary(f"random walk · seed {run_seed}", summary, run_dir)
            summaries.append(summary)
        if len(seed_list) > 1:
            _merge(cfg, base, seed_list, summaries)


@app.command()
def infer(
    checkpoint: Optional[Path] = typer.Option(None, "--checkpoint", help="Checkpoint JSON (default: <out>/train/checkpoint.json)"),
    episodes: Optional[int] = typer.Option(None, "--episodes", help="Greedy episodes to roll out"),
    trace: bool = typer.Option(False, "--trace", help="Write a per-step trace of the first episode"),
    config: Optional[Path] = _config_option(),
    overrides: Optional[List[str]] = _set_option(),
    seed: Optional[int] = _seed_option(),
    out: Optional[Path] = _out_option(),
    seeds: int = typer.Option(
        1, "--seeds", help="Consecutive seeds; each reads train/seed-<k>/ unless --checkpoint is given"
    ),
    verbose: bool = _verbose_option(),
):
    """Roll out a trained policy without exploration or learning."""
    with _handled():
        cfg = _load(config, overrides, seed, out, verbose)
        base = Path(cfg.output.out_dir) / "infer"
        trained = Path(cfg.output.out_dir) / "train"
        seed_list = _seed_list(cfg, seeds)
        count = episodes or cfg.train.inference_episodes
        summaries = []
        for run_seed in seed_list:
            run_cfg = cfg.model_copy(update={"seed": run_seed})
            single = len(seed_list) == 1
            run_dir = base if single else base / f"seed-{run_seed}"
            path = checkpoint or (trained if single else trained / f"seed-{run_seed}") / cfg.output.checkpoint_file
            rows: Optional[list] = [] if trace else None
            with _progress(f"inference seed {run_seed}", count) as advance:
                metrics = tr.infer(run_cfg, path, count, rows, on_episode=advance)
            summary = _write_run(run_cfg, run_dir, metrics, checkpoint=str(path))
            if rows:
                write_rows_csv(run_dir / cfg.output.trace_file, rows, run_cfg.fingerprint(), run_seed)
            _show_summary(f"inference · seed {run_seed}", summary, run_dir)
            summaries.append(summary)
        if len(seed_list) > 1:
            _merge(cfg, base, seed_list, summaries)


@app.command()
def robustness(
    config: Optional[Path] = _config_option(),
    overrides: Optional[List[str]] = _set_option(),
    seed: Optional[int] = _seed_option(),
    out: Optional[Path] = _out_option(),
    seeds: int = typer.Option(5, "--seeds", help="Seeds per training condition"),
    episodes: Optional[int] = typer.Option(None, "--episodes", help="Evaluation episodes per trained policy"),
    arms: Optional[List[str]] = typer.Option(
        None, "--arm", help="Training noise arm, repeatable: noise-free, state-noise, action-noise, dual-noise"
    ),
    verbose: bool = _verbose_option(),
):
    """Train under each noise arm and evaluate every policy under dual noise."""
    with _handled():
        cfg = _load(config, overrides, seed, out, verbose)
        seed_list = _seed_list(cfg, seeds)
        arm_list = list(arms) if arms else list(tr.NOISE_ARMS)
        with _progress("robustness runs", len(arm_list) * len(seed_list)) as advance:
            report = tr.robustness(cfg, seed_list, episodes, on_run=advance, arms=arm_list)

        run_dir = Path(cfg.output.out_dir) / "robustness"
        rows = [asdict(row) for row in report.rows]
        write_rows_csv(run_dir / "robustness.csv", rows, cfg.fingerprint(), cfg.seed)
        medians = {
            label: {metric: report.median(label, metric) for metric in ("support_rate", "qos_total", "reward")}
            for label in report.arms
        }
        write_json(
            run_dir / cfg.output.summary_file,
            {
                "config_sha256": cfg.fingerprint(),
                "seeds": seed_list,
                "medians": medians,
                "noisy_policy_holds_up": report.noisy_policy_holds_up,
                "caveat": STOCHASTIC_CAVEAT,
            },
        )

        table = Table(title="Evaluation under dual noise (medians over seeds)")
        table.add_column("Trained", style="cyan")
        table.add_column("Support rate", justify="right")
        table.add_column("QoS total", justify="right")
        table.add_column("Reward", justify="right")
        for label, values in medians.items():
            table.add_row(label, f"{values['support_rate']:.3f}", f"{values['qos_total']:.3f}", f"{values['reward']:.4f}")
        console.print(table)
        verdict = "holds up" if report.noisy_policy_holds_up else "falls behind"
        console.print(f"Dual-noise-trained policy {verdict} on support rate.")
        console.print(f"[dim]{STOCHASTIC_CAVEAT}[/dim]")


@app.command()
def benefit(
    config: Optional[Path] = _config_option(),
    overrides: Optional[List[str]] = _set_option(),
    seed: Optional[int] = _seed_option(),
    out: Optional[Path] = _out_option(),
    seeds: int = typer.Option(5, "--seeds", help="Consecutive seeds to train and roll out"),
    episodes: Optional[int] = typer.Option(None, "--episodes", help="Random-walk episodes per seed"),
    strict: bool = typer.Option(False, "--strict", help="Exit 1 when the ratio is below the threshold"),
    verbose: bool = _verbose_option(),
):
    """Compare trained trailing-window reward with the random walk."""
    with _handled():
        cfg = _load(config, overrides, seed, out, verbose)
        seed_list = _seed_list(cfg, seeds)
        with _progress("benefit runs", len(seed_list)) as advance:
            report = tr.learning_benefit(cfg, seed_list, episodes, on_run=advance)

        run_dir = Path(cfg.output.out_dir) / "benefit"
        rows = [
            {"seed": s, "trained_reward": t, "random_reward": r}
            for s, t, r in zip(report.seeds, report.trained_reward, report.random_reward)
        ]
        write_rows_csv(run_dir / "benefit.csv", rows, cfg.fingerprint(), cfg.seed)
        write_json(
            run_dir / cfg.output.summary_file,
            {
                "config_sha256": cfg.fingerprint(),
                "seeds": seed_list,
                "ratio": report.ratio if np.isfinite(report.ratio) else None,
                "threshold": report.threshold,
                "passes": report.passes,
                "caveat": STOCHASTIC_CAVEAT,
            },
        )

        table = Table(title="Mean reward per episode")
        table.add_column("Seed", style="cyan", justify="right")
        table.add_column("Trained (trailing)", justify="right")
        table.add_column("Random walk", justify="right")
        for row in rows:
            table.add_row(str(row["seed"]), f"{row['trained_reward']:.4f}", f"{row['random_reward']:.4f}")
        console.print(table)
        verdict = "meets" if report.passes else "misses"
        console.print(f"Trained/random ratio {report.ratio:.2f} {verdict} the {report.threshold}x threshold.")
        console.print(f"[dim]{STOCHASTIC_CAVEAT}[/dim]")
        if strict and not report.passes:
            raise AerieError(f"trained reward is {report.ratio:.2f}x the random walk, below {report.threshold}x")


@app.command("param-count")
def param_count(
    config: Optional[Path] = _config_option(),
    overrides: Optional[List[str]] = _set_option(),
):
    """Parameter counts and per-epoch cost counters, quantum against classical."""
    with _handled():
        cfg = _load(config, overrides)
        sc, mc = cfg.scenario, cfg.model
        quantum_cfg = mc.model_copy(update={"kind": QUANTUM})
        classical_cfg = mc.model_copy(update={"kind": CLASSICAL})
        quantum = parameter_counts(quantum_cfg, sc)
        classical = parameter_counts(classical_cfg, sc)

        rng = np.random.default_rng(0)
        actor_in, critic_in = mc.actor_input_dim(sc), mc.critic_input_dim(sc)
        actor_circuit = vqc.CircuitModel.create(
            mc.actor_qubits, actor_in, range(NUM_ACTIONS), mc.actor_blocks, vqc.ACTOR, rng
        )
        critic_circuit = vqc.CircuitModel.create(mc.critic_qubits, critic_in, (0,), mc.critic_blocks, vqc.CRITIC, rng)
        quantum_cost = vqc.qmacn_training_cost(
            vqc.complexity_estimate(critic_circuit, vqc.CRITIC),
            vqc.complexity_estimate(actor_circuit, vqc.ACTOR),
            sc.episode_steps,
            sc.num_uavs,
            NUM_ACTIONS,
        )
        classical_cost = vqc.cmarl_training_cost(
            vqc.classical_actor_cost(actor_in, classical["actor"], NUM_ACTIONS),
            vqc.classical_critic_cost(critic_in, classical["critic"]),
            sc.episode_steps,
            sc.num_uavs,
        )

        table = Table(title=f"Parameters ({sc.num_uavs} UAVs, {sc.num_users} users)")
        table.add_column("Network", style="cyan")
        table.add_column("Quantum", justify="right")
        table.add_column(f"Classical (hidden {mc.hidden_width})", justify="right")
        for key, label in (("actor", "actor (each)"), ("critic", "critic"), ("total", "total")):
            table.add_row(label, str(quantum[key]), str(classical[key]))
        table.add_row("cost per epoch", str(quantum_cost), str(classical_cost))
        console.print(table)
        ratio = quantum["total"] / classical["total"]
        console.print(f"Quantum networks use {ratio:.1%} of the classical parameter count.")


@app.command("verify-gradients")
def verify_gradients(
    seed: int = typer.Option(0, "--seed", help="Seed for the random circuits and networks"),
    circuits: int = typer.Option(100, "--circuits", help="Random circuits to check"),
    perceptrons: int = typer.Option(20, "--perceptrons", help="Random perceptrons to check"),
    tolerance: float = typer.Option(DEFAULT_TOLERANCE, "--tolerance", help="Largest accepted absolute error"),
    verbose: bool = _verbose_option(),
):
    """Check every analytic gradient against central finite differences."""
    with _handled():
        configure_logging(verbose)
        with console.status("Comparing gradients..."):
            report = run_gradient_checks(seed, circuits, perceptrons, tolerance=tolerance)
        table = Table(title="Gradient checks")
        table.add_column("Check", style="cyan")
        table.add_column("Cases", justify="right")
        table.add_column("Max |analytic - FD|", justify="right")
        for check in report.checks:
            style = "green" if check.passed(tolerance) else "red"
            table.add_row(check.label, str(check.cases), f"[{style}]{check.max_abs_error:.3e}[/{style}]")
        console.print(table)
        console.print(f"max error {report.max_error:.3e} (tolerance {tolerance:.0e})")
        if not report.passed:
            raise NumericError(f"max gradient error {report.max_error:.3e} exceeds {tolerance:.0e}")


@app.command("dump-mcs-table")
def dump_mcs_table(pretty: bool = typer.Option(False, "--pretty", help="Render as a table instead of CSV")):
    """Print the embedded 802.11ad MCS table."""
    if pretty:
        table = Table(title="IEEE 802.11ad MCS")
        for column in ("Sensitivity (dBm)", "MCS", "Rate (Mbps)", "Shannon (Gbps)"):
            table.add_column(column, justify="right")
        for row in MCS_TABLE:
            table.add_row(f"{row.sensitivity_dbm:g}", row.mcs, f"{row.rate_mbps:g}", f"{row.shannon_gbps:g}")
        console.print(table)
        return
    buffer = io.StringIO()
    write_mcs_table(MCS_TABLE, buffer)
    typer.echo(buffer.getvalue(), nl=False)


@app.command("print-config")
def print_config(
    config: Optional[Path] = _config_option(),
    overrides: Optional[List[str]] = _set_option(),
    seed: Optional[int] = _seed_option(),
    out: Optional[Path] = _out_option(),
):
    """Print the fully resolved configuration as TOML."""
    with _handled():
        cfg = ConfigManager(config).load(overrides or [], seed=seed, out_dir=out)
        typer.echo(ConfigManager.dumps(cfg), nl=False)


@app.command("export-plot-data")
def export_plot_data_command(
    files: Optional[List[Path]] = typer.Argument(None, help="Metric CSV files, one curve each"),
    window: int = typer.Option(50, "--window", "-w", help="Trailing-mean window in epochs"),
    out: Path = typer.Option(Path("plot_data.csv"), "--out", "-o", help="Smoothed series CSV"),
    plot: Optional[Path] = typer.Option(None, "--plot", help="Also render a PNG"),
):
    """Smooth reward, support and QoS curves for plotting."""
    with _handled():
        path = export_plot_data(files or [], window, out, plot)
        console.print(f"[green]Plot data written to {path}[/green]")
        if plot:
            console.print(f"[green]Plot rendered to {plot}[/green]")


@app.command()
def version():
    """Show aerie version."""
    from aerie import __version__

    console.print(f"aerie v{__version__}")


def main():
    """Main entry point for the CLI."""
    try:
        app()
    except KeyboardInterrupt:
        console.print("\n[yellow]Interrupted.[/yellow]")
        raise SystemExit(130)


if __name__ == "__main__":
    main()
