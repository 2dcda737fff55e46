import functools
import sys
from enum import Enum
from pathlib import Path
from typing import List, Optional

import click
import typer
from rich import print as rprint
from rich.console import Console
from rich.table import Table

from ..core.config import Settings, flatten, load_settings
from ..core.errors import InvalidInputError, SavgError
from ..core.logging import setup_logging
from ..media.io import read_face_track, read_wav, write_wav
from ..models.factory import ExpertBundle, ModelFactory
from ..models.gridnet import AVGridNet
from ..nn.tensor import set_default_dtype, set_detect_anomaly
from ..schemas import ConfusionMatrix, ModelRole, Strategy
from ..services.cascade import CascadeService, RoutingInput, routing_inputs
from ..services.evaluation_service import (
    EvaluationService,
    SystemRegistry,
    analyze_outliers,
    compare_strategies,
    read_records,
    summarize,
    write_records,
)
from ..services.scene_store import SceneStore
from ..services.training_service import TrainingService
from ..simulation.dataset import build_dataset, load_dataset

app = typer.Typer(help="savgridnet - scenario-aware audio-visual target speech extraction")
console = Console()


class RoleChoice(str, Enum):
    universal = "universal"
    speech = "speech"
    noise = "noise"

    @property
    def role(self) -> ModelRole:
        return {
            RoleChoice.universal: ModelRole.UNIVERSAL,
            RoleChoice.speech: ModelRole.EXPERT_SPEECH,
            RoleChoice.noise: ModelRole.EXPERT_NOISE,
        }[self]


def current_settings() -> Settings:
    ctx = click.get_current_context()
    settings = ctx.find_object(Settings)
    return settings if settings is not None else load_settings()


def handle_errors(command):
    """Report savgridnet errors in red and exit with their code."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except SavgError as e:
            rprint(f"[red]Error: {e}[/red]")
            sys.exit(e.exit_code)

    return wrapper


@app.callback()
def main(
    ctx: typer.Context,
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="key=value config file"),
    overrides: Optional[List[str]] = typer.Option(None, "--set", help="Override a setting, e.g. gridnet.D=16"),
    log_level: Optional[str] = typer.Option(None, "--log-level", help="Logging level"),
):
    """Resolve settings once for every command."""
    try:
        settings = load_settings(config, overrides)
    except SavgError as e:
        rprint(f"[red]Error: {e}[/red]")
        sys.exit(e.exit_code)
    setup_logging(log_level or settings.log_level)
    set_default_dtype(settings.nn.dtype)
    set_detect_anomaly(settings.nn.detect_anomaly)
    ctx.obj = settings


@app.command()
@handle_errors
def simulate(
    out: Path = typer.Option(..., "--out", "-o", help="Dataset directory"),
    count: Optional[int] = typer.Option(None, "--count", help="Number of scenes"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Dataset seed"),
):
    """Generate a synthetic scene dataset."""
    settings = current_settings()
    updates = {k: v for k, v in {"count": count, "seed": seed}.items() if v is not None}
    spec = settings.simulation.model_copy(update=updates)
    manifest = build_dataset(spec, out, settings.workers, settings.gridnet.visual)
    rprint(f"[green]✓ Wrote {spec.count} scenes; manifest at {manifest}[/green]")


@app.command("train-extractor")
@handle_errors
def train_extractor(
    data: Path = typer.Option(..., "--data", "-d", help="Training dataset directory"),
    role: RoleChoice = typer.Option(RoleChoice.universal, "--role", "-r", help="Model role"),
    out: Path = typer.Option(..., "--out", "-o", help="Checkpoint to write"),
    dev: Optional[Path] = typer.Option(None, "--dev", help="Development dataset directory"),
    init: Optional[Path] = typer.Option(None, "--init", help="Checkpoint to warm-start from"),
    dynamic_mixing: bool = typer.Option(False, "--dynamic-mixing", help="Remix scenes on the fly"),
):
    """Train the universal extractor or a scenario expert."""
    service = TrainingService(current_settings())
    result = service.train_extractor(
        load_dataset(data),
        role.role,
        out,
        dev_scenes=load_dataset(dev) if dev else None,
        init=init,
        dynamic_mixing=dynamic_mixing,
    )
    rprint(
        f"[green]✓ {role.role.value} trained for {result.epochs} epochs; "
        f"best dev loss {result.best_dev_loss:.4f} saved to {result.checkpoint}[/green]"
    )


@app.command("train-classifier")
@handle_errors
def train_classifier(
    data: Path = typer.Option(..., "--data", "-d", help="Training dataset directory"),
    out: Path = typer.Option(..., "--out", "-o", help="Checkpoint to write"),
    dev: Optional[Path] = typer.Option(None, "--dev", help="Development dataset directory"),
):
    """Train the audio-visual scenario classifier."""
    service = TrainingService(current_settings())
    result = service.train_classifier(load_dataset(data), out, load_dataset(dev) if dev else None)
    rprint(
        f"[green]✓ Classifier trained for {result.epochs} epochs; "
        f"best dev loss {result.best_dev_loss:.4f} saved to {result.checkpoint}[/green]"
    )


@app.command()
@handle_errors
def extract(
    model: Path = typer.Option(..., "--model", "-m", help="Extractor checkpoint"),
    out: Path = typer.Option(..., "--out", "-o", help="WAV file to write"),
    data: Optional[Path] = typer.Option(None, "--data", "-d", help="Dataset directory"),
    scene: Optional[str] = typer.Option(None, "--scene", help="Scene id inside --data"),
    wav: Optional[Path] = typer.Option(None, "--wav", help="Mixture WAV"),
    face: Optional[Path] = typer.Option(None, "--face", help="Face track (FTRK)"),
):
    """Extract the target speaker from one mixture."""
    extractor = ModelFactory.load(model, expected_kind=AVGridNet.kind)
    if scene:
        if data is None:
            raise InvalidInputError("--scene needs --data")
        item = SceneStore(data).scene(scene)
        mixture, track = item.mixture, item.face_track
    elif wav:
        mixture = read_wav(wav)
        track = read_face_track(face) if face else None
    else:
        raise InvalidInputError("Give either --scene with --data, or --wav")
    write_wav(out, extractor.extract(mixture, track))
    rprint(f"[green]✓ Estimate written to {out}[/green]")


@app.command()
@handle_errors
def route(
    models: Path = typer.Option(..., "--models", "-m", help="Directory holding the four checkpoints"),
    out: Path = typer.Option(..., "--out", "-o", help="Output directory"),
    strategy: Strategy = typer.Option(Strategy.PLAIN, "--strategy", "-s", help="Routing strategy"),
    data: Optional[Path] = typer.Option(None, "--data", "-d", help="Dataset directory"),
    wav: Optional[Path] = typer.Option(None, "--wav", help="Unlabeled mixture WAV"),
    face: Optional[Path] = typer.Option(None, "--face", help="Face track for --wav"),
):
    """Route mixtures through the scenario-aware cascade."""
    settings = current_settings()
    cascade = CascadeService(ExpertBundle.from_directory(models), settings.loss.eps, settings.workers)
    if data is not None:
        items = routing_inputs(load_dataset(data))
    elif wav is not None:
        items = [RoutingInput(wav.stem, read_wav(wav), read_face_track(face) if face else None)]
    else:
        raise InvalidInputError("Give --data or --wav")

    outputs = cascade.batch_route(items, strategy)
    for output in outputs:
        write_wav(out / f"{output.scene_id}.wav", output.estimate)
    trail = SceneStore.write_trail(out / "trail.tsv", [output.decision for output in outputs])

    table = Table(title=f"Routing ({strategy.value})")
    table.add_column("Scene", style="cyan")
    table.add_column("Classifier")
    table.add_column("Final")
    table.add_column("Model", style="green")
    for output in outputs:
        decision = output.decision
        table.add_row(
            decision.scene_id,
            decision.classifier_label.value,
            decision.final_label.value,
            decision.chosen_model.value,
        )
    console.print(table)
    rprint(f"[blue]Decision trail written to {trail}[/blue]")


def _summary_table(title: str, summary) -> Table:
    table = Table(title=title)
    table.add_column("Scenario", style="cyan")
    for column in summary.columns:
        table.add_column(column, justify="right")
    for scenario, row in summary.iterrows():
        cells = [str(int(value)) if column == "count" else f"{value:.2f}" for column, value in row.items()]
        table.add_row(str(scenario), *cells)
    return table


def _confusion_table(title: str, matrix: ConfusionMatrix) -> Table:
    table = Table(title=title)
    table.add_column("", style="cyan")
    table.add_column("true noise", justify="right")
    table.add_column("true speech", justify="right")
    table.add_row("predicted noise", str(matrix.tp), str(matrix.fp))
    table.add_row("predicted speech", str(matrix.fn), str(matrix.tn))
    table.caption = f"accuracy {matrix.accuracy:.2%}"
    return table


@app.command()
@handle_errors
def evaluate(
    data: Path = typer.Option(..., "--data", "-d", help="Dataset directory"),
    system: str = typer.Option("cascade", "--system", help="identity, oracle, model or cascade"),
    model: Optional[Path] = typer.Option(None, "--model", help="Extractor checkpoint for --system model"),
    models: Optional[Path] = typer.Option(None, "--models", help="Checkpoint directory for --system cascade"),
    strategy: Strategy = typer.Option(Strategy.PLAIN, "--strategy", "-s", help="Cascade strategy"),
    records: Optional[Path] = typer.Option(None, "--records", help="CSV file for per-scene records"),
    trail: Optional[Path] = typer.Option(None, "--trail", help="TSV file for the decision trail"),
):
    """Score a system on a dataset with SI-SDR and SI-SDRi."""
    settings = current_settings()
    kwargs = {}
    if system == "model":
        if model is None:
            raise InvalidInputError("--system model needs --model")
        kwargs["extractor"] = ModelFactory.load(model, expected_kind=AVGridNet.kind)
    elif system == "cascade":
        if models is None:
            raise InvalidInputError("--system cascade needs --models")
        bundle = ExpertBundle.from_directory(models)
        kwargs["cascade"] = CascadeService(bundle, settings.loss.eps)
        kwargs["strategy"] = strategy
    report = EvaluationService(settings).evaluate(load_dataset(data), SystemRegistry.create(system, **kwargs))

    console.print(_summary_table(f"SI-SDR ({system})", report.summary))
    if report.classifier_confusion is not None:
        console.print(_confusion_table("Classifier labels", report.classifier_confusion))
        console.print(_confusion_table(f"Final labels ({strategy.value})", report.final_confusion))
    if records:
        write_records(records, report.records)
        rprint(f"[blue]Records written to {records}[/blue]")
    if trail and report.decisions:
        SceneStore.write_trail(trail, report.decisions)
        rprint(f"[blue]Decision trail written to {trail}[/blue]")


@app.command()
@handle_errors
def report(
    records: Path = typer.Option(..., "--records", "-r", help="Records CSV from evaluate"),
    compare: Optional[Path] = typer.Option(None, "--compare", help="Second records CSV to compare against"),
    threshold: Optional[float] = typer.Option(None, "--threshold", help="Outlier threshold on SI-SDRi (dB)"),
):
    """Summaries, outlier counts and strategy comparisons from saved records."""
    settings = current_settings()
    threshold = settings.evaluation.outlier_threshold_db if threshold is None else threshold
    first = read_records(records)
    console.print(_summary_table(str(records), summarize(first, settings.evaluation.percentiles)))

    outliers = analyze_outliers(first, threshold)
    table = Table(title=f"Scenes with SI-SDRi below {threshold:.1f} dB")
    table.add_column("Scenario", style="cyan")
    table.add_column("Count", justify="right")
    for scenario, count in sorted(outliers.per_scenario.items()):
        table.add_row(scenario, str(count))
    table.add_row("overall", str(outliers.count))
    console.print(table)

    if compare:
        comparison = compare_strategies(first, read_records(compare), threshold)
        table = Table(title=f"{compare} vs {records}")
        table.add_column("Metric", style="cyan")
        table.add_column("Value", style="green")
        table.add_row("Wins", str(comparison.wins))
        table.add_row("Losses", str(comparison.losses))
        table.add_row("Ties", str(comparison.ties))
        table.add_row("Mean SI-SDRi delta (dB)", f"{comparison.mean_delta_db:.2f}")
        table.add_row("Outlier count delta", str(comparison.outlier_delta))
        console.print(table)


@app.command("config-show")
def config_show():
    """Show current configuration."""
    settings = current_settings()
    table = Table(title="savgridnet Configuration")
    table.add_column("Setting", style="cyan")
    table.add_column("Value", style="green")
    for key, value in flatten(settings.model_dump(mode="json")).items():
        table.add_row(key, value)
    console.print(table)


if __name__ == "__main__":
    app()
