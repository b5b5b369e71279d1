"""Run status and result summaries using rich console formatting."""
import math
from typing import Optional

import pandas as pd
from rich import box
from rich.console import Console
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

from models.experiment import ExperimentConfig, ExperimentResult
from utils.errors import GraphPriorError

MAX_TABLE_ROWS = 20


class RunNotifier:
    """Formats experiment progress and results for the console."""

    def __init__(self, console: Optional[Console] = None, quiet: bool = False):
        """Initialize run notifier.

        Args:
            console: Console to print to (a new one by default)
            quiet: Suppress per-task status lines
        """
        self.console = console or Console()
        self.quiet = quiet
        self.task_count = 0

    def notify_start(self, cfg: ExperimentConfig, n_tasks: int) -> None:
        """Display the run header."""
        grid = ", ".join(str(v) for v in cfg.grid_values)
        content_lines = [
            f"[bold]Experiment:[/bold] {cfg.kind}",
            f"[bold]Manifold:[/bold] {cfg.manifold_kind} (m={cfg.m})",
            f"[bold]Smoothness:[/bold] s={cfg.s:g}, beta={cfg.beta:g}, delta={cfg.delta:g}",
            f"[bold]Grid:[/bold] {grid}",
            f"[bold]Replicas:[/bold] {cfg.replicas}  [bold]Tasks:[/bold] {n_tasks}",
            f"[bold]Seed:[/bold] {cfg.seed}",
        ]
        if cfg.kind == "contraction":
            mode = cfg.schedule_mode.upper()
            if cfg.schedule_mode == "capped":
                mode += f" (gamma={cfg.gamma:g}, N_max={cfg.n_max_points})"
            content_lines.append(f"[bold]Schedule mode:[/bold] {mode}")
        panel = Panel(
            "\n".join(content_lines),
            title=Text("EXPERIMENT STARTED", style="bold blue"),
            border_style="blue",
            box=box.ROUNDED,
            padding=(1, 2),
        )
        self.console.print(panel)

    def notify_task(self, grid_value: int, replica: int, seconds: float) -> None:
        """One line per finished (grid value, replica) task."""
        self.task_count += 1
        if not self.quiet:
            self.console.print(
                f"[dim]  grid={grid_value} replica={replica} done in {seconds:.1f}s[/dim]"
            )

    def notify_status(self, message: str, style: str = "blue") -> None:
        self.console.print(f"[{style}]{message}[/{style}]")

    def notify_error(self, error: Exception) -> None:
        """Display a failure panel with the exit code."""
        code = getattr(error, "exit_code", 1) if isinstance(error, GraphPriorError) else 1
        panel = Panel(
            f"[bold]{type(error).__name__}:[/bold] {error}\n[bold]Exit code:[/bold] {code}",
            title=Text("RUN FAILED", style="bold red"),
            border_style="red",
            box=box.ROUNDED,
            padding=(1, 2),
        )
        self.console.print(panel)

    def print_result(self, result: ExperimentResult) -> None:
        """Summary table of replica medians plus the slope panel."""
        rows = result.rows
        if rows.empty:
            return
        table = Table(title=f"{result.config.kind} results (replica medians)", box=box.ROUNDED)
        table.add_column("Grid", justify="right", style="cyan")
        table.add_column("Replicas", justify="right")
        table.add_column(result.metric, justify="right", style="green")
        envelope_col = "envelope" if "envelope" in rows.columns else None
        if envelope_col:
            table.add_column("envelope", justify="right", style="yellow")

        grouped = rows.groupby("grid_value")
        medians = grouped[result.metric].median()
        counts = grouped.size()
        for i, (grid_value, median) in enumerate(medians.items()):
            if i >= MAX_TABLE_ROWS:
                table.add_row(f"... and {len(medians) - MAX_TABLE_ROWS} more", "", "")
                break
            cells = [str(grid_value), str(int(counts[grid_value])), _fmt(median)]
            if envelope_col:
                cells.append(_fmt(grouped[envelope_col].median()[grid_value]))
            table.add_row(*cells)
        self.console.print(table)

        payload = result.slope_payload()
        if result.slope is None:
            slope_line = f"[bold]Slope:[/bold] not fitted ({payload['flag']})"
        else:
            slope_line = (
                f"[bold]Slope:[/bold] {result.slope.slope:.4f} +/- {result.slope.stderr:.4f} "
                f"(95% CI {result.slope.ci_low:.4f} .. {result.slope.ci_high:.4f}, "
                f"{result.slope.n_points} points vs {result.x_column})"
            )
        content_lines = [slope_line]
        if result.reference_slope is not None:
            content_lines.append(f"[bold]Reference slope:[/bold] {result.reference_slope:.4f}")
        if result.output_dir:
            content_lines.append(f"[bold]Output:[/bold] {result.output_dir}")
        wall = result.manifest.get("wall_time_s")
        if wall is not None:
            content_lines.append(f"[bold]Wall time:[/bold] {wall:.1f}s")
        self.console.print(Panel(
            "\n".join(content_lines),
            title=Text("EXPERIMENT FINISHED", style="bold green"),
            border_style="green",
            box=box.ROUNDED,
            padding=(1, 2),
        ))


def _fmt(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "n/a"
    if pd.isna(value):
        return "n/a"
    return f"{float(value):.4g}"
