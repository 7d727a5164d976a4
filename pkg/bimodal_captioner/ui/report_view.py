"""
Report View - Rich terminal rendering of evaluation reports, anchors and training summaries
"""

from typing import Dict, List, Optional, Sequence

from rich.console import Console
from rich.table import Table

from bimodal_captioner.evaluation.metrics import EvalReport
from bimodal_captioner.model.proposal_generator import AnchorSet
from bimodal_captioner.training.ablation import AblationCell
from bimodal_captioner.training.trainer import TrainResult


class ReportView:
    """Batch output of the command-line surface."""

    def __init__(self, console: Optional[Console] = None):
        """
        Initialize the report view.

        Args:
            console: Console to print to (default: stdout)
        """
        self.console = console or Console()

    def show_eval_report(self, report: EvalReport) -> None:
        """Per-threshold and aggregate precision, recall and F1, followed by BLEU when present."""
        table = Table(title="Proposal evaluation")
        table.add_column("tIoU", justify="right")
        table.add_column("Precision", justify="right")
        table.add_column("Recall", justify="right")
        table.add_column("F1", justify="right")
        for threshold, values in report.per_threshold.items():
            table.add_row(f"{threshold:g}", f"{values['precision']:.4f}", f"{values['recall']:.4f}",
                          f"{values['f1']:.4f}")
        table.add_row("[bold]mean[/bold]", f"[bold]{report.precision:.4f}[/bold]", f"[bold]{report.recall:.4f}[/bold]",
                      f"[bold]{report.f1:.4f}[/bold]")
        self.console.print(table)

        if report.bleu:
            bleu_table = Table(title="Dense captioning")
            for name in report.bleu:
                bleu_table.add_column(name.upper(), justify="right")
            bleu_table.add_row(*(f"{100 * value:.2f}" for value in report.bleu.values()))
            self.console.print(bleu_table)
        for note in report.notes:
            self.console.print(f"[dim]- {note}[/dim]")

    def show_anchors(self, anchors: AnchorSet, kernel_sizes: Sequence[int]) -> None:
        table = Table(title=f"{anchors.modality} anchors ({anchors.cell_seconds:g}s cells)")
        table.add_column("#", justify="right")
        table.add_column("Cells", justify="right")
        table.add_column("Seconds", justify="right")
        for index, (cells, seconds) in enumerate(zip(anchors.anchors, anchors.seconds)):
            table.add_row(str(index), f"{cells:.3f}", f"{seconds:.2f}")
        self.console.print(table)
        self.console.print(f"Kernel sizes: [bold]{', '.join(str(k) for k in kernel_sizes)}[/bold]")

    def show_training(self, stage: str, result: TrainResult, checkpoint: str) -> None:
        metric = "validation F1" if stage == "proposals" else "validation loss"
        self.console.print(
            f"[bold green]{stage}[/bold green]: best {metric} {result.best_score:.4f} at epoch {result.best_epoch} "
            f"after {result.steps} steps; saved to [bold]{checkpoint}[/bold]"
        )

    def show_ablation(self, cells: List[AblationCell]) -> None:
        """The procedure × modality grid with ground-truth and learned-proposal scores."""
        table = Table(title="Training procedures and input modalities")
        for column in ("Procedure", "Modality"):
            table.add_column(column)
        names = list(cells[0].gt_bleu) if cells else []
        columns = [f"GT {name.upper()}" for name in names] + [f"Learned {name.upper()}" for name in names]
        for column in columns + ["P", "R", "F1"]:
            table.add_column(column, justify="right")
        for cell in cells:
            values = [cell.gt_bleu[name] for name in names] + [cell.learned_bleu[name] for name in names]
            table.add_row(
                cell.procedure, cell.modality,
                *(f"{100 * v:.2f}" for v in values + [cell.precision, cell.recall, cell.f1]),
            )
        self.console.print(table)

    def show_written(self, paths: Dict[str, str]) -> None:
        for name, path in paths.items():
            self.console.print(f"{name}: [bold blue]{path}[/bold blue]")
