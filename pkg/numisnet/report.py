"""
Evaluation and saliency reports

Per-concept results are laid out as one row per quantity and one column per
concept, written as TSV and as a Jinja2-rendered text table.
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from jinja2 import Environment, FileSystemLoader, StrictUndefined

from .trainer import EpochRecord, Metrics

logger = logging.getLogger(__name__)

TEMPLATE_DIR = Path(__file__).parent / "templates"

# (row label, attribute, kind)
REPORT_ROWS: List[Tuple[str, str, str]] = [
    ("Number of epochs", "epochs", "count"),
    ("Training time (min)", "train_minutes", "minutes"),
    ("Training accuracy", "train_accuracy", "ratio"),
    ("Validation accuracy", "validation.accuracy", "ratio"),
    ("Validation precision", "validation.precision", "ratio"),
    ("Validation recall", "validation.recall", "ratio"),
    ("Validation F1", "validation.f1", "ratio"),
    ("Test accuracy", "test.accuracy", "ratio"),
    ("Test precision", "test.precision", "ratio"),
    ("Test recall", "test.recall", "ratio"),
    ("Test F1", "test.f1", "ratio"),
]

PathLike = Union[str, Path]


@dataclass
class ConceptReport:
    concept: str
    epochs: int
    train_minutes: float
    train_accuracy: float
    validation: Metrics
    test: Metrics
    best_epoch: int
    stop_reason: str = ""

    @classmethod
    def from_history(cls, concept: str, history: Sequence[EpochRecord], validation: Metrics,
                     test: Metrics, stop_reason: str = "") -> "ConceptReport":
        """Training accuracy is taken at the epoch with the best validation accuracy"""
        best = max(history, key=lambda r: (r.val_accuracy, -r.epoch))
        return cls(
            concept=concept,
            epochs=len(history),
            train_minutes=sum(r.seconds for r in history) / 60.0,
            train_accuracy=best.train_accuracy,
            validation=validation,
            test=test,
            best_epoch=best.epoch,
            stop_reason=stop_reason,
        )

    def value(self, attribute: str) -> Any:
        target: Any = self
        for part in attribute.split("."):
            target = getattr(target, part)
        return target


def format_cell(value: Any, kind: str) -> str:
    if kind == "count":
        return str(int(value))
    if kind == "minutes":
        return f"{value:.1f}"
    return f"{value:.2f}"


class ReportRenderer:
    """Jinja2 environment over the packaged report templates"""

    def __init__(self, template_dir: Optional[PathLike] = None):
        self.env = Environment(
            loader=FileSystemLoader(str(template_dir or TEMPLATE_DIR)),
            undefined=StrictUndefined,
            keep_trailing_newline=True,
            trim_blocks=True,
            lstrip_blocks=True,
        )
        self._setup_filters()

    def _setup_filters(self):
        self.env.filters["cell"] = format_cell
        self.env.filters["ljust"] = lambda text, width: str(text).ljust(width)
        self.env.filters["rjust"] = lambda text, width: str(text).rjust(width)

    def render(self, template: str, **context) -> str:
        return self.env.get_template(template).render(**context)


def report_table(reports: Sequence[ConceptReport]) -> List[List[str]]:
    """Header row plus one formatted row per report quantity"""
    table = [[""] + [r.concept for r in reports]]
    for label, attribute, kind in REPORT_ROWS:
        table.append([label] + [format_cell(r.value(attribute), kind) for r in reports])
    return table


def write_metrics_tsv(path: PathLike, reports: Sequence[ConceptReport]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, delimiter="\t", lineterminator="\n")
        for row in report_table(reports):
            writer.writerow(row)


def render_metrics(reports: Sequence[ConceptReport],
                   renderer: Optional[ReportRenderer] = None) -> str:
    renderer = renderer or ReportRenderer()
    table = report_table(reports)
    label_width = max(len(row[0]) for row in table)
    column_width = max(8, *(len(cell) for row in table for cell in row[1:]))
    return renderer.render("metrics.txt.j2", header=table[0][1:], rows=table[1:],
                           reports=reports, label_width=label_width,
                           column_width=column_width)


def write_metrics_report(out_dir: PathLike, reports: Sequence[ConceptReport]) -> List[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_metrics_tsv(out_dir / "metrics.tsv", reports)
    text_path = out_dir / "metrics.txt"
    text_path.write_text(render_metrics(reports), encoding="utf-8")
    logger.info("Wrote evaluation report for %s to %s",
                ", ".join(r.concept for r in reports), out_dir)
    return [out_dir / "metrics.tsv", text_path]


def render_saliency_summary(image: str, checkpoint: str, p_clean: float,
                            kernels: Dict[int, Tuple[int, int]], merged: Tuple[int, int],
                            files: Sequence[Path],
                            renderer: Optional[ReportRenderer] = None) -> str:
    renderer = renderer or ReportRenderer()
    return renderer.render("saliency.txt.j2", image=image, checkpoint=checkpoint,
                           p_clean=p_clean, kernels=sorted(kernels.items()), merged=merged,
                           files=[f.name for f in files])
