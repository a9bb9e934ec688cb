"""
Метрики: macro P/R/F1 и матрица ошибок, где каждая клетка разделена на
контекстные и неконтекстные примеры ("a + b").
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import ValidationError
from .models import Label, Prediction, Sample, Source

logger = logging.getLogger(__name__)

LABELS = (Label.NOT, Label.HOF)

# Опорные значения полноразмерных предобученных моделей на ICHCL (HASOC 2021).
# Только для README и отчёта; с результатами настольных прогонов не сравнивается.
REFERENCE_ROWS = (
    ("m-BERT baseline", 66.07, 65.63, 65.53),
    ("Indic-BERT baseline", 67.18, 67.17, 67.17),
    ("m-BERT + frozen embeddings (FE)", 70.03, 67.40, 66.65),
    ("m-BERT + FE + C-Avg", 67.70, 67.65, 67.65),
    ("m-BERT + FE + C-Avg + Dictionary", 68.82, 68.62, 68.61),
    ("Indic-BERT + FE + Dictionary", 70.71, 70.07, 69.99),
    ("Indic-BERT + FE + C-Avg + Dictionary", 71.09, 70.44, 70.37),
    ("Ensemble 2 (Indic-BERT C-Avg + m-BERT C-Avg)", 71.65, 71.59, 71.60),
    ("Ensemble 4 (Indic-BERT + Indic C-Avg + m-BERT + m-BERT C-Avg)", 73.21, 73.17, 73.07),
)


class EvalError(ValidationError):
    """Raised when predictions and gold labels cannot be aligned."""


@dataclass
class ConfusionMatrix:
    """cells[true][pred][0] — контекстные, cells[true][pred][1] — неконтекстные."""

    cells: np.ndarray = field(default_factory=lambda: np.zeros((2, 2, 2), dtype=np.int64))

    def total(self) -> np.ndarray:
        return self.cells.sum(axis=2)

    def contextual(self) -> np.ndarray:
        return self.cells[:, :, 0].copy()

    def non_contextual(self) -> np.ndarray:
        return self.cells[:, :, 1].copy()

    @property
    def count(self) -> int:
        return int(self.cells.sum())

    def to_json(self) -> list:
        return [
            [{"c": int(self.cells[t, p, 0]), "nc": int(self.cells[t, p, 1])} for p in range(2)]
            for t in range(2)
        ]

    @classmethod
    def from_json(cls, data: list) -> "ConfusionMatrix":
        cells = np.zeros((2, 2, 2), dtype=np.int64)
        for t in range(2):
            for p in range(2):
                cells[t, p, 0] = data[t][p]["c"]
                cells[t, p, 1] = data[t][p]["nc"]
        return cls(cells)


def confusion(golds: Sequence[Label], preds: Sequence[Label], contextual_flags: Sequence[bool]) -> ConfusionMatrix:
    if not len(golds) == len(preds) == len(contextual_flags):
        raise EvalError(
            f"разная длина последовательностей: golds={len(golds)}, preds={len(preds)}, "
            f"flags={len(contextual_flags)}"
        )
    matrix = ConfusionMatrix()
    for gold, pred, flag in zip(golds, preds, contextual_flags):
        matrix.cells[Label(gold).index, Label(pred).index, 0 if flag else 1] += 1
    return matrix


def _ratio(numerator: float, denominator: float) -> float:
    return numerator / denominator if denominator else 0.0


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1, "support": self.support}


@dataclass
class MetricsReport:
    per_class: dict[Label, ClassMetrics]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    confusion: ConfusionMatrix

    def rounded(self) -> dict:
        return {
            "macro_precision": round(self.macro_precision, 2),
            "macro_recall": round(self.macro_recall, 2),
            "macro_f1": round(self.macro_f1, 2),
        }

    def to_dict(self) -> dict:
        return {
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "per_class": {label.value: metrics.to_dict() for label, metrics in self.per_class.items()},
            "confusion": self.confusion.to_json(),
            "rounded": self.rounded(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2, sort_keys=True)


def macro_metrics(cm: ConfusionMatrix) -> MetricsReport:
    """P = TP/(TP+FP), R = TP/(TP+FN), F1 = 2PR/(P+R); 0/0 -> 0; macro — среднее по двум классам."""

    total = cm.total()
    per_class: dict[Label, ClassMetrics] = {}
    for label in LABELS:
        c = label.index
        tp = int(total[c, c])
        fp = int(total[:, c].sum()) - tp
        fn = int(total[c, :].sum()) - tp
        precision = _ratio(tp, tp + fp)
        recall = _ratio(tp, tp + fn)
        f1 = _ratio(2 * precision * recall, precision + recall)
        per_class[label] = ClassMetrics(precision, recall, f1, tp + fn)
    return MetricsReport(
        per_class=per_class,
        macro_precision=sum(m.precision for m in per_class.values()) / 2,
        macro_recall=sum(m.recall for m in per_class.values()) / 2,
        macro_f1=sum(m.f1 for m in per_class.values()) / 2,
        confusion=cm,
    )


def evaluate(golds: Sequence[Label], preds: Sequence[Label], contextual_flags: Sequence[bool]) -> MetricsReport:
    return macro_metrics(confusion(golds, preds, contextual_flags))


def render_confusion(cm: ConfusionMatrix) -> str:
    """Строки — истинный класс, столбцы — предсказанный; клетка "контекстные + неконтекстные"."""

    cells = [[f"{cm.cells[t, p, 0]} + {cm.cells[t, p, 1]}" for p in range(2)] for t in range(2)]
    width = max(len("pred HOF"), *(len(cell) for row in cells for cell in row))
    lines = [" " * 10 + "  ".join(f"pred {label.value}".rjust(width) for label in LABELS)]
    for t, label in enumerate(LABELS):
        lines.append(f"true {label.value}".ljust(10) + "  ".join(cell.rjust(width) for cell in cells[t]))
    return "\n".join(lines)


# --- таблица сравнения --------------------------------------------------------

TABLE_COLUMNS = ["Model", "Precision", "Recall", "F1 score"]


@dataclass
class ComparisonTable:
    rows: list[tuple[str, MetricsReport]] = field(default_factory=list)

    def frame(self) -> pd.DataFrame:
        records = [
            {
                "Model": name,
                "Precision": round(100 * metrics.macro_precision, 2),
                "Recall": round(100 * metrics.macro_recall, 2),
                "F1 score": round(100 * metrics.macro_f1, 2),
            }
            for name, metrics in self.rows
        ]
        return pd.DataFrame(records, columns=TABLE_COLUMNS)

    def to_text(self) -> str:
        frame = self.frame()
        if frame.empty:
            return "(нет строк)"
        return frame.to_string(index=False, float_format=lambda value: f"{value:.2f}")

    def to_dict(self) -> list[dict]:
        return [{"model": name, **metrics.to_dict()} for name, metrics in self.rows]

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2, sort_keys=True)

    def to_excel(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.frame().to_excel(path, index=False)
        _format_excel(path)
        logger.info(f"Таблица сравнения сохранена: {path}")
        return path


def _format_excel(path: Path) -> None:
    from openpyxl import load_workbook
    from openpyxl.styles import Alignment, PatternFill
    from openpyxl.utils import get_column_letter

    wb = load_workbook(path)
    ws = wb.active
    header_fill = PatternFill(start_color="87CEEB", end_color="87CEEB", fill_type="solid")
    for col_idx, column_cells in enumerate(ws.iter_cols(min_row=1, max_row=ws.max_row), start=1):
        max_length = max(len(str(cell.value)) if cell.value is not None else 0 for cell in column_cells)
        ws.column_dimensions[get_column_letter(col_idx)].width = max_length + 2
        header = column_cells[0]
        header.fill = header_fill
        header.alignment = Alignment(horizontal="center", vertical="center", wrap_text=True)
    for row in ws.iter_rows(min_row=2, max_row=ws.max_row):
        for cell in row:
            cell.alignment = Alignment(wrap_text=True)
    wb.save(path)


def report(
    runs: Mapping[str, Sequence[Label]],
    golds: Sequence[Label],
    contextual_flags: Sequence[bool],
) -> ComparisonTable:
    """Одна строка на конфигурацию, в порядке `runs`."""

    if not runs:
        raise EvalError("нет ни одного набора предсказаний")
    table = ComparisonTable()
    for name, preds in runs.items():
        if len(preds) != len(golds):
            raise EvalError(f"{name}: предсказаний {len(preds)}, эталонных меток {len(golds)}")
        table.rows.append((name, evaluate(golds, preds, contextual_flags)))
    return table


# --- файлы предсказаний -------------------------------------------------------

def write_predictions(path: str | Path, sample_ids: Iterable[str], predictions: Iterable[Prediction]) -> Path:
    """JSONL {"id", "label", "p_not", "p_hof", "source"}."""

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for sample_id, prediction in zip(sample_ids, predictions):
            fh.write(json.dumps(prediction.to_record(sample_id), ensure_ascii=False) + "\n")
    return path


def load_predictions(path: str | Path) -> dict[str, Prediction]:
    path = Path(path)
    if not path.exists():
        raise EvalError(f"{path}: файл предсказаний не найден")
    predictions: dict[str, Prediction] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                sample_id = str(record["id"])
                prediction = Prediction(
                    probs=(float(record["p_not"]), float(record["p_hof"])),
                    label=Label.parse(record["label"]),
                    source=Source(record.get("source", Source.MODEL.value)),
                )
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise EvalError(f"{path}:{line_no}: некорректная запись предсказания ({exc})") from exc
            if sample_id in predictions:
                raise EvalError(f"{path}:{line_no}: повторяющийся id {sample_id!r}")
            predictions[sample_id] = prediction
    return predictions


def align(
    predictions: Mapping[str, Prediction],
    samples: Sequence[Sample],
    path: str | Path | None = None,
) -> tuple[list[Label], list[Label], list[bool]]:
    """Сопоставляет предсказания эталону по id; каждый эталонный id обязателен."""

    golds, preds, flags = [], [], []
    for sample in samples:
        prediction = predictions.get(sample.id)
        if prediction is None:
            prefix = f"{path}: " if path is not None else ""
            raise EvalError(f"{prefix}нет предсказания для id {sample.id!r}")
        golds.append(sample.label)
        preds.append(prediction.label)
        flags.append(sample.is_contextual)
    return golds, preds, flags
