"""
Métricas de clasificación binaria y tabla de resultados
"""

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .exceptions import MetricError

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.5
METRIC_COLUMNS = ['test_acc', 'precision', 'recall', 'f1', 'auc']
REPORT_COLUMNS = ['model', 'backend'] + METRIC_COLUMNS


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class MetricsReport:
    """Fila de resultados de un modelo evaluado en un backend"""

    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float
    model_tag: str = 'model'
    backend_tag: str = 'ideal'

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> 'MetricsReport':
        return cls(**payload)

    def to_row(self) -> Dict[str, Any]:
        return {
            'model': self.model_tag,
            'backend': self.backend_tag,
            'test_acc': self.accuracy,
            'precision': self.precision,
            'recall': self.recall,
            'f1': self.f1,
            'auc': self.auc,
        }


def _validate(scores: Sequence[float], labels: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.size != labels.size:
        raise MetricError(f"Longitudes distintas: {scores.size} puntuaciones y {labels.size} etiquetas")
    if scores.size == 0:
        raise MetricError("No hay muestras que evaluar")
    if not np.all((labels == 0) | (labels == 1)):
        raise MetricError("Las etiquetas deben ser binarias {0, 1}")
    return scores, labels.astype(np.int64)


def confusion(
    probabilities: Sequence[float],
    labels: Sequence[int],
    threshold: float = DEFAULT_THRESHOLD
) -> ConfusionCounts:
    """
    Matriz de confusión con la regla "predice 1 si p >= umbral"
    """
    probs, y = _validate(probabilities, labels)
    predicted = probs >= threshold
    positive = y == 1
    return ConfusionCounts(
        tp=int(np.sum(predicted & positive)),
        fp=int(np.sum(predicted & ~positive)),
        tn=int(np.sum(~predicted & ~positive)),
        fn=int(np.sum(~predicted & positive)),
    )


def prf1(counts: ConfusionCounts) -> Tuple[float, float, float, float]:
    """
    (precision, recall, f1, accuracy); denominadores nulos dan 0
    """
    if counts.total <= 0:
        raise MetricError("Matriz de confusión vacía")
    tp, fp, fn = counts.tp, counts.fp, counts.fn
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    accuracy = (tp + counts.tn) / counts.total
    return float(precision), float(recall), float(f1), float(accuracy)


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """
    AUC como estadístico de Mann-Whitney: (pares pos > neg + 0.5·empates) / (P·N)

    Args:
        scores: Puntuaciones (probabilidades o logits)
        labels: Etiquetas {0, 1}

    Returns:
        float: AUC en [0, 1]
    """
    s, y = _validate(scores, labels)
    positives = s[y == 1]
    negatives = np.sort(s[y == 0])
    if positives.size == 0 or negatives.size == 0:
        raise MetricError("AUC indefinida: se necesita al menos una muestra de cada clase")

    below = np.searchsorted(negatives, positives, side='left')
    at_or_below = np.searchsorted(negatives, positives, side='right')
    wins = below.sum() + 0.5 * (at_or_below - below).sum()
    return float(wins / (positives.size * negatives.size))


def metrics_report(
    probabilities: Sequence[float],
    labels: Sequence[int],
    model_tag: str = 'model',
    backend_tag: str = 'ideal',
    threshold: float = DEFAULT_THRESHOLD
) -> MetricsReport:
    """Informe completo de un conjunto de predicciones"""
    precision, recall, f1, accuracy = prf1(confusion(probabilities, labels, threshold))
    return MetricsReport(accuracy, precision, recall, f1, auc(probabilities, labels), model_tag, backend_tag)


# ===== TABLA DE RESULTADOS =====

def improvement(new: float, base: float) -> Optional[float]:
    """Mejora relativa 100·(new - base)/base (None si base es 0)"""
    if base == 0:
        return None
    return 100.0 * (new - base) / base


def report_table(reports: Sequence[MetricsReport], references: Sequence[str] = ('baseline',)) -> pd.DataFrame:
    """
    Tabla de resultados con columnas de mejora relativa por referencia

    Args:
        reports: Filas en el orden de salida
        references: Tags de modelo usados como referencia (primera fila con ese tag);
            cada uno añade columnas imp_<métrica>_vs_<tag>

    Returns:
        pd.DataFrame: Valores numéricos sin redondear (NaN = mejora no definida)
    """
    if not reports:
        raise MetricError("No hay resultados completados para el informe")

    frame = pd.DataFrame([r.to_row() for r in reports], columns=REPORT_COLUMNS)
    for tag in references:
        matches = frame.index[frame['model'] == tag]
        for metric in METRIC_COLUMNS:
            column = f'imp_{metric}_vs_{tag}'
            if len(matches) == 0 and metric == METRIC_COLUMNS[0]:
                logger.warning(f"⚠️ Referencia '{tag}' ausente en los resultados; mejoras vacías")
            if len(frame) < 2 or len(matches) == 0:
                frame[column] = np.nan
                continue
            base = float(frame.loc[matches[0], metric])
            values = [improvement(float(v), base) for v in frame[metric]]
            frame[column] = [np.nan if v is None else v for v in values]
    return frame


def _format_cell(column: str, value: Any) -> str:
    if isinstance(value, str):
        return value
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return ''
    if column == 'test_acc':
        return f"{100.0 * value:.2f}"
    if column.startswith('imp_'):
        return f"{value:.2f}"
    return f"{value:.4f}"


def format_report(frame: pd.DataFrame) -> pd.DataFrame:
    """test_acc en % con 2 decimales, métricas con 4 decimales, mejoras con 2"""
    formatted = frame.copy()
    for column in formatted.columns:
        formatted[column] = [_format_cell(column, v) for v in frame[column]]
    return formatted


def report_csv(frame: pd.DataFrame) -> str:
    return format_report(frame).to_csv(index=False, lineterminator='\n')


def report_text(frame: pd.DataFrame) -> str:
    """Tabla de texto alineada para consola"""
    return format_report(frame).to_string(index=False)


def summarize_folds(reports: Sequence[MetricsReport]) -> Dict[str, Dict[str, float]]:
    """
    Media y desviación típica poblacional por métrica
    """
    if not reports:
        raise MetricError("No hay folds que resumir")
    summary: Dict[str, Dict[str, float]] = {}
    for name in ('accuracy', 'precision', 'recall', 'f1', 'auc'):
        values = np.array([getattr(r, name) for r in reports], dtype=np.float64)
        summary[name] = {'mean': float(values.mean()), 'std': float(values.std())}
    return summary
