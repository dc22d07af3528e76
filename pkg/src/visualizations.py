"""
Módulo de visualizaciones de los experimentos (curvas de pérdida y rejilla qubits × repeticiones)
"""

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Union

import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402
import plotly.graph_objects as go  # noqa: E402
import seaborn as sns  # noqa: E402
from plotly.subplots import make_subplots  # noqa: E402

from .config import COLOR_PALETTE, EXPORT_FORMAT, PLOTLY_CONFIG  # noqa: E402
from .exceptions import ConfigurationError  # noqa: E402
from .pipeline import ExperimentResult  # noqa: E402

logger = logging.getLogger(__name__)

Figure = Union[go.Figure, plt.Figure]


def _run_label(result: ExperimentResult) -> str:
    config = result.config
    if config.get('model') == 'qtl' and 'n_qubits' in config:
        return f"QTL {config['n_qubits']}q × {config['reps']}"
    return str(config.get('model', 'modelo')).upper()


def _run_color(result: ExperimentResult) -> str:
    return COLOR_PALETTE.get(result.config.get('model'), COLOR_PALETTE['accent'])


class ExperimentVisualizer:
    """
    Figuras de resultados a partir de ExperimentResult
    """

    def __init__(self, results: Sequence[ExperimentResult]):
        """
        Args:
            results: Resultados completados (entrenamientos sueltos o celdas de rejilla)
        """
        self.results = list(results)
        self.colors = COLOR_PALETTE
        logger.info(f"Visualizer initialized with {len(self.results)} results")

    # ===== CURVAS DE PÉRDIDA =====

    def loss_curves_frame(self) -> pd.DataFrame:
        rows = []
        for result in self.results:
            label = _run_label(result)
            for epoch, loss in enumerate(result.loss_curve):
                rows.append({'run': label, 'model': result.config.get('model'), 'epoch': epoch, 'loss': loss})
        return pd.DataFrame(rows, columns=['run', 'model', 'epoch', 'loss'])

    def loss_curves(self) -> go.Figure:
        """
        Pérdida BCE por época de cada ejecución

        Returns:
            go.Figure: Figura de Plotly
        """
        fig = go.Figure()
        for result in self.results:
            fig.add_trace(go.Scatter(
                x=list(range(len(result.loss_curve))),
                y=result.loss_curve,
                mode='lines',
                name=_run_label(result),
                line={'color': _run_color(result)},
            ))
        fig.update_layout(
            title="Pérdida de entrenamiento por época",
            xaxis_title="Época",
            yaxis_title="BCE",
            hovermode='x unified',
            plot_bgcolor=self.colors['background'],
        )
        return fig

    def loss_curves_png(self) -> plt.Figure:
        df = self.loss_curves_frame()
        fig, ax = plt.subplots(figsize=(10, 6))
        if not df.empty:
            sns.lineplot(data=df, x='epoch', y='loss', hue='run', ax=ax)
        ax.set_title('Pérdida de entrenamiento por época', fontsize=14, pad=20)
        ax.set_xlabel('Época')
        ax.set_ylabel('BCE')
        plt.tight_layout()
        return fig

    # ===== REJILLA =====

    def grid_frame(self, value: str = 'ideal_accuracy') -> pd.DataFrame:
        """
        Tabla pivote reps × n_qubits con la accuracy de test (en %)
        """
        rows = []
        for result in self.results:
            config = result.config
            if config.get('model') != 'qtl' or 'n_qubits' not in config:
                continue
            accuracy = result.ideal_accuracy if value == 'ideal_accuracy' else result.metrics.accuracy
            rows.append({'n_qubits': config['n_qubits'], 'reps': config['reps'], 'accuracy': 100.0 * accuracy})
        if not rows:
            return pd.DataFrame()
        return pd.DataFrame(rows).pivot(index='reps', columns='n_qubits', values='accuracy').sort_index()

    def grid_heatmap(self) -> go.Figure:
        pivot = self.grid_frame()
        fig = make_subplots(rows=1, cols=1, subplot_titles=("Accuracy de test (%) por configuración",))
        if not pivot.empty:
            fig.add_trace(
                go.Heatmap(
                    z=pivot.values,
                    x=[str(c) for c in pivot.columns],
                    y=[str(r) for r in pivot.index],
                    colorscale='Teal',
                    text=pivot.round(2).values,
                    texttemplate='%{text}',
                ),
                row=1, col=1
            )
        fig.update_xaxes(title_text="Qubits")
        fig.update_yaxes(title_text="Repeticiones")
        fig.update_layout(height=450, title_text="Búsqueda en rejilla QTL")
        return fig

    def grid_heatmap_png(self) -> plt.Figure:
        pivot = self.grid_frame()
        fig, ax = plt.subplots(figsize=(10, 4))
        if not pivot.empty:
            sns.heatmap(pivot, annot=True, fmt='.2f', cmap='crest', ax=ax)
        ax.set_title('Accuracy de test (%) por configuración', fontsize=14, pad=20)
        ax.set_xlabel('Qubits')
        ax.set_ylabel('Repeticiones')
        plt.tight_layout()
        return fig

    # ===== EXPORTACIÓN =====

    def export_all(self, output_dir: Union[str, Path], fmt: Optional[str] = None) -> List[Path]:
        """
        Escribe las figuras en HTML (plotly) o PNG (matplotlib/seaborn)

        Returns:
            List[Path]: Ficheros escritos
        """
        fmt = fmt or EXPORT_FORMAT
        if fmt not in ('html', 'png'):
            raise ConfigurationError(f"Formato de exportación desconocido: {fmt!r}")
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)

        written = []
        figures = {
            'loss_curves': self.loss_curves if fmt == 'html' else self.loss_curves_png,
            'grid_heatmap': self.grid_heatmap if fmt == 'html' else self.grid_heatmap_png,
        }
        for name, build in figures.items():
            if name == 'grid_heatmap' and self.grid_frame().empty:
                continue
            path = output_dir / f"{name}.{fmt}"
            fig = build()
            if fmt == 'html':
                fig.write_html(str(path), config=PLOTLY_CONFIG, include_plotlyjs='cdn')
            else:
                fig.savefig(path, dpi=120)
                plt.close(fig)
            written.append(path)
            logger.info(f"✅ Figura exportada: {path}")
        return written
