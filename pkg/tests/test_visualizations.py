"""
Tests de las figuras de resultados
"""

import pytest

from src.exceptions import ConfigurationError
from src.metrics import MetricsReport
from src.pipeline import ExperimentResult
from src.visualizations import ExperimentVisualizer


def _result(model, accuracy, n_qubits=None, reps=None):
    config = {'model': model}
    if n_qubits is not None:
        config.update({'n_qubits': n_qubits, 'reps': reps})
    report = MetricsReport(accuracy, 0.5, 0.5, 0.5, 0.5, model, 'ideal')
    return ExperimentResult(config, report, [0.7, 0.6, 0.5], [1e-4] * 3, 0.5, accuracy, 1.0, True)


@pytest.fixture
def grid_results():
    return [
        _result('qtl', 0.80, 3, 2),
        _result('qtl', 0.85, 3, 3),
        _result('qtl', 0.90, 4, 2),
        _result('qtl', 0.75, 4, 3),
        _result('ctl', 0.70),
    ]


class TestFrames:

    def test_grid_pivot(self, grid_results):
        pivot = ExperimentVisualizer(grid_results).grid_frame()
        assert list(pivot.index) == [2, 3]
        assert list(pivot.columns) == [3, 4]
        assert pivot.loc[2, 4] == pytest.approx(90.0)

    def test_loss_curve_rows(self, grid_results):
        frame = ExperimentVisualizer(grid_results).loss_curves_frame()
        assert len(frame) == 15
        assert set(frame['run']) >= {'QTL 3q × 2', 'CTL'}

    def test_one_trace_per_run(self, grid_results):
        assert len(ExperimentVisualizer(grid_results).loss_curves().data) == 5


class TestExport:

    def test_html(self, grid_results, tmp_path):
        written = ExperimentVisualizer(grid_results).export_all(tmp_path, 'html')
        assert [p.name for p in written] == ['loss_curves.html', 'grid_heatmap.html']
        assert all(p.stat().st_size > 0 for p in written)

    def test_png(self, grid_results, tmp_path):
        written = ExperimentVisualizer(grid_results).export_all(tmp_path, 'png')
        assert [p.name for p in written] == ['loss_curves.png', 'grid_heatmap.png']

    def test_heatmap_skipped_without_grid_cells(self, tmp_path):
        written = ExperimentVisualizer([_result('baseline', 0.7)]).export_all(tmp_path, 'html')
        assert [p.name for p in written] == ['loss_curves.html']

    def test_unknown_format(self, grid_results, tmp_path):
        with pytest.raises(ConfigurationError):
            ExperimentVisualizer(grid_results).export_all(tmp_path, 'svg')
