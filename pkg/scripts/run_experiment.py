#!/usr/bin/env python3
"""
Reproducción completa a escala de escritorio:
dataset sintético -> baseline -> CTL -> QTL (ideal + ruidoso) -> informe y figuras
"""

import sys
import argparse
import logging
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.checkpoint import save_checkpoint
from src.config import BEST_QUBITS, BEST_REPS, LOG_FORMAT, LOG_LEVEL, GridConfig, TrainConfig
from src.data import synth_generate
from src.metrics import report_csv, report_table, report_text
from src.pipeline import collect_results, flatness_diagnostic, grid_search, run_study, write_json_atomic
from src.quantum_backend import Backend
from src.visualizations import ExperimentVisualizer

logging.basicConfig(
    level=getattr(logging, LOG_LEVEL.upper(), logging.INFO),
    format=LOG_FORMAT
)
logger = logging.getLogger(__name__)


def parse_args():
    parser = argparse.ArgumentParser(description='Experimento QTL completo sobre datos sintéticos')
    parser.add_argument('--out', default='outputs/desk', help='Directorio de resultados (default: %(default)s)')
    parser.add_argument('--patients', type=int, default=8)
    parser.add_argument('--per-patient', type=int, default=12)
    parser.add_argument('--signal', type=float, default=0.8)
    parser.add_argument('--seed', type=int, default=0)
    parser.add_argument('--baseline-epochs', type=int, default=5)
    parser.add_argument('--epochs', type=int, default=10)
    parser.add_argument('--lr', type=float, default=1e-3, help='lr de las cabezas (default: %(default)s)')
    parser.add_argument('--restarts', type=int, default=3, help='Reinicios Glorot de la cabeza CTL')
    parser.add_argument('--n-qubits', type=int, default=BEST_QUBITS)
    parser.add_argument('--reps', type=int, default=BEST_REPS)
    parser.add_argument('--grid', action='store_true', help='Ejecuta también la búsqueda en rejilla')
    parser.add_argument('--grid-max-qubits', type=int, default=5)
    parser.add_argument('--jobs', type=int, default=1)
    parser.add_argument('--figures', choices=('html', 'png'), help='Exporta las figuras en este formato')
    return parser.parse_args()


def main():
    args = parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()

    print("\n" + "=" * 60)
    print("🧪 EXPERIMENTO DE TRANSFERENCIA CUÁNTICA")
    print("=" * 60 + "\n")

    try:
        # ===== DATOS =====
        samples = synth_generate(args.patients, args.per_patient, args.seed, args.signal, out / 'data')

        # ===== BASELINE, CTL Y QTL (ideal + ruidoso) =====
        baseline_config = TrainConfig(epochs=args.baseline_epochs, seed=args.seed, batch_size=16, lr=1e-3)
        head_config = TrainConfig(epochs=args.epochs, seed=args.seed, lr=args.lr, step_size=max(1, args.epochs // 3))
        study = run_study(
            samples, args.seed, baseline_config, head_config, args.n_qubits, args.reps, restarts=args.restarts
        )
        for name, result in (('baseline', study.baseline), ('ctl', study.ctl), ('qtl', study.qtl), ('qtl_noisy', study.qtl_noisy)):
            write_json_atomic(out / f"result_{name}.json", result.to_dict())
        for name, model in study.models.items():
            save_checkpoint(model, out / f"{name}.qtlc")

        checks = study.checks()
        if not checks['noisy_gap_small']:
            logger.warning(f"⚠️ Diferencia ideal/ruidoso de {100 * study.noisy_gap:.2f} puntos")
        if not checks['deviation_within_bound']:
            logger.error("❌ La desviación de expectativas supera la cota garantizada")

        test_set = study.test_set
        flatness = flatness_diagnostic(study.models['qtl'], test_set[0][:8], test_set[1][:8], n_param_samples=20, seed=args.seed)
        logger.info(f"📊 Planitud: varianza media de ∂L/∂θ {flatness.variance:.3e}")

        # ===== REJILLA (opcional) =====
        if args.grid:
            grid = GridConfig(qubits=(3, args.grid_max_qubits), reps=(2, 4))
            grid_search(study.frozen, study.train_set, test_set, grid, head_config, Backend(), out / 'grid', args.jobs)

        # ===== INFORME =====
        results = collect_results(out)
        frame = report_table([r.metrics for r in results], references=('baseline', 'ctl'))
        with open(out / 'report.csv', 'w', encoding='utf-8', newline='\n') as fh:
            fh.write(report_csv(frame))
        print(report_text(frame))

        deviation = study.deviation
        write_json_atomic(out / 'summary.json', {
            'noisy_accuracy_gap': study.noisy_gap,
            'max_expectation_deviation': deviation.max_deviation,
            'deviation_bound': deviation.bound,
            'guaranteed_deviation_bound': deviation.guaranteed_bound,
            'flatness_variance': flatness.variance,
            'flatness_mean_abs': flatness.mean_abs,
            'checks': checks,
        })

        if args.figures:
            ExperimentVisualizer(results).export_all(out / 'figures', args.figures)

        print("\n" + "=" * 60)
        print(f"🎉 EXPERIMENTO COMPLETADO EN {time.perf_counter() - started:.1f} s")
        print("=" * 60)
        print(f"\n📍 Resultados en: {out}\n")

    except Exception as e:
        logger.error(f"❌ Experimento interrumpido: {e}")
        sys.exit(2)


if __name__ == "__main__":
    main()
