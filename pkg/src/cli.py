"""
Línea de comandos del motor QTL

Subcomandos: synth, train-baseline, finetune, grid, cv, evaluate, describe-circuit, report.
Códigos de salida: 0 éxito, 1 error de validación/uso, 2 fallo en ejecución.
"""

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from .checkpoint import load_checkpoint, save_checkpoint
from .config import LOG_FORMAT, LOG_LEVEL, RunConfig
from .data import synth_generate
from .exceptions import ConfigurationError, UsageError, VALIDATION_ERRORS
from .metrics import report_csv, report_table, report_text
from .models import BaselineCnn, build_baseline, make_ctl_head, make_qtl_model
from .pipeline import (
    Dataset,
    ExperimentResult,
    best_of_restarts,
    collect_results,
    encode_features,
    encode_inputs,
    evaluate,
    expectation_deviations,
    grid_search,
    kfold_cv,
    load_run_data,
    model_tag,
    run_experiment,
    split_arrays,
    write_json_atomic,
)
from .quantum_backend import Backend, NoiseModel, build_ansatz, expectation_deviation_bound
from .visualizations import ExperimentVisualizer

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    """ArgumentParser que convierte los errores de uso en UsageError (salida 1)"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def setup_logging(level: str = LOG_LEVEL) -> None:
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO), format=LOG_FORMAT, force=True)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='Fichero JSON de configuración (RunConfig)')
    common.add_argument('--seed', type=int, help='Semilla de toda la aleatoriedad de la ejecución')
    common.add_argument('--output-dir', help='Directorio de salida (por defecto QTL_OUTPUT_DIR o ./outputs)')
    common.add_argument('--log-level', default=LOG_LEVEL, help='Nivel de logging (default: %(default)s)')

    backend = argparse.ArgumentParser(add_help=False)
    backend.add_argument('--backend', choices=('ideal', 'noisy'), help='Backend de evaluación')
    backend.add_argument('--r1', type=float, help='Tasa despolarizante de un qubit')
    backend.add_argument('--r2', type=float, help='Tasa despolarizante de dos qubits')

    parser = _Parser(prog='qtl', description='Transferencia de aprendizaje cuántica para clasificación de MRI')
    sub = parser.add_subparsers(dest='command', parser_class=_Parser)
    sub.required = True

    synth = sub.add_parser('synth', parents=[common], help='Genera un dataset sintético (manifest + PGM)')
    synth.add_argument('--patients', type=int, default=12)
    synth.add_argument('--per-patient', type=int, default=34)
    synth.add_argument('--signal', type=float, default=0.8, help='Intensidad de la señal plantada')
    synth.add_argument('--out', required=True, help='Directorio de destino')

    baseline = sub.add_parser('train-baseline', parents=[common], help='Entrena la CNN de referencia')
    baseline.add_argument('--manifest', help='Manifiesto CSV (sustituye a data de la configuración)')
    baseline.add_argument('--epochs', type=int, help='Épocas (por defecto baseline_epochs)')

    finetune = sub.add_parser('finetune', parents=[common, backend], help='Entrena una cabeza CTL o QTL')
    finetune.add_argument('--mode', choices=('ctl', 'qtl'), required=True)
    finetune.add_argument('--baseline', help='Checkpoint del baseline (por defecto <output>/baseline.qtlc)')
    finetune.add_argument('--manifest')
    finetune.add_argument('--n-qubits', type=int)
    finetune.add_argument('--reps', type=int)
    finetune.add_argument('--restarts', type=int, default=1, help='Inicializaciones Glorot de la cabeza CTL')
    finetune.add_argument('--epochs', type=int)

    grid = sub.add_parser('grid', parents=[common, backend], help='Búsqueda en rejilla qubits × repeticiones')
    grid.add_argument('--baseline')
    grid.add_argument('--manifest')
    grid.add_argument('--jobs', type=int, default=1, help='Celdas en paralelo (default: 1)')
    grid.add_argument('--epochs', type=int)

    cv = sub.add_parser('cv', parents=[common, backend], help='Validación cruzada agrupada por paciente')
    cv.add_argument('--mode', choices=('baseline', 'ctl', 'qtl'), default='qtl')
    cv.add_argument('--k', type=int, default=4)
    cv.add_argument('--baseline')
    cv.add_argument('--manifest')
    cv.add_argument('--epochs', type=int)

    evaluate_cmd = sub.add_parser('evaluate', parents=[common, backend], help='Evalúa un checkpoint en test')
    evaluate_cmd.add_argument('--checkpoint', required=True)
    evaluate_cmd.add_argument('--manifest')

    describe = sub.add_parser('describe-circuit', parents=[common, backend], help='Describe el ansatz')
    describe.add_argument('--n-qubits', type=int)
    describe.add_argument('--reps', type=int)
    describe.add_argument('--gates', action='store_true', help='Incluye la lista de puertas')

    report = sub.add_parser('report', parents=[common], help='Tabla de resultados (CSV + texto)')
    report.add_argument('--results', help='Directorio de resultados (por defecto el de salida)')
    report.add_argument('--reference', action='append', help='Tag de referencia para las mejoras (repetible)')
    report.add_argument('--out', help='Fichero CSV (por defecto <results>/report.csv)')
    report.add_argument('--figures', action='store_true', help='Exporta también las figuras')

    return parser


# ===== RESOLUCIÓN DE CONFIGURACIÓN =====

def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Configuración del fichero + flags de la línea de comandos"""
    config = RunConfig.from_file(Path(args.config)) if args.config else RunConfig()

    if args.seed is not None:
        if args.seed < 0:
            raise ConfigurationError("--seed debe ser >= 0")
        config = replace(config, seed=args.seed, train=replace(config.train, seed=args.seed))
    if getattr(args, 'manifest', None):
        config = replace(config, data=replace(config.data, manifest=args.manifest, synth=None))
    if getattr(args, 'epochs', None) is not None:
        if args.command == 'train-baseline':
            config = replace(config, baseline_epochs=args.epochs)
        else:
            config = replace(config, train=replace(config.train, epochs=args.epochs))
    if getattr(args, 'n_qubits', None) is not None or getattr(args, 'reps', None) is not None:
        model = replace(
            config.model,
            n_qubits=args.n_qubits if args.n_qubits is not None else config.model.n_qubits,
            reps=args.reps if args.reps is not None else config.model.reps,
        )
        config = replace(config, model=model)
    if getattr(args, 'backend', None) or getattr(args, 'r1', None) is not None or getattr(args, 'r2', None) is not None:
        backend = replace(
            config.backend,
            kind=args.backend or config.backend.kind,
            r_1q=args.r1 if args.r1 is not None else config.backend.r_1q,
            r_2q=args.r2 if args.r2 is not None else config.backend.r_2q,
        )
        config = replace(config, backend=backend)

    config = replace(config, output_dir=str(config.resolve_output_dir(args.output_dir)))
    logger.info(f"⚙️ Configuración resuelta:\n{config.to_json()}")
    return config


def backend_from(config: RunConfig) -> Backend:
    if config.backend.kind == 'noisy':
        return Backend.noisy(NoiseModel(config.backend.r_1q, config.backend.r_2q))
    return Backend()


def _prepare_data(config: RunConfig) -> Tuple[Dataset, Dataset]:
    samples = load_run_data(config)
    return split_arrays(samples, config.seed, config.test_fraction)


def _load_frozen(config: RunConfig, path: Optional[str]):
    path = Path(path) if path else Path(config.output_dir) / 'baseline.qtlc'
    baseline = load_checkpoint(path)
    if not isinstance(baseline, BaselineCnn):
        raise ConfigurationError(f"{path} no contiene un baseline (tipo {baseline.kind})")
    return baseline.freeze()


def _encoded(model, data: Dataset) -> Dataset:
    images, labels = data
    return encode_inputs(model, images), labels


def _save_result(config: RunConfig, tag: str, result: ExperimentResult) -> Path:
    path = Path(config.output_dir) / f"result_{tag}.json"
    write_json_atomic(path, result.to_dict())
    logger.info(f"✅ Resultado guardado en {path}")
    return path


# ===== SUBCOMANDOS =====

def cmd_synth(args, config: RunConfig) -> int:
    samples = synth_generate(args.patients, args.per_patient, config.seed, args.signal, args.out)
    logger.info(f"🎉 {len(samples)} imágenes de {args.patients} pacientes en {args.out}")
    return EXIT_OK


def cmd_train_baseline(args, config: RunConfig) -> int:
    train_data, test_data = _prepare_data(config)
    model = build_baseline(config.seed)
    train_config = replace(config.train, epochs=config.baseline_epochs)
    result = run_experiment(model, train_data, test_data, train_config)
    save_checkpoint(model, Path(config.output_dir) / 'baseline.qtlc')
    _save_result(config, 'baseline', result)
    logger.info(f"📊 Baseline: accuracy {result.metrics.accuracy:.4f}, auc {result.metrics.auc:.4f}")
    return EXIT_OK


def cmd_finetune(args, config: RunConfig) -> int:
    frozen = _load_frozen(config, args.baseline)
    train_data, test_data = _prepare_data(config)
    backend = backend_from(config)

    if args.mode == 'ctl':
        seeds = [config.seed + i for i in range(max(1, args.restarts))]
        train_set = (encode_features(frozen, train_data[0]), train_data[1])
        test_set = (encode_features(frozen, test_data[0]), test_data[1])
        model, result = best_of_restarts(frozen, seeds, train_set, test_set, config.train)
    else:
        model = make_qtl_model(frozen, config.model.n_qubits, config.model.reps, config.seed)
        train_set, test_set = _encoded(model, train_data), _encoded(model, test_data)
        result = run_experiment(model, train_set, test_set, config.train, backend)
        if backend.kind == 'noisy':
            deviation = expectation_deviations(model, test_set[0], backend.noise)
            result.config['max_expectation_deviation'] = deviation.max_deviation

    save_checkpoint(model, Path(config.output_dir) / f"{args.mode}.qtlc")
    _save_result(config, args.mode, result)
    logger.info(f"📊 {model_tag(model)}: accuracy {result.metrics.accuracy:.4f} ({result.metrics.backend_tag})")
    return EXIT_OK


def cmd_grid(args, config: RunConfig) -> int:
    if args.jobs < 1:
        raise UsageError("--jobs debe ser >= 1")
    frozen = _load_frozen(config, args.baseline)
    train_data, test_data = _prepare_data(config)
    outcome = grid_search(
        frozen,
        (encode_features(frozen, train_data[0]), train_data[1]),
        (encode_features(frozen, test_data[0]), test_data[1]),
        config.grid,
        config.train,
        backend_from(config),
        Path(config.output_dir) / 'grid',
        args.jobs,
    )
    n_qubits, reps = outcome.best_config
    logger.info(f"🎉 {len(outcome.results)} celdas; mejor {n_qubits} qubits × {reps} repeticiones")
    return EXIT_OK


def cmd_cv(args, config: RunConfig) -> int:
    samples = load_run_data(config)
    frozen = _load_frozen(config, args.baseline) if args.mode != 'baseline' else None

    def factory(fold: int):
        seed = config.seed + fold
        if args.mode == 'baseline':
            return build_baseline(seed)
        if args.mode == 'ctl':
            return make_ctl_head(frozen, seed)
        return make_qtl_model(frozen, config.model.n_qubits, config.model.reps, seed)

    train_config = replace(config.train, epochs=config.baseline_epochs) if args.mode == 'baseline' else config.train
    outcome = kfold_cv(samples, args.k, config.seed, factory, train_config, backend_from(config))
    payload = {'mode': args.mode, 'k': args.k, 'folds': outcome.folds, 'summary': outcome.summary}
    write_json_atomic(Path(config.output_dir) / f"cv_{args.mode}.json", payload)
    print(json.dumps(outcome.summary, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_evaluate(args, config: RunConfig) -> int:
    model = load_checkpoint(args.checkpoint)
    backend = backend_from(config)
    if backend.kind == 'noisy' and model.kind != 'qtl':
        logger.warning(f"⚠️ El backend ruidoso no afecta a un modelo {model.kind}; se evalúa en ideal")
        backend = Backend()
    _, test_data = _prepare_data(config)
    report = evaluate(model, _encoded(model, test_data), backend)
    sys.stdout.write(report_csv(report_table([report], references=())))
    return EXIT_OK


def cmd_describe_circuit(args, config: RunConfig) -> int:
    circuit = build_ansatz(config.model.n_qubits, config.model.reps)
    single, double = circuit.gate_counts()
    noise = NoiseModel(config.backend.r_1q, config.backend.r_2q)
    description = {
        'n_qubits': circuit.n_qubits,
        'reps': config.model.reps,
        'n_embedding_params': circuit.n_embedding_params,
        'n_trainable_params': circuit.n_trainable_params,
        'single_qubit_gates': single,
        'two_qubit_gates': double,
        'r_1q': noise.r_1q,
        'r_2q': noise.r_2q,
        'deviation_bound': expectation_deviation_bound(circuit, noise),
        'guaranteed_deviation_bound': expectation_deviation_bound(circuit, noise, guaranteed=True),
    }
    if args.gates:
        description['gates'] = [g.to_dict() for g in circuit.gates]
    print(json.dumps(description, indent=2))
    return EXIT_OK


def cmd_report(args, config: RunConfig) -> int:
    results_dir = Path(args.results) if args.results else Path(config.output_dir)
    results = collect_results(results_dir)
    references = args.reference or ['baseline']
    frame = report_table([r.metrics for r in results], references)

    out = Path(args.out) if args.out else results_dir / 'report.csv'
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, 'w', encoding='utf-8', newline='\n') as fh:
        fh.write(report_csv(frame))
    print(report_text(frame))
    logger.info(f"✅ Informe escrito en {out} ({len(results)} filas)")

    if args.figures:
        ExperimentVisualizer(results).export_all(results_dir / 'figures')
    return EXIT_OK


COMMANDS = {
    'synth': cmd_synth,
    'train-baseline': cmd_train_baseline,
    'finetune': cmd_finetune,
    'grid': cmd_grid,
    'cv': cmd_cv,
    'evaluate': cmd_evaluate,
    'describe-circuit': cmd_describe_circuit,
    'report': cmd_report,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Ejecuta un subcomando y devuelve el código de salida
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        sys.stderr.write(f"qtl: error: {e}\n")
        return EXIT_VALIDATION
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging(args.log_level)
    try:
        config = resolve_config(args)
        return COMMANDS[args.command](args, config)
    except VALIDATION_ERRORS as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return EXIT_VALIDATION
    except Exception as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return EXIT_RUNTIME


def main(argv: Optional[List[str]] = None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
