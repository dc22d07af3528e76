"""
Entrenamiento, evaluación, validación cruzada por paciente, búsqueda en rejilla
y diagnóstico de planitud del paisaje de pérdida
"""

import itertools
import json
import logging
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from . import autodiff as ad
from .autodiff import ParameterSet, Tape, Tensor
from .checkpoint import save_checkpoint
from .config import DEFAULT_TEST_FRACTION, GridConfig, RunConfig, TrainConfig
from .data import ImageSample, load_dataset, patient_folds, split, subset, synth_generate, to_arrays
from .dqn import DressedQuantumNet, scale_embedding
from .exceptions import MetricError, NumericalError, StateError, TrainingError
from .metrics import MetricsReport, metrics_report, summarize_folds
from .models import (
    FrozenFeatures,
    Model,
    TransferModel,
    build_baseline,
    feature_extract,
    make_ctl_restarts,
    make_qtl_model,
)
from .quantum_backend import (
    IDEAL,
    Backend,
    NoiseModel,
    expectation_deviation_bound,
    expectations,
    noisy_expectations,
    z_observables,
)

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
ENCODE_BATCH = 64
CELL_PATTERN = 'cell_q{n:02d}_r{reps}'

Dataset = Tuple[np.ndarray, np.ndarray]


# ===== OPTIMIZADOR Y SCHEDULER =====

def adam_step(
    params: ParameterSet,
    lr: float,
    beta1: float = ADAM_BETA1,
    beta2: float = ADAM_BETA2,
    eps: float = ADAM_EPS
) -> None:
    """
    Actualización Adam con corrección de sesgo (momentos en 64 bits)

    Raises:
        StateError: algún parámetro sin gradiente
    """
    missing = [name for name, t in params.items() if t.grad is None]
    if missing:
        raise StateError(f"Parámetros sin gradiente: {', '.join(missing)}")

    params.step += 1
    t = params.step
    for name, tensor in params.items():
        g = tensor.grad.astype(np.float64)
        m = params.first_moment[name] = beta1 * params.first_moment[name] + (1.0 - beta1) * g
        v = params.second_moment[name] = beta2 * params.second_moment[name] + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        update = lr * m_hat / (np.sqrt(v_hat) + eps)
        tensor.data = (tensor.data.astype(np.float64) - update).astype(tensor.dtype)


def step_lr(epoch: int, base_lr: float = 1e-4, step: int = 10, gamma: float = 0.75) -> float:
    """lr = base_lr · gamma^floor(epoch / step)"""
    return base_lr * gamma ** (epoch // step)


# ===== ENTRENAMIENTO =====

@dataclass
class TrainResult:
    loss_curve: List[float] = field(default_factory=list)
    lr_curve: List[float] = field(default_factory=list)
    steps: int = 0

    @property
    def final_loss(self) -> float:
        return self.loss_curve[-1] if self.loss_curve else float('nan')


def encode_features(frozen: FrozenFeatures, images: np.ndarray, batch_size: int = ENCODE_BATCH) -> np.ndarray:
    """Características congeladas [N, 2304] calculadas por lotes"""
    if len(images) == 0:
        return np.zeros((0, frozen.output_dim), dtype=frozen.dtype)
    chunks = [feature_extract(images[i:i + batch_size], frozen).data for i in range(0, len(images), batch_size)]
    return np.concatenate(chunks)


def encode_inputs(model: Model, images: np.ndarray, batch_size: int = ENCODE_BATCH) -> np.ndarray:
    """
    Entradas de la parte entrenable: imágenes (baseline) o características congeladas (ctl/qtl)
    """
    if not isinstance(model, TransferModel):
        return np.asarray(images)
    return encode_features(model.frozen, images, batch_size)


def train(
    model: Model,
    train_set: Dataset,
    config: TrainConfig,
    backend: Backend = IDEAL,
    progress: bool = True
) -> TrainResult:
    """
    Minimiza la BCE media con Adam y scheduler escalonado por épocas

    Args:
        model: Modelo con parameters() y logits()
        train_set: (entradas ya codificadas, etiquetas {0, 1})
        config: Hiperparámetros
        backend: Backend de la cabeza cuántica (solo 'ideal' es diferenciable)
        progress: Muestra barra de progreso por épocas

    Returns:
        TrainResult: Curvas de pérdida y lr por época
    """
    inputs, labels = train_set
    n = len(labels)
    if n == 0:
        raise TrainingError("El conjunto de entrenamiento está vacío")

    params = model.parameters()
    shuffle_seq, dropout_seq = np.random.SeedSequence(config.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    dropout_rng = np.random.default_rng(dropout_seq)
    gamma = config.effective_gamma
    result = TrainResult()

    epochs = tqdm(range(config.epochs), desc=f"Entrenando {model.kind}", disable=not progress, leave=False)
    for epoch in epochs:
        lr = step_lr(epoch, config.lr, config.step_size, gamma)
        order = shuffle_rng.permutation(n)
        total_loss = 0.0

        for batch_index, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            x = Tensor(inputs[idx], dtype=model.dtype)
            try:
                with Tape() as tape:
                    loss = ad.bce_with_logits(model.logits(x, True, dropout_rng, backend), labels[idx].reshape(-1, 1))
                ad.backward(tape, loss, params)
            except NumericalError as e:
                logger.error(f"❌ Divergencia en época {epoch}, lote {batch_index}, lr {lr:.3e}: {e}")
                raise TrainingError(f"Pérdida no finita (época {epoch}, lote {batch_index}, lr {lr:.3e})") from e

            adam_step(params, lr)
            result.steps += 1
            total_loss += loss.item() * len(idx)

        epoch_loss = total_loss / n
        if not np.isfinite(epoch_loss):
            raise TrainingError(f"Pérdida no finita al final de la época {epoch} (lr {lr:.3e})")
        result.loss_curve.append(epoch_loss)
        result.lr_curve.append(lr)
        if progress:
            epochs.set_postfix(loss=f"{epoch_loss:.4f}")
        logger.debug(f"📊 Época {epoch}: pérdida {epoch_loss:.6f}, lr {lr:.3e}")

    logger.info(f"✅ {model.kind}: {result.steps} pasos, pérdida final {result.final_loss:.4f}")
    return result


def predict_proba(
    model: Model,
    inputs: np.ndarray,
    backend: Backend = IDEAL,
    batch_size: int = ENCODE_BATCH
) -> np.ndarray:
    """Probabilidades sigmoid(logit) sin dropout ni cinta"""
    logits = [
        model.logits(Tensor(inputs[i:i + batch_size], dtype=model.dtype), False, None, backend).data
        for i in range(0, len(inputs), batch_size)
    ]
    if not logits:
        return np.zeros(0, dtype=np.float64)
    return ad.sigmoid(np.concatenate(logits).astype(np.float64).reshape(-1))


def model_tag(model: Model) -> str:
    if model.kind == 'qtl':
        return f"qtl_q{model.n_qubits:02d}_r{model.reps}"
    return model.kind


def evaluate(
    model: Model,
    test_set: Dataset,
    backend: Backend = IDEAL,
    tag: Optional[str] = None
) -> MetricsReport:
    """
    Evalúa sobre (entradas codificadas, etiquetas) en el backend indicado
    """
    inputs, labels = test_set
    if len(labels) == 0:
        raise MetricError("Conjunto de test vacío")
    probs = predict_proba(model, inputs, backend)
    return metrics_report(probs, labels, tag or model_tag(model), backend.tag)


# ===== RESULTADOS =====

@dataclass
class ExperimentResult:
    """Resultado persistible de un entrenamiento + evaluación"""

    config: Dict[str, Any]
    metrics: Optional[MetricsReport] = None
    loss_curve: List[float] = field(default_factory=list)
    lr_curve: List[float] = field(default_factory=list)
    final_loss: Optional[float] = None
    ideal_accuracy: Optional[float] = None
    wall_clock_seconds: float = 0.0
    completed: bool = False

    def to_dict(self) -> Dict[str, Any]:
        payload = asdict(self)
        payload['metrics'] = self.metrics.to_dict() if self.metrics else None
        return payload

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> 'ExperimentResult':
        payload = dict(payload)
        if payload.get('metrics') is not None:
            payload['metrics'] = MetricsReport.from_dict(payload['metrics'])
        return cls(**payload)


def write_json_atomic(path: Union[str, Path], payload: Dict[str, Any]) -> None:
    """Escribe en un temporal del mismo directorio y lo renombra"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=path.name, suffix='.tmp', dir=path.parent)
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='\n') as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write('\n')
        os.replace(tmp, path)
    except Exception:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


RESULT_READ_ERRORS = (json.JSONDecodeError, TypeError, KeyError, ValueError)


def read_result(path: Union[str, Path]) -> ExperimentResult:
    with open(path, 'r', encoding='utf-8') as fh:
        return ExperimentResult.from_dict(json.load(fh))


def collect_results(results_dir: Union[str, Path]) -> List[ExperimentResult]:
    """Resultados completados del directorio y sus subdirectorios (primero los del nivel superior)"""
    root = Path(results_dir)
    results = []
    paths = sorted(root.rglob('*.json'), key=lambda p: (len(p.relative_to(root).parts), str(p.relative_to(root))))
    for path in paths:
        try:
            result = read_result(path)
        except RESULT_READ_ERRORS as e:
            logger.warning(f"⚠️ Ignorando {path.name}: {e}")
            continue
        if result.completed and result.metrics is not None:
            results.append(result)
    return results


def run_experiment(
    model: Model,
    train_set: Dataset,
    test_set: Dataset,
    config: TrainConfig,
    backend: Backend = IDEAL,
    progress: bool = True
) -> ExperimentResult:
    """
    Entrena en ideal y evalúa en el backend indicado (y en ideal para la clasificación)
    """
    started = time.perf_counter()
    trained = train(model, train_set, config, IDEAL, progress)
    ideal_report = evaluate(model, test_set, IDEAL)
    report = ideal_report if backend.kind == 'ideal' else evaluate(model, test_set, backend)

    tag = {'model': model.kind, 'seed': config.seed, 'backend': backend.tag}
    if model.kind == 'qtl':
        tag.update({'n_qubits': model.n_qubits, 'reps': model.reps})
    return ExperimentResult(
        config=tag,
        metrics=report,
        loss_curve=trained.loss_curve,
        lr_curve=trained.lr_curve,
        final_loss=trained.final_loss,
        ideal_accuracy=ideal_report.accuracy,
        wall_clock_seconds=time.perf_counter() - started,
        completed=True,
    )


def best_of_restarts(
    frozen: FrozenFeatures,
    seeds: Sequence[int],
    train_set: Dataset,
    test_set: Dataset,
    config: TrainConfig,
    progress: bool = True
) -> Tuple[TransferModel, ExperimentResult]:
    """
    Entrena la cabeza CTL desde varias inicializaciones Glorot y conserva la mejor en test
    """
    best: Optional[Tuple[TransferModel, ExperimentResult]] = None
    for seed, model in zip(seeds, make_ctl_restarts(frozen, seeds)):
        result = run_experiment(model, train_set, test_set, replace(config, seed=seed), IDEAL, progress)
        logger.info(f"📊 CTL semilla {seed}: accuracy {result.metrics.accuracy:.4f}")
        if best is None or result.metrics.accuracy > best[1].metrics.accuracy:
            best = (model, result)
    if best is None:
        raise TrainingError("best_of_restarts requiere al menos una semilla")
    return best


# ===== VALIDACIÓN CRUZADA =====

@dataclass
class CrossValidationResult:
    reports: List[MetricsReport]
    summary: Dict[str, Dict[str, float]]
    folds: List[List[int]]


def kfold_cv(
    dataset: Sequence[ImageSample],
    k: int,
    seed: int,
    model_factory: Callable[[int], Model],
    config: TrainConfig,
    backend: Backend = IDEAL,
    progress: bool = False
) -> CrossValidationResult:
    """
    Validación cruzada de k folds agrupada por paciente

    Args:
        dataset: Muestras
        k: Número de folds
        seed: Semilla del reparto de pacientes
        model_factory: fold -> modelo nuevo
        config: Hiperparámetros de entrenamiento
        backend: Backend de validación

    Returns:
        CrossValidationResult: Informes por fold, media y desviación típica poblacional
    """
    folds = patient_folds(dataset, k, seed)
    reports = []
    for fold_index, assignment in enumerate(folds):
        model = model_factory(fold_index)
        train_images, train_labels = to_arrays(subset(dataset, assignment.train), model.dtype)
        val_images, val_labels = to_arrays(subset(dataset, assignment.test), model.dtype)
        train_set = (encode_inputs(model, train_images), train_labels)
        val_set = (encode_inputs(model, val_images), val_labels)
        train(model, train_set, config, IDEAL, progress)
        report = evaluate(model, val_set, backend)
        logger.info(f"📊 Fold {fold_index + 1}/{k}: accuracy {report.accuracy:.4f}, auc {report.auc:.4f}")
        reports.append(report)
    return CrossValidationResult(reports, summarize_folds(reports), [f.test_patients for f in folds])


# ===== BÚSQUEDA EN REJILLA =====

@dataclass
class GridResult:
    results: List[ExperimentResult]
    best: ExperimentResult

    @property
    def best_config(self) -> Tuple[int, int]:
        return self.best.config['n_qubits'], self.best.config['reps']


def grid_cells(grid: GridConfig) -> List[Tuple[int, int]]:
    qubits = range(grid.qubits[0], grid.qubits[1] + 1)
    reps = range(grid.reps[0], grid.reps[1] + 1)
    return list(itertools.product(qubits, reps))


def cell_seed(seed: int, n_qubits: int, reps: int) -> int:
    """Semilla de la celda, independiente del orden de ejecución"""
    return int(np.random.SeedSequence([seed, n_qubits, reps]).generate_state(1)[0])


def select_best(results: Sequence[ExperimentResult]) -> ExperimentResult:
    """Máxima accuracy ideal; empates a favor de menos qubits y luego menos repeticiones"""
    return min(results, key=lambda r: (-r.ideal_accuracy, r.config['n_qubits'], r.config['reps']))


def _run_cell(
    frozen: FrozenFeatures,
    n_qubits: int,
    reps: int,
    train_set: Dataset,
    test_set: Dataset,
    config: TrainConfig,
    backend: Backend,
    output_dir: Path
) -> ExperimentResult:
    stem = CELL_PATTERN.format(n=n_qubits, reps=reps)
    path = output_dir / f"{stem}.json"
    seed = cell_seed(config.seed, n_qubits, reps)
    write_json_atomic(path, ExperimentResult({'model': 'qtl', 'n_qubits': n_qubits, 'reps': reps, 'seed': seed}).to_dict())

    model = make_qtl_model(frozen, n_qubits, reps, seed)
    result = run_experiment(model, train_set, test_set, replace(config, seed=seed), backend, progress=False)
    save_checkpoint(model, output_dir / f"{stem}.qtlc")
    write_json_atomic(path, result.to_dict())
    return result


def grid_search(
    frozen: FrozenFeatures,
    train_set: Dataset,
    test_set: Dataset,
    grid: GridConfig,
    config: TrainConfig,
    backend: Backend = IDEAL,
    output_dir: Union[str, Path] = 'outputs/grid',
    jobs: int = 1
) -> GridResult:
    """
    Entrena y evalúa una cabeza QTL por cada (n_qubits, reps) de la rejilla

    Cada celda se persiste en cell_qNN_rR.json (+ checkpoint .qtlc); las celdas ya
    completadas se reutilizan sin volver a ejecutarse.

    Args:
        frozen: Características congeladas del baseline
        train_set: (características, etiquetas) de train
        test_set: (características, etiquetas) de test
        grid: Rangos de qubits y repeticiones
        config: Hiperparámetros (la semilla de cada celda deriva de config.seed)
        backend: Backend de evaluación del informe
        output_dir: Directorio de estado del barrido
        jobs: Celdas en paralelo

    Returns:
        GridResult: Resultados en orden de la rejilla y mejor configuración
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    cells = grid_cells(grid)

    done: Dict[Tuple[int, int], ExperimentResult] = {}
    for n_qubits, reps in cells:
        path = output_dir / f"{CELL_PATTERN.format(n=n_qubits, reps=reps)}.json"
        if path.exists():
            try:
                previous = read_result(path)
            except RESULT_READ_ERRORS as e:
                logger.warning(f"⚠️ Celda ilegible {path.name}, se repite: {e}")
                continue
            if previous.completed:
                done[(n_qubits, reps)] = previous
    pending = [cell for cell in cells if cell not in done]
    logger.info(f"🧪 Rejilla: {len(cells)} celdas, {len(done)} ya completadas, {len(pending)} pendientes")

    def run(cell: Tuple[int, int]) -> ExperimentResult:
        return _run_cell(frozen, cell[0], cell[1], train_set, test_set, config, backend, output_dir)

    try:
        with tqdm(total=len(pending), desc="Rejilla") as pbar:
            if jobs <= 1:
                for cell in pending:
                    done[cell] = run(cell)
                    pbar.update(1)
            else:
                with ThreadPoolExecutor(max_workers=jobs) as pool:
                    futures = {pool.submit(run, cell): cell for cell in pending}
                    for future in as_completed(futures):
                        done[futures[future]] = future.result()
                        pbar.update(1)
    except Exception as e:
        logger.error(f"❌ Barrido interrumpido ({len(done)}/{len(cells)} celdas completadas): {e}")
        raise

    results = [done[cell] for cell in cells]
    best = select_best(results)
    logger.info(
        f"✅ Mejor configuración: {best.config['n_qubits']} qubits, {best.config['reps']} repeticiones "
        f"(accuracy ideal {best.ideal_accuracy:.4f})"
    )
    return GridResult(results, best)


# ===== DIAGNÓSTICO DE PLANITUD =====

@dataclass
class FlatnessReport:
    mean: float
    variance: float
    mean_abs: float
    per_param_variance: List[float]
    n_samples: int


def flatness_diagnostic(
    model: Union[TransferModel, DressedQuantumNet],
    feature_batch: np.ndarray,
    labels: Optional[np.ndarray] = None,
    n_param_samples: int = 50,
    seed: int = 0
) -> FlatnessReport:
    """
    Estadísticos de ∂L/∂θ con θ ~ U[-π, π] (barren plateaus)

    Con etiquetas L es la BCE; sin ellas, la media de los logits. El θ del
    modelo se restaura al terminar.

    Args:
        model: Modelo híbrido o DQN
        feature_batch: Características [N, D]
        labels: Etiquetas opcionales del lote de prueba
        n_param_samples: Sorteos de θ
        seed: Semilla de los sorteos

    Returns:
        FlatnessReport: Media, varianza media por parámetro y media de |∂L/∂θ|
    """
    head = model.head if isinstance(model, TransferModel) else model
    if not isinstance(head, DressedQuantumNet):
        raise StateError("flatness_diagnostic requiere un modelo híbrido")

    rng = np.random.default_rng(seed)
    inputs = Tensor(feature_batch, dtype=head.theta.dtype)
    params = head.parameters()
    original = head.theta.data.copy()
    grads = np.zeros((n_param_samples, head.theta.size), dtype=np.float64)

    try:
        for draw in range(n_param_samples):
            head.theta.data = rng.uniform(-np.pi, np.pi, head.theta.size).astype(head.theta.dtype)
            with Tape() as tape:
                logits = head.forward(inputs)
                loss = ad.bce_with_logits(logits, labels) if labels is not None else ad.mean(logits)
            ad.backward(tape, loss, params)
            grads[draw] = head.theta.grad
    finally:
        head.theta.data = original
        params.zero_grad()

    per_param = grads.var(axis=0)
    return FlatnessReport(
        mean=float(grads.mean()) if grads.size else 0.0,
        variance=float(per_param.mean()) if per_param.size else 0.0,
        mean_abs=float(np.abs(grads).mean()) if grads.size else 0.0,
        per_param_variance=[float(v) for v in per_param],
        n_samples=n_param_samples,
    )


# ===== DATOS DE UNA EJECUCIÓN =====

def load_run_data(config: RunConfig) -> List[ImageSample]:
    """Dataset del manifiesto o, si no hay, generado en memoria"""
    if config.data.manifest is not None:
        return load_dataset(config.data.manifest)
    synth = config.data.synth
    logger.info(f"🧪 Generando dataset sintético ({synth.patients} pacientes × {synth.per_patient})")
    return synth_generate(synth.patients, synth.per_patient, synth.seed, synth.signal_strength)


def split_arrays(
    samples: Sequence[ImageSample],
    seed: int,
    test_fraction: float = DEFAULT_TEST_FRACTION
) -> Tuple[Dataset, Dataset]:
    """Partición por paciente convertida a arrays (imágenes, etiquetas)"""
    assignment = split(samples, seed, test_fraction)
    logger.info(
        f"📊 Partición: {len(assignment.train)} train / {len(assignment.test)} test "
        f"(pacientes de test {assignment.test_patients})"
    )
    return to_arrays(subset(samples, assignment.train)), to_arrays(subset(samples, assignment.test))


# ===== ROBUSTEZ FRENTE AL RUIDO =====

@dataclass
class DeviationReport:
    max_deviation: float
    bound: float
    guaranteed_bound: float
    n_samples: int

    @property
    def within_bound(self) -> bool:
        return self.max_deviation <= self.guaranteed_bound + 1e-12

    @property
    def within_typical_bound(self) -> bool:
        return self.max_deviation <= self.bound + 1e-12


def expectation_deviations(model: TransferModel, inputs: np.ndarray, noise: NoiseModel) -> DeviationReport:
    """
    max |⟨Z⟩_ruido - ⟨Z⟩_ideal| por muestra y qubit frente a la cota despolarizante del circuito

    Args:
        model: Modelo QTL entrenado
        inputs: Características congeladas [N, 2304]
        noise: Tasas r_1q / r_2q
    """
    head = model.head if isinstance(model, TransferModel) else model
    if not isinstance(head, DressedQuantumNet):
        raise StateError("expectation_deviations requiere un modelo híbrido")

    circuit = head.circuit
    observables = z_observables(circuit.n_qubits)
    hidden = ad.dense(Tensor(inputs, dtype=head.theta.dtype), head.pre_weight.detach(), head.pre_bias.detach())
    angles = scale_embedding(hidden).data.astype(np.float64)
    theta = head.theta.data.astype(np.float64)

    worst = 0.0
    for row in tqdm(angles, desc="Inferencia ruidosa", leave=False, disable=len(angles) < 50):
        params = np.concatenate([row, theta])
        ideal = expectations(circuit, params, observables)
        noisy = noisy_expectations(circuit, params, observables, noise)
        worst = max(worst, float(np.max(np.abs(noisy - ideal))))

    report = DeviationReport(
        max_deviation=worst,
        bound=expectation_deviation_bound(circuit, noise),
        guaranteed_bound=expectation_deviation_bound(circuit, noise, guaranteed=True),
        n_samples=len(angles),
    )
    logger.info(
        f"📊 Desviación máxima {report.max_deviation:.3e} "
        f"(cota típica {report.bound:.3e}, garantizada {report.guaranteed_bound:.3e})"
    )
    if not report.within_typical_bound:
        logger.warning("⚠️ La desviación supera la cota típica 1 - q")
    return report


# ===== ESTUDIO COMPLETO =====

MIN_ACCURACY_GAIN = 0.05
MAX_NOISY_GAP = 0.03


@dataclass
class StudyOutcome:
    """Resultados de baseline, CTL, QTL ideal y QTL ruidoso sobre la misma partición"""
    baseline: ExperimentResult
    ctl: ExperimentResult
    qtl: ExperimentResult
    qtl_noisy: ExperimentResult
    deviation: DeviationReport
    models: Dict[str, Model] = field(default_factory=dict, repr=False, compare=False)
    frozen: Optional[FrozenFeatures] = field(default=None, repr=False, compare=False)
    train_set: Optional[Dataset] = field(default=None, repr=False, compare=False)
    test_set: Optional[Dataset] = field(default=None, repr=False, compare=False)

    @property
    def noisy_gap(self) -> float:
        return abs(self.qtl_noisy.metrics.accuracy - self.qtl.ideal_accuracy)

    def checks(self) -> Dict[str, bool]:
        """Comparaciones direccionales del estudio (umbral de mejora y de ruido)"""
        base = self.baseline.metrics
        return {
            'ctl_beats_baseline': self.ctl.metrics.accuracy - base.accuracy >= MIN_ACCURACY_GAIN,
            'qtl_beats_baseline': self.qtl.metrics.accuracy - base.accuracy >= MIN_ACCURACY_GAIN,
            'qtl_recall_not_below_baseline': self.qtl.metrics.recall >= base.recall,
            'noisy_gap_small': self.noisy_gap <= MAX_NOISY_GAP,
            'deviation_within_bound': self.deviation.within_bound,
        }


def run_study(
    samples: Sequence[ImageSample],
    seed: int,
    baseline_config: TrainConfig,
    head_config: TrainConfig,
    n_qubits: int,
    reps: int,
    restarts: int = 3,
    noise: Optional[NoiseModel] = None,
    test_fraction: float = DEFAULT_TEST_FRACTION,
    progress: bool = True
) -> StudyOutcome:
    """
    Baseline -> características congeladas -> CTL (mejor de varios reinicios) -> QTL

    El QTL se entrena en el backend ideal y se evalúa también con ruido despolarizante.

    Args:
        samples: Dataset completo
        seed: Semilla de partición, baseline, reinicios y QTL
        baseline_config: Hiperparámetros de la CNN de referencia
        head_config: Hiperparámetros de las cabezas CTL y QTL
        n_qubits: Qubits del circuito
        reps: Repeticiones del ansatz
        restarts: Inicializaciones de la cabeza CTL
        noise: Tasas del backend ruidoso (por defecto las de Forte-1)
        test_fraction: Fracción de pacientes de test

    Returns:
        StudyOutcome: Resultados y modelos entrenados
    """
    noise = noise or NoiseModel.forte1()
    train_data, test_data = split_arrays(samples, seed, test_fraction)

    logger.info("🏗️ Entrenando la CNN de referencia...")
    baseline = build_baseline(seed)
    baseline_result = run_experiment(baseline, train_data, test_data, replace(baseline_config, seed=seed), IDEAL, progress)

    frozen = baseline.freeze()
    train_set = (encode_features(frozen, train_data[0]), train_data[1])
    test_set = (encode_features(frozen, test_data[0]), test_data[1])
    head_config = replace(head_config, seed=seed)

    logger.info(f"🏗️ Cabeza CTL con {restarts} reinicios...")
    seeds = [seed + i for i in range(max(1, restarts))]
    ctl_model, ctl_result = best_of_restarts(frozen, seeds, train_set, test_set, head_config, progress)

    logger.info(f"🏗️ Cabeza QTL {n_qubits} qubits × {reps} repeticiones...")
    qtl_model = make_qtl_model(frozen, n_qubits, reps, seed)
    qtl_result = run_experiment(qtl_model, train_set, test_set, head_config, IDEAL, progress)

    noisy_report = evaluate(qtl_model, test_set, Backend.noisy(noise))
    deviation = expectation_deviations(qtl_model, test_set[0], noise)
    noisy_result = ExperimentResult(
        config={**qtl_result.config, 'backend': 'noisy', 'max_expectation_deviation': deviation.max_deviation},
        metrics=noisy_report,
        loss_curve=qtl_result.loss_curve,
        lr_curve=qtl_result.lr_curve,
        final_loss=qtl_result.final_loss,
        ideal_accuracy=qtl_result.ideal_accuracy,
        completed=True,
    )

    outcome = StudyOutcome(
        baseline=baseline_result,
        ctl=ctl_result,
        qtl=qtl_result,
        qtl_noisy=noisy_result,
        deviation=deviation,
        models={'baseline': baseline, 'ctl': ctl_model, 'qtl': qtl_model},
        frozen=frozen,
        train_set=train_set,
        test_set=test_set,
    )
    logger.info(
        f"📊 {model_tag(qtl_model)}: ideal {qtl_result.ideal_accuracy:.4f}, ruidoso {noisy_report.accuracy:.4f} "
        f"(baseline {baseline_result.metrics.accuracy:.4f}, CTL {ctl_result.metrics.accuracy:.4f})"
    )
    failed = [name for name, ok in outcome.checks().items() if not ok]
    if failed:
        logger.warning(f"⚠️ Comprobaciones no superadas: {', '.join(failed)}")
    return outcome
