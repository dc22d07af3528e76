"""
Configuración de la aplicación
"""
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from dotenv import load_dotenv

from .exceptions import ConfigurationError

# Cargar variables de entorno desde .env
env_path = Path(__file__).parent.parent / '.env'
load_dotenv(dotenv_path=env_path)

# Application Settings
LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'

# Data Settings
DATA_PATH = os.getenv('DATA_PATH', './data/synthetic')
DEFAULT_OUTPUT_DIR = './outputs'
BASELINE_EPOCHS = int(os.getenv('QTL_BASELINE_EPOCHS', '10'))

# Export Format (html -> plotly, png -> matplotlib/seaborn)
EXPORT_FORMAT = os.getenv('EXPORT_FORMAT', 'html')

# Hiperparámetros comunes (Adam + step scheduler + BCE)
DEFAULT_LR = 1e-4
DEFAULT_STEP_SIZE = 10
DEFAULT_GAMMA = 0.75
PROSE_GAMMA = 0.25
DEFAULT_BATCH_SIZE = 64
DEFAULT_EPOCHS = 100
DEFAULT_SEED = 0
DEFAULT_TEST_FRACTION = 0.30

# Ruido del simulador Forte-1 aproximado por canales despolarizantes
FORTE1_R1Q = 2.67e-4
FORTE1_R2Q = 4.94e-3

# Arquitectura
IMAGE_SIZE = 128
FEATURE_DIM = 2304
QUBIT_RANGE = (3, 10)
REPS_RANGE = (2, 4)
BEST_QUBITS = 6
BEST_REPS = 4

COLOR_PALETTE = {
    'baseline': '#484848',
    'ctl': '#00A699',
    'qtl': '#FF5A5F',
    'accent': '#FC642D',
    'background': '#FFFFFF'
}

PLOTLY_CONFIG = {
    'displayModeBar': True,
    'displaylogo': False,
    'modeBarButtonsToRemove': ['pan2d', 'lasso2d', 'select2d']
}

MODEL_KINDS = ('baseline', 'ctl', 'qtl')
BACKEND_KINDS = ('ideal', 'noisy')


def _build(cls, payload: Any, section: str):
    """
    Construye un dataclass a partir de un dict rechazando claves desconocidas

    Args:
        cls: Clase dataclass destino
        payload: Diccionario con los valores (None = valores por defecto)
        section: Ruta con puntos usada en los mensajes de error

    Returns:
        Instancia de cls
    """
    if payload is None:
        return cls()
    if not isinstance(payload, dict):
        raise ConfigurationError(f"'{section}' debe ser un objeto JSON")

    known = {f.name for f in fields(cls)}
    unknown = sorted(set(payload) - known)
    if unknown:
        keys = ', '.join(f"{section}.{key}" for key in unknown)
        raise ConfigurationError(f"Claves desconocidas en la configuración: {keys}")

    return cls(**payload)


def _check_range(value: Any, name: str) -> Tuple[int, int]:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or not all(isinstance(v, int) for v in value)
        or value[0] > value[1]
    ):
        raise ConfigurationError(f"'{name}' debe ser un rango [min, max] de enteros")
    return int(value[0]), int(value[1])


@dataclass
class TrainConfig:
    """Hiperparámetros de entrenamiento (valores por defecto de la tabla de hiperparámetros)"""

    lr: float = DEFAULT_LR
    step_size: int = DEFAULT_STEP_SIZE
    gamma: float = DEFAULT_GAMMA
    batch_size: int = DEFAULT_BATCH_SIZE
    epochs: int = DEFAULT_EPOCHS
    seed: int = DEFAULT_SEED
    loss: str = 'bce'
    gamma_reading: str = 'table'

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigurationError(f"train.lr debe ser >= 0 (recibido {self.lr})")
        for name in ('step_size', 'batch_size', 'epochs'):
            value = getattr(self, name)
            if not isinstance(value, int) or value <= 0:
                raise ConfigurationError(f"train.{name} debe ser un entero positivo (recibido {value})")
        if not 0 < self.gamma <= 1:
            raise ConfigurationError(f"train.gamma debe estar en (0, 1] (recibido {self.gamma})")
        if self.seed < 0:
            raise ConfigurationError(f"train.seed debe ser >= 0 (recibido {self.seed})")
        if self.loss != 'bce':
            raise ConfigurationError(f"train.loss solo admite 'bce' (recibido {self.loss!r})")
        if self.gamma_reading not in ('table', 'prose'):
            raise ConfigurationError("train.gamma_reading debe ser 'table' o 'prose'")

    @property
    def effective_gamma(self) -> float:
        """Factor de decaimiento efectivo según la lectura elegida del scheduler"""
        return PROSE_GAMMA if self.gamma_reading == 'prose' else self.gamma


@dataclass
class SynthConfig:
    patients: int = 12
    per_patient: int = 34
    signal_strength: float = 0.8
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.patients < 4:
            raise ConfigurationError("data.synth.patients debe ser >= 4")
        if self.per_patient < 1:
            raise ConfigurationError("data.synth.per_patient debe ser >= 1")
        if self.signal_strength < 0:
            raise ConfigurationError("data.synth.signal_strength debe ser >= 0")


@dataclass
class DataConfig:
    manifest: Optional[str] = None
    synth: Optional[SynthConfig] = None

    def __post_init__(self):
        if isinstance(self.synth, dict):
            self.synth = _build(SynthConfig, self.synth, 'data.synth')
        if self.manifest is not None and self.synth is not None:
            raise ConfigurationError("data: usa 'manifest' o 'synth', no ambos")
        if self.manifest is None and self.synth is None:
            self.synth = SynthConfig()


@dataclass
class ModelConfig:
    kind: str = 'qtl'
    n_qubits: int = BEST_QUBITS
    reps: int = BEST_REPS

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigurationError(f"model.kind debe ser uno de {MODEL_KINDS}")
        if not QUBIT_RANGE[0] <= self.n_qubits <= QUBIT_RANGE[1]:
            raise ConfigurationError(f"model.n_qubits fuera de rango {QUBIT_RANGE}")
        if not REPS_RANGE[0] <= self.reps <= REPS_RANGE[1]:
            raise ConfigurationError(f"model.reps fuera de rango {REPS_RANGE}")


@dataclass
class BackendConfig:
    kind: str = 'ideal'
    r_1q: float = FORTE1_R1Q
    r_2q: float = FORTE1_R2Q

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise ConfigurationError(f"backend.kind debe ser uno de {BACKEND_KINDS}")
        for name in ('r_1q', 'r_2q'):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigurationError(f"backend.{name} debe estar en [0, 1]")


@dataclass
class GridConfig:
    qubits: Tuple[int, int] = QUBIT_RANGE
    reps: Tuple[int, int] = REPS_RANGE

    def __post_init__(self):
        self.qubits = _check_range(self.qubits, 'grid.qubits')
        self.reps = _check_range(self.reps, 'grid.reps')


@dataclass
class RunConfig:
    """Configuración completa de una ejecución (documento JSON estricto)"""

    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    baseline_epochs: int = BASELINE_EPOCHS
    test_fraction: float = DEFAULT_TEST_FRACTION
    output_dir: Optional[str] = None
    seed: int = DEFAULT_SEED

    _SECTIONS = {
        'data': DataConfig,
        'train': TrainConfig,
        'model': ModelConfig,
        'backend': BackendConfig,
        'grid': GridConfig,
    }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> 'RunConfig':
        """
        Parsea la configuración de forma estricta

        Args:
            payload: Documento JSON ya decodificado

        Returns:
            RunConfig: Configuración validada con valores por defecto completados
        """
        if not isinstance(payload, dict):
            raise ConfigurationError("La configuración debe ser un objeto JSON")

        known = {f.name for f in fields(cls)}
        unknown = sorted(set(payload) - known)
        if unknown:
            raise ConfigurationError(f"Claves desconocidas en la configuración: {', '.join(unknown)}")

        kwargs: Dict[str, Any] = {}
        for key, value in payload.items():
            section = cls._SECTIONS.get(key)
            kwargs[key] = _build(section, value, key) if section else value

        try:
            config = cls(**kwargs)
        except TypeError as e:
            raise ConfigurationError(f"Configuración inválida: {e}") from e

        if not isinstance(config.baseline_epochs, int) or config.baseline_epochs <= 0:
            raise ConfigurationError("baseline_epochs debe ser un entero positivo")
        if not 0 < config.test_fraction < 1:
            raise ConfigurationError("test_fraction debe estar en (0, 1)")
        return config

    @classmethod
    def from_file(cls, path: Path) -> 'RunConfig':
        """Lee y valida un fichero JSON de configuración"""
        try:
            with open(path, 'r', encoding='utf-8') as fh:
                payload = json.load(fh)
        except FileNotFoundError as e:
            raise ConfigurationError(f"No existe el fichero de configuración: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"JSON inválido en {path}: {e}") from e
        return cls.from_dict(payload)

    def resolve_output_dir(self, override: Optional[str] = None) -> Path:
        """
        Resuelve el directorio de salida: flag CLI > config > QTL_OUTPUT_DIR > ./outputs
        """
        chosen = override or self.output_dir or os.getenv('QTL_OUTPUT_DIR') or DEFAULT_OUTPUT_DIR
        return Path(chosen)

    def to_dict(self) -> Dict[str, Any]:
        payload = asdict(self)
        payload['grid'] = {'qubits': list(self.grid.qubits), 'reps': list(self.grid.reps)}
        return payload

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def describe(config: RunConfig, output_override: Optional[str] = None) -> str:
    """Configuración resuelta tal y como la usaría una ejecución"""
    lines = [
        "=== CONFIGURACIÓN ===",
        f"LOG_LEVEL: {LOG_LEVEL}",
        f"DATA_PATH: {DATA_PATH}",
        f"OUTPUT_DIR: {config.resolve_output_dir(output_override)}",
        config.to_json(),
    ]
    return "\n".join(lines)


# Print config for debugging: python -m src.config [config.json]
if __name__ == "__main__":
    print(describe(RunConfig.from_file(Path(sys.argv[1])) if len(sys.argv) > 1 else RunConfig()))
