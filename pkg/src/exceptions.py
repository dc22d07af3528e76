"""
Jerarquía de excepciones del motor QTL
"""


class QTLError(Exception):
    """Error base de la aplicación"""


# ===== ERRORES DE VALIDACIÓN (entrada incorrecta) =====

class DimensionError(QTLError, ValueError):
    """Formas de tensores incompatibles"""


class ParameterError(QTLError, ValueError):
    """Hiperparámetro fuera de su dominio (p. ej. dropout p >= 1)"""


class ValidationError(QTLError, ValueError):
    """Datos de entrada con valores no permitidos (etiquetas no binarias, NaN...)"""


class ConfigurationError(QTLError, ValueError):
    """Configuración inválida: claves desconocidas, rangos fuera de límites"""


class SplitError(QTLError, ValueError):
    """No es posible construir la partición train/test por paciente"""


class MetricError(QTLError, ValueError):
    """Métrica indefinida para la entrada (vacía, una sola clase...)"""


class UsageError(QTLError, ValueError):
    """Uso incorrecto de la línea de comandos"""


# ===== ERRORES DE EJECUCIÓN =====

class StateError(QTLError, RuntimeError):
    """Operación invocada en un estado no válido (doble backward, sin forward...)"""


class NumericalError(QTLError, RuntimeError):
    """Aparecieron valores no finitos o se violó un invariante numérico"""


class CapabilityError(QTLError, RuntimeError):
    """Operación no soportada por el backend o la puerta indicada"""


class CapacityError(QTLError, RuntimeError):
    """El problema excede la capacidad del simulador"""


class DatasetLoadError(QTLError, RuntimeError):
    """Fallo al leer el manifiesto o una imagen"""


class TrainingError(QTLError, RuntimeError):
    """El entrenamiento divergió (pérdida no finita)"""


class CorruptCheckpointError(QTLError, RuntimeError):
    """Checkpoint truncado, con magic incorrecto o tamaños inconsistentes"""


# Errores que la CLI reporta con código de salida 1
VALIDATION_ERRORS = (
    UsageError,
    ConfigurationError,
    ValidationError,
    ParameterError,
    DimensionError,
    SplitError,
    MetricError,
)
