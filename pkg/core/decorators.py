# core/decorators.py

import logging
import time
from functools import wraps

logger = logging.getLogger(__name__)


def cronometrar(etapa, registro=None):
    """
    Decorador que mide el tiempo de pared de una etapa.

    Si se pasa un dict en `registro`, acumula ahí los segundos bajo la clave
    `etapa`; si la llamada trae un kwarg `tiempos` (dict), se usa
    ese en su lugar y no se reenvía a la función.
    """
    def decorator(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            destino = kwargs.pop('tiempos', registro)
            inicio = time.perf_counter()
            try:
                return func(*args, **kwargs)
            finally:
                segundos = time.perf_counter() - inicio
                if destino is not None:
                    destino[etapa] = destino.get(etapa, 0.0) + segundos
                logger.debug('%s: %.3f s', etapa, segundos)
        return wrapper
    return decorator
