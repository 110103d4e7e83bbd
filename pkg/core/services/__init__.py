# core/services/__init__.py
"""
Servicios del sistema de linealización.
Orquestan los módulos numéricos para los comandos de gestión.
"""

from .config import RunConfig
from .relajacion_service import RelajacionService
from .linealizacion_service import LinealizacionService
from .evaluacion_service import EvaluacionService

# Instancias singleton de los servicios
relajacion_service = RelajacionService()
linealizacion_service = LinealizacionService()
evaluacion_service = EvaluacionService()

__all__ = [
    'RunConfig',
    'RelajacionService',
    'LinealizacionService',
    'EvaluacionService',
    'relajacion_service',
    'linealizacion_service',
    'evaluacion_service',
]
