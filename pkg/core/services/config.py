# core/services/config.py
"""
Configuración de una corrida: archivo JSON único más sobrescrituras por
banderas de los comandos. Los valores por defecto salen de settings y del
modelo de carga del estudio numérico.
"""

import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from django.conf import settings

from ..case_model import limit_from_mva, load_case, remove_line_limits, set_uniform_line_limit
from ..conic_solver import SolverSettings
from ..exceptions import ErrorUso
from ..moment_relax import DENSO, DISPERSO
from ..opf_poly import build_opf
from ..uncertainty import COTAS_DEFECTO, COVARIANZA_DEFECTO, MEDIA_DEFECTO, LoadModel, sample_factors
from ..utils import leer_json

ORDENES_VALIDOS = (2, 4)
FORMATOS_VALIDOS = ('matpower', 'json')

# Corridas de referencia: límites de línea de cada caso y cota dispersa 2k=2
CONFIG_REFERENCIA = {
    'case5': {'unlimited_lines': True},
    'case9': {'line_limit_mva': 120.0},
    'case14': {'line_limit_mva': 25.0},
}
COTAS_REFERENCIA = {'case5': 10532.0, 'case9': 4214.0, 'case14': 7673.0}


def _defecto(nombre):
    return field(default_factory=lambda: getattr(settings, nombre))


@dataclass
class RunConfig:
    case: str = 'case5'
    case_format: str = None
    line_limit_mva: float = None
    unlimited_lines: bool = False
    mean: tuple = MEDIA_DEFECTO
    covariance: tuple = COVARIANZA_DEFECTO
    bounds: tuple = COTAS_DEFECTO
    scenarios: int = _defecto('OPF_ESCENARIOS')
    seed: int = _defecto('OPF_SEMILLA')
    order: int = 2
    mode: str = DISPERSO
    merge_threshold: int = None
    feasibility_tolerance: float = _defecto('OPF_TOLERANCIA_FACTIBILIDAD')
    gap_tolerance: float = _defecto('OPF_TOLERANCIA_GAP')
    max_iterations: int = _defecto('OPF_MAX_ITERACIONES')
    threads: int = _defecto('OPF_HILOS')
    output_dir: str = _defecto('OPF_DIRECTORIO_SALIDA')

    def __post_init__(self):
        self.validar()

    # === VALIDACIÓN ===

    def validar(self):
        errores = []
        if self.order not in ORDENES_VALIDOS:
            errores.append(f'orden 2k={self.order} no soportado (use 2 o 4)')
        if not isinstance(self.scenarios, int) or self.scenarios < 1:
            errores.append(f'se requiere al menos un escenario (M={self.scenarios})')
        if self.mode not in (DENSO, DISPERSO):
            errores.append(f'modo desconocido: {self.mode}')
        if self.merge_threshold is not None and self.merge_threshold < 1:
            errores.append(f'umbral de fusión inválido: {self.merge_threshold}')
        if self.case_format is not None and self.case_format not in FORMATOS_VALIDOS:
            errores.append(f'formato de caso desconocido: {self.case_format}')
        if self.line_limit_mva is not None and not self.line_limit_mva > 0:
            errores.append(f'el límite de línea debe ser positivo ({self.line_limit_mva})')
        if self.threads < 0:
            errores.append('el número de hilos no puede ser negativo')
        if len(self.mean) != 2 or len(self.bounds) != 2 or len(self.covariance) != 2:
            errores.append('el modelo de carga tiene exactamente dos factores')
        if errores:
            raise ErrorUso('; '.join(errores), errores=errores)

    # === CONSTRUCCIÓN ===

    @classmethod
    def load(cls, path=None, benchmark=False, **overrides):
        """
        Lee la configuración JSON (si se indica) y aplica las sobrescrituras
        cuyo valor no sea None. Con benchmark=True completa los límites de
        línea que falten con los de CONFIG_REFERENCIA para el caso.
        """
        datos = leer_json(path) if path else {}
        if not isinstance(datos, dict):
            raise ErrorUso('el archivo de configuración debe contener un objeto JSON')
        conocidos = {f.name for f in fields(cls)}
        desconocidos = sorted(set(datos) - conocidos)
        if desconocidos:
            raise ErrorUso(f'claves de configuración desconocidas: {desconocidos}')

        datos.update({k: v for k, v in overrides.items() if v is not None})
        if benchmark:
            for clave, valor in cls._referencia(datos.get('case', cls.case)).items():
                datos.setdefault(clave, valor)
        for clave in ('mean', 'bounds'):
            if clave in datos:
                datos[clave] = tuple(tuple(v) if isinstance(v, list) else v for v in datos[clave])
        if 'covariance' in datos:
            datos['covariance'] = tuple(tuple(fila) for fila in datos['covariance'])
        try:
            return cls(**datos)
        except TypeError as e:
            raise ErrorUso(f'configuración inválida: {e}')

    @classmethod
    def benchmark(cls, case, **overrides):
        """Configuración de referencia del caso (límites de línea del estudio)."""
        return cls(case=case, **{**cls._referencia(case), **overrides})

    @staticmethod
    def _referencia(case):
        nombre = Path(str(case)).stem
        if nombre not in CONFIG_REFERENCIA:
            raise ErrorUso(f'sin configuración de referencia para {case} (casos: {sorted(CONFIG_REFERENCIA)})')
        return CONFIG_REFERENCIA[nombre]

    # === DERIVADOS ===

    @property
    def case_path(self):
        """Ruta del caso; los nombres sin sufijo se buscan entre los casos incluidos."""
        ruta = Path(self.case)
        if ruta.suffix or ruta.exists():
            return ruta
        return Path(settings.OPF_DIRECTORIO_CASOS) / f'{self.case}.m'

    @property
    def k(self):
        return self.order // 2

    @property
    def workers(self):
        return self.threads or os.cpu_count() or 1

    def solver_settings(self):
        return SolverSettings(
            feasibility_tolerance=self.feasibility_tolerance,
            gap_tolerance=self.gap_tolerance,
            max_iterations=self.max_iterations,
        )

    def as_dict(self):
        return asdict(self)


# === PREPARACIÓN COMÚN ===

@dataclass
class Preparacion:
    case: object
    model: object
    program: object
    scenarios: object = None


def preparar(config, con_escenarios=True):
    """Caso (con límite uniforme de línea), modelo de carga, programa y escenarios."""
    caso = load_case(config.case_path, config.case_format)
    if config.unlimited_lines:
        caso = remove_line_limits(caso)
    if config.line_limit_mva is not None:
        caso = set_uniform_line_limit(caso, limit_from_mva(caso, config.line_limit_mva))
    modelo = LoadModel.for_case(caso, mean=config.mean, covariance=config.covariance, bounds=config.bounds)
    programa = build_opf(caso, modelo)
    escenarios = sample_factors(modelo, config.scenarios, config.seed) if con_escenarios else None
    return Preparacion(case=caso, model=modelo, program=programa, scenarios=escenarios)
