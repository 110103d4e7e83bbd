# core/evaluate.py
"""
Evaluación Monte Carlo de modelos linealizados.

Por perfil y escenario se resuelve el OPF linealizado (igualdades afines,
cajas de generación, conos de segundo orden para tensión máxima y límites de
línea, epígrafe del costo cuadrático) y se sustituye la solución en los
polinomios originales: p_i, q_i son los residuos de los balances nodales.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from itertools import repeat
from pathlib import Path

import numpy as np
import pandas as pd
import scipy.sparse as sp

from .conic_solver import (
    INFACTIBLE, NO_ACOTADO, NONNEG, SOC, ConeBlock, ConicProblem, SolverSettings,
    independent_rows, solve_robust,
)
from .exceptions import ErrorDatos, ErrorUso
from .linearize import linearize_program
from .opf_poly import CAJA_P, CAJA_Q, LIMITE_FROM, LIMITE_TO, V_MAX, V_MIN, eval_constraints
from .utils import escribir_json

logger = logging.getLogger(__name__)

BINS_HISTOGRAMA = 60
METRICAS = ('mean_eps_p', 'std_eps_p', 'mean_eps_q', 'std_eps_q', 'mean_cost')


@dataclass(frozen=True, eq=False)
class ScenarioSolve:
    y: np.ndarray
    x: np.ndarray
    status: str
    cost: float
    p_residuals: np.ndarray
    q_residuals: np.ndarray
    other_residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    linear_residual: float = math.nan
    attempts: int = 1

    @property
    def optimal(self):
        return self.status in ('optimal', 'near-optimal')

    @property
    def eps_p(self):
        return float(np.sum(np.abs(self.p_residuals)))

    @property
    def eps_q(self):
        return float(np.sum(np.abs(self.q_residuals)))


@dataclass
class ProfileStats:
    name: str
    mean_eps_p: float
    std_eps_p: float
    mean_eps_q: float
    std_eps_q: float
    mean_cost: float
    n_optimal: int
    n_infeasible: int
    infeasible: bool = False
    statuses: dict = field(default_factory=dict)
    n_numerical_failures: int = 0


@dataclass
class EvaluationReport:
    case: str
    n_scenarios: int
    profiles: list
    histogram_p: dict
    histogram_q: dict
    scenarios: dict = field(default_factory=dict)  # perfil -> [ScenarioSolve]

    def profile(self, name):
        return next(p for p in self.profiles if p.name == name)


# === OPF LINEALIZADO ===

@dataclass(frozen=True, eq=False)
class PlantillaLineal:
    """
    OPF linealizado sin lado derecho: las igualdades son las filas `rows` de
    A x = -(B y + c), elegidas una sola vez para todos los escenarios.
    """
    problem: ConicProblem
    rows: np.ndarray

    def for_scenario(self, linearized, y):
        rhs = -(linearized.B[self.rows] @ y + linearized.c[self.rows])
        return replace(self.problem, eq_rhs=rhs)


def _filas_independientes(linearized):
    """
    Filas linealmente independientes de [A | B | c]. Una fila dependiente de
    la matriz aumentada se cumple para todo y. Devuelve también si A
    restringida a esas filas tiene rango de filas completo.
    """
    aumentada = sp.hstack([
        linearized.A, sp.csr_matrix(linearized.B), sp.csr_matrix(linearized.c.reshape(-1, 1)),
    ]).tocsr()
    filas, _ = independent_rows(aumentada, np.zeros(aumentada.shape[0]))
    de_a, _ = independent_rows(linearized.A[filas], np.zeros(len(filas)))
    return filas, len(de_a) == len(filas)


def _plantilla(linearized):
    """PlantillaLineal del OPF linealizado."""
    program = linearized.program
    n = program.n
    generadores_cuadraticos = []
    for monomio, coef in program.f.terms.items():
        if len(monomio) == 2 and monomio[0] == monomio[1] and coef > 0:
            generadores_cuadraticos.append((monomio[0], coef))
    n_vars = n + len(generadores_cuadraticos)

    objetivo = np.zeros(n_vars)
    objetivo[:n] = program.f.linear_x
    bloques = []
    filas_no_negativas = []

    for t, (idx, c2) in enumerate(generadores_cuadraticos):
        columna_u = n + t
        objetivo[columna_u] = c2
        # u >= P²  <=>  ||(2P, u - 1)|| <= u + 1; el costo es c2·u
        bloques.append(ConeBlock.from_rows(SOC, 3, [
            {columna_u: 1.0, None: 1.0},
            {idx: 2.0},
            {columna_u: 1.0, None: -1.0},
        ], n_vars, label=f'costo[{idx}]'))

    for forma in program.g:
        datos = forma.data
        if forma.tag in (CAJA_P, CAJA_Q):
            if math.isfinite(datos['lo']):
                filas_no_negativas.append({datos['variable']: 1.0, None: -datos['lo']})
            if math.isfinite(datos['hi']):
                filas_no_negativas.append({datos['variable']: -1.0, None: datos['hi']})
        elif forma.tag == V_MIN:
            filas_no_negativas.append({datos['variable']: 1.0, None: -datos['limit'] ** 2})
        elif forma.tag == V_MAX and datos.get('coords') is not None:
            e, f = datos['coords']
            bloques.append(ConeBlock.from_rows(
                SOC, 3, [{None: datos['limit']}, {e: 1.0}, {f: 1.0}], n_vars, label=forma.tag,
            ))
        elif forma.tag in (LIMITE_FROM, LIMITE_TO):
            bloques.append(ConeBlock.from_rows(
                SOC, 3, [{None: datos['limit']}, {datos['p']: 1.0}, {datos['q']: 1.0}], n_vars, label=forma.tag,
            ))

    if filas_no_negativas:
        bloques.insert(0, ConeBlock.from_rows(NONNEG, len(filas_no_negativas), filas_no_negativas, n_vars, label='cajas'))

    filas, independientes = _filas_independientes(linearized)
    if len(filas) < linearized.A.shape[0]:
        logger.debug('OPF linealizado: %d de %d igualdades independientes', len(filas), linearized.A.shape[0])
    a = linearized.A[filas]
    igualdades = sp.hstack([a, sp.csr_matrix((a.shape[0], n_vars - n))]).tocsr()
    problema = ConicProblem(
        n_vars=n_vars,
        objective=objetivo,
        blocks=tuple(bloques),
        eq_matrix=igualdades,
        eq_rhs=np.zeros(igualdades.shape[0]),
        objective_constant=program.f.constant,
        independent_equalities=independientes,
    )
    return PlantillaLineal(problem=problema, rows=filas)


def solve_linearized(linearized, y, settings=None, plantilla=None):
    """
    Resuelve el OPF linealizado para los parámetros y y evalúa los residuos
    de la solución en los polinomios originales.

    El sistema se resuelve equilibrado; una falla numérica se reintenta con
    las alternativas de conic_solver.retry_settings.
    """
    settings = replace(settings or SolverSettings(), scaling=True)
    y = np.asarray(y, dtype=float)
    program = linearized.program
    plantilla = plantilla or _plantilla(linearized)

    resultado = solve_robust(plantilla.for_scenario(linearized, y), settings)
    if not resultado.usable:
        logger.debug('Escenario y=%s: estado %s', np.round(y, 6).tolist(), resultado.status)
        vacio = np.full(len(program.p_balance_rows), math.nan)
        return ScenarioSolve(
            y=y, x=np.full(program.n, math.nan), status=resultado.status, cost=math.nan,
            p_residuals=vacio, q_residuals=vacio.copy(), attempts=resultado.attempts,
        )

    x = resultado.x[:program.n]
    h, _ = eval_constraints(program, x, y)
    filas_p, filas_q = program.p_balance_rows, program.q_balance_rows
    otras = np.setdiff1d(np.arange(len(h)), np.concatenate([filas_p, filas_q]))
    return ScenarioSolve(
        y=y,
        x=x,
        status=resultado.status,
        cost=program.f.evaluate(x, y),
        p_residuals=h[filas_p],
        q_residuals=h[filas_q],
        other_residuals=h[otras],
        linear_residual=float(np.max(np.abs(linearized.evaluate(x, y)))),
        attempts=resultado.attempts,
    )


def _resolver_lote(linearized, plantilla, muestras, settings):
    return [solve_linearized(linearized, y, settings, plantilla) for y in muestras]


def _resolver_escenarios(linearized, muestras, settings, workers):
    plantilla = _plantilla(linearized)
    if workers <= 1 or len(muestras) <= 1:
        return _resolver_lote(linearized, plantilla, muestras, settings)
    lotes = np.array_split(muestras, min(workers * 4, len(muestras)))
    resultados = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for parcial in pool.map(_resolver_lote, repeat(linearized), repeat(plantilla), lotes, repeat(settings)):
            resultados.extend(parcial)
    return resultados


# === MONTE CARLO ===

def _estadisticas(nombre, soluciones):
    """
    Estadísticas sobre los escenarios óptimos. Los demás se cuentan aparte:
    infactibles o no acotados en n_infeasible, fallas del solver en
    n_numerical_failures.
    """
    optimas = [s for s in soluciones if s.optimal]
    estados = {}
    for s in soluciones:
        estados[s.status] = estados.get(s.status, 0) + 1
    n_infactibles = estados.get(INFACTIBLE, 0) + estados.get(NO_ACOTADO, 0)
    n_fallas = len(soluciones) - len(optimas) - n_infactibles
    if not optimas:
        return ProfileStats(
            name=nombre, mean_eps_p=math.nan, std_eps_p=math.nan, mean_eps_q=math.nan,
            std_eps_q=math.nan, mean_cost=math.nan, n_optimal=0,
            n_infeasible=n_infactibles, infeasible=True, statuses=estados,
            n_numerical_failures=n_fallas,
        )
    eps_p = np.array([s.eps_p for s in optimas])
    eps_q = np.array([s.eps_q for s in optimas])
    costos = np.array([s.cost for s in optimas])
    return ProfileStats(
        name=nombre,
        mean_eps_p=float(eps_p.mean()),
        std_eps_p=float(eps_p.std(ddof=0)),
        mean_eps_q=float(eps_q.mean()),
        std_eps_q=float(eps_q.std(ddof=0)),
        mean_cost=float(costos.mean()),
        n_optimal=len(optimas),
        n_infeasible=n_infactibles,
        statuses=estados,
        n_numerical_failures=n_fallas,
    )


def _histograma(valores_por_perfil):
    agrupados = [v for v in valores_por_perfil.values() if v.size]
    if agrupados:
        todos = np.concatenate(agrupados)
        lo, hi = float(todos.min()), float(todos.max())
    else:
        lo, hi = 0.0, 0.0
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    bordes = np.linspace(lo, hi, BINS_HISTOGRAMA + 1)
    conteos = {
        nombre: np.histogram(valores, bins=bordes)[0].tolist()
        for nombre, valores in valores_por_perfil.items()
    }
    return {'edges': bordes.tolist(), 'counts': conteos}


def _nombres_unicos(points):
    nombres, vistos = [], {}
    for punto in points:
        base = punto.provenance
        vistos[base] = vistos.get(base, 0) + 1
        nombres.append(base if vistos[base] == 1 else f'{base}-{vistos[base]}')
    return nombres


def run_monte_carlo(case, program, points, scenarios, settings=None, workers=1):
    """
    Resuelve el OPF linealizado de cada perfil en cada escenario y agrega
    las estadísticas de violación y costo.

    Args:
        case: NetworkCase
        program: PolynomialProgram
        points: lista de LinearizationPoint
        scenarios: ScenarioSet
        settings: SolverSettings
        workers: procesos para resolver escenarios (1 = secuencial)

    Returns:
        EvaluationReport
    """
    if not points:
        raise ErrorUso('se requiere al menos un punto de linealización')
    if scenarios.M < 1:
        raise ErrorUso('se requiere al menos un escenario')

    settings = settings or SolverSettings()
    perfiles, por_perfil, residuos_p, residuos_q = [], {}, {}, {}
    for nombre, punto in zip(_nombres_unicos(points), points):
        linealizado = linearize_program(program, punto)
        soluciones = _resolver_escenarios(linealizado, np.asarray(scenarios.samples), settings, workers)
        estadisticas = _estadisticas(nombre, soluciones)
        perfiles.append(estadisticas)
        por_perfil[nombre] = soluciones

        optimas = [s for s in soluciones if s.optimal]
        residuos_p[nombre] = np.concatenate([s.p_residuals for s in optimas]) if optimas else np.zeros(0)
        residuos_q[nombre] = np.concatenate([s.q_residuals for s in optimas]) if optimas else np.zeros(0)

        descartados = scenarios.M - estadisticas.n_optimal
        if descartados:
            logger.warning(
                'Perfil %s: %d de %d escenarios descartados (%d infactibles, %d fallas numéricas)',
                nombre, descartados, scenarios.M, estadisticas.n_infeasible, estadisticas.n_numerical_failures,
            )
        if estadisticas.infeasible:
            logger.warning('Perfil %s: todos los escenarios sin solución', nombre)
        else:
            logger.info(
                'Perfil %s: E(eps_P)=%.4g σ=%.4g E(eps_Q)=%.4g σ=%.4g costo=%.6g (%d/%d óptimos)',
                nombre, estadisticas.mean_eps_p, estadisticas.std_eps_p, estadisticas.mean_eps_q,
                estadisticas.std_eps_q, estadisticas.mean_cost, estadisticas.n_optimal, scenarios.M,
            )

    return EvaluationReport(
        case=case.name,
        n_scenarios=scenarios.M,
        profiles=perfiles,
        histogram_p=_histograma(residuos_p),
        histogram_q=_histograma(residuos_q),
        scenarios=por_perfil,
    )


def compare_profiles(report):
    """Ranking por métrica (menor es mejor) y cociente respecto del mejor perfil."""
    if len(report.profiles) < 2:
        raise ErrorUso('la comparación requiere al menos dos perfiles')

    resumen = {}
    for metrica in ('mean_eps_p', 'mean_eps_q', 'mean_cost'):
        valores = {p.name: getattr(p, metrica) for p in report.profiles if not p.infeasible}
        ranking = sorted(valores, key=lambda nombre: (valores[nombre], nombre))
        mejor = valores[ranking[0]] if ranking else math.nan
        cocientes = {}
        for nombre in ranking:
            if valores[nombre] == mejor:
                cocientes[nombre] = 1.0
            elif mejor == 0:
                cocientes[nombre] = math.inf
            else:
                cocientes[nombre] = valores[nombre] / mejor
        resumen[metrica] = {
            'ranking': ranking,
            'ratios': cocientes,
            'infeasible': [p.name for p in report.profiles if p.infeasible],
        }
    return resumen


# === SALIDA ===

def report_to_json(report):
    return {
        'case': report.case,
        'n_scenarios': report.n_scenarios,
        'profiles': [asdict(p) for p in report.profiles],
        'histogram_p': report.histogram_p,
        'histogram_q': report.histogram_q,
        'scenarios': {
            nombre: [
                {
                    'r': s.y.tolist(),
                    'status': s.status,
                    'cost': s.cost,
                    'eps_p': s.eps_p if s.optimal else None,
                    'eps_q': s.eps_q if s.optimal else None,
                }
                for s in soluciones
            ]
            for nombre, soluciones in report.scenarios.items()
        },
    }


def report_from_json(datos):
    try:
        perfiles = [ProfileStats(**p) for p in datos['profiles']]
        return EvaluationReport(
            case=datos.get('case', ''),
            n_scenarios=int(datos['n_scenarios']),
            profiles=perfiles,
            histogram_p=datos['histogram_p'],
            histogram_q=datos['histogram_q'],
        )
    except (KeyError, TypeError) as e:
        raise ErrorDatos(f'reporte inválido: {e}')


def _histograma_csv(histograma, path):
    bordes = histograma['edges']
    tabla = pd.DataFrame({'bin_left': bordes[:-1], 'bin_right': bordes[1:]})
    for nombre, conteos in histograma['counts'].items():
        tabla[nombre] = conteos
    tabla.to_csv(path, index=False, float_format='%.12g')


def write_report(report, directory):
    """Escribe reporte.csv, reporte.json, histograma_p.csv e histograma_q.csv."""
    directorio = Path(directory)
    directorio.mkdir(parents=True, exist_ok=True)

    filas = [
        {'profile': p.name, 'metric': metrica, 'value': getattr(p, metrica)}
        for p in report.profiles
        for metrica in METRICAS + ('n_optimal', 'n_infeasible', 'n_numerical_failures')
    ]
    pd.DataFrame(filas).to_csv(directorio / 'reporte.csv', index=False, float_format='%.12g')
    escribir_json(directorio / 'reporte.json', report_to_json(report))
    _histograma_csv(report.histogram_p, directorio / 'histograma_p.csv')
    _histograma_csv(report.histogram_q, directorio / 'histograma_q.csv')
    return [directorio / nombre for nombre in ('reporte.csv', 'reporte.json', 'histograma_p.csv', 'histograma_q.csv')]


def table_layout(report):
    """Tabla perfiles x (E, σ) de ε_P y ε_Q más costo medio."""
    return pd.DataFrame(
        [
            {
                'perfil': p.name,
                'E(eps_P)': p.mean_eps_p,
                'sigma(eps_P)': p.std_eps_p,
                'E(eps_Q)': p.mean_eps_q,
                'sigma(eps_Q)': p.std_eps_q,
                'costo medio': p.mean_cost,
                'infactibles': p.n_infeasible,
                'fallas numéricas': p.n_numerical_failures,
            }
            for p in report.profiles
        ]
    )
