# core/moment_relax.py
"""
Relajaciones de momentos (densa y dispersa) del programa polinomial.

Una única tabla global de momentos, indexada por monomios canónicos
(tuplas ordenadas de índices con repetición sobre el espacio conjunto x, y),
es compartida por todas las cliques. Los momentos puramente paramétricos
quedan fijos en z_γ y entran como constantes (m_() = 1).

Por clique s:
    M_k(m; I_s) ⪰ 0
    M_{k-⌈deg g/2⌉}(g m; I_s) ⪰ 0  para cada g asignada (1x1 -> fila no negativa)
    L(h u) = 0                     para cada h asignada y monomio u de grado <= 2k - deg h
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np
import scipy.sparse as sp

from .conic_solver import (
    NONNEG, PSD, ConeBlock, ConicProblem, SolverSettings, independent_rows, solve, triangle_pairs,
)
from .exceptions import ErrorRelajacion, ErrorSolver
from .sparsity import build_csp_graph, chordal_cliques, single_clique

logger = logging.getLogger(__name__)

DENSO, DISPERSO = 'dense', 'sparse'


def monomial_basis(variables, k):
    """Monomios de grado <= k en orden lexicográfico graduado."""
    if k < 0:
        raise ErrorRelajacion(f'orden de base negativo: {k}')
    ordenadas = sorted(variables)
    base = []
    for grado in range(k + 1):
        base.extend(combinations_with_replacement(ordenadas, grado))
    return base


def _monomio(*partes):
    return tuple(sorted(sum(partes, ())))


@dataclass(frozen=True, eq=False)
class MomentSdp:
    k: int
    mode: str
    n: int
    p: int
    moment_vars: dict                     # monomio -> columna
    fixed: dict                           # monomio puramente paramétrico -> z_γ
    problem: ConicProblem
    psd_blocks: tuple                     # (clique, etiqueta, índice de bloque)
    decomposition: object
    objective_scale: float = 1.0
    removed_equalities: int = 0

    @property
    def n_moments(self):
        return len(self.moment_vars)


@dataclass(frozen=True, eq=False)
class RelaxSolution:
    moments: dict                         # monomio -> valor (libres y fijos)
    objective: float
    status: str
    residuals: tuple
    iterations: int = 0
    min_eigenvalues: tuple = ()
    k: int = 1
    mode: str = DISPERSO
    extras: dict = field(default_factory=dict)

    @property
    def usable(self):
        return self.status in ('optimal', 'near-optimal')


class _Ensamblador:
    """Construye filas lineales sobre la tabla global de momentos."""

    def __init__(self, n, p, z, orden_maximo):
        self.n = n
        self.p = p
        self.z = z
        self.orden_maximo = orden_maximo
        self.columnas = {}
        self.fijos = {}

    def termino(self, monomio, permitidas):
        """(columna o None, valor fijo) del momento de `monomio`."""
        if len(monomio) > self.orden_maximo:
            raise ErrorRelajacion(f'monomio {monomio} excede el orden 2k={self.orden_maximo}')
        if not set(monomio) <= permitidas:
            raise ErrorRelajacion(f'monomio {monomio} fuera de la clique')
        if all(i >= self.n for i in monomio):
            gamma = (monomio.count(self.n), monomio.count(self.n + 1))
            if gamma not in self.z.values:
                raise ErrorRelajacion(f'falta el momento z{gamma} de la distribución de demanda')
            self.fijos[monomio] = self.z.values[gamma]
            return None, self.z.values[gamma]
        if monomio not in self.columnas:
            self.columnas[monomio] = len(self.columnas)
        return self.columnas[monomio], 1.0

    def fila(self, polinomio, u, permitidas, escala=1.0):
        """L(polinomio * u) como dict {columna: coef, None: constante}."""
        fila = defaultdict(float)
        for monomio, coef in polinomio.items():
            columna, valor = self.termino(_monomio(monomio, u), permitidas)
            fila[columna] += escala * coef * valor
        return fila


def _normalizada(forma):
    escala = forma.max_coefficient()
    return 1.0 / escala if escala > 0 else 1.0


def build_relaxation(program, z, k, mode=DISPERSO, decomposition=None):
    """
    Ensambla la relajación de momentos de orden k.

    Args:
        program: PolynomialProgram
        z: MomentVector de la demanda con orden >= 2k
        k: orden de la relajación (2k = grado máximo de los momentos)
        mode: 'dense' (una clique con todas las variables) o 'sparse'
        decomposition: CliqueDecomposition ya verificada (modo disperso)

    Returns:
        MomentSdp
    """
    grado_f = max(program.f.degree, 1)
    if k < math.ceil(grado_f / 2) or k < 1:
        raise ErrorRelajacion(f'orden k={k} menor que el mínimo {math.ceil(grado_f / 2)}')
    if z.order < 2 * k:
        raise ErrorRelajacion(f'momentos de la demanda de orden {z.order} < 2k={2 * k}')
    if mode not in (DENSO, DISPERSO):
        raise ErrorRelajacion(f'modo desconocido: {mode}')

    if decomposition is None:
        grafo = build_csp_graph(program)
        decomposition = single_clique(grafo) if mode == DENSO else chordal_cliques(grafo)

    ensamblador = _Ensamblador(program.n, program.p, z, 2 * k)
    bloques_psd = []      # (clique, etiqueta, kind, dim, filas)
    igualdades = []

    for s, clique in enumerate(decomposition.cliques):
        permitidas = set(clique)
        base = monomial_basis(clique, k)

        filas = [ensamblador.fila({(): 1.0}, _monomio(base[i], base[j]), permitidas) for i, j in triangle_pairs(len(base))]
        bloques_psd.append((s, f'M{k}[{s}]', PSD, len(base), filas))

        for j in decomposition.g_assign[s]:
            forma = program.g[j]
            if forma.is_constant:
                if forma.constant >= 0:
                    continue
            escala = _normalizada(forma)
            base_local = monomial_basis(clique, k - math.ceil(forma.degree / 2))
            filas = [
                ensamblador.fila(forma.terms, _monomio(base_local[a], base_local[b]), permitidas, escala)
                for a, b in triangle_pairs(len(base_local))
            ]
            kind = NONNEG if len(base_local) == 1 else PSD
            bloques_psd.append((s, f'g[{j}]@{s}', kind, len(base_local), filas))

        for i in decomposition.h_assign[s]:
            forma = program.h[i]
            escala = _normalizada(forma)
            for u in monomial_basis(clique, 2 * k - forma.degree):
                igualdades.append(ensamblador.fila(forma.terms, u, permitidas, escala))

    # Objetivo L(f) escalado
    escala_f = _normalizada(program.f)
    objetivo_fila = ensamblador.fila(program.f.terms, (), set(range(program.n + program.p)), escala_f)

    n_vars = len(ensamblador.columnas)
    bloques = tuple(
        ConeBlock.from_rows(kind, dim, filas, n_vars, label=etiqueta)
        for _, etiqueta, kind, dim, filas in bloques_psd
    )
    psd_blocks = tuple((s, etiqueta, b) for b, (s, etiqueta, *_) in enumerate(bloques_psd))

    matriz, rhs = _sistema_igualdades(igualdades, n_vars)
    conservadas, residuo = independent_rows(matriz, rhs)
    if residuo > 1e-8:
        raise ErrorRelajacion(f'igualdades de momentos inconsistentes (residuo {residuo:.2e})')
    removidas = matriz.shape[0] - len(conservadas)
    matriz, rhs = matriz[conservadas], rhs[conservadas]

    objetivo = np.zeros(n_vars)
    for columna, coef in objetivo_fila.items():
        if columna is not None:
            objetivo[columna] += coef
    problema = ConicProblem(
        n_vars=n_vars,
        objective=objetivo,
        blocks=bloques,
        eq_matrix=matriz,
        eq_rhs=rhs,
        objective_constant=objetivo_fila.get(None, 0.0),
        independent_equalities=True,
    )

    sdp = MomentSdp(
        k=k, mode=mode, n=program.n, p=program.p,
        moment_vars=dict(ensamblador.columnas), fixed=dict(ensamblador.fijos),
        problem=problema, psd_blocks=psd_blocks, decomposition=decomposition,
        objective_scale=1.0 / escala_f, removed_equalities=removidas,
    )
    logger.info(
        'Relajación %s 2k=%d: %d momentos, %d bloques (máx. %d), %d igualdades (%d dependientes)',
        mode, 2 * k, n_vars, len(bloques), max(b.dim for b in bloques),
        matriz.shape[0], removidas,
    )
    return sdp


def _sistema_igualdades(filas, n_vars):
    """Matriz dispersa de igualdades sin filas vacías ni duplicadas."""
    vistas = set()
    i_idx, j_idx, valores, rhs = [], [], [], []
    for fila in filas:
        variables = tuple(sorted((c, v) for c, v in fila.items() if c is not None and v != 0.0))
        constante = fila.get(None, 0.0)
        if not variables:
            if abs(constante) > 1e-9:
                raise ErrorRelajacion(f'igualdad constante no nula ({constante:.3e})')
            continue
        clave = (variables, constante)
        if clave in vistas:
            continue
        vistas.add(clave)
        r = len(rhs)
        for c, v in variables:
            i_idx.append(r)
            j_idx.append(c)
            valores.append(v)
        rhs.append(-constante)
    matriz = sp.csr_matrix((valores, (i_idx, j_idx)), shape=(len(rhs), n_vars))
    return matriz, np.array(rhs, dtype=float)


def solve_relaxation(sdp, settings=None):
    """Resuelve la relajación y arma la RelaxSolution con todos los momentos."""
    settings = settings or SolverSettings()
    resultado = solve(sdp.problem, settings)

    momentos = dict(sdp.fixed)
    momentos[()] = 1.0
    autovalores = ()
    if resultado.usable:
        for monomio, columna in sdp.moment_vars.items():
            momentos[monomio] = float(resultado.x[columna])
        autovalores = tuple(
            sdp.problem.blocks[b].min_eigenvalue(resultado.x) for _, _, b in sdp.psd_blocks
        )
    objetivo = resultado.objective * sdp.objective_scale if resultado.usable else math.nan

    logger.info(
        'Relajación %s 2k=%d: estado %s, objetivo %.6g, %d iteraciones',
        sdp.mode, 2 * sdp.k, resultado.status, objetivo, resultado.iterations,
    )
    return RelaxSolution(
        moments=momentos, objective=objetivo, status=resultado.status,
        residuals=resultado.residuals, iterations=resultado.iterations,
        min_eigenvalues=autovalores, k=sdp.k, mode=sdp.mode,
    )


def extract_first_moment(solution, program):
    """x₀[i] = momento del monomio de grado 1 de la variable i."""
    if not solution.usable:
        raise ErrorSolver(f'la relajación no es utilizable (estado {solution.status})', estado=solution.status)
    x0 = np.empty(program.n)
    for i in range(program.n):
        if (i,) not in solution.moments:
            raise ErrorRelajacion(f'la variable {program.names[i]} no aparece en ninguna clique')
        x0[i] = solution.moments[(i,)]
    return x0


def relaxation_diagnostics(sdp):
    tamanos = [sdp.problem.blocks[b].dim for _, _, b in sdp.psd_blocks]
    return {
        'k': sdp.k,
        'order': 2 * sdp.k,
        'mode': sdp.mode,
        'n_cliques': len(sdp.decomposition.cliques),
        'clique_sizes': [len(c) for c in sdp.decomposition.cliques],
        'n_moments': sdp.n_moments,
        'n_fixed_moments': len(sdp.fixed) + 1,
        'n_equalities': sdp.problem.n_equalities,
        'removed_equalities': sdp.removed_equalities,
        'n_blocks': len(tamanos),
        'max_block': max(tamanos) if tamanos else 0,
        'sum_block_sizes': sum(tamanos),
        'moment_matrix_sizes': [
            sdp.problem.blocks[b].dim for _, etiqueta, b in sdp.psd_blocks if etiqueta.startswith('M')
        ],
    }


# === PERSISTENCIA ===

def monomial_name(monomio, nombres):
    return '1' if not monomio else '*'.join(nombres[i] for i in monomio)


def solution_to_json(solution, program):
    nombres = program.names
    return {
        'objective': solution.objective,
        'status': solution.status,
        'order': 2 * solution.k,
        'mode': solution.mode,
        'iterations': solution.iterations,
        'residuals': list(solution.residuals),
        'min_eigenvalues': list(solution.min_eigenvalues),
        'first_moments': {
            nombres[i]: solution.moments[(i,)] for i in range(program.n) if (i,) in solution.moments
        },
        'moments': {
            monomial_name(m, nombres): v for m, v in sorted(solution.moments.items(), key=lambda kv: (len(kv[0]), kv[0]))
        },
        **solution.extras,
    }


def solution_from_json(datos, program):
    indice = {nombre: i for i, nombre in enumerate(program.names)}
    momentos = {}
    for nombre, valor in datos.get('moments', {}).items():
        if nombre == '1':
            momentos[()] = float(valor)
            continue
        try:
            momentos[tuple(sorted(indice[parte] for parte in nombre.split('*')))] = float(valor)
        except KeyError:
            raise ErrorRelajacion(f'momento con variable desconocida: {nombre}')
    return RelaxSolution(
        moments=momentos,
        objective=float(datos['objective']) if datos.get('objective') is not None else math.nan,
        status=datos.get('status', 'optimal'),
        residuals=tuple(datos.get('residuals', ())),
        iterations=int(datos.get('iterations', 0)),
        min_eigenvalues=tuple(datos.get('min_eigenvalues', ())),
        k=int(datos.get('order', 2)) // 2,
        mode=datos.get('mode', DISPERSO),
    )
