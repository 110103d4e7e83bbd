# core/conic_solver.py
"""
Problemas cónicos por bloques y su solución con el método primal-dual de
punto interior de CVXOPT (conelp, escalamiento de Nesterov-Todd).

Forma del problema:
    minimizar   cᵀv + constante
    sujeto a    A v = b
                F_k(v) = C_k v + c_k ∈ K_k   para cada bloque k
con K_k el ortante no negativo, un cono de segundo orden {(t, u): t >= ||u||}
o el cono de matrices semidefinidas positivas.

Los bloques PSD guardan el triángulo superior empaquetado por filas:
(0,0), (0,1), ..., (0,d-1), (1,1), ..., (d-1,d-1).

También lee y escribe el formato SDPA disperso (.dat-s).
"""

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from cvxopt import matrix, solvers, spmatrix

from .exceptions import ErrorDatos, ErrorUso

logger = logging.getLogger(__name__)

PSD, SOC, NONNEG = 'psd', 'soc', 'nonneg'

OPTIMO = 'optimal'
CASI_OPTIMO = 'near-optimal'
INFACTIBLE = 'infeasible'
NO_ACOTADO = 'unbounded'
FALLA_NUMERICA = 'numerical-failure'
ESTADOS_UTILIZABLES = (OPTIMO, CASI_OPTIMO)

FACTOR_CASI_OPTIMO = 100.0
ITERACIONES_EQUILIBRADO = 10
COMENTARIO_CONSTANTE = '* objective constant'


def triangle_pairs(dim):
    return [(i, j) for i in range(dim) for j in range(i, dim)]


def triangle_index(i, j, dim):
    if i > j:
        i, j = j, i
    return i * dim - i * (i - 1) // 2 + (j - i)


@dataclass(frozen=True)
class SolverSettings:
    feasibility_tolerance: float = 1e-8
    gap_tolerance: float = 1e-8
    max_iterations: int = 200
    scaling: bool = False
    kkt_solver: str = None
    refinement: int = None


@dataclass(frozen=True, eq=False)
class ConeBlock:
    kind: str
    dim: int
    coefficients: sp.csr_matrix  # (entradas, n_vars)
    constant: np.ndarray         # (entradas,)
    label: str = ''

    @property
    def entries(self):
        return self.dim * (self.dim + 1) // 2 if self.kind == PSD else self.dim

    @classmethod
    def from_rows(cls, kind, dim, filas, n_vars, label=''):
        """
        Construye un bloque a partir de una fila por entrada; cada fila es un
        dict {variable: coeficiente} donde la clave None es el término constante.
        """
        entradas = dim * (dim + 1) // 2 if kind == PSD else dim
        if len(filas) != entradas:
            raise ErrorDatos(f'bloque {kind} de dimensión {dim} requiere {entradas} entradas')
        i_idx, j_idx, valores = [], [], []
        constante = np.zeros(entradas)
        for r, fila in enumerate(filas):
            for var, coef in fila.items():
                if var is None:
                    constante[r] += coef
                elif coef != 0.0:
                    i_idx.append(r)
                    j_idx.append(var)
                    valores.append(coef)
        coeficientes = sp.csr_matrix((valores, (i_idx, j_idx)), shape=(entradas, n_vars))
        coeficientes.sum_duplicates()
        return cls(kind=kind, dim=dim, coefficients=coeficientes, constant=constante, label=label)

    def value(self, v):
        """Valor de F(v): vector, o matriz simétrica completa en bloques PSD."""
        plano = self.coefficients @ v + self.constant
        if self.kind != PSD:
            return plano
        matriz = np.zeros((self.dim, self.dim))
        for r, (i, j) in enumerate(triangle_pairs(self.dim)):
            matriz[i, j] = matriz[j, i] = plano[r]
        return matriz

    def min_eigenvalue(self, v):
        valor = self.value(v)
        if self.kind == PSD:
            return float(np.linalg.eigvalsh(valor)[0])
        if self.kind == SOC:
            return float(valor[0] - np.linalg.norm(valor[1:]))
        return float(valor.min()) if valor.size else 0.0


@dataclass(frozen=True, eq=False)
class ConicProblem:
    n_vars: int
    objective: np.ndarray
    blocks: tuple = ()
    eq_matrix: sp.csr_matrix = None
    eq_rhs: np.ndarray = None
    objective_constant: float = 0.0
    independent_equalities: bool = False

    def __post_init__(self):
        if self.eq_matrix is None:
            object.__setattr__(self, 'eq_matrix', sp.csr_matrix((0, self.n_vars)))
            object.__setattr__(self, 'eq_rhs', np.zeros(0))
        objetivo = np.asarray(self.objective, dtype=float)
        object.__setattr__(self, 'objective', objetivo)
        if objetivo.shape != (self.n_vars,):
            raise ErrorDatos('el objetivo no coincide con el número de variables')
        if self.eq_matrix.shape[1] != self.n_vars or self.eq_matrix.shape[0] != len(self.eq_rhs):
            raise ErrorDatos('sistema de igualdades inconsistente')
        for bloque in self.blocks:
            if bloque.coefficients.shape != (bloque.entries, self.n_vars):
                raise ErrorDatos(f'bloque {bloque.label or bloque.kind}: dimensiones inconsistentes')
            if bloque.kind == SOC and bloque.dim < 2:
                raise ErrorDatos('un cono de segundo orden requiere dimensión >= 2')

    @property
    def n_equalities(self):
        return self.eq_matrix.shape[0]

    def with_soc_as_psd(self):
        return replace(self, blocks=tuple(soc_to_psd(b) if b.kind == SOC else b for b in self.blocks))


@dataclass(frozen=True, eq=False)
class SolveResult:
    x: np.ndarray
    objective: float
    status: str
    iterations: int
    residuals: tuple            # (primal, dual, gap)
    duals: dict = field(default_factory=dict)
    attempts: int = 1

    @property
    def usable(self):
        return self.status in ESTADOS_UTILIZABLES


# === CONVERSIONES ===

def soc_to_psd(block):
    """
    Inmersión en flecha: (t, u) ∈ SOC  <=>  [[t, uᵀ], [u, t·I]] ⪰ 0.
    """
    if block.kind != SOC:
        return block
    if block.dim < 2:
        raise ErrorDatos('un cono de segundo orden requiere dimensión >= 2')
    d = block.dim
    filas_origen = block.coefficients.tocsr()
    n_vars = filas_origen.shape[1]
    pares = triangle_pairs(d)
    filas, constante = [], np.zeros(len(pares))
    for r, (i, j) in enumerate(pares):
        if i == j:
            fuente = 0
        elif i == 0:
            fuente = j
        else:
            fuente = None
        if fuente is None:
            filas.append(sp.csr_matrix((1, n_vars)))
        else:
            filas.append(filas_origen.getrow(fuente))
            constante[r] = block.constant[fuente]
    coeficientes = sp.vstack(filas).tocsr()
    return ConeBlock(kind=PSD, dim=d, coefficients=coeficientes, constant=constante, label=block.label)


def independent_rows(matriz, rhs, tolerancia=1e-9):
    """
    Filas linealmente independientes de [A | b] por QR con pivoteo sobre Aᵀ.

    Returns:
        tuple: (índices conservados ordenados, residuo máximo de las filas
        descartadas respecto del sistema reducido)
    """
    filas = matriz.shape[0]
    if filas == 0:
        return np.arange(0), 0.0
    densa = matriz.toarray() if sp.issparse(matriz) else np.asarray(matriz)
    r, pivotes = scipy.linalg.qr(densa.T, mode='r', pivoting=True)
    diagonal = np.abs(np.diag(r))
    if diagonal.size == 0 or diagonal[0] == 0.0:
        return np.arange(0), float(np.max(np.abs(rhs))) if len(rhs) else 0.0
    rango = int(np.sum(diagonal > tolerancia * diagonal[0]))
    conservadas = np.sort(pivotes[:rango])
    if rango == filas:
        return conservadas, 0.0

    # Consistencia: b debe estar en el espacio de filas retenido
    reducida = densa[conservadas]
    coef, *_ = np.linalg.lstsq(reducida.T, densa.T, rcond=None)
    residuo = np.abs(coef.T @ rhs[conservadas] - rhs)
    escala = max(1.0, float(np.max(np.abs(rhs))))
    return conservadas, float(np.max(residuo)) / escala


def _a_cvxopt(matriz):
    coo = sp.coo_matrix(matriz)
    return spmatrix(coo.data.tolist(), coo.row.tolist(), coo.col.tolist(), coo.shape)


def _columna(valores):
    valores = [float(v) for v in valores]
    return matrix(valores, (len(valores), 1), 'd')


def _forma_estandar(problem):
    """
    (G, h, dims, inicios) de CVXOPT: G v + s = h, s ∈ K, con s = F(v).

    `inicios` marca el comienzo de cada grupo de filas que comparte escala:
    cada fila no negativa es su propio grupo; cada cono SOC o PSD es uno.
    """
    orden = [b for b in problem.blocks if b.kind == NONNEG]
    orden += [b for b in problem.blocks if b.kind == SOC]
    orden += [b for b in problem.blocks if b.kind == PSD]

    filas_g, columnas_g, valores_g, h, inicios = [], [], [], [], []
    desplazamiento = 0
    for bloque in orden:
        coo = bloque.coefficients.tocoo()
        if bloque.kind == PSD:
            d = bloque.dim
            pares = triangle_pairs(d)
            for r, c, val in zip(coo.row, coo.col, coo.data):
                i, j = pares[r]
                filas_g.append(int(desplazamiento + i + j * d))
                columnas_g.append(int(c))
                valores_g.append(-float(val))
                if i != j:
                    filas_g.append(int(desplazamiento + j + i * d))
                    columnas_g.append(int(c))
                    valores_g.append(-float(val))
            completa = np.zeros((d, d))
            for r, (i, j) in enumerate(pares):
                completa[i, j] = completa[j, i] = bloque.constant[r]
            h.extend(completa.flatten(order='F'))
            inicios.append(desplazamiento)
            desplazamiento += d * d
        else:
            filas_g.extend((desplazamiento + coo.row).tolist())
            columnas_g.extend(coo.col.tolist())
            valores_g.extend((-coo.data).tolist())
            h.extend(bloque.constant.tolist())
            if bloque.kind == NONNEG:
                inicios.extend(range(desplazamiento, desplazamiento + bloque.dim))
            else:
                inicios.append(desplazamiento)
            desplazamiento += bloque.dim

    G = sp.csr_matrix((valores_g, (filas_g, columnas_g)), shape=(desplazamiento, problem.n_vars))
    dims = {
        'l': sum(b.dim for b in orden if b.kind == NONNEG),
        'q': [b.dim for b in orden if b.kind == SOC],
        's': [b.dim for b in orden if b.kind == PSD],
    }
    return G, np.array(h, dtype=float), dims, np.array(inicios, dtype=int)


# === EQUILIBRADO ===

@dataclass(frozen=True, eq=False)
class Escalas:
    """v = columnas · w; filas de G y A multiplicadas por filas_g, filas_a; objetivo por sigma."""
    columnas: np.ndarray
    filas_g: np.ndarray
    filas_a: np.ndarray
    sigma: float


def _maximo_por_fila(matriz):
    if matriz.shape[0] == 0:
        return np.zeros(0)
    return np.asarray(abs(matriz).max(axis=1).todense()).ravel()


def _maximo_por_columna(matriz):
    if matriz.shape[0] == 0:
        return np.zeros(matriz.shape[1])
    return np.asarray(abs(matriz).max(axis=0).todense()).ravel()


def _inverso_raiz(valores):
    salida = np.ones_like(valores)
    positivos = valores > 0
    salida[positivos] = 1.0 / np.sqrt(valores[positivos])
    return salida


def _escalar(matriz, filas, columnas):
    if matriz.shape[0] == 0:
        return matriz
    return sp.diags(filas) @ matriz @ sp.diags(columnas)


def equilibrate(c, G, h, A, b, inicios, iteraciones=ITERACIONES_EQUILIBRADO):
    """
    Equilibrado de Ruiz compatible con los conos: las filas de un mismo cono
    SOC o PSD comparten el factor, las no negativas y las igualdades se
    escalan una a una. Al final el objetivo queda con norma infinito 1.

    Returns:
        tuple: (c, G, h, A, b, Escalas) del problema escalado
    """
    G, A = sp.csr_matrix(G), sp.csr_matrix(A)
    columnas = np.ones(G.shape[1])
    filas_g = np.ones(G.shape[0])
    filas_a = np.ones(A.shape[0])
    tamanos = np.diff(np.append(inicios, G.shape[0])) if G.shape[0] else np.zeros(0, dtype=int)

    for _ in range(iteraciones):
        maximos_g = _maximo_por_fila(G)
        if maximos_g.size:
            maximos_g = np.repeat(np.maximum.reduceat(maximos_g, inicios), tamanos)
        r_g = _inverso_raiz(maximos_g)
        r_a = _inverso_raiz(_maximo_por_fila(A))
        s = _inverso_raiz(np.maximum(_maximo_por_columna(G), _maximo_por_columna(A)))

        G = _escalar(G, r_g, s)
        A = _escalar(A, r_a, s)
        filas_g *= r_g
        filas_a *= r_a
        columnas *= s

    c = columnas * np.asarray(c, dtype=float)
    maximo = float(np.max(np.abs(c))) if c.size else 0.0
    sigma = 1.0 / maximo if maximo > 0 else 1.0
    escalas = Escalas(columnas=columnas, filas_g=filas_g, filas_a=filas_a, sigma=sigma)
    return sigma * c, G.tocsr(), filas_g * h, A.tocsr(), filas_a * b, escalas


# === SOLUCIÓN ===

def _clasificar(solucion, settings):
    estado = solucion['status']
    if estado == 'optimal':
        return OPTIMO
    if estado == 'primal infeasible':
        return INFACTIBLE
    if estado == 'dual infeasible':
        return NO_ACOTADO
    if estado == 'unknown':
        primal = solucion.get('primal infeasibility')
        dual = solucion.get('dual infeasibility')
        brecha = solucion.get('relative gap')
        if brecha is None:
            brecha = solucion.get('gap')
        limite_f = FACTOR_CASI_OPTIMO * settings.feasibility_tolerance
        limite_g = FACTOR_CASI_OPTIMO * settings.gap_tolerance
        if None not in (primal, dual, brecha) and primal <= limite_f and dual <= limite_f and abs(brecha) <= limite_g:
            return CASI_OPTIMO
    return FALLA_NUMERICA


def _falla(problem, estado, residuos=(math.nan, math.nan, math.nan)):
    return SolveResult(
        x=np.full(problem.n_vars, np.nan), objective=math.nan, status=estado,
        iterations=0, residuals=residuos,
    )


def solve(problem, settings=None):
    """
    Resuelve el problema con conelp (primal-dual, escalamiento NT).

    Las igualdades linealmente dependientes se eliminan antes de resolver.
    Con settings.scaling el sistema se equilibra y la solución (primal y
    duales) se devuelve en las unidades originales.
    Nunca lanza por fallas del método: el estado queda en el resultado.
    """
    settings = settings or SolverSettings()
    if problem.n_vars == 0:
        raise ErrorDatos('problema cónico vacío')

    if problem.independent_equalities:
        conservadas, residuo = np.arange(problem.n_equalities), 0.0
    else:
        conservadas, residuo = independent_rows(problem.eq_matrix, problem.eq_rhs)
    if residuo > 1e-8:
        logger.warning('Igualdades inconsistentes (residuo %.2e)', residuo)
        return _falla(problem, INFACTIBLE, (residuo, math.nan, math.nan))
    A = problem.eq_matrix[conservadas]
    b = problem.eq_rhs[conservadas]
    c = problem.objective

    G, h, dims, inicios = _forma_estandar(problem)
    escalas = None
    if settings.scaling:
        c, G, h, A, b, escalas = equilibrate(c, G, h, A, b, inicios)

    opciones = {
        'show_progress': False,
        'maxiters': settings.max_iterations,
        'abstol': settings.gap_tolerance,
        'reltol': settings.gap_tolerance,
        'feastol': settings.feasibility_tolerance,
    }
    if settings.refinement is not None:
        opciones['refinement'] = settings.refinement
    try:
        solucion = solvers.conelp(
            _columna(c), _a_cvxopt(G), _columna(h), dims, _a_cvxopt(A), _columna(b),
            kktsolver=settings.kkt_solver, options=opciones,
        )
    except (ArithmeticError, ValueError) as e:
        logger.debug('Falla numérica del solver: %s', e)
        return _falla(problem, FALLA_NUMERICA)

    estado = _clasificar(solucion, settings)
    x = np.array(solucion['x']).ravel() if solucion['x'] is not None else np.full(problem.n_vars, np.nan)
    duales = {}
    if solucion.get('y') is not None:
        duales['y'] = np.array(solucion['y']).ravel()
    if solucion.get('z') is not None:
        duales['z'] = np.array(solucion['z']).ravel()
    if escalas is not None:
        x = escalas.columnas * x
        if 'y' in duales:
            duales['y'] = escalas.filas_a * duales['y'] / escalas.sigma
        if 'z' in duales:
            duales['z'] = escalas.filas_g * duales['z'] / escalas.sigma

    objetivo = float(problem.objective @ x + problem.objective_constant) if estado in ESTADOS_UTILIZABLES else math.nan
    residuos = (
        solucion.get('primal infeasibility') or 0.0,
        solucion.get('dual infeasibility') or 0.0,
        solucion.get('relative gap') if solucion.get('relative gap') is not None else (solucion.get('gap') or 0.0),
    )

    if estado == CASI_OPTIMO:
        logger.warning('Solver terminó casi óptimo (residuos %s)', residuos)
    logger.debug('conelp: %s en %s iteraciones, objetivo %s', estado, solucion.get('iterations'), objetivo)
    return SolveResult(
        x=x, objective=objetivo, status=estado, iterations=int(solucion.get('iterations') or 0),
        residuals=tuple(float(r) for r in residuos), duals=duales,
    )


def retry_settings(settings):
    """Secuencia de ajustes a probar tras una falla numérica."""
    return (
        replace(settings, scaling=True),
        replace(settings, scaling=True, kkt_solver='ldl', refinement=3),
    )


def solve_robust(problem, settings=None):
    """
    solve() y, si termina en falla numérica, reintentos con el sistema
    equilibrado y un solver KKT por LDL con refinamiento iterativo.
    `attempts` del resultado cuenta las resoluciones hechas.
    """
    settings = settings or SolverSettings()
    resultado = solve(problem, settings)
    intentos = 1
    for alternativa in retry_settings(settings):
        if resultado.status != FALLA_NUMERICA:
            break
        if alternativa == settings:
            continue
        resultado = solve(problem, alternativa)
        intentos += 1
    if resultado.status == FALLA_NUMERICA:
        logger.warning('Falla numérica tras %d intentos', intentos)
    return replace(resultado, attempts=intentos)


# === FORMATO SDPA ===

def _entradas_bloque(bloque):
    """Entradas (var, i, j, valor) 1-based con i <= j del bloque en forma SDPA."""
    coo = bloque.coefficients.tocoo()
    if bloque.kind == PSD:
        pares = triangle_pairs(bloque.dim)
    else:
        pares = [(i, i) for i in range(bloque.dim)]
    entradas = []
    for r, c, val in zip(coo.row, coo.col, coo.data):
        if val != 0.0:
            i, j = pares[r]
            entradas.append((int(c) + 1, i + 1, j + 1, float(val)))
    for r, val in enumerate(bloque.constant):
        if val != 0.0:
            i, j = pares[r]
            entradas.append((0, i + 1, j + 1, -float(val)))
    return entradas


def export_sdpa(problem, path):
    """
    Escribe el problema en SDPA disperso, forma dual:
        min cᵀx  s.a.  Σ x_i F_i - F_0 ⪰ 0
    Los bloques no negativos son diagonales (tamaño negativo); las igualdades
    se escriben como un bloque diagonal con las filas A v - b y b - A v.
    Una constante del objetivo distinta de cero va en un comentario inicial
    `* objective constant <valor>` que import_sdpa vuelve a leer.
    """
    if any(b.kind == SOC for b in problem.blocks):
        raise ErrorUso('el formato SDPA no admite conos de segundo orden; use soc_to_psd antes de exportar')

    bloques = list(problem.blocks)
    if problem.n_equalities:
        a = problem.eq_matrix.tocsr()
        filas = sp.vstack([a, -a]).tocsr()
        constante = np.concatenate([-problem.eq_rhs, problem.eq_rhs])
        bloques.append(ConeBlock(NONNEG, filas.shape[0], filas, constante, label='igualdades'))

    tamanos = [b.dim if b.kind == PSD else -b.dim for b in bloques]
    entradas = []
    for numero, bloque in enumerate(bloques, start=1):
        entradas.extend((var, numero, i, j, val) for var, i, j, val in _entradas_bloque(bloque))
    entradas.sort()

    lineas = []
    if problem.objective_constant:
        lineas.append(f'{COMENTARIO_CONSTANTE} {float(problem.objective_constant)!r}')
    lineas += [
        str(problem.n_vars),
        str(len(bloques)),
        ' '.join(str(t) for t in tamanos),
        ' '.join(repr(float(c)) for c in problem.objective),
    ]
    lineas += [f'{var} {blk} {i} {j} {val!r}' for var, blk, i, j, val in entradas]
    Path(path).write_text('\n'.join(lineas) + '\n', encoding='utf-8')
    logger.info('SDPA exportado: %s (%d variables, %d bloques)', path, problem.n_vars, len(bloques))


def _numeros(linea):
    for caracter in '{}(),':
        linea = linea.replace(caracter, ' ')
    return linea.split()


def import_sdpa(path):
    """Lee un archivo SDPA disperso; las igualdades vuelven como bloques diagonales."""
    lineas, constante = [], 0.0
    for cruda in Path(path).read_text(encoding='utf-8').splitlines():
        cruda = cruda.strip()
        if cruda.startswith(COMENTARIO_CONSTANTE):
            try:
                constante = float(cruda[len(COMENTARIO_CONSTANTE):])
            except ValueError:
                raise ErrorDatos(f'{path}: constante del objetivo inválida')
            continue
        if not cruda or cruda[0] in '*"':
            continue
        lineas.append(cruda)
    try:
        m = int(_numeros(lineas[0])[0])
        n_bloques = int(_numeros(lineas[1])[0])
        tamanos = [int(t) for t in _numeros(lineas[2])][:n_bloques]
        objetivo = np.array([float(c) for c in _numeros(lineas[3])][:m])
    except (IndexError, ValueError) as e:
        raise ErrorDatos(f'encabezado SDPA inválido en {path}: {e}')
    if len(tamanos) != n_bloques or len(objetivo) != m:
        raise ErrorDatos(f'encabezado SDPA incompleto en {path}')

    filas = [[{} for _ in range(abs(t) * (abs(t) + 1) // 2 if t > 0 else abs(t))] for t in tamanos]
    for numero, linea in enumerate(lineas[4:], start=5):
        partes = _numeros(linea)
        try:
            var, blk, i, j = (int(x) for x in partes[:4])
            valor = float(partes[4])
        except (IndexError, ValueError):
            raise ErrorDatos(f'{path}: entrada inválida en la línea de datos {numero}')
        tamano = tamanos[blk - 1]
        if tamano > 0:
            r = triangle_index(i - 1, j - 1, tamano)
        else:
            if i != j:
                raise ErrorDatos(f'{path}: entrada fuera de la diagonal en bloque diagonal')
            r = i - 1
        clave = None if var == 0 else var - 1
        fila = filas[blk - 1][r]
        fila[clave] = fila.get(clave, 0.0) + (-valor if var == 0 else valor)

    bloques = tuple(
        ConeBlock.from_rows(PSD if t > 0 else NONNEG, abs(t), filas[k], m)
        for k, t in enumerate(tamanos)
    )
    return ConicProblem(n_vars=m, objective=objetivo, blocks=bloques, objective_constant=constante)
