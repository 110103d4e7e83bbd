# core/opf_poly.py
"""
Forma polinomial de grado 2 del OPF AC en coordenadas rectangulares.

Variables x (en este orden):
    E_i, F_i   por barra no slack (la slack se sustituye por E = 1, F = 0)
    P_k, Q_k   por generador
    Spf, Sqf, Spt, Sqt por línea
    X_i        por barra (X_i = E_i² + F_i²)
Parámetros y = (r1, r2): factores latentes de la demanda.

Convenciones: h(x, y) = 0 y g(x, y) >= 0. Cada polinomio se guarda como un
mapa monomio -> coeficiente sobre el espacio conjunto (x, y); un monomio es la
tupla ordenada de índices con repetición (x_3² y_1 = (3, 3, n)).
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .case_model import line_flow_coefficients
from .exceptions import ErrorDatos, ErrorRelajacion, ErrorValidacion

logger = logging.getLogger(__name__)

# Etiquetas de filas
BALANCE_P = 'p_balance'
BALANCE_Q = 'q_balance'
FLUJO_PF, FLUJO_QF, FLUJO_PT, FLUJO_QT = 'flow_pf', 'flow_qf', 'flow_pt', 'flow_qt'
LEVANTAMIENTO_X = 'x_lift'
CAJA_P, CAJA_Q = 'p_box', 'q_box'
LIMITE_FROM, LIMITE_TO = 's_from', 's_to'
V_MAX, V_MIN = 'v_max', 'v_min'
R_LO, R_HI = 'r_lo', 'r_hi'


@dataclass(frozen=True)
class VariableIndex:
    kind: str
    owner: int  # id de barra, o número (1-based) de generador / línea
    position: int

    @property
    def name(self):
        return f'{self.kind}_{self.owner}'


class QuadraticForm:
    """
    Polinomio de grado <= 2 en x, afín en y.

    f(x, y) = constant + linear_xᵀx + linear_yᵀy + ½ xᵀ H x, con H el
    hessiano verdadero (simétrico).
    """

    def __init__(self, terms, n, p, tag='', data=None):
        self.n = n
        self.p = p
        self.tag = tag
        self.data = data or {}
        self.terms = {}
        for key, coef in sorted(terms.items()):
            if coef == 0.0:
                continue
            key = tuple(sorted(key))
            if len(key) > 2:
                raise ErrorRelajacion(f'monomio de grado {len(key)} en {tag}')
            if len(key) == 2 and key[1] >= n:
                raise ErrorRelajacion(f'{tag}: los parámetros sólo pueden entrar en forma afín')
            if key and key[-1] >= n + p:
                raise ErrorRelajacion(f'{tag}: índice fuera de rango {key}')
            self.terms[key] = self.terms.get(key, 0.0) + float(coef)
        self.terms = {key: coef for key, coef in self.terms.items() if coef != 0.0}

    @cached_property
    def constant(self):
        return self.terms.get((), 0.0)

    @cached_property
    def linear_x(self):
        lineal = np.zeros(self.n)
        for key, coef in self.terms.items():
            if len(key) == 1 and key[0] < self.n:
                lineal[key[0]] = coef
        return lineal

    @cached_property
    def linear_y(self):
        lineal = np.zeros(self.p)
        for key, coef in self.terms.items():
            if len(key) == 1 and key[0] >= self.n:
                lineal[key[0] - self.n] = coef
        return lineal

    @cached_property
    def hessian(self):
        filas, columnas, valores = [], [], []
        for key, coef in self.terms.items():
            if len(key) != 2:
                continue
            i, j = key
            if i == j:
                filas.append(i)
                columnas.append(i)
                valores.append(2.0 * coef)
            else:
                filas += [i, j]
                columnas += [j, i]
                valores += [coef, coef]
        return sp.csr_matrix((valores, (filas, columnas)), shape=(self.n, self.n))

    @cached_property
    def degree(self):
        return max((len(key) for key in self.terms), default=0)

    @cached_property
    def variables(self):
        """Índices (espacio conjunto) que aparecen en algún monomio."""
        return tuple(sorted({i for key in self.terms for i in key}))

    @property
    def is_constant(self):
        return not self.variables

    def evaluate(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return float(
            self.constant + self.linear_x @ x + self.linear_y @ y + 0.5 * x @ (self.hessian @ x)
        )

    def gradient(self, x):
        return self.linear_x + self.hessian @ np.asarray(x, dtype=float)

    def max_coefficient(self):
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def scaled(self, factor):
        return QuadraticForm(
            {key: coef * factor for key, coef in self.terms.items()},
            self.n, self.p, tag=self.tag, data=self.data,
        )

    def to_text(self, nombres):
        if not self.terms:
            return '0'
        partes = []
        for key, coef in self.terms.items():
            monomio = '*'.join(nombres[i] for i in key)
            partes.append(f'{coef:+.12g}' + (f'*{monomio}' if monomio else ''))
        return ' '.join(partes)


@dataclass(frozen=True, eq=False)
class PolynomialProgram:
    n: int
    p: int
    h: tuple
    g: tuple
    f: QuadraticForm
    variables: tuple
    slack_position: int
    bus_ids: tuple = field(default=())

    @cached_property
    def index(self):
        """(kind, owner) -> posición en x."""
        return {(v.kind, v.owner): v.position for v in self.variables}

    @cached_property
    def names(self):
        return [v.name for v in self.variables] + [f'r{j + 1}' for j in range(self.p)]

    def rows_tagged(self, tag):
        return [i for i, forma in enumerate(self.h) if forma.tag == tag]

    @cached_property
    def p_balance_rows(self):
        return self.rows_tagged(BALANCE_P)

    @cached_property
    def q_balance_rows(self):
        return self.rows_tagged(BALANCE_Q)

    # Matrices apiladas para evaluación vectorizada
    @cached_property
    def _apilado_h(self):
        return _apilar(self.h, self.n, self.p)

    @cached_property
    def _apilado_g(self):
        return _apilar(self.g, self.n, self.p)


def _apilar(formas, n, p):
    constantes = np.array([forma.constant for forma in formas])
    lx = sp.csr_matrix(np.vstack([forma.linear_x for forma in formas])) if formas else sp.csr_matrix((0, n))
    ly = np.vstack([forma.linear_y for forma in formas]) if formas else np.zeros((0, p))
    hessianos = [forma.hessian for forma in formas]
    return constantes, lx, ly, hessianos


def _evaluar_apilado(apilado, x, y):
    constantes, lx, ly, hessianos = apilado
    cuadratica = np.array([0.5 * x @ (hess @ x) if hess.nnz else 0.0 for hess in hessianos])
    return constantes + lx @ x + ly @ y + cuadratica


# === CONSTRUCCIÓN ===

def _producto(u, v):
    """Producto de dos expresiones afines dadas como {monomio: coef}."""
    resultado = defaultdict(float)
    for ku, cu in u.items():
        for kv, cv in v.items():
            resultado[tuple(sorted(ku + kv))] += cu * cv
    return resultado


def _acumular(destino, origen, factor=1.0):
    for key, coef in origen.items():
        destino[key] += factor * coef


def _parte_real_imag(vi, vk, y):
    """
    Re e Im de V_i conj(y V_k) como polinomios, con V = E + jF.

        Re = a(EiEk + FiFk) + b(FiEk - EiFk)
        Im = a(FiEk - EiFk) - b(EiEk + FiFk)
    """
    ei, fi = vi
    ek, fk = vk
    a, b = y.real, y.imag
    simetrico = defaultdict(float)
    _acumular(simetrico, _producto(ei, ek))
    _acumular(simetrico, _producto(fi, fk))
    cruzado = defaultdict(float)
    _acumular(cruzado, _producto(fi, ek))
    _acumular(cruzado, _producto(ei, fk), -1.0)

    real = defaultdict(float)
    _acumular(real, simetrico, a)
    _acumular(real, cruzado, b)
    imag = defaultdict(float)
    _acumular(imag, cruzado, a)
    _acumular(imag, simetrico, -b)
    return real, imag


def build_opf(case, uncertainty):
    """
    Construye el programa polinomial del OPF con cargas afines en r.

    Args:
        case: NetworkCase validado
        uncertainty: LoadModel con los pesos por barra

    Returns:
        PolynomialProgram
    """
    if uncertainty.weights.shape[0] != case.n_buses:
        raise ErrorValidacion('el modelo de carga no corresponde al número de barras del caso')
    for num, gen in enumerate(case.generators, start=1):
        if gen.cost[0] < 0:
            raise ErrorValidacion(f'generador {num}: costo no convexo')

    slack = case.slack_position
    variables = []

    def nueva(kind, owner):
        variables.append(VariableIndex(kind, owner, len(variables)))
        return len(variables) - 1

    tension = []  # (E, F) como expresiones afines por barra
    for i, bus in enumerate(case.buses):
        if i == slack:
            tension.append(({(): 1.0}, {}))
        else:
            e = nueva('E', bus.id)
            f = nueva('F', bus.id)
            tension.append(({(e,): 1.0}, {(f,): 1.0}))
    idx_p, idx_q = [], []
    for k in range(case.n_generators):
        idx_p.append(nueva('P', k + 1))
        idx_q.append(nueva('Q', k + 1))
    idx_flujo = []
    for l in range(case.n_branches):
        idx_flujo.append(tuple(nueva(kind, l + 1) for kind in ('Spf', 'Sqf', 'Spt', 'Sqt')))
    idx_x = [nueva('X', bus.id) for bus in case.buses]

    n = len(variables)
    p = 2
    y_idx = (n, n + 1)

    def forma(terminos, tag, **data):
        return QuadraticForm(terminos, n, p, tag=tag, data=data)

    h = []

    # Balances nodales
    ybus = case.ybus.tocsr()
    p_nominal, q_nominal = case.nominal_loads()
    for i, bus in enumerate(case.buses):
        activo = defaultdict(float)
        reactivo = defaultdict(float)
        for k in case.generators_at(i):
            activo[(idx_p[k],)] += 1.0
            reactivo[(idx_q[k],)] += 1.0
        for j in range(2):
            activo[(y_idx[j],)] -= p_nominal[i] * uncertainty.weights[i, j]
            reactivo[(y_idx[j],)] -= q_nominal[i] * uncertainty.weights[i, j]
        fila = ybus.getrow(i)
        for k, y_ik in zip(fila.indices, fila.data):
            real, imag = _parte_real_imag(tension[i], tension[k], complex(y_ik))
            _acumular(activo, real, -1.0)
            _acumular(reactivo, imag, -1.0)
        h.append(forma(activo, BALANCE_P, bus=bus.id))
        h.append(forma(reactivo, BALANCE_Q, bus=bus.id))

    # Flujos por línea
    pos = case.positions
    for l, br in enumerate(case.branches):
        yff, yft, ytf, ytt = line_flow_coefficients(br)
        f, t = pos[br.from_bus], pos[br.to_bus]
        spf, sqf, spt, sqt = idx_flujo[l]
        for extremo, (propio, otro, y_propio, y_otro, ip, iq) in (
            ('from', (f, t, yff, yft, spf, sqf)),
            ('to', (t, f, ytt, ytf, spt, sqt)),
        ):
            real, imag = _parte_real_imag(tension[propio], tension[propio], complex(y_propio))
            real_o, imag_o = _parte_real_imag(tension[propio], tension[otro], complex(y_otro))
            activo = defaultdict(float, {(ip,): 1.0})
            reactivo = defaultdict(float, {(iq,): 1.0})
            _acumular(activo, real, -1.0)
            _acumular(activo, real_o, -1.0)
            _acumular(reactivo, imag, -1.0)
            _acumular(reactivo, imag_o, -1.0)
            tag_p, tag_q = (FLUJO_PF, FLUJO_QF) if extremo == 'from' else (FLUJO_PT, FLUJO_QT)
            h.append(forma(activo, tag_p, branch=l + 1))
            h.append(forma(reactivo, tag_q, branch=l + 1))

    # Levantamiento X_i = E_i² + F_i²
    for i, bus in enumerate(case.buses):
        e, f = tension[i]
        terminos = defaultdict(float, {(idx_x[i],): -1.0})
        _acumular(terminos, _producto(e, e))
        _acumular(terminos, _producto(f, f))
        h.append(forma(terminos, LEVANTAMIENTO_X, bus=bus.id))

    g = []

    # Cajas de generación (P - lo)(hi - P) >= 0
    for k, gen in enumerate(case.generators):
        for tag, idx, lo, hi in ((CAJA_P, idx_p[k], gen.pmin, gen.pmax), (CAJA_Q, idx_q[k], gen.qmin, gen.qmax)):
            terminos = {(idx, idx): -1.0, (idx,): lo + hi, (): -lo * hi}
            g.append(forma(terminos, tag, generator=k + 1, variable=idx, lo=lo, hi=hi))

    # Límites de potencia aparente
    for l, br in enumerate(case.branches):
        if not br.limitada:
            continue
        spf, sqf, spt, sqt = idx_flujo[l]
        for tag, ip, iq in ((LIMITE_FROM, spf, sqf), (LIMITE_TO, spt, sqt)):
            terminos = {(): br.s_max ** 2, (ip, ip): -1.0, (iq, iq): -1.0}
            g.append(forma(terminos, tag, branch=l + 1, p=ip, q=iq, limit=br.s_max))

    # Tensiones: V̄² - E² - F² >= 0 y X - V̲² >= 0
    for i, bus in enumerate(case.buses):
        e, f = tension[i]
        terminos = defaultdict(float, {(): bus.vmax ** 2})
        _acumular(terminos, _producto(e, e), -1.0)
        _acumular(terminos, _producto(f, f), -1.0)
        coordenadas = None if i == slack else (next(iter(e))[0], next(iter(f))[0])
        g.append(forma(terminos, V_MAX, bus=bus.id, coords=coordenadas, limit=bus.vmax))
    for i, bus in enumerate(case.buses):
        g.append(forma({(idx_x[i],): 1.0, (): -bus.vmin ** 2}, V_MIN, bus=bus.id, variable=idx_x[i], limit=bus.vmin))

    # Caja de parámetros
    for j, (lo, hi) in enumerate(uncertainty.bounds):
        if np.isfinite(lo):
            g.append(forma({(y_idx[j],): 1.0, (): -lo}, R_LO, parameter=j, bound=lo))
        if np.isfinite(hi):
            g.append(forma({(y_idx[j],): -1.0, (): hi}, R_HI, parameter=j, bound=hi))

    # Objetivo
    objetivo = defaultdict(float)
    for k, gen in enumerate(case.generators):
        c2, c1, c0 = gen.cost
        objetivo[(idx_p[k], idx_p[k])] += c2
        objetivo[(idx_p[k],)] += c1
        objetivo[()] += c0
    f = forma(objetivo, 'cost')

    programa = PolynomialProgram(
        n=n, p=p, h=tuple(h), g=tuple(g), f=f, variables=tuple(variables),
        slack_position=slack, bus_ids=tuple(bus.id for bus in case.buses),
    )
    logger.info('Programa polinomial: n=%d, p=%d, N_h=%d, N_g=%d', n, p, len(h), len(g))
    return programa


# === EVALUACIÓN ===

def check_dimensions(program, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (program.n,) or y.shape != (program.p,):
        raise ErrorDatos(
            f'dimensiones incompatibles: x {x.shape}, y {y.shape}; se esperaba ({program.n},), ({program.p},)'
        )
    return x, y


def eval_constraints(program, x, y):
    """Valores (h, g) en (x, y)."""
    x, y = check_dimensions(program, x, y)
    return _evaluar_apilado(program._apilado_h, x, y), _evaluar_apilado(program._apilado_g, x, y)


def constraint(program, constraint_id):
    """Resuelve un identificador ('h', i), ('g', j) o 'f' a su QuadraticForm."""
    if constraint_id == 'f':
        return program.f
    try:
        familia, indice = constraint_id
        filas = {'h': program.h, 'g': program.g}[familia]
        if indice < 0:
            raise IndexError
        return filas[indice]
    except (KeyError, IndexError, TypeError, ValueError):
        raise ErrorDatos(f'restricción inexistente: {constraint_id!r}')


def gradient_hessian(program, constraint_id, x):
    """Gradiente en x (linear_x + H x) y hessiano constante de la restricción."""
    forma = constraint(program, constraint_id)
    x = np.asarray(x, dtype=float)
    if x.shape != (program.n,):
        raise ErrorDatos(f'x debe tener dimensión {program.n}')
    return forma.gradient(x), forma.hessian


def dump_program(program):
    """Texto legible del programa, un polinomio por línea."""
    nombres = program.names
    lineas = [f'# n={program.n} p={program.p} N_h={len(program.h)} N_g={len(program.g)}']
    lineas.append(f'f: {program.f.to_text(nombres)}')
    for i, forma in enumerate(program.h):
        lineas.append(f'h[{i}] {forma.tag}: {forma.to_text(nombres)} = 0')
    for j, forma in enumerate(program.g):
        lineas.append(f'g[{j}] {forma.tag}: {forma.to_text(nombres)} >= 0')
    return '\n'.join(lineas) + '\n'
