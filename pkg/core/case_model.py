# core/case_model.py
"""
Modelo de la red eléctrica.
Lectura de casos (subconjunto MATPOWER y JSON), validación, matriz de
admitancias de barra y cantidades del modelo Π de cada línea.

Todo el paquete trabaja en por unidad; la conversión ocurre sólo aquí
(lectura) y en los reportes.
"""

import json
import logging
import math
import re
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .exceptions import ErrorDatos, ErrorParseo, ErrorUso, ErrorValidacion

logger = logging.getLogger(__name__)

SIN_LIMITE = math.inf

# Columnas mínimas de cada matriz MATPOWER
COLUMNAS_MINIMAS = {'bus': 13, 'gen': 10, 'branch': 11, 'gencost': 4}
MATRICES_MATPOWER = ('bus', 'gen', 'branch', 'gencost')

TIPO_SLACK = 3
TIPO_AISLADO = 4


# === TIPOS DEL DOMINIO ===

@dataclass(frozen=True)
class Bus:
    id: int
    vmin: float
    vmax: float
    p_nominal: float
    q_nominal: float
    is_slack: bool = False
    gs: float = 0.0
    bs: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    g: float
    b: float
    g_sh: float = 0.0
    b_sh: float = 0.0
    tau: float = 1.0
    theta: float = 0.0
    s_max: float = SIN_LIMITE

    @property
    def limitada(self):
        return math.isfinite(self.s_max)


@dataclass(frozen=True)
class Generator:
    bus: int
    pmin: float
    pmax: float
    qmin: float
    qmax: float
    cost: tuple = (0.0, 0.0, 0.0)  # (c2, c1, c0) sobre la potencia en p.u.

    def costo(self, p):
        c2, c1, c0 = self.cost
        return c2 * p * p + c1 * p + c0


@dataclass(frozen=True)
class NetworkCase:
    buses: tuple
    branches: tuple
    generators: tuple
    base_mva: float = 100.0
    name: str = ''

    def __post_init__(self):
        validate_case(self)

    @property
    def n_buses(self):
        return len(self.buses)

    @property
    def n_branches(self):
        return len(self.branches)

    @property
    def n_generators(self):
        return len(self.generators)

    @cached_property
    def positions(self):
        """Mapa id de barra -> posición (0-based) en el orden del archivo."""
        return {bus.id: i for i, bus in enumerate(self.buses)}

    @cached_property
    def slack_position(self):
        return next(i for i, bus in enumerate(self.buses) if bus.is_slack)

    @cached_property
    def ybus(self):
        return build_ybus(self)

    def generators_at(self, position):
        """Índices de los generadores conectados a la barra en `position`."""
        bus_id = self.buses[position].id
        return [k for k, gen in enumerate(self.generators) if gen.bus == bus_id]

    def nominal_loads(self):
        p = np.array([bus.p_nominal for bus in self.buses])
        q = np.array([bus.q_nominal for bus in self.buses])
        return p, q


def validate_case(case):
    """Verifica las invariantes estructurales del caso; lanza ErrorValidacion."""
    ids = [bus.id for bus in case.buses]
    if len(set(ids)) != len(ids):
        repetidos = sorted({i for i in ids if ids.count(i) > 1})
        raise ErrorValidacion(f'id de barra duplicado: {repetidos}')

    slacks = [bus.id for bus in case.buses if bus.is_slack]
    if not slacks:
        raise ErrorValidacion('el caso no tiene barra slack')
    if len(slacks) > 1:
        raise ErrorValidacion(f'más de una barra slack: {slacks}')

    if case.base_mva <= 0:
        raise ErrorValidacion('base_mva debe ser positiva')

    for bus in case.buses:
        if not 0 < bus.vmin <= bus.vmax:
            raise ErrorValidacion(f'barra {bus.id}: se requiere 0 < vmin <= vmax')

    conocidos = set(ids)
    for num, br in enumerate(case.branches, start=1):
        if br.from_bus not in conocidos or br.to_bus not in conocidos:
            raise ErrorValidacion(f'línea {num}: barra inexistente ({br.from_bus}, {br.to_bus})')
        if br.from_bus == br.to_bus:
            raise ErrorValidacion(f'línea {num}: origen y destino iguales')
        if br.tau <= 0:
            raise ErrorValidacion(f'línea {num}: tap no positivo ({br.tau})')
        if br.s_max <= 0:
            raise ErrorValidacion(f'línea {num}: límite de potencia no positivo')

    for num, gen in enumerate(case.generators, start=1):
        if gen.bus not in conocidos:
            raise ErrorValidacion(f'generador {num}: barra inexistente {gen.bus}')
        if gen.pmin > gen.pmax or gen.qmin > gen.qmax:
            raise ErrorValidacion(f'generador {num}: cotas invertidas')
        if len(gen.cost) != 3:
            raise ErrorValidacion(f'generador {num}: el costo debe tener 3 coeficientes')
        if gen.cost[0] < 0:
            raise ErrorValidacion(f'generador {num}: costo no convexo')


# === MODELO Π ===

def line_flow_coefficients(branch):
    """
    Admitancias del modelo Π con transformador 1:τe^{jθ}.

    Returns:
        tuple: (yff, yft, ytf, ytt) tales que
            I_from = yff V_from + yft V_to
            I_to   = ytf V_from + ytt V_to
    """
    if branch.tau <= 0:
        raise ErrorValidacion(f'tap no positivo ({branch.tau})')
    ys = complex(branch.g, branch.b)
    tap = branch.tau * np.exp(1j * branch.theta)
    ytt = ys + complex(branch.g_sh, branch.b_sh) / 2
    yff = ytt / branch.tau ** 2
    yft = -ys / np.conj(tap)
    ytf = -ys / tap
    return yff, yft, ytf, ytt


def build_ybus(case):
    """Ensambla la matriz de admitancias de barra G + jB (dispersa, compleja)."""
    n = case.n_buses
    pos = case.positions
    filas, columnas, valores = [], [], []

    for br in case.branches:
        yff, yft, ytf, ytt = line_flow_coefficients(br)
        f, t = pos[br.from_bus], pos[br.to_bus]
        filas += [f, f, t, t]
        columnas += [f, t, f, t]
        valores += [yff, yft, ytf, ytt]

    for i, bus in enumerate(case.buses):
        if bus.gs or bus.bs:
            filas.append(i)
            columnas.append(i)
            valores.append(complex(bus.gs, bus.bs))

    ybus = sp.coo_matrix(
        (np.array(valores, dtype=complex), (filas, columnas)), shape=(n, n)
    )
    return ybus.tocsr()


def bus_injections(case, voltajes):
    """Inyección neta de potencia compleja S_i = V_i conj((Y V)_i)."""
    voltajes = np.asarray(voltajes, dtype=complex)
    return voltajes * np.conj(case.ybus @ voltajes)


def branch_flows(case, voltajes):
    """
    Flujos complejos en ambos extremos de cada línea.

    Returns:
        tuple: (S_from, S_to) como arreglos complejos de longitud N_L
    """
    voltajes = np.asarray(voltajes, dtype=complex)
    pos = case.positions
    s_from = np.zeros(case.n_branches, dtype=complex)
    s_to = np.zeros(case.n_branches, dtype=complex)
    for num, br in enumerate(case.branches):
        yff, yft, ytf, ytt = line_flow_coefficients(br)
        vf, vt = voltajes[pos[br.from_bus]], voltajes[pos[br.to_bus]]
        s_from[num] = vf * np.conj(yff * vf + yft * vt)
        s_to[num] = vt * np.conj(ytf * vf + ytt * vt)
    return s_from, s_to


# === LÍMITES DE LÍNEA ===

def set_uniform_line_limit(case, s_max):
    """Impone s_max (p.u.) en todas las líneas conservando el mínimo existente."""
    if not s_max > 0:
        raise ErrorUso(f'el límite uniforme debe ser positivo (recibido {s_max})')
    if math.isinf(s_max):
        return case
    lineas = tuple(replace(br, s_max=min(br.s_max, s_max)) for br in case.branches)
    return replace(case, branches=lineas)


def remove_line_limits(case):
    """Quita todos los límites de flujo (sin límite)."""
    return replace(case, branches=tuple(replace(br, s_max=SIN_LIMITE) for br in case.branches))


def limit_from_mva(case, limite_mva):
    """Convierte un límite en MVA a p.u. sobre la base del caso."""
    return limite_mva / case.base_mva


# === LECTURA DE CASOS ===

def load_case(path, format=None):
    """Lee un archivo de caso; el formato se infiere del sufijo si no se indica."""
    path = Path(path)
    if format is None:
        format = 'json' if path.suffix.lower() == '.json' else 'matpower'
    try:
        texto = path.read_text(encoding='utf-8')
    except OSError as e:
        raise ErrorDatos(f'no se pudo leer el caso {path}: {e.strerror}')
    return parse_case(texto, format=format, name=path.stem)


def parse_case(source, format='matpower', name=''):
    """
    Construye un NetworkCase a partir del texto de un caso.

    Args:
        source: contenido del archivo
        format: 'matpower' (subconjunto de matrices mpc.*) o 'json'
        name: nombre informativo del caso

    Returns:
        NetworkCase validado, en por unidad
    """
    if format == 'matpower':
        caso = _parse_matpower(source, name)
    elif format == 'json':
        caso = _parse_json(source, name)
    else:
        raise ErrorUso(f'formato de caso desconocido: {format}')

    logger.info(
        'Caso %s: %d barras, %d líneas, %d generadores (base %.1f MVA)',
        caso.name or '-', caso.n_buses, caso.n_branches, caso.n_generators, caso.base_mva,
    )
    return caso


_INICIO_ASIGNACION = re.compile(r'^\s*mpc\.(\w+)\s*=\s*(.*)$')


def _leer_matrices_matpower(texto):
    """Extrae baseMVA y las matrices numéricas con el número de línea de cada fila."""
    base_mva = None
    matrices = {}
    actual = None  # nombre de la matriz abierta, o '' si se ignora
    cierre = ']'

    for numero, cruda in enumerate(texto.splitlines(), start=1):
        linea = cruda.split('%', 1)[0].strip()
        if not linea:
            continue

        if actual is None:
            match = _INICIO_ASIGNACION.match(linea)
            if not match:
                continue
            nombre, resto = match.group(1), match.group(2).strip()
            if nombre == 'baseMVA':
                try:
                    base_mva = float(resto.rstrip(';').strip())
                except ValueError:
                    raise ErrorParseo(f'baseMVA no numérico: {resto!r}', linea=numero)
                continue
            if not resto.startswith(('[', '{')):
                continue
            cierre = ']' if resto.startswith('[') else '}'
            actual = nombre if (nombre in MATRICES_MATPOWER and cierre == ']') else ''
            if actual:
                matrices[actual] = []
            linea = resto[1:]

        terminado = cierre in linea
        if terminado:
            linea = linea.split(cierre, 1)[0]

        if actual:
            for fragmento in linea.split(';'):
                fragmento = fragmento.replace(',', ' ').strip()
                if not fragmento:
                    continue
                try:
                    fila = [float(token) for token in fragmento.split()]
                except ValueError:
                    raise ErrorParseo(f'fila no numérica en mpc.{actual}: {fragmento!r}', linea=numero)
                if len(fila) < COLUMNAS_MINIMAS[actual]:
                    raise ErrorParseo(
                        f'mpc.{actual} requiere al menos {COLUMNAS_MINIMAS[actual]} columnas',
                        linea=numero,
                    )
                matrices[actual].append((numero, fila))

        if terminado:
            actual = None

    if actual is not None:
        raise ErrorParseo('matriz sin cerrar al final del archivo')
    if base_mva is None:
        raise ErrorParseo('falta mpc.baseMVA')
    for nombre in MATRICES_MATPOWER:
        if nombre not in matrices:
            raise ErrorParseo(f'falta mpc.{nombre}')
    return base_mva, matrices


def _coeficientes_costo(coeficientes, escala, etiqueta):
    """Normaliza coeficientes (mayor grado primero) a (c2, c1, c0) sobre p.u."""
    coeficientes = [float(c) for c in coeficientes]
    if len(coeficientes) > 3 and any(c != 0 for c in coeficientes[:-3]):
        raise ErrorValidacion(f'{etiqueta}: costo de grado mayor que 2')
    c2, c1, c0 = ([0.0, 0.0, 0.0] + coeficientes)[-3:]
    return (c2 * escala ** 2, c1 * escala, c0)


def _parse_matpower(texto, name):
    base_mva, matrices = _leer_matrices_matpower(texto)

    buses = []
    for numero, fila in matrices['bus']:
        tipo = int(fila[1])
        if tipo == TIPO_AISLADO:
            raise ErrorValidacion(f'línea {numero}: barras aisladas no soportadas')
        buses.append(Bus(
            id=int(fila[0]),
            vmin=fila[12],
            vmax=fila[11],
            p_nominal=fila[2] / base_mva,
            q_nominal=fila[3] / base_mva,
            is_slack=tipo == TIPO_SLACK,
            gs=fila[4] / base_mva,
            bs=fila[5] / base_mva,
        ))

    if len(matrices['gencost']) < len(matrices['gen']):
        raise ErrorParseo('mpc.gencost tiene menos filas que mpc.gen')

    generators = []
    for (numero, fila), (numero_costo, costo) in zip(matrices['gen'], matrices['gencost']):
        if fila[7] <= 0:
            continue
        modelo, grado = int(costo[0]), int(costo[3])
        if modelo != 2:
            raise ErrorValidacion(f'línea {numero_costo}: sólo se admite costo polinomial (modelo 2)')
        if len(costo) < 4 + grado:
            raise ErrorParseo(f'gencost declara {grado} coeficientes', linea=numero_costo)
        generators.append(Generator(
            bus=int(fila[0]),
            pmin=fila[9] / base_mva,
            pmax=fila[8] / base_mva,
            qmin=fila[4] / base_mva,
            qmax=fila[3] / base_mva,
            cost=_coeficientes_costo(costo[4:4 + grado], base_mva, f'línea {numero_costo}'),
        ))

    branches = []
    for numero, fila in matrices['branch']:
        if fila[10] <= 0:
            continue
        impedancia = complex(fila[2], fila[3])
        if impedancia == 0:
            raise ErrorValidacion(f'línea {numero}: impedancia serie nula')
        admitancia = 1 / impedancia
        branches.append(Branch(
            from_bus=int(fila[0]),
            to_bus=int(fila[1]),
            g=admitancia.real,
            b=admitancia.imag,
            g_sh=0.0,
            b_sh=fila[4],
            tau=fila[8] if fila[8] != 0 else 1.0,
            theta=math.radians(fila[9]),
            s_max=fila[5] / base_mva if fila[5] > 0 else SIN_LIMITE,
        ))

    return NetworkCase(
        buses=tuple(buses), branches=tuple(branches), generators=tuple(generators),
        base_mva=base_mva, name=name,
    )


def _parse_json(texto, name):
    try:
        datos = json.loads(texto)
    except json.JSONDecodeError as e:
        raise ErrorParseo(e.msg, linea=e.lineno)

    try:
        buses = tuple(
            Bus(
                id=int(b['id']), vmin=float(b['vmin']), vmax=float(b['vmax']),
                p_nominal=float(b['p_nominal']), q_nominal=float(b['q_nominal']),
                is_slack=bool(b.get('is_slack', False)),
                gs=float(b.get('gs', 0.0)), bs=float(b.get('bs', 0.0)),
            )
            for b in datos['buses']
        )
        branches = tuple(
            Branch(
                from_bus=int(br['from']), to_bus=int(br['to']),
                g=float(br['g']), b=float(br['b']),
                g_sh=float(br.get('g_sh', 0.0)), b_sh=float(br.get('b_sh', 0.0)),
                tau=float(br.get('tau', 1.0)), theta=float(br.get('theta', 0.0)),
                s_max=SIN_LIMITE if br.get('s_max') is None else float(br['s_max']),
            )
            for br in datos['branches']
        )
        generators = tuple(
            Generator(
                bus=int(g['bus']), pmin=float(g['pmin']), pmax=float(g['pmax']),
                qmin=float(g['qmin']), qmax=float(g['qmax']),
                cost=_coeficientes_costo(g.get('cost', [0.0]), 1.0, f'generador {num}'),
            )
            for num, g in enumerate(datos['generators'], start=1)
        )
        base_mva = float(datos.get('base_mva', 100.0))
    except KeyError as e:
        raise ErrorParseo(f'campo obligatorio ausente: {e.args[0]}')
    except (TypeError, ValueError) as e:
        raise ErrorParseo(f'valor inválido: {e}')

    return NetworkCase(
        buses=buses, branches=branches, generators=generators,
        base_mva=base_mva, name=datos.get('name', name),
    )


def serialize_case(case):
    """Serializa el caso al esquema JSON en p.u. (ida y vuelta exacta)."""
    datos = {
        'name': case.name,
        'base_mva': case.base_mva,
        'buses': [
            {
                'id': b.id, 'vmin': b.vmin, 'vmax': b.vmax,
                'p_nominal': b.p_nominal, 'q_nominal': b.q_nominal,
                'is_slack': b.is_slack, 'gs': b.gs, 'bs': b.bs,
            }
            for b in case.buses
        ],
        'branches': [
            {
                'from': br.from_bus, 'to': br.to_bus, 'g': br.g, 'b': br.b,
                'g_sh': br.g_sh, 'b_sh': br.b_sh, 'tau': br.tau, 'theta': br.theta,
                's_max': br.s_max if br.limitada else None,
            }
            for br in case.branches
        ],
        'generators': [
            {
                'bus': g.bus, 'pmin': g.pmin, 'pmax': g.pmax,
                'qmin': g.qmin, 'qmax': g.qmax, 'cost': list(g.cost),
            }
            for g in case.generators
        ],
    }
    return json.dumps(datos, indent=2)
