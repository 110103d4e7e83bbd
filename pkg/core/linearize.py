# core/linearize.py
"""
Puntos de linealización (Momento, Flat, No-Load), programa linealizado y
error de linealización con signo.

Como cada h_i es de grado 2 y afín en y, el error con signo
ε_i = h_i(x, y) - h_i^lin(x, y) es el resto cuadrático ½ ΔᵀH_iΔ con
Δ = x - x₀ y H_i el hessiano (constante) de h_i; no depende de y.
"""

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .case_model import branch_flows, bus_injections
from .exceptions import ErrorDatos, ErrorSingular
from .moment_relax import extract_first_moment
from .opf_poly import check_dimensions, eval_constraints

logger = logging.getLogger(__name__)

CONDICION_MAXIMA = 1e12

MOMENTO = 'moment'
FLAT = 'flat'
NO_LOAD = 'no-load'


@dataclass(frozen=True, eq=False)
class LinearizationPoint:
    x0: np.ndarray
    provenance: str
    names: tuple
    slack_bus: int

    @property
    def label(self):
        return self.provenance

    def as_dict(self):
        """Valores por nombre, con E = 1 y F = 0 de la barra slack reinsertados."""
        valores = {f'E_{self.slack_bus}': 1.0, f'F_{self.slack_bus}': 0.0}
        valores.update({nombre: float(v) for nombre, v in zip(self.names, self.x0)})
        return valores

    def to_json(self):
        return {'provenance': self.provenance, 'slack_bus': self.slack_bus, 'values': self.as_dict()}

    @classmethod
    def from_json(cls, datos, program):
        valores = datos.get('values', {})
        nombres = tuple(program.names[:program.n])
        faltantes = [nombre for nombre in nombres if nombre not in valores]
        if faltantes:
            raise ErrorDatos(f'punto de linealización incompleto: faltan {faltantes[:5]}')
        x0 = np.array([float(valores[nombre]) for nombre in nombres])
        return cls(x0=x0, provenance=datos.get('provenance', 'desconocido'), names=nombres,
                   slack_bus=program.bus_ids[program.slack_position])


def _punto(program, x0, provenance):
    return LinearizationPoint(
        x0=np.asarray(x0, dtype=float),
        provenance=provenance,
        names=tuple(program.names[:program.n]),
        slack_bus=program.bus_ids[program.slack_position],
    )


# === PERFILES ===

def moment_point(solution, program):
    """Primer momento de la relajación como punto de linealización."""
    x0 = extract_first_moment(solution, program)
    return _punto(program, x0, f'{MOMENTO}-2k{2 * solution.k}')


def complete_point(case, program, voltajes):
    """
    Completa las coordenadas dependientes a partir de las tensiones:
    X = |V|², flujos del modelo Π y (P, Q) por balance nodal con carga
    nominal, repartidos por igual entre los generadores de cada barra.
    """
    voltajes = np.asarray(voltajes, dtype=complex)
    x0 = np.zeros(program.n)
    indice = program.index

    for i, bus in enumerate(case.buses):
        if i != case.slack_position:
            x0[indice[('E', bus.id)]] = voltajes[i].real
            x0[indice[('F', bus.id)]] = voltajes[i].imag
        x0[indice[('X', bus.id)]] = abs(voltajes[i]) ** 2

    s_from, s_to = branch_flows(case, voltajes)
    for l in range(case.n_branches):
        x0[indice[('Spf', l + 1)]] = s_from[l].real
        x0[indice[('Sqf', l + 1)]] = s_from[l].imag
        x0[indice[('Spt', l + 1)]] = s_to[l].real
        x0[indice[('Sqt', l + 1)]] = s_to[l].imag

    inyeccion = bus_injections(case, voltajes)
    p_nominal, q_nominal = case.nominal_loads()
    for i in range(case.n_buses):
        generadores = case.generators_at(i)
        if not generadores:
            continue
        total = inyeccion[i] + complex(p_nominal[i], q_nominal[i])
        for k in generadores:
            x0[indice[('P', k + 1)]] = total.real / len(generadores)
            x0[indice[('Q', k + 1)]] = total.imag / len(generadores)
    return x0


def flat_point(case, program):
    """E = 1, F = 0 en todas las barras."""
    return _punto(program, complete_point(case, program, np.ones(case.n_buses)), FLAT)


def noload_voltages(case):
    """V_N = -Y_NN⁻¹ Y_Ns V_s con V_s = 1 (tensiones de inyección nula)."""
    ybus = case.ybus.toarray()
    s = case.slack_position
    otras = [i for i in range(case.n_buses) if i != s]
    y_nn = ybus[np.ix_(otras, otras)]
    y_ns = ybus[otras, s]

    condicion = np.linalg.cond(y_nn) if otras else 1.0
    if not np.isfinite(condicion) or condicion > CONDICION_MAXIMA:
        raise ErrorSingular(f'submatriz de admitancias no slack singular (cond = {condicion:.3e})')
    try:
        v_n = -np.linalg.solve(y_nn, y_ns * 1.0)
    except np.linalg.LinAlgError:
        raise ErrorSingular('submatriz de admitancias no slack singular')

    voltajes = np.ones(case.n_buses, dtype=complex)
    voltajes[otras] = v_n
    return voltajes


def noload_point(case, program):
    return _punto(program, complete_point(case, program, noload_voltages(case)), NO_LOAD)


# === PROGRAMA LINEALIZADO ===

@dataclass(frozen=True, eq=False)
class LinearizedProgram:
    """h^lin(x, y) = A x + B y + c; g y f se heredan del programa original."""

    program: object
    point: LinearizationPoint
    A: sp.csr_matrix
    B: np.ndarray
    c: np.ndarray

    def evaluate(self, x, y):
        return self.A @ np.asarray(x, dtype=float) + self.B @ np.asarray(y, dtype=float) + self.c

    @cached_property
    def hessians(self):
        return [forma.hessian for forma in self.program.h]


def linearize_program(program, point):
    """A_i = ∇h_i(x₀), B_i = linear_y, c_i = h_i(x₀, 0) - A_i x₀."""
    x0 = point.x0 if isinstance(point, LinearizationPoint) else np.asarray(point, dtype=float)
    if x0.shape != (program.n,):
        raise ErrorDatos(f'x₀ debe tener dimensión {program.n}')
    if not isinstance(point, LinearizationPoint):
        point = _punto(program, x0, 'manual')

    filas, constantes, b = [], [], []
    for forma in program.h:
        gradiente = forma.gradient(x0)
        filas.append(gradiente)
        # h(x₀, 0) - ∇h(x₀)ᵀx₀ = c - ½ x₀ᵀHx₀
        constantes.append(forma.constant - 0.5 * x0 @ (forma.hessian @ x0))
        b.append(forma.linear_y)
    return LinearizedProgram(
        program=program,
        point=point,
        A=sp.csr_matrix(np.vstack(filas)),
        B=np.vstack(b),
        c=np.array(constantes),
    )


def quadratic_remainder(program, x0, x):
    """½ (x - x₀)ᵀ H_i (x - x₀) para cada h_i."""
    delta = np.asarray(x, dtype=float) - np.asarray(x0, dtype=float)
    return np.array([0.5 * delta @ (forma.hessian @ delta) for forma in program.h])


def signed_error(program, x0, x, y):
    """ε = h(x, y) - h^lin(x, y) (resto cuadrático, independiente de y)."""
    punto = x0.x0 if isinstance(x0, LinearizationPoint) else np.asarray(x0, dtype=float)
    x, y = check_dimensions(program, x, y)
    linealizado = linearize_program(program, punto)
    h, _ = eval_constraints(program, x, y)
    return h - linealizado.evaluate(x, y)


# === HESSIANOS ===

def hessian_split(H):
    """H = H⁺ - H⁻ con H⁺, H⁻ semidefinidas (descomposición espectral)."""
    H = H.toarray() if sp.issparse(H) else np.asarray(H, dtype=float)
    simetrica = 0.5 * (H + H.T)
    autovalores, vectores = np.linalg.eigh(simetrica)
    positiva = (vectores * np.maximum(autovalores, 0.0)) @ vectores.T
    negativa = (vectores * np.maximum(-autovalores, 0.0)) @ vectores.T
    return 0.5 * (positiva + positiva.T), 0.5 * (negativa + negativa.T)


def expected_absolute_violation(samples, hessians, x0, surrogate=False):
    """
    J(x₀) = (1/M) Σ_m Σ_i |(x_m - x₀)ᵀ H_i (x_m - x₀)|.

    Con surrogate=True usa la cota convexa Σ_i Δᵀ(H⁺_i + H⁻_i)Δ.
    """
    delta = np.asarray(samples, dtype=float) - np.asarray(x0, dtype=float)
    total = np.zeros(delta.shape[0])
    for H in hessians:
        if surrogate:
            positiva, negativa = hessian_split(H)
            total += np.einsum('mi,ij,mj->m', delta, positiva + negativa, delta)
        else:
            H = H.toarray() if sp.issparse(H) else np.asarray(H, dtype=float)
            total += np.abs(np.einsum('mi,ij,mj->m', delta, H, delta))
    return float(total.mean())


def mean_optimality_check(samples, hessians, step_fraction=0.01, half_width=10, surrogate=False):
    """
    Busca en una rejilla alrededor de la media muestral el x₀ que minimiza la
    violación absoluta esperada.

    Args:
        samples: nube de puntos (M, d)
        hessians: lista de matrices d x d
        step_fraction: paso de la rejilla como fracción de la desviación por eje
        half_width: número de pasos a cada lado de la media
        surrogate: usar la cota convexa con hessianos divididos

    Returns:
        tuple: (mejor punto de la rejilla, media muestral)
    """
    samples = np.asarray(samples, dtype=float)
    media = samples.mean(axis=0)
    paso = step_fraction * np.maximum(samples.std(axis=0), 1e-12)
    desplazamientos = np.arange(-half_width, half_width + 1)

    matrices = [sum(hessian_split(H)) for H in hessians] if surrogate else hessians
    mejor, mejor_valor = media, np.inf
    for indices in np.ndindex(*(len(desplazamientos),) * samples.shape[1]):
        candidato = media + desplazamientos[list(indices)] * paso
        valor = expected_absolute_violation(samples, matrices, candidato)
        if valor < mejor_valor:
            mejor, mejor_valor = candidato, valor
    return mejor, media
