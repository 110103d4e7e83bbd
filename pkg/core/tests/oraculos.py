# core/tests/oraculos.py
"""
Oráculos de referencia para las pruebas: implementaciones directas e
independientes de lo que el paquete calcula por otra vía.
"""

import math
from itertools import combinations

import numpy as np
from scipy import integrate
from scipy.stats import multivariate_normal

from core.case_model import Branch, Bus, Generator, NetworkCase


# === CASOS DE JUGUETE ===

def caso_dos_barras(r=0.01, x=0.1, b_sh=0.0, carga=(0.5, 0.2), generador_remoto=True, s_max=math.inf):
    """Slack en la barra 1 con generador barato; carga (y generador caro) en la barra 2."""
    z = complex(r, x)
    ys = 1 / z
    generadores = [Generator(bus=1, pmin=0.0, pmax=2.0, qmin=-1.0, qmax=1.0, cost=(5.0, 10.0, 0.0))]
    if generador_remoto:
        generadores.append(Generator(bus=2, pmin=0.0, pmax=0.5, qmin=-0.5, qmax=0.5, cost=(5.0, 12.0, 0.0)))
    return NetworkCase(
        buses=(
            Bus(id=1, vmin=0.9, vmax=1.1, p_nominal=0.0, q_nominal=0.0, is_slack=True),
            Bus(id=2, vmin=0.9, vmax=1.1, p_nominal=carga[0], q_nominal=carga[1]),
        ),
        branches=(Branch(from_bus=1, to_bus=2, g=ys.real, b=ys.imag, b_sh=b_sh, s_max=s_max),),
        generators=tuple(generadores),
        name='dos-barras',
    )


def caso_sin_perdidas(n_barras=3):
    """Cadena sin pérdidas ni shunts, un generador en la slack."""
    barras = tuple(
        Bus(id=i + 1, vmin=0.9, vmax=1.1, p_nominal=0.0 if i == 0 else 0.2, q_nominal=0.0 if i == 0 else 0.05,
            is_slack=i == 0)
        for i in range(n_barras)
    )
    lineas = tuple(Branch(from_bus=i + 1, to_bus=i + 2, g=0.0, b=-10.0) for i in range(n_barras - 1))
    return NetworkCase(
        buses=barras, branches=lineas,
        generators=(Generator(bus=1, pmin=0.0, pmax=3.0, qmin=-3.0, qmax=3.0, cost=(0.0, 1.0, 0.0)),),
        name='sin-perdidas',
    )


def caso_con_isla():
    """La barra 3 no tiene líneas: la submatriz no slack es singular."""
    base = caso_sin_perdidas(2)
    return NetworkCase(
        buses=base.buses + (Bus(id=3, vmin=0.9, vmax=1.1, p_nominal=0.1, q_nominal=0.0),),
        branches=base.branches,
        generators=base.generators,
        name='isla',
    )


# === RED ===

def ybus_directo(case):
    """Y-bus denso sumando cada línea con el modelo Π escrito desde cero."""
    n = case.n_buses
    posicion = {bus.id: i for i, bus in enumerate(case.buses)}
    ybus = np.zeros((n, n), dtype=complex)
    for br in case.branches:
        f, t = posicion[br.from_bus], posicion[br.to_bus]
        serie = complex(br.g, br.b)
        shunt = complex(br.g_sh, br.b_sh) / 2
        tap = br.tau * complex(math.cos(br.theta), math.sin(br.theta))
        ybus[f, f] += (serie + shunt) / (br.tau ** 2)
        ybus[f, t] += -serie / tap.conjugate()
        ybus[t, f] += -serie / tap
        ybus[t, t] += serie + shunt
    for i, bus in enumerate(case.buses):
        ybus[i, i] += complex(bus.gs, bus.bs)
    return ybus


def flujo_newton(case, inyecciones, tolerancia=1e-12, max_iter=50):
    """
    Flujo de potencia por Newton-Raphson en coordenadas rectangulares.

    Todas las barras no slack son PQ con inyección compleja especificada;
    la slack queda en 1 + j0.

    Returns:
        np.ndarray: tensiones complejas por barra
    """
    ybus = ybus_directo(case)
    s = case.slack_position
    otras = [i for i in range(case.n_buses) if i != s]
    objetivo = np.asarray(inyecciones, dtype=complex)[otras]
    v = np.ones(case.n_buses, dtype=complex)

    for _ in range(max_iter):
        corriente = ybus @ v
        inyeccion = v * np.conj(corriente)
        error = inyeccion[otras] - objetivo
        if np.max(np.abs(error)) < tolerancia:
            return v
        d_e = np.diag(np.conj(corriente)) + np.diag(v) @ np.conj(ybus)
        d_f = 1j * np.diag(np.conj(corriente)) - 1j * np.diag(v) @ np.conj(ybus)
        d_e, d_f = d_e[np.ix_(otras, otras)], d_f[np.ix_(otras, otras)]
        jacobiano = np.block([[d_e.real, d_f.real], [d_e.imag, d_f.imag]])
        paso = np.linalg.solve(jacobiano, -np.concatenate([error.real, error.imag]))
        m = len(otras)
        v[otras] += paso[:m] + 1j * paso[m:]
    raise RuntimeError('Newton no convergió')


# === POLINOMIOS ===

def evaluar_ingenuo(forma, x, y):
    """Σ coef · Π z_i sobre los monomios de la forma, con z = (x, y)."""
    z = np.concatenate([np.asarray(x, dtype=float), np.asarray(y, dtype=float)])
    return sum(coef * math.prod(z[i] for i in monomio) for monomio, coef in forma.terms.items())


def coocurrencias(program):
    """Pares de variables que comparten restricción o monomio del objetivo."""
    pares = set()
    for forma in program.h + program.g:
        variables = sorted({i for monomio in forma.terms for i in monomio})
        pares.update(frozenset(par) for par in combinations(variables, 2))
    for monomio in program.f.terms:
        pares.update(frozenset(par) for par in combinations(sorted(set(monomio)), 2))
    return pares


# === INCERTIDUMBRE ===

def momento_truncado(mean, covariance, bounds, gamma):
    """E[r1^γ1 r2^γ2] de la Normal truncada por cuadratura 2-D."""
    distribucion = multivariate_normal(mean=mean, cov=covariance)
    (lo1, hi1), (lo2, hi2) = bounds

    def densidad(r2, r1, g1, g2):
        return r1 ** g1 * r2 ** g2 * distribucion.pdf([r1, r2])

    masa, _ = integrate.dblquad(densidad, lo1, hi1, lo2, hi2, args=(0, 0), epsabs=1e-12)
    valor, _ = integrate.dblquad(densidad, lo1, hi1, lo2, hi2, args=gamma, epsabs=1e-12)
    return valor / masa


# === OPF DE DOS BARRAS POR FUERZA BRUTA ===

def _evaluar_rejilla(case, cargas, e, f):
    ybus = ybus_directo(case)
    v2 = e + 1j * f
    v1 = np.ones_like(v2)
    s1 = v1 * np.conj(ybus[0, 0] * v1 + ybus[0, 1] * v2)
    s2 = v2 * np.conj(ybus[1, 0] * v1 + ybus[1, 1] * v2)
    p_l, q_l = cargas
    gen1, gen2 = case.generators
    p1, q1 = s1.real + p_l[0], s1.imag + q_l[0]
    p2, q2 = s2.real + p_l[1], s2.imag + q_l[1]
    modulo = np.abs(v2)
    factible = (
        (p1 >= gen1.pmin) & (p1 <= gen1.pmax) & (q1 >= gen1.qmin) & (q1 <= gen1.qmax)
        & (p2 >= gen2.pmin) & (p2 <= gen2.pmax) & (q2 >= gen2.qmin) & (q2 <= gen2.qmax)
        & (modulo >= case.buses[1].vmin) & (modulo <= case.buses[1].vmax)
    )
    costo = gen1.costo(p1) + gen2.costo(p2)
    return np.where(factible, costo, np.inf)


def optimo_dos_barras(case, cargas, caja=(0.9, 1.1, -0.3, 0.3), refinamientos=(0.02, 0.002), puntos=401):
    """
    Óptimo global del OPF de dos barras por búsqueda en rejilla sobre
    (E2, F2), refinando alrededor del mejor punto con radios decrecientes.

    Returns:
        tuple: (E2, F2, costo)
    """
    e_lo, e_hi, f_lo, f_hi = caja
    ejes_e, ejes_f = np.linspace(e_lo, e_hi, puntos), np.linspace(f_lo, f_hi, puntos)
    for radio in (None,) + tuple(refinamientos):
        if radio is not None:
            ejes_e = np.linspace(mejor_e - radio, mejor_e + radio, puntos)
            ejes_f = np.linspace(mejor_f - radio, mejor_f + radio, puntos)
        e, f = np.meshgrid(ejes_e, ejes_f, indexing='ij')
        costo = _evaluar_rejilla(case, cargas, e, f)
        indice = np.unravel_index(np.argmin(costo), costo.shape)
        mejor_e, mejor_f, mejor_costo = float(e[indice]), float(f[indice]), float(costo[indice])
    return mejor_e, mejor_f, mejor_costo
