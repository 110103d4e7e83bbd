# core/uncertainty.py
"""
Modelo de demanda de dos factores latentes.

Cada barra i tiene carga P_Li = P_Mi (a_i1 r1 + a_i2 r2) (igual para Q) con
a_i1 = (i-1)/(N_B-1), a_i2 = 1 - a_i1 y r ~ Normal bivariada truncada.

El generador aleatorio es PCG64 de NumPy (Generator(PCG64(semilla))); la
truncación se hace por rechazo en lotes fijos de LOTE_MUESTREO extracciones,
de modo que la secuencia aceptada depende sólo de la semilla.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.stats import multivariate_normal

from .exceptions import ErrorDatos, ErrorUso

logger = logging.getLogger(__name__)

LOTE_MUESTREO = 4096
ACEPTACION_MINIMA = 1e-6

MEDIA_DEFECTO = (0.85, 0.85)
COVARIANZA_DEFECTO = ((0.01, 0.002), (0.002, 0.008))
COTAS_DEFECTO = ((0.7, 1.0), (0.7, 1.0))


@dataclass(frozen=True, eq=False)
class LoadModel:
    mean: np.ndarray
    covariance: np.ndarray
    bounds: tuple
    weights: np.ndarray  # (N_B, 2)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        covariance = np.asarray(self.covariance, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, 'mean', mean)
        object.__setattr__(self, 'covariance', covariance)
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'bounds', tuple((float(lo), float(hi)) for lo, hi in self.bounds))

        if mean.shape != (2,) or covariance.shape != (2, 2) or len(self.bounds) != 2:
            raise ErrorUso('el modelo de carga tiene exactamente dos factores')
        if not np.allclose(covariance, covariance.T):
            raise ErrorUso('la covarianza debe ser simétrica')
        try:
            np.linalg.cholesky(covariance)
        except np.linalg.LinAlgError:
            raise ErrorUso('la covarianza debe ser definida positiva')
        for lo, hi in self.bounds:
            if not lo < hi:
                raise ErrorUso(f'intervalo de truncación vacío: [{lo}, {hi}]')
        if weights.ndim != 2 or weights.shape[1] != 2:
            raise ErrorUso('los pesos deben ser una matriz N_B x 2')
        if not np.allclose(weights.sum(axis=1), 1.0):
            raise ErrorUso('los pesos de cada barra deben sumar 1')

    @classmethod
    def for_case(cls, case, mean=MEDIA_DEFECTO, covariance=COVARIANZA_DEFECTO, bounds=COTAS_DEFECTO):
        """Modelo con pesos a_i1 = (i-1)/(N_B-1) en el orden de barras del caso."""
        return cls(mean=mean, covariance=covariance, bounds=bounds, weights=factor_weights(case.n_buses))

    @property
    def lower(self):
        return np.array([lo for lo, _ in self.bounds])

    @property
    def upper(self):
        return np.array([hi for _, hi in self.bounds])

    def acceptance_probability(self):
        """Masa de la Normal dentro del rectángulo de truncación."""
        if all(math.isinf(lo) and math.isinf(hi) for lo, hi in self.bounds):
            return 1.0
        distribucion = multivariate_normal(mean=self.mean, cov=self.covariance)
        return float(distribucion.cdf(self.upper, lower_limit=self.lower))

    def contains(self, r):
        r = np.asarray(r, dtype=float)
        return bool(np.all((r >= self.lower) & (r <= self.upper)))


def factor_weights(n_buses):
    if n_buses == 1:
        return np.array([[0.0, 1.0]])
    a1 = np.arange(n_buses, dtype=float) / (n_buses - 1)
    return np.column_stack([a1, 1.0 - a1])


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    samples: np.ndarray  # (M, 2)
    seed: int = None

    @property
    def M(self):
        return self.samples.shape[0]

    def __iter__(self):
        return iter(self.samples)

    def __len__(self):
        return self.M


@dataclass(frozen=True)
class MomentVector:
    """Momentos crudos z_γ de φ indexados por γ = (γ1, γ2)."""

    order: int
    values: dict = field(default_factory=dict)

    def __getitem__(self, gamma):
        return self.values[tuple(gamma)]

    def moment_matrix(self, k):
        """Matriz de momentos de φ de orden k con z (base graduada)."""
        base = exponent_tuples(k)
        return np.array([[self.values[(a[0] + b[0], a[1] + b[1])] for b in base] for a in base])


def exponent_tuples(order):
    """Exponentes (γ1, γ2) con |γ| ≤ order en orden lexicográfico graduado."""
    tuplas = []
    for grado in range(order + 1):
        for g1 in range(grado, -1, -1):
            tuplas.append((g1, grado - g1))
    return tuplas


# === OPERACIONES ===

def sample_factors(model, M, seed):
    """Extrae M factores i.i.d. de la Normal truncada (rechazo, determinista por semilla)."""
    if M < 1:
        raise ErrorUso(f'se requiere al menos un escenario (M={M})')

    aceptacion = model.acceptance_probability()
    if aceptacion < ACEPTACION_MINIMA:
        raise ErrorDatos(
            f'probabilidad de aceptación {aceptacion:.2e} por debajo de {ACEPTACION_MINIMA:g}: '
            'modelo de carga degenerado'
        )

    rng = np.random.Generator(np.random.PCG64(seed))
    lower, upper = model.lower, model.upper
    aceptadas = []
    total = 0
    lotes = 0
    while total < M:
        lote = rng.multivariate_normal(model.mean, model.covariance, size=LOTE_MUESTREO, method='cholesky')
        dentro = np.all((lote >= lower) & (lote <= upper), axis=1)
        aceptadas.append(lote[dentro])
        total += int(dentro.sum())
        lotes += 1

    muestras = np.vstack(aceptadas)[:M]
    logger.info(
        'Muestreo: %d escenarios (semilla %s, %d lotes, aceptación teórica %.3f)',
        M, seed, lotes, aceptacion,
    )
    return ScenarioSet(samples=muestras, seed=seed)


def raw_moments(scenarios, order):
    """z_γ = (1/M) Σ_m r_m^γ para todo |γ| ≤ order."""
    if order < 0:
        raise ErrorUso('el orden de los momentos no puede ser negativo')
    muestras = np.asarray(scenarios.samples, dtype=float)
    valores = {}
    for gamma in exponent_tuples(order):
        if gamma == (0, 0):
            valores[gamma] = 1.0
            continue
        monomios = muestras[:, 0] ** gamma[0] * muestras[:, 1] ** gamma[1]
        valores[gamma] = float(np.mean(monomios))
    return MomentVector(order=order, values=valores)


def point_mass(r, order):
    """Momentos de una masa puntual en r (relajación determinista)."""
    r = np.asarray(r, dtype=float).reshape(1, 2)
    return raw_moments(ScenarioSet(samples=r), order)


def loads_from_factors(model, case, r):
    """Cargas (P_L, Q_L) por barra para el vector de factores r."""
    r = np.asarray(r, dtype=float)
    if model.weights.shape[0] != case.n_buses:
        raise ErrorUso('el modelo de carga no corresponde al número de barras del caso')
    escala = model.weights @ r
    p_nominal, q_nominal = case.nominal_loads()
    return p_nominal * escala, q_nominal * escala


# === AUDITORÍA CSV ===

def scenarios_to_csv(scenarios, path):
    tabla = pd.DataFrame(scenarios.samples, columns=['r1', 'r2'])
    tabla.to_csv(path, index=False, float_format='%.17g')


def scenarios_from_csv(path):
    tabla = pd.read_csv(path, float_precision='round_trip')
    faltantes = {'r1', 'r2'} - set(tabla.columns)
    if faltantes:
        raise ErrorDatos(f'columnas faltantes en {path}: {sorted(faltantes)}')
    return ScenarioSet(samples=tabla[['r1', 'r2']].to_numpy(dtype=float))

