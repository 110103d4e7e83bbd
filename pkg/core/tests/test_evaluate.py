# core/tests/test_evaluate.py

import math
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.test import SimpleTestCase

from core.evaluate import (
    BINS_HISTOGRAMA, EvaluationReport, ProfileStats, ScenarioSolve, _estadisticas, _plantilla, compare_profiles,
    report_from_json, report_to_json, run_monte_carlo, solve_linearized, table_layout, write_report,
)
from core.exceptions import ErrorDatos, ErrorUso
from core.linearize import flat_point, linearize_program, noload_point, signed_error
from core.opf_poly import build_opf
from core.services import RunConfig
from core.services.config import preparar
from core.uncertainty import LoadModel, ScenarioSet, sample_factors

from .oraculos import caso_dos_barras


def _perfil(nombre, eps_p, eps_q=0.1, costo=10.0, infactible=False):
    return ProfileStats(
        name=nombre, mean_eps_p=eps_p, std_eps_p=0.0, mean_eps_q=eps_q, std_eps_q=0.0,
        mean_cost=costo, n_optimal=0 if infactible else 5, n_infeasible=5 if infactible else 0,
        infeasible=infactible,
    )


class EscenarioTests(SimpleTestCase):

    def setUp(self):
        self.caso = caso_dos_barras(b_sh=0.1)
        self.modelo = LoadModel.for_case(self.caso)
        self.programa = build_opf(self.caso, self.modelo)

    def test_residuals_are_linearization_error(self):
        punto = noload_point(self.caso, self.programa)
        linealizado = linearize_program(self.programa, punto)
        y = np.array([0.85, 0.9])
        solucion = solve_linearized(linealizado, y)
        self.assertTrue(solucion.optimal)
        self.assertLess(solucion.linear_residual, 1e-6)
        error = signed_error(self.programa, punto, solucion.x, y)
        np.testing.assert_allclose(solucion.p_residuals, error[self.programa.p_balance_rows], atol=1e-6)
        self.assertAlmostEqual(solucion.eps_p, float(np.abs(solucion.p_residuals).sum()))

    def test_cost_is_original_objective(self):
        linealizado = linearize_program(self.programa, flat_point(self.caso, self.programa))
        solucion = solve_linearized(linealizado, np.array([0.8, 0.8]))
        self.assertAlmostEqual(solucion.cost, self.programa.f.evaluate(solucion.x, solucion.y))
        self.assertGreater(solucion.cost, 0.0)


class MonteCarloTests(SimpleTestCase):

    def setUp(self):
        self.caso = caso_dos_barras(b_sh=0.1)
        self.modelo = LoadModel.for_case(self.caso)
        self.programa = build_opf(self.caso, self.modelo)
        self.puntos = [flat_point(self.caso, self.programa), noload_point(self.caso, self.programa)]

    def test_single_scenario_has_zero_spread(self):
        escenarios = ScenarioSet(samples=np.array([[0.85, 0.85]]))
        reporte = run_monte_carlo(self.caso, self.programa, self.puntos, escenarios)
        for perfil in reporte.profiles:
            self.assertEqual(perfil.n_optimal, 1)
            self.assertEqual(perfil.std_eps_p, 0.0)
            self.assertEqual(perfil.std_eps_q, 0.0)

    def test_histogram_mass_matches_residual_count(self):
        escenarios = sample_factors(self.modelo, 4, seed=3)
        reporte = run_monte_carlo(self.caso, self.programa, self.puntos, escenarios)
        self.assertEqual(len(reporte.histogram_p['edges']), BINS_HISTOGRAMA + 1)
        for perfil in reporte.profiles:
            self.assertEqual(sum(reporte.histogram_p['counts'][perfil.name]), perfil.n_optimal * self.caso.n_buses)
            self.assertEqual(sum(reporte.histogram_q['counts'][perfil.name]), perfil.n_optimal * self.caso.n_buses)

    def test_parallel_matches_sequential(self):
        escenarios = sample_factors(self.modelo, 4, seed=5)
        secuencial = run_monte_carlo(self.caso, self.programa, self.puntos[:1], escenarios)
        paralelo = run_monte_carlo(self.caso, self.programa, self.puntos[:1], escenarios, workers=2)
        self.assertAlmostEqual(secuencial.profiles[0].mean_eps_p, paralelo.profiles[0].mean_eps_p, places=9)
        np.testing.assert_array_equal(
            [s.y for s in secuencial.scenarios['flat']], [s.y for s in paralelo.scenarios['flat']],
        )

    def test_duplicate_profile_names_are_suffixed(self):
        escenarios = ScenarioSet(samples=np.array([[0.9, 0.9]]))
        reporte = run_monte_carlo(self.caso, self.programa, [self.puntos[0], self.puntos[0]], escenarios)
        self.assertEqual([p.name for p in reporte.profiles], ['flat', 'flat-2'])

    def test_requires_points(self):
        with self.assertRaises(ErrorUso):
            run_monte_carlo(self.caso, self.programa, [], ScenarioSet(samples=np.ones((1, 2))))


class PlantillaTests(SimpleTestCase):

    def setUp(self):
        caso = caso_dos_barras(b_sh=0.1)
        self.programa = build_opf(caso, LoadModel.for_case(caso))
        self.linealizado = linearize_program(self.programa, noload_point(caso, self.programa))

    def test_rows_span_the_augmented_system(self):
        plantilla = _plantilla(self.linealizado)
        aumentada = np.hstack([
            self.linealizado.A.toarray(), self.linealizado.B, self.linealizado.c.reshape(-1, 1),
        ])
        self.assertEqual(len(plantilla.rows), np.linalg.matrix_rank(aumentada))
        self.assertEqual(plantilla.problem.n_equalities, len(plantilla.rows))

    def test_dropped_rows_hold_at_the_solution(self):
        plantilla = _plantilla(self.linealizado)
        y = np.array([0.75, 0.95])
        solucion = solve_linearized(self.linealizado, y, plantilla=plantilla)
        self.assertTrue(solucion.optimal)
        np.testing.assert_allclose(self.linealizado.evaluate(solucion.x, y), 0.0, atol=1e-6)

    def test_scenario_rhs(self):
        plantilla = _plantilla(self.linealizado)
        y = np.array([0.8, 0.9])
        esperado = -(self.linealizado.B @ y + self.linealizado.c)[plantilla.rows]
        np.testing.assert_allclose(plantilla.for_scenario(self.linealizado, y).eq_rhs, esperado)


class ConteoTests(SimpleTestCase):

    def _solucion(self, estado):
        return ScenarioSolve(
            y=np.ones(2), x=np.zeros(1), status=estado, cost=1.0,
            p_residuals=np.array([0.1]), q_residuals=np.array([0.2]),
        )

    def test_failures_counted_apart_from_infeasible(self):
        soluciones = [self._solucion(e) for e in ('optimal', 'optimal', 'infeasible', 'numerical-failure', 'unbounded')]
        estadisticas = _estadisticas('flat', soluciones)
        self.assertEqual(estadisticas.n_optimal, 2)
        self.assertEqual(estadisticas.n_infeasible, 2)
        self.assertEqual(estadisticas.n_numerical_failures, 1)
        self.assertFalse(estadisticas.infeasible)

    def test_all_failed(self):
        estadisticas = _estadisticas('flat', [self._solucion('numerical-failure')] * 3)
        self.assertTrue(estadisticas.infeasible)
        self.assertEqual(estadisticas.n_numerical_failures, 3)
        self.assertEqual(estadisticas.n_infeasible, 0)


class Caso9Tests(SimpleTestCase):
    """Límite uniforme de 120 MVA, como en la corrida de referencia."""

    def test_every_scenario_solves(self):
        config = RunConfig.benchmark('case9', scenarios=20, seed=17, threads=1)
        preparacion = preparar(config)
        puntos = [flat_point(preparacion.case, preparacion.program), noload_point(preparacion.case, preparacion.program)]
        reporte = run_monte_carlo(
            preparacion.case, preparacion.program, puntos, preparacion.scenarios, config.solver_settings(),
        )
        for perfil in reporte.profiles:
            with self.subTest(perfil=perfil.name):
                self.assertEqual(perfil.n_numerical_failures, 0)
                self.assertEqual(perfil.n_optimal, 20)
        self.assertIn('fallas numéricas', table_layout(reporte).columns)


class ComparacionTests(SimpleTestCase):

    def _reporte(self, *perfiles):
        vacio = {'edges': [0.0, 1.0], 'counts': {}}
        return EvaluationReport(case='x', n_scenarios=5, profiles=list(perfiles), histogram_p=vacio, histogram_q=vacio)

    def test_ranking_and_ratios(self):
        resumen = compare_profiles(self._reporte(_perfil('moment-2k2', 0.5), _perfil('flat', 1.0), _perfil('no-load', 2.0)))
        self.assertEqual(resumen['mean_eps_p']['ranking'], ['moment-2k2', 'flat', 'no-load'])
        self.assertEqual(resumen['mean_eps_p']['ratios'], {'moment-2k2': 1.0, 'flat': 2.0, 'no-load': 4.0})

    def test_infeasible_profiles_are_listed_not_ranked(self):
        resumen = compare_profiles(self._reporte(_perfil('a', 1.0), _perfil('b', math.nan, infactible=True)))
        self.assertEqual(resumen['mean_cost']['ranking'], ['a'])
        self.assertEqual(resumen['mean_cost']['infeasible'], ['b'])

    def test_zero_best_gives_infinite_ratio(self):
        resumen = compare_profiles(self._reporte(_perfil('a', 0.0), _perfil('b', 1.0)))
        self.assertEqual(resumen['mean_eps_p']['ratios']['b'], math.inf)

    def test_single_profile_rejected(self):
        with self.assertRaises(ErrorUso):
            compare_profiles(self._reporte(_perfil('a', 1.0)))


class SalidaTests(SimpleTestCase):

    def setUp(self):
        caso = caso_dos_barras(b_sh=0.1)
        programa = build_opf(caso, LoadModel.for_case(caso))
        escenarios = ScenarioSet(samples=np.array([[0.8, 0.9], [0.9, 0.8]]))
        self.reporte = run_monte_carlo(caso, programa, [flat_point(caso, programa)], escenarios)

    def test_write_report_files(self):
        with tempfile.TemporaryDirectory() as tmp:
            archivos = write_report(self.reporte, Path(tmp) / 'salida')
            self.assertTrue(all(a.exists() for a in archivos))
            tabla = pd.read_csv(archivos[0])
            self.assertEqual(set(tabla['profile']), {'flat'})
            histograma = pd.read_csv(archivos[2])
            self.assertEqual(len(histograma), BINS_HISTOGRAMA)

    def test_json_keeps_profile_statistics(self):
        leido = report_from_json(report_to_json(self.reporte))
        self.assertEqual(leido.profiles[0].name, 'flat')
        self.assertAlmostEqual(leido.profiles[0].mean_eps_p, self.reporte.profiles[0].mean_eps_p)
        self.assertEqual(len(report_to_json(self.reporte)['scenarios']['flat']), 2)

    def test_invalid_json_report(self):
        with self.assertRaises(ErrorDatos):
            report_from_json({'profiles': []})

    def test_table_layout_columns(self):
        tabla = table_layout(self.reporte)
        self.assertEqual(list(tabla.columns)[:5], ['perfil', 'E(eps_P)', 'sigma(eps_P)', 'E(eps_Q)', 'sigma(eps_Q)'])
        self.assertEqual(len(tabla), 1)
