# core/tests/test_moment_relax.py

from math import comb

import numpy as np
from django.test import SimpleTestCase

from core.exceptions import ErrorRelajacion, ErrorSolver
from core.moment_relax import (
    RelaxSolution, build_relaxation, extract_first_moment, monomial_basis, relaxation_diagnostics,
    solution_from_json, solution_to_json, solve_relaxation,
)
from core.opf_poly import PolynomialProgram, QuadraticForm, VariableIndex, build_opf
from core.uncertainty import LoadModel, point_mass

from .oraculos import caso_dos_barras, optimo_dos_barras


def programa_univariado(con_cota=False):
    """min x  s.a.  x² - y = 0 (y parámetro), opcionalmente 1 - x² >= 0."""
    h = QuadraticForm({(0, 0): 1.0, (1,): -1.0}, n=1, p=1, tag='h')
    g = (QuadraticForm({(): 1.0, (0, 0): -1.0}, n=1, p=1, tag='g'),) if con_cota else ()
    return PolynomialProgram(
        n=1, p=1, h=(h,), g=g, f=QuadraticForm({(0,): 1.0}, n=1, p=1, tag='f'),
        variables=(VariableIndex('x', 1, 0),), slack_position=0,
    )


class BaseTests(SimpleTestCase):

    def test_basis_size(self):
        for variables, k in ((range(3), 1), (range(5), 2), (range(7), 0)):
            self.assertEqual(len(monomial_basis(variables, k)), comb(len(variables) + k, k))

    def test_basis_graded_order(self):
        self.assertEqual(monomial_basis([4, 2], 2), [(), (2,), (4,), (2, 2), (2, 4), (4, 4)])

    def test_negative_order(self):
        with self.assertRaises(ErrorRelajacion):
            monomial_basis([0], -1)


class UnivariadoTests(SimpleTestCase):

    def test_first_moment_is_negative_root(self):
        programa = programa_univariado()
        for modo in ('dense', 'sparse'):
            with self.subTest(modo=modo):
                sdp = build_relaxation(programa, point_mass([0.25, 0.0], 2), k=1, mode=modo)
                solucion = solve_relaxation(sdp)
                self.assertTrue(solucion.usable)
                self.assertAlmostEqual(solucion.objective, -0.5, places=5)
                self.assertAlmostEqual(extract_first_moment(solucion, programa)[0], -0.5, places=5)

    def test_normalization_constant_is_one(self):
        programa = programa_univariado()
        solucion = solve_relaxation(build_relaxation(programa, point_mass([0.25, 0.0], 2), k=1))
        self.assertEqual(solucion.moments[()], 1.0)

    def test_parameter_moments_are_fixed(self):
        sdp = build_relaxation(programa_univariado(), point_mass([0.25, 0.0], 2), k=1)
        self.assertNotIn((1,), sdp.moment_vars)
        self.assertNotIn((1, 1), sdp.moment_vars)
        self.assertAlmostEqual(sdp.fixed[(1,)], 0.25)
        self.assertAlmostEqual(sdp.fixed[(1, 1)], 0.0625)
        self.assertIn((0, 1), sdp.moment_vars)

    def test_higher_order_matches(self):
        programa = programa_univariado()
        solucion = solve_relaxation(build_relaxation(programa, point_mass([0.25, 0.0], 4), k=2, mode='dense'))
        self.assertAlmostEqual(solucion.objective, -0.5, places=4)

    def test_localizing_block_size(self):
        programa = programa_univariado(con_cota=True)
        de_orden_uno = build_relaxation(programa, point_mass([0.25, 0.0], 2), k=1, mode='dense')
        de_orden_dos = build_relaxation(programa, point_mass([0.25, 0.0], 4), k=2, mode='dense')
        tipos = {etiqueta: de_orden_uno.problem.blocks[b] for _, etiqueta, b in de_orden_uno.psd_blocks}
        self.assertEqual(tipos['g[0]@0'].kind, 'nonneg')
        tipos = {etiqueta: de_orden_dos.problem.blocks[b] for _, etiqueta, b in de_orden_dos.psd_blocks}
        self.assertEqual((tipos['g[0]@0'].kind, tipos['g[0]@0'].dim), ('psd', 3))
        self.assertEqual(tipos['M2[0]'].dim, 6)

    def test_order_validation(self):
        programa = programa_univariado()
        with self.assertRaises(ErrorRelajacion):
            build_relaxation(programa, point_mass([0.25, 0.0], 2), k=0)
        with self.assertRaises(ErrorRelajacion):
            build_relaxation(programa, point_mass([0.25, 0.0], 2), k=2)
        with self.assertRaises(ErrorRelajacion):
            build_relaxation(programa, point_mass([0.25, 0.0], 2), k=1, mode='mixto')

    def test_unusable_solution_has_no_first_moment(self):
        solucion = RelaxSolution(moments={(): 1.0}, objective=float('nan'), status='infeasible', residuals=())
        with self.assertRaises(ErrorSolver):
            extract_first_moment(solucion, programa_univariado())

    def test_json_round_trip_of_moments(self):
        programa = programa_univariado()
        solucion = solve_relaxation(build_relaxation(programa, point_mass([0.25, 0.0], 2), k=1))
        datos = solution_to_json(solucion, programa)
        self.assertIn('x_1', datos['first_moments'])
        leida = solution_from_json(datos, programa)
        self.assertEqual(leida.moments, solucion.moments)
        self.assertEqual(leida.k, 1)

    def test_unknown_moment_name(self):
        with self.assertRaises(ErrorRelajacion):
            solution_from_json({'objective': 0.0, 'moments': {'z_9': 1.0}}, programa_univariado())


class DosBarrasTests(SimpleTestCase):

    def setUp(self):
        self.caso = caso_dos_barras()
        self.programa = build_opf(self.caso, LoadModel.for_case(self.caso))
        self.z = point_mass([1.0, 1.0], 2)

    def test_point_mass_relaxation_recovers_opf_optimum(self):
        solucion = solve_relaxation(build_relaxation(self.programa, self.z, k=1, mode='dense'))
        x0 = extract_first_moment(solucion, self.programa)
        p_carga, q_carga = self.caso.nominal_loads()
        e2, f2, costo = optimo_dos_barras(self.caso, (p_carga, q_carga))
        self.assertAlmostEqual(x0[self.programa.index[('E', 2)]], e2, delta=1e-3)
        self.assertAlmostEqual(x0[self.programa.index[('F', 2)]], f2, delta=1e-3)
        self.assertAlmostEqual(solucion.objective, costo, delta=1e-3 * abs(costo))

    def test_sparse_bound_not_above_dense(self):
        denso = solve_relaxation(build_relaxation(self.programa, self.z, k=1, mode='dense'))
        disperso = solve_relaxation(build_relaxation(self.programa, self.z, k=1, mode='sparse'))
        self.assertTrue(denso.usable and disperso.usable)
        self.assertLessEqual(disperso.objective, denso.objective + 1e-5 * abs(denso.objective))

    def test_moment_matrices_are_psd_at_solution(self):
        solucion = solve_relaxation(build_relaxation(self.programa, self.z, k=1, mode='sparse'))
        self.assertTrue(all(valor > -1e-6 for valor in solucion.min_eigenvalues))

    def test_diagnostics(self):
        sdp = build_relaxation(self.programa, self.z, k=1, mode='dense')
        datos = relaxation_diagnostics(sdp)
        self.assertEqual(datos['order'], 2)
        self.assertEqual(datos['n_cliques'], 1)
        self.assertEqual(datos['moment_matrix_sizes'], [self.programa.n + self.programa.p + 1])
        self.assertGreaterEqual(datos['n_equalities'], 1)
        self.assertTrue(np.isfinite(datos['sum_block_sizes']))
