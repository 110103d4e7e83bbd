# core/tests/test_commands.py

import shutil
import tempfile
from contextlib import redirect_stderr
from io import StringIO
from pathlib import Path

from django.core.management import call_command, load_command_class
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from core.case_model import serialize_case
from core.utils import escribir_json, leer_json

from .oraculos import caso_dos_barras


class ComandosTests(SimpleTestCase):

    def setUp(self):
        self.tmp = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.tmp, ignore_errors=True)
        self.caso = self.tmp / 'dos_barras.json'
        self.caso.write_text(serialize_case(caso_dos_barras(b_sh=0.1)))
        self.comunes = ['--case', str(self.caso), '--output', str(self.tmp), '--threads', '1']

    def _llamar(self, *argumentos):
        salida = StringIO()
        call_command(*argumentos, stdout=salida, stderr=StringIO())
        return salida.getvalue()

    def test_full_pipeline(self):
        salida = self._llamar('relax', *self.comunes, '--dense', '-M', '5', '--seed', '2')
        self.assertIn('objetivo', salida)
        manifiesto = leer_json(self.tmp / 'manifest.json')
        self.assertEqual(manifiesto['command'], 'relax')
        self.assertIn('momentos.json', manifiesto['outputs'])
        self.assertIn('solve', manifiesto['timings'])

        self._llamar('linearize', 'moment', *self.comunes, '--moments', str(self.tmp / 'momentos.json'))
        self._llamar('linearize', 'flat', *self.comunes)
        self._llamar('linearize', 'noload', *self.comunes)
        puntos = sorted(str(p) for p in self.tmp.glob('punto_*.json'))
        self.assertEqual(len(puntos), 3)

        salida = self._llamar('evaluate', *puntos, *self.comunes, '-M', '4', '--seed', '9')
        self.assertIn('E(eps_P)', salida)
        self.assertTrue((self.tmp / 'reporte.json').exists())
        self.assertTrue((self.tmp / 'histograma_p.csv').exists())

        salida = self._llamar('report', str(self.tmp / 'reporte.json'), '--moments', str(self.tmp / 'momentos.json'))
        self.assertIn('Cota de la relajación', salida)
        self.assertIn('mean_eps_p:', salida)

    def test_export_sdpa(self):
        destino = self.tmp / 'sdpa' / 'rel.dat-s'
        salida = self._llamar('export_sdpa', *self.comunes, '--dense', '-M', '3', '--out', str(destino))
        self.assertTrue(destino.exists())
        self.assertIn('SDPA escrito', salida)

    def test_bad_order_is_usage_error(self):
        with self.assertRaises(CommandError) as contexto:
            self._llamar('relax', *self.comunes, '--order', '3')
        self.assertEqual(contexto.exception.returncode, 1)

    def test_missing_case_is_data_error(self):
        with self.assertRaises(CommandError) as contexto:
            self._llamar('relax', '--case', str(self.tmp / 'falta.m'), '--output', str(self.tmp), '-M', '2')
        self.assertEqual(contexto.exception.returncode, 2)
        self.assertTrue((self.tmp / 'manifest.json').exists())

    def test_unknown_config_key(self):
        configuracion = self.tmp / 'config.json'
        configuracion.write_text('{"orden": 4}')
        with self.assertRaises(CommandError) as contexto:
            self._llamar('linearize', 'flat', '--config', str(configuracion))
        self.assertEqual(contexto.exception.returncode, 1)

    def test_missing_point_file(self):
        with self.assertRaises(CommandError) as contexto:
            self._llamar('evaluate', str(self.tmp / 'no-existe.json'), *self.comunes, '-M', '2')
        self.assertEqual(contexto.exception.returncode, 2)

    def test_bad_flag_is_usage_error(self):
        with self.assertRaises(CommandError) as contexto:
            self._llamar('relax', *self.comunes, '--no-existe')
        self.assertEqual(contexto.exception.returncode, 1)

    def test_bad_flag_exits_with_usage_code_from_command_line(self):
        comando = load_command_class('core', 'relax')
        comando._called_from_command_line = True
        parser = comando.create_parser('manage.py', 'relax')
        with redirect_stderr(StringIO()) as errores, self.assertRaises(SystemExit) as contexto:
            parser.parse_args(['--order', 'dos'])
        self.assertEqual(contexto.exception.code, 1)
        self.assertIn('--order', errores.getvalue())

    def test_report_prints_reference_bound(self):
        perfil = {
            'mean_eps_p': 0.1, 'std_eps_p': 0.0, 'mean_eps_q': 0.1, 'std_eps_q': 0.0, 'mean_cost': 4300.0,
            'n_optimal': 2, 'n_infeasible': 0,
        }
        reporte = self.tmp / 'reporte.json'
        escribir_json(reporte, {
            'case': 'case9', 'n_scenarios': 2, 'histogram_p': {}, 'histogram_q': {},
            'profiles': [{'name': 'flat', **perfil}, {'name': 'no-load', **perfil, 'mean_eps_p': 0.2}],
        })
        escribir_json(self.tmp / 'momentos.json', {'objective': 4214.0})
        salida = self._llamar('report', str(reporte), '--moments', str(self.tmp / 'momentos.json'))
        self.assertIn('Cota de referencia: 4214', salida)
        self.assertIn('line_limit_mva=120.0', salida)
        self.assertIn('desvío +0.00%', salida)

    def test_benchmark_flag_sets_line_limit(self):
        comando = load_command_class('core', 'linearize')
        config = comando.cargar_config({'case': 'case9', 'benchmark': True, 'output_dir': str(self.tmp)})
        self.assertEqual(config.line_limit_mva, 120.0)
