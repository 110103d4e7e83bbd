# core/management/commands/_base.py
"""
Base común de los comandos: opciones de corrida, carga de RunConfig,
conversión de resultados fallidos en CommandError y manifest.json.
"""

import sys
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError, CommandParser

from core.exceptions import ErrorOPF, ErrorUso
from core.services import RunConfig
from core.utils import escribir_manifiesto


class ParserOPF(CommandParser):
    """Los errores de argumentos salen con el código de uso (1), no con el 2 de argparse."""

    def error(self, message):
        if self.called_from_command_line:
            self.print_usage(sys.stderr)
            self.exit(ErrorUso.codigo_salida, f'{self.prog}: error: {message}\n')
        raise CommandError(f'Error: {message}', returncode=ErrorUso.codigo_salida)


class ComandoOPF(BaseCommand):
    """Comando con las opciones de RunConfig y manejo de códigos de salida."""

    nombre = ''
    usa_escenarios = True
    usa_relajacion = False

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        parser.__class__ = ParserOPF
        return parser

    def add_arguments(self, parser):
        parser.add_argument('--config', help='archivo JSON de configuración')
        parser.add_argument('--case', help='ruta del caso o nombre de un caso incluido (case5, case9, case14)')
        parser.add_argument('--format', dest='case_format', choices=['matpower', 'json'])
        parser.add_argument('--line-limit', dest='line_limit_mva', type=float,
                            help='límite uniforme de línea en MVA')
        parser.add_argument('--unlimited-lines', dest='unlimited_lines', action='store_const', const=True,
                            help='quita los límites de flujo del caso')
        parser.add_argument('--benchmark', action='store_true',
                            help='límites de línea de la corrida de referencia del caso (case5, case9, case14)')
        parser.add_argument('--output', dest='output_dir', help='directorio de salida')
        parser.add_argument('--threads', type=int, help='procesos para escenarios (0 = todos los núcleos)')
        parser.add_argument('--tol', dest='feasibility_tolerance', type=float, help='tolerancia de factibilidad')
        parser.add_argument('--gap-tol', dest='gap_tolerance', type=float)
        parser.add_argument('--max-iter', dest='max_iterations', type=int)
        if self.usa_escenarios:
            parser.add_argument('-M', '--scenarios', type=int, help='número de escenarios')
            parser.add_argument('--seed', type=int)
        if self.usa_relajacion:
            parser.add_argument('--order', type=int, help='orden 2k de la relajación (2 o 4)')
            modo = parser.add_mutually_exclusive_group()
            modo.add_argument('--dense', dest='mode', action='store_const', const='dense')
            modo.add_argument('--sparse', dest='mode', action='store_const', const='sparse')
            parser.add_argument('--merge-threshold', type=int, help='fusiona cliques mientras la unión no supere este tamaño')
        self.agregar_argumentos(parser)

    def agregar_argumentos(self, parser):
        pass

    # === CONFIGURACIÓN ===

    def cargar_config(self, options):
        claves = (
            'case', 'case_format', 'line_limit_mva', 'unlimited_lines', 'output_dir', 'threads', 'feasibility_tolerance',
            'gap_tolerance', 'max_iterations', 'scenarios', 'seed', 'order', 'mode', 'merge_threshold',
        )
        try:
            return RunConfig.load(
                options.get('config'), benchmark=options.get('benchmark', False),
                **{c: options.get(c) for c in claves},
            )
        except ErrorOPF as e:
            raise CommandError(e.mensaje, returncode=e.codigo_salida)

    # === RESULTADOS ===

    def verificar(self, resultado):
        if not resultado['success']:
            raise CommandError('; '.join(resultado['errores']), returncode=resultado.get('codigo', 2))
        return resultado

    def manifiesto(self, config, directorio, resultado, extra=None):
        configuracion = config.as_dict()
        configuracion.update(extra or {})
        archivo = escribir_manifiesto(
            directorio, self.nombre, configuracion, resultado.get('tiempos', {}), resultado.get('archivos', ()),
        )
        self.stdout.write(f'Manifiesto: {archivo}')
        return archivo

    def exito(self, mensaje):
        self.stdout.write(self.style.SUCCESS(mensaje))

    def directorio(self, config):
        return Path(config.output_dir)
