# core/management/commands/evaluate.py

from core.services import evaluacion_service

from ._base import ComandoOPF


class Command(ComandoOPF):
    help = 'Evalúa puntos de linealización sobre M escenarios de demanda y escribe el reporte.'

    nombre = 'evaluate'

    def agregar_argumentos(self, parser):
        parser.add_argument('points', nargs='+', help='archivos JSON de puntos de linealización')

    def handle(self, *args, **options):
        config = self.cargar_config(options)
        directorio = self.directorio(config)
        resultado = evaluacion_service.evaluar(config, options['points'], directorio)
        self.manifiesto(config, directorio, resultado, extra={'points': [str(p) for p in options['points']]})
        self.verificar(resultado)

        self.stdout.write(resultado['tabla'].to_string(index=False, float_format=lambda v: f'{v:.4g}'))
        self.exito(f"Reporte escrito en {directorio} ({config.scenarios} escenarios)")
