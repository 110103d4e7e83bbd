# core/management/commands/linearize.py

from core.services import linealizacion_service

from ._base import ComandoOPF


class Command(ComandoOPF):
    help = 'Calcula un punto de linealización (moment, flat o noload) y lo guarda como JSON.'

    nombre = 'linearize'
    usa_relajacion = True

    def agregar_argumentos(self, parser):
        parser.add_argument('profile', choices=linealizacion_service.PERFILES)
        parser.add_argument('--moments', help='momentos.json de una relajación previa (perfil moment)')

    def handle(self, *args, **options):
        config = self.cargar_config(options)
        directorio = self.directorio(config)
        resultado = linealizacion_service.calcular_punto(
            config, options['profile'], momentos=options.get('moments'), directorio=directorio,
        )
        self.manifiesto(config, directorio, resultado, extra={'profile': options['profile']})
        self.verificar(resultado)

        punto = resultado['punto']
        self.exito(f'Punto {punto.provenance} guardado en {resultado["archivos"][0]}')
