# core/management/commands/export_sdpa.py

from core.services import relajacion_service

from ._base import ComandoOPF


class Command(ComandoOPF):
    help = 'Escribe la relajación de momentos en formato SDPA disperso sin resolverla.'

    nombre = 'export_sdpa'
    usa_relajacion = True

    def agregar_argumentos(self, parser):
        parser.add_argument('--out', help='archivo .dat-s (por defecto <output>/relajacion.dat-s)')

    def handle(self, *args, **options):
        config = self.cargar_config(options)
        directorio = self.directorio(config)
        destino = options.get('out') or directorio / 'relajacion.dat-s'
        resultado = relajacion_service.exportar(config, destino)
        self.manifiesto(config, directorio, resultado, extra={'sdpa': str(destino)})
        self.verificar(resultado)

        diagnostico = resultado['diagnostico']
        self.exito(
            f"SDPA escrito en {destino}: {diagnostico['n_moments']} variables, "
            f"{diagnostico['n_blocks']} bloques (máx. {diagnostico['max_block']})"
        )
