# core/management/commands/relax.py

from core.services import relajacion_service

from ._base import ComandoOPF


class Command(ComandoOPF):
    help = 'Resuelve la relajación de momentos (densa o dispersa) y guarda momentos y diagnóstico.'

    nombre = 'relax'
    usa_relajacion = True

    def agregar_argumentos(self, parser):
        parser.add_argument('--export-sdpa', help='escribe además la relajación en formato SDPA (.dat-s)')

    def handle(self, *args, **options):
        config = self.cargar_config(options)
        directorio = self.directorio(config)
        resultado = relajacion_service.relajar(config, directorio, exportar_sdpa=options.get('export_sdpa'))
        self.manifiesto(config, directorio, resultado)
        self.verificar(resultado)

        solucion, diagnostico = resultado['solucion'], resultado['diagnostico']
        tiempos = resultado['tiempos']
        self.stdout.write(
            f"Cliques: {diagnostico['n_cliques']}  bloque máximo: {diagnostico['max_block']}  "
            f"momentos: {diagnostico['n_moments']}  igualdades: {diagnostico['n_equalities']}"
        )
        self.stdout.write(
            f"Tiempo de armado: {tiempos.get('build', 0.0):.2f} s  resolución: {tiempos.get('solve', 0.0):.2f} s"
        )
        self.exito(
            f'{config.mode} 2k={config.order}: objetivo {solucion.objective:.6g} ({solucion.status}, '
            f'{solucion.iterations} iteraciones)'
        )
