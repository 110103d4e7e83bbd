# core/management/commands/report.py

import math
from pathlib import Path

from core.services import evaluacion_service
from core.utils import escribir_manifiesto

from ._base import ComandoOPF


class Command(ComandoOPF):
    help = 'Relee reporte.json e imprime la tabla de perfiles, el ranking y la comparación con la cota.'

    nombre = 'report'

    def add_arguments(self, parser):
        parser.add_argument('report', help='reporte.json escrito por evaluate')
        parser.add_argument('--moments', help='momentos.json con la cota de la relajación')
        parser.add_argument('--output', dest='output_dir', help='directorio del manifiesto (por defecto el del reporte)')

    def handle(self, *args, **options):
        resultado = evaluacion_service.resumen(options['report'], options.get('moments'))
        directorio = Path(options.get('output_dir') or Path(options['report']).parent)
        escribir_manifiesto(
            directorio, self.nombre,
            {'report': options['report'], 'moments': options.get('moments')}, {}, (),
        )
        self.verificar(resultado)

        reporte = resultado['reporte']
        self.stdout.write(f'Caso {reporte.case or "-"}, {reporte.n_scenarios} escenarios')
        self.stdout.write(resultado['tabla'].to_string(index=False, float_format=lambda v: f'{v:.4g}'))

        if resultado['costos']:
            self.stdout.write('')
            self.stdout.write(f"Cota de la relajación: {resultado['cota']:.6g}")
            for nombre, fila in resultado['costos'].items():
                marca = '>' if fila['above_bound'] else '<='
                self.stdout.write(
                    f"  {nombre}: costo medio {fila['mean_cost']:.6g} {marca} cota ({fila['relative_gap']:+.3%})"
                )

        referencia = resultado['referencia']
        if referencia:
            limites = ', '.join(f'{k}={v}' for k, v in referencia['config'].items())
            linea = f"Cota de referencia: {referencia['bound']:.6g} (corrida --benchmark: {limites})"
            if referencia['deviation'] is not None:
                linea += f", desvío {referencia['deviation']:+.2%}"
            self.stdout.write(linea)

        if resultado['ranking']:
            self.stdout.write('')
            for metrica, datos in resultado['ranking'].items():
                partes = [
                    f'{nombre} (x{cociente:.3g})' if math.isfinite(cociente) else f'{nombre} (x inf)'
                    for nombre, cociente in datos['ratios'].items()
                ]
                self.stdout.write(f"{metrica}: {' < '.join(partes)}")
                if datos['infeasible']:
                    self.stdout.write(self.style.WARNING(f"  sin solución: {', '.join(datos['infeasible'])}"))
        self.exito('Reporte leído')
