# core/services/evaluacion_service.py
"""
Servicio de evaluación Monte Carlo y reportes.
Contiene la lógica que une escenarios, puntos de linealización y el
reporte comparativo de perfiles.
"""

import logging
import math
from pathlib import Path

from ..decorators import cronometrar
from ..evaluate import compare_profiles, report_from_json, run_monte_carlo, table_layout, write_report
from ..exceptions import ErrorOPF, ErrorUso
from ..linearize import LinearizationPoint
from ..uncertainty import scenarios_to_csv
from ..utils import leer_json
from .config import COTAS_REFERENCIA, CONFIG_REFERENCIA, preparar

logger = logging.getLogger(__name__)


class EvaluacionService:
    """Servicio que maneja la evaluación de perfiles y la lectura de reportes."""

    ARCHIVO_ESCENARIOS = 'escenarios.csv'

    @cronometrar('evaluate')
    def _evaluar(self, config, archivos_punto, directorio):
        preparacion = preparar(config)
        puntos = [LinearizationPoint.from_json(leer_json(a), preparacion.program) for a in archivos_punto]
        reporte = run_monte_carlo(
            preparacion.case, preparacion.program, puntos, preparacion.scenarios,
            settings=config.solver_settings(), workers=config.workers,
        )
        archivos = write_report(reporte, directorio)
        escenarios = directorio / self.ARCHIVO_ESCENARIOS
        scenarios_to_csv(preparacion.scenarios, escenarios)
        return reporte, archivos + [escenarios]

    def evaluar(self, config, archivos_punto, directorio=None):
        """
        Evalúa cada punto de linealización sobre los M escenarios de la configuración.

        Args:
            config: RunConfig validada
            archivos_punto: rutas de archivos JSON de puntos
            directorio: destino del reporte

        Returns:
            dict: Resultado de la operación
        """
        if not archivos_punto:
            return {
                'success': False,
                'errores': ['se requiere al menos un archivo de punto'],
                'codigo': ErrorUso.codigo_salida,
            }
        directorio = Path(directorio or config.output_dir)
        directorio.mkdir(parents=True, exist_ok=True)
        tiempos = {}
        try:
            reporte, archivos = self._evaluar(config, archivos_punto, directorio, tiempos=tiempos)
        except ErrorOPF as e:
            logger.error('Evaluación fallida: %s', e.mensaje)
            return {'success': False, 'errores': [e.mensaje], 'codigo': e.codigo_salida, 'tiempos': tiempos}

        return {
            'success': True,
            'reporte': reporte,
            'tabla': table_layout(reporte),
            'tiempos': tiempos,
            'archivos': archivos,
        }

    # === REPORTES ===

    def comparar_con_cota(self, reporte, cota):
        """Costo medio de cada perfil frente a la cota de la relajación."""
        return {
            p.name: {
                'mean_cost': p.mean_cost,
                'bound': cota,
                'gap': p.mean_cost - cota,
                'relative_gap': (p.mean_cost - cota) / abs(cota) if cota else math.nan,
                'above_bound': p.mean_cost > cota,
            }
            for p in reporte.profiles
            if not p.infeasible
        }

    def referencia(self, caso, cota=None):
        """Cota publicada y límites de línea de la corrida de referencia del caso, si existe."""
        if caso not in COTAS_REFERENCIA:
            return None
        valor = COTAS_REFERENCIA[caso]
        return {
            'bound': valor,
            'config': CONFIG_REFERENCIA[caso],
            'deviation': (cota - valor) / valor if cota is not None else None,
        }

    def resumen(self, archivo_reporte, archivo_momentos=None):
        """
        Relee un reporte y arma la tabla de perfiles, el ranking y la
        comparación de costos contra la cota (si se pasa momentos.json).
        """
        try:
            reporte = report_from_json(leer_json(archivo_reporte))
            cota = None
            if archivo_momentos:
                momentos = leer_json(archivo_momentos)
                if momentos.get('objective') is None:
                    raise ErrorUso(f'{archivo_momentos} no tiene objetivo (relajación no resuelta)')
                cota = float(momentos['objective'])
            ranking = compare_profiles(reporte) if len(reporte.profiles) >= 2 else None
        except ErrorOPF as e:
            return {'success': False, 'errores': [e.mensaje], 'codigo': e.codigo_salida}

        return {
            'success': True,
            'reporte': reporte,
            'tabla': table_layout(reporte),
            'ranking': ranking,
            'cota': cota,
            'costos': self.comparar_con_cota(reporte, cota) if cota is not None else None,
            'referencia': self.referencia(reporte.case, cota),
        }
