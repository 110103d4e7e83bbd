# core/services/linealizacion_service.py
"""
Servicio de puntos de linealización.
Calcula los perfiles Momento, Flat y No-Load y los guarda como JSON
(nombre de variable -> valor) para reutilizarlos entre comandos.
"""

import logging
from pathlib import Path

from ..decorators import cronometrar
from ..exceptions import ErrorOPF, ErrorUso
from ..linearize import flat_point, moment_point, noload_point
from ..moment_relax import solution_from_json
from ..utils import escribir_json, leer_json
from .config import preparar
from .relajacion_service import RelajacionService

logger = logging.getLogger(__name__)


class LinealizacionService:
    """Servicio que maneja el cálculo y la persistencia de puntos de linealización."""

    PERFILES = ('moment', 'flat', 'noload')

    def __init__(self):
        self.relajacion = RelajacionService()

    def archivo_punto(self, directorio, punto):
        return Path(directorio) / f'punto_{punto.provenance}.json'

    @cronometrar('point')
    def _calcular(self, config, perfil, momentos, directorio):
        if perfil == 'moment':
            if momentos:
                preparacion = preparar(config, con_escenarios=False)
                solucion = solution_from_json(leer_json(momentos), preparacion.program)
            else:
                resultado = self.relajacion.relajar(config, directorio=directorio)
                if not resultado['success']:
                    return resultado
                preparacion, solucion = resultado['preparacion'], resultado['solucion']
            return moment_point(solucion, preparacion.program), preparacion

        preparacion = preparar(config, con_escenarios=False)
        if perfil == 'flat':
            return flat_point(preparacion.case, preparacion.program), preparacion
        return noload_point(preparacion.case, preparacion.program), preparacion

    def calcular_punto(self, config, perfil, momentos=None, directorio=None):
        """
        Calcula y guarda el punto de linealización de un perfil.

        Args:
            config: RunConfig validada
            perfil: 'moment', 'flat' o 'noload'
            momentos: momentos.json previo (perfil moment); si falta se resuelve la relajación
            directorio: destino del archivo de punto

        Returns:
            dict: Resultado de la operación
        """
        if perfil not in self.PERFILES:
            return {
                'success': False,
                'errores': [f'perfil desconocido: {perfil} (use {", ".join(self.PERFILES)})'],
                'codigo': ErrorUso.codigo_salida,
            }

        directorio = Path(directorio or config.output_dir)
        tiempos = {}
        try:
            calculado = self._calcular(config, perfil, momentos, directorio, tiempos=tiempos)
            if isinstance(calculado, dict):
                return calculado
            punto, preparacion = calculado
            archivo = escribir_json(self.archivo_punto(directorio, punto), punto.to_json())
        except ErrorOPF as e:
            logger.error('Punto %s fallido: %s', perfil, e.mensaje)
            return {'success': False, 'errores': [e.mensaje], 'codigo': e.codigo_salida, 'tiempos': tiempos}

        logger.info('Punto %s guardado en %s', punto.provenance, archivo)
        return {
            'success': True,
            'punto': punto,
            'preparacion': preparacion,
            'tiempos': tiempos,
            'archivos': [archivo],
        }
