# core/services/relajacion_service.py
"""
Servicio de relajaciones de momentos.
Arma la relajación (densa o dispersa) para una configuración, la resuelve y
deja en disco los momentos y el diagnóstico de bloques.
"""

import logging
from pathlib import Path

from ..conic_solver import export_sdpa
from ..decorators import cronometrar
from ..exceptions import ErrorOPF, ErrorSolver
from ..moment_relax import (
    DENSO, build_relaxation, relaxation_diagnostics, solution_to_json, solve_relaxation,
)
from ..sparsity import build_csp_graph, chordal_cliques, decomposition_to_json, merge_small_cliques, single_clique
from ..uncertainty import raw_moments
from ..utils import escribir_json
from .config import preparar

logger = logging.getLogger(__name__)


class RelajacionService:
    """Servicio que maneja la construcción y resolución de relajaciones."""

    ARCHIVO_MOMENTOS = 'momentos.json'
    ARCHIVO_DIAGNOSTICO = 'diagnostico.json'

    # === CONSTRUCCIÓN ===

    @cronometrar('build')
    def construir(self, config):
        """
        Prepara el programa y ensambla la relajación de orden config.k.

        Returns:
            tuple: (Preparacion, MomentSdp)
        """
        preparacion = preparar(config)
        grafo = build_csp_graph(preparacion.program)
        if config.mode == DENSO:
            descomposicion = single_clique(grafo)
        else:
            descomposicion = chordal_cliques(grafo)
            if config.merge_threshold is not None:
                descomposicion = merge_small_cliques(descomposicion, config.merge_threshold)

        z = raw_moments(preparacion.scenarios, config.order)
        sdp = build_relaxation(preparacion.program, z, config.k, mode=config.mode, decomposition=descomposicion)
        return preparacion, sdp

    def diagnostico(self, preparacion, sdp):
        datos = relaxation_diagnostics(sdp)
        datos['case'] = preparacion.case.name
        datos['program'] = {
            'n': preparacion.program.n,
            'p': preparacion.program.p,
            'n_equalities': len(preparacion.program.h),
            'n_inequalities': len(preparacion.program.g),
        }
        datos['cliques'] = decomposition_to_json(sdp.decomposition, preparacion.program.names, sdp.k)
        return datos

    # === OPERACIONES ===

    def relajar(self, config, directorio=None, exportar_sdpa=None):
        """
        Construye, (opcionalmente exporta) y resuelve la relajación.

        Args:
            config: RunConfig validada
            directorio: destino de momentos.json y diagnostico.json
            exportar_sdpa: ruta opcional del archivo .dat-s

        Returns:
            dict: Resultado de la operación
        """
        directorio = Path(directorio or config.output_dir)
        tiempos = {}
        archivos = []
        try:
            preparacion, sdp = self.construir(config, tiempos=tiempos)

            diagnostico = self.diagnostico(preparacion, sdp)
            archivos.append(escribir_json(directorio / self.ARCHIVO_DIAGNOSTICO, diagnostico))
            if exportar_sdpa:
                Path(exportar_sdpa).parent.mkdir(parents=True, exist_ok=True)
                export_sdpa(sdp.problem, exportar_sdpa)
                archivos.append(Path(exportar_sdpa))

            solucion = cronometrar('solve')(solve_relaxation)(sdp, config.solver_settings(), tiempos=tiempos)
            solucion.extras.update({
                'case': preparacion.case.name,
                'n_scenarios': config.scenarios,
                'seed': config.seed,
            })
            archivos.append(escribir_json(
                directorio / self.ARCHIVO_MOMENTOS, solution_to_json(solucion, preparacion.program),
            ))

            if not solucion.usable:
                raise ErrorSolver(
                    f'la relajación terminó con estado {solucion.status}', estado=solucion.status,
                )
        except ErrorOPF as e:
            logger.error('Relajación fallida: %s', e.mensaje)
            return {
                'success': False,
                'errores': [e.mensaje],
                'codigo': e.codigo_salida,
                'tiempos': tiempos,
                'archivos': archivos,
            }

        return {
            'success': True,
            'solucion': solucion,
            'sdp': sdp,
            'preparacion': preparacion,
            'diagnostico': diagnostico,
            'tiempos': tiempos,
            'archivos': archivos,
        }

    def exportar(self, config, destino):
        """Escribe la relajación en formato SDPA sin resolverla."""
        tiempos = {}
        try:
            preparacion, sdp = self.construir(config, tiempos=tiempos)
            Path(destino).parent.mkdir(parents=True, exist_ok=True)
            export_sdpa(sdp.problem, destino)
        except ErrorOPF as e:
            return {'success': False, 'errores': [e.mensaje], 'codigo': e.codigo_salida, 'tiempos': tiempos}
        return {
            'success': True,
            'sdp': sdp,
            'diagnostico': self.diagnostico(preparacion, sdp),
            'tiempos': tiempos,
            'archivos': [Path(destino)],
        }
