# core/utils.py
"""
Utilidades de entrada/salida compartidas por servicios y comandos:
JSON determinista, hash de configuración y versiones de paquetes.
"""

import hashlib
import json
import math
from importlib import metadata
from pathlib import Path

import numpy as np

from .exceptions import ErrorDatos

PAQUETES_REPORTADOS = ('Django', 'python-decouple', 'numpy', 'scipy', 'networkx', 'cvxopt', 'pandas')


def a_json(valor):
    """Convierte tipos de numpy y no finitos a valores serializables."""
    if isinstance(valor, dict):
        return {str(k): a_json(v) for k, v in valor.items()}
    if isinstance(valor, (list, tuple)):
        return [a_json(v) for v in valor]
    if isinstance(valor, np.ndarray):
        return a_json(valor.tolist())
    if isinstance(valor, np.generic):
        valor = valor.item()
    if isinstance(valor, float) and not math.isfinite(valor):
        return None if math.isnan(valor) else ('inf' if valor > 0 else '-inf')
    if isinstance(valor, Path):
        return str(valor)
    return valor


def escribir_json(path, datos):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as archivo:
        json.dump(a_json(datos), archivo, indent=2, sort_keys=True, ensure_ascii=False)
        archivo.write('\n')
    return path


def leer_json(path):
    try:
        with open(path, encoding='utf-8') as archivo:
            return json.load(archivo)
    except FileNotFoundError:
        raise ErrorDatos(f'no existe el archivo {path}')
    except json.JSONDecodeError as e:
        raise ErrorDatos(f'{path}: JSON inválido ({e.msg}, línea {e.lineno})')


def hash_configuracion(datos):
    """md5 del JSON canónico de la configuración."""
    texto = json.dumps(a_json(datos), sort_keys=True, separators=(',', ':'))
    return hashlib.md5(texto.encode()).hexdigest()


def versiones_paquetes():
    versiones = {}
    for paquete in PAQUETES_REPORTADOS:
        try:
            versiones[paquete] = metadata.version(paquete)
        except metadata.PackageNotFoundError:
            versiones[paquete] = None
    return versiones


def escribir_manifiesto(directorio, comando, configuracion, tiempos, archivos=()):
    """manifest.json: eco de la configuración, su hash, versiones y tiempos."""
    return escribir_json(Path(directorio) / 'manifest.json', {
        'command': comando,
        'config': configuracion,
        'config_hash': hash_configuracion(configuracion),
        'versions': versiones_paquetes(),
        'timings': tiempos,
        'outputs': sorted(Path(a).name for a in archivos),
    })
