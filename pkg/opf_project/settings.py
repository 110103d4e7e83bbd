"""
Django settings for opf_project project.

Proyecto sin capa web: Django se usa como contenedor de los comandos de
gestión (relax, linearize, evaluate, export_sdpa, report), de la configuración
y del runner de pruebas.

Todos los parámetros ajustables se leen del entorno (o de un archivo .env)
con python-decouple.
"""
from pathlib import Path

from decouple import config, Csv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = config('SECRET_KEY', default='opf-linealizacion-solo-uso-local')

DEBUG = config('DEBUG', default=False, cast=bool)

ALLOWED_HOSTS = config('ALLOWED_HOSTS', default='', cast=Csv())

# Application definition

INSTALLED_APPS = [
    'core.apps.CoreConfig',
]

# Sin base de datos: las pruebas usan SimpleTestCase y los resultados se
# escriben como archivos JSON/CSV.
DATABASES = {}

USE_TZ = True
TIME_ZONE = 'UTC'


# === SOLVER CÓNICO ===
OPF_TOLERANCIA_FACTIBILIDAD = config('OPF_TOLERANCIA_FACTIBILIDAD', default=1e-8, cast=float)
OPF_TOLERANCIA_GAP = config('OPF_TOLERANCIA_GAP', default=1e-8, cast=float)
OPF_MAX_ITERACIONES = config('OPF_MAX_ITERACIONES', default=200, cast=int)

# === EXPERIMENTOS ===
OPF_HILOS = config('OPF_HILOS', default=0, cast=int)  # 0 = todos los núcleos
OPF_DIRECTORIO_SALIDA = config('OPF_DIRECTORIO_SALIDA', default=str(BASE_DIR / 'resultados'))
OPF_SEMILLA = config('OPF_SEMILLA', default=2024, cast=int)
OPF_ESCENARIOS = config('OPF_ESCENARIOS', default=1000, cast=int)
OPF_DIRECTORIO_CASOS = BASE_DIR / 'core' / 'data' / 'cases'

# Corridas completas sobre case5, case9 y case14 (minutos de cómputo)
OPF_PRUEBAS_ACEPTACION = config('OPF_PRUEBAS_ACEPTACION', default=False, cast=bool)


# === LOGGING ===
OPF_NIVEL_LOG = config('OPF_NIVEL_LOG', default='INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'core': {
            'handlers': ['console'],
            'level': OPF_NIVEL_LOG,
            'propagate': False,
        },
    },
}
