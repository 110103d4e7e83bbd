# core/exceptions.py
"""
Jerarquía de errores del sistema de linealización.
Cada error lleva el código de salida que usan los comandos de gestión.
"""


class ErrorOPF(Exception):
    """Error base. `codigo_salida` se propaga hasta CommandError."""

    codigo_salida = 2

    def __init__(self, mensaje, **detalles):
        super().__init__(mensaje)
        self.mensaje = mensaje
        self.detalles = detalles


class ErrorUso(ErrorOPF):
    """Configuración o argumentos inválidos."""

    codigo_salida = 1


class ErrorDatos(ErrorOPF):
    """Datos de entrada defectuosos (casos, archivos de punto, escenarios)."""

    codigo_salida = 2


class ErrorParseo(ErrorDatos):
    """Fila mal formada en un archivo de caso."""

    def __init__(self, mensaje, linea=None):
        if linea is not None:
            mensaje = f'línea {linea}: {mensaje}'
        super().__init__(mensaje, linea=linea)
        self.linea = linea


class ErrorValidacion(ErrorDatos):
    """El caso se leyó pero viola una invariante del modelo."""


class ErrorSingular(ErrorDatos):
    """Sistema lineal singular (perfil No-Load sobre una red sin solución)."""


class ErrorRelajacion(ErrorOPF):
    """Ensamblado inválido de la relajación de momentos."""


class ErrorRip(ErrorOPF):
    """La descomposición en cliques no cumple la propiedad de intersección."""


class ErrorSolver(ErrorOPF):
    """El solver cónico no terminó con una solución utilizable."""

    codigo_salida = 3

    def __init__(self, mensaje, estado=None, **detalles):
        super().__init__(mensaje, estado=estado, **detalles)
        self.estado = estado
