"""
Jerarquía de excepciones del simulador de cinética química.
"""

from typing import Optional, Sequence, Tuple


class KineticsError(Exception):
    """Error base de todo el paquete."""


class ConfigError(KineticsError):
    """Configuración inválida (archivo, esquema o valores fuera de rango)."""


class ModelError(KineticsError):
    """Error al leer o validar un modelo en formato de texto."""

    def __init__(self, mensaje: str, linea: Optional[int] = None, columna: Optional[int] = None,
                 archivo: Optional[str] = None):
        self.mensaje = mensaje
        self.linea = linea
        self.columna = columna
        self.archivo = archivo
        super().__init__(self._formatear())

    def _formatear(self) -> str:
        ubicacion = []
        if self.archivo:
            ubicacion.append(self.archivo)
        if self.linea is not None:
            ubicacion.append(f"línea {self.linea}")
        if self.columna is not None:
            ubicacion.append(f"columna {self.columna}")
        if ubicacion:
            return f"{', '.join(ubicacion)}: {self.mensaje}"
        return self.mensaje

    def con_archivo(self, archivo: str) -> "ModelError":
        return ModelError(self.mensaje, self.linea, self.columna, archivo)

    def __reduce__(self):
        return (ModelError, (self.mensaje, self.linea, self.columna, self.archivo))


class NegativeAmountError(KineticsError):
    """Una reacción se aplicó sin reactivos suficientes (bug del simulador)."""

    def __init__(self, reaccion: str, especie: str, cantidad):
        self.reaccion = reaccion
        self.especie = especie
        self.cantidad = cantidad
        super().__init__(
            f"La reacción '{reaccion}' deja a la especie '{especie}' en {cantidad} (< 0)"
        )

    def __reduce__(self):
        return (NegativeAmountError, (self.reaccion, self.especie, self.cantidad))


class IntegrationError(KineticsError):
    """Fallo del integrador: valores no finitos o demasiados pasos."""


class StateSpaceError(KineticsError):
    """Espacio de estados del CME inválido o demasiado grande."""


class CMEError(KineticsError):
    """Fallo numérico del oráculo de la ecuación maestra."""


class EnsembleError(KineticsError):
    """Una corrida del ensemble falló; conserva el índice de la corrida."""

    def __init__(self, indice_corrida: int, causa: BaseException):
        self.indice_corrida = indice_corrida
        self.causa = causa
        super().__init__(f"La corrida {indice_corrida} falló: {causa}")

    def __reduce__(self):
        return (EnsembleError, (self.indice_corrida, self.causa))


class SweepError(KineticsError):
    """Error de configuración o de ejecución de un barrido de parámetros.

    `causa` sólo se fija cuando falló una simulación (no la validación).
    """

    def __init__(self, mensaje: str, coordenadas: Optional[Sequence[Tuple[str, float]]] = None,
                 causa: Optional[BaseException] = None):
        self.mensaje = mensaje
        self.causa = causa
        self.coordenadas = tuple(coordenadas) if coordenadas else None
        if self.coordenadas:
            punto = ", ".join(f"{nombre}={valor!r}" for nombre, valor in self.coordenadas)
            super().__init__(f"{mensaje} (punto {punto})")
        else:
            super().__init__(mensaje)

    def __reduce__(self):
        return (SweepError, (self.mensaje, self.coordenadas, self.causa))
