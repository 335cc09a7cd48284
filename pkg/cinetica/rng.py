"""
Flujo de números aleatorios reproducible para las simulaciones estocásticas.

El generador de bits es PCG64 (XSL-RR 128/64) de numpy, sembrado con
SeedSequence. Sólo se consumen sus salidas crudas de 64 bits
(``random_raw``); las transformaciones a uniforme, normal y Poisson están
implementadas aquí para que la secuencia de sorteos no dependa de los
algoritmos de distribución de la versión de numpy instalada.

- uniforme: ``((r >> 11) + 0.5) * 2**-53``, siempre en (0, 1)
- normal: Box-Muller, guardando la segunda variable para el siguiente sorteo
- Poisson: inversión por búsqueda secuencial si la media < 10, y rechazo
  transformado con compresión (PTRS, Hörmann 1993) si la media >= 10
"""

import math
from typing import Optional

import numpy as np

TAMANO_BUFFER = 256
ESCALA_53 = 2.0 ** -53
UMBRAL_POISSON = 10.0


class RngStream:
    """Flujo de sorteos de una sola simulación. Se puede enviar a otro proceso,
    pero nunca debe compartirse entre dos simulaciones."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._generador = np.random.PCG64(self.seed)
        self._buffer = []
        self._posicion = 0
        self._normal_guardada: Optional[float] = None

    @property
    def state(self) -> dict:
        return {
            "bit_generator": self._generador.state,
            "posicion": self._posicion,
            "buffer": list(self._buffer),
            "normal_guardada": self._normal_guardada,
        }

    def next_raw(self) -> int:
        """Siguiente salida cruda de 64 bits."""
        if self._posicion >= len(self._buffer):
            self._buffer = self._generador.random_raw(TAMANO_BUFFER).tolist()
            self._posicion = 0
        valor = self._buffer[self._posicion]
        self._posicion += 1
        return valor

    def draw_uniform(self) -> float:
        return ((self.next_raw() >> 11) + 0.5) * ESCALA_53

    def draw_normal(self) -> float:
        if self._normal_guardada is not None:
            z, self._normal_guardada = self._normal_guardada, None
            return z
        radio = math.sqrt(-2.0 * math.log(self.draw_uniform()))
        angulo = 2.0 * math.pi * self.draw_uniform()
        self._normal_guardada = radio * math.sin(angulo)
        return radio * math.cos(angulo)

    def draw_poisson(self, media: float) -> int:
        if media <= 0.0:
            return 0
        if media < UMBRAL_POISSON:
            return self._poisson_inversion(media)
        return self._poisson_ptrs(media)

    def _poisson_inversion(self, media: float) -> int:
        u = self.draw_uniform()
        k = 0
        p = math.exp(-media)
        acumulada = p
        while u > acumulada and p > 0.0:
            k += 1
            p *= media / k
            acumulada += p
        return k

    def _poisson_ptrs(self, media: float) -> int:
        raiz = math.sqrt(media)
        log_media = math.log(media)
        b = 0.931 + 2.53 * raiz
        a = -0.059 + 0.02483 * b
        inv_alfa = 1.1239 + 1.1328 / (b - 3.4)
        v_r = 0.9277 - 3.6224 / (b - 2.0)
        while True:
            u = self.draw_uniform() - 0.5
            v = self.draw_uniform()
            us = 0.5 - abs(u)
            k = math.floor((2.0 * a / us + b) * u + media + 0.43)
            if us >= 0.07 and v <= v_r:
                return int(k)
            if k < 0 or (us < 0.013 and v > us):
                continue
            if (math.log(v) + math.log(inv_alfa) - math.log(a / (us * us) + b)
                    <= -media + k * log_media - math.lgamma(k + 1)):
                return int(k)
