"""
Ecuaciones de velocidad de reacción (RRE) como límite de campo medio de la
red, integradas con el par embebido de Dormand-Prince 5(4).

El núcleo de integración (`DormandPrinceIntegrator`) es genérico: lo usan
también el flujo del simulador híbrido y el oráculo de la ecuación maestra.
Cada paso aceptado produce un `DenseSegment` con la extensión continua de
orden 4 del par, de modo que se puede evaluar la solución en cualquier
instante del paso.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Tuple

import numpy as np

from .config_manager import IntegratorConfig
from .errores import IntegrationError
from .model import ReactionNetwork, SystemState, Trajectory, check_grid, continuous_propensities

logger = logging.getLogger("Cinetica.Deterministic")

Rhs = Callable[[float, np.ndarray], np.ndarray]

# Tabla de Butcher de Dormand-Prince 5(4)
C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
B = A[6] + (0.0,)
# Diferencia entre los pesos de orden 5 y los de orden 4
E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)
# Coeficientes de la salida densa (Hairer, Nørsett y Wanner)
D = (-12715105075 / 11282082432, 0.0, 87487479700 / 32700410799, -10690763975 / 1880347072,
     701980252875 / 199316789632, -1453857185 / 822651844, 69997945 / 29380423)

SEGURIDAD = 0.9
FAC_MIN = 0.2
FAC_MAX = 10.0
BETA = 0.04
EXPO1 = 0.2 - BETA * 0.75


@dataclass(frozen=True, eq=False)
class DenseSegment:
    """Interpolante de un paso aceptado entre t0 y t1."""
    t0: float
    t1: float
    y0: np.ndarray
    y1: np.ndarray
    r2: np.ndarray
    r3: np.ndarray
    r4: np.ndarray
    r5: np.ndarray

    def evaluate(self, t: float) -> np.ndarray:
        if t == self.t1:
            return self.y1.copy()
        if t == self.t0:
            return self.y0.copy()
        theta = (t - self.t0) / (self.t1 - self.t0)
        theta1 = 1.0 - theta
        return self.y0 + theta * (self.r2 + theta1 * (self.r3 + theta * (self.r4 + theta1 * self.r5)))


def _evaluar(rhs: Rhs, t: float, y: np.ndarray) -> np.ndarray:
    f = np.asarray(rhs(t, y), dtype=float)
    if not np.all(np.isfinite(f)):
        raise IntegrationError(f"El lado derecho produjo valores no finitos en t={t!r}")
    return f


def _norma(v: np.ndarray, escala: np.ndarray) -> float:
    if v.size == 0:
        return 0.0
    return math.sqrt(float(np.mean((v / escala) ** 2)))


def _paso_dp(rhs: Rhs, t: float, y: np.ndarray, h: float, k1: np.ndarray,
             config: IntegratorConfig):
    """Un paso de Dormand-Prince; devuelve (y_nuevo, error RMS ponderado, etapas)."""
    k = [k1]
    for i in range(1, 7):
        incremento = sum(a * ki for a, ki in zip(A[i], k) if a != 0.0)
        k.append(_evaluar(rhs, t + C[i] * h, y + h * incremento))
    # La etapa 7 se evalúa en y_nuevo (propiedad FSAL)
    y_nuevo = y + h * sum(b * ki for b, ki in zip(B, k[:6]) if b != 0.0)
    error_local = h * sum(e * ki for e, ki in zip(E, k) if e != 0.0)
    escala = config.abs_tol + config.rel_tol * np.maximum(np.abs(y), np.abs(y_nuevo))
    return y_nuevo, _norma(error_local, escala), k


def rk_step(rhs: Rhs, estado: SystemState, h: float,
            config: Optional[IntegratorConfig] = None) -> Tuple[SystemState, float]:
    """Un paso del par 5(4): estado propuesto y estimación de error.

    Un error > 1 indica que la tolerancia no se cumple; quien llama reduce h.
    """
    if not h > 0:
        raise ValueError("h debe ser positivo")
    config = config or IntegratorConfig()
    y = np.asarray(estado.amounts, dtype=float)
    k1 = _evaluar(rhs, estado.time, y)
    y_nuevo, error, _ = _paso_dp(rhs, estado.time, y, h, k1, config)
    if not np.all(np.isfinite(y_nuevo)):
        raise IntegrationError(f"Estado no finito tras el paso en t={estado.time!r}")
    return SystemState(estado.time + h, y_nuevo), error


class DormandPrinceIntegrator:
    """Integración adaptativa con control PI y salida densa.

    Con `floor_at_zero` las componentes negativas de cada paso aceptado se
    llevan a 0 y se cuentan en `floors`.
    """

    def __init__(self, rhs: Rhs, config: Optional[IntegratorConfig] = None, floor_at_zero: bool = False):
        self.rhs = rhs
        self.config = config or IntegratorConfig()
        self.floor_at_zero = floor_at_zero
        self.accepted = 0
        self.rejected = 0
        self.floors = 0

    def _paso_inicial(self, t0: float, y0: np.ndarray, f0: np.ndarray, t_end: float) -> float:
        config = self.config
        escala = config.abs_tol + config.rel_tol * np.abs(y0)
        dnf = _norma(f0, escala) ** 2
        dny = _norma(y0, escala) ** 2
        if dnf <= 1e-10 or dny <= 1e-10:
            h = 1e-6
        else:
            h = math.sqrt(dny / dnf) * 0.01
        h = min(h, config.h_max, t_end - t0)
        f1 = _evaluar(self.rhs, t0 + h, y0 + h * f0)
        der2 = _norma(f1 - f0, escala) / h
        der12 = max(der2, math.sqrt(dnf))
        if der12 <= 1e-15:
            h1 = max(1e-6, h * 1e-3)
        else:
            h1 = (0.01 / der12) ** 0.2
        return min(100.0 * h, h1, config.h_max, t_end - t0)

    def segments(self, y0, t0: float, t_end: float) -> Iterator[DenseSegment]:
        """Genera un DenseSegment por paso aceptado hasta llegar exactamente a t_end."""
        config = self.config
        y = np.array(y0, dtype=float)
        t = float(t0)
        if not t_end > t:
            return
        f = _evaluar(self.rhs, t, y)
        h = config.h_init if config.h_init is not None else self._paso_inicial(t, y, f, t_end)
        fac_anterior = 1e-4
        rechazado_antes = False
        pasos = 0

        while t < t_end:
            if pasos >= config.max_steps:
                raise IntegrationError(f"Se superó max_steps={config.max_steps} en t={t!r}")
            h = min(h, config.h_max)
            ultimo = t + 1.01 * h >= t_end
            if ultimo:
                h = t_end - t
            if h <= 1e-14 * max(1.0, abs(t)):
                raise IntegrationError(f"Paso demasiado pequeño (h={h!r}) en t={t!r}")

            y_nuevo, error, k = _paso_dp(self.rhs, t, y, h, f, config)
            pasos += 1
            if not (math.isfinite(error) and np.all(np.isfinite(y_nuevo))):
                raise IntegrationError(f"Estado no finito en t={t!r}")
            fac11 = error ** EXPO1

            if error <= 1.0:
                t_nuevo = t_end if ultimo else t + h
                f_nuevo = k[6]
                if self.floor_at_zero and np.any(y_nuevo < 0.0):
                    y_nuevo = np.maximum(y_nuevo, 0.0)
                    f_nuevo = _evaluar(self.rhs, t_nuevo, y_nuevo)
                    self.floors += 1
                diferencia = y_nuevo - y
                bspl = h * k[0] - diferencia
                # la pendiente final es la del extremo recortado
                derivadas = (*k[:6], f_nuevo)
                segmento = DenseSegment(
                    t, t_nuevo, y, y_nuevo, diferencia, bspl, diferencia - h * f_nuevo - bspl,
                    h * sum(d * ki for d, ki in zip(D, derivadas) if d != 0.0),
                )
                self.accepted += 1
                fac = fac11 / fac_anterior ** BETA
                fac = max(1.0 / FAC_MAX, min(1.0 / FAC_MIN, fac / SEGURIDAD))
                h_nuevo = h / fac
                if rechazado_antes:
                    h_nuevo = min(h_nuevo, h)
                fac_anterior = max(error, 1e-4)
                rechazado_antes = False
                t, y, f, h = t_nuevo, y_nuevo, f_nuevo, h_nuevo
                yield segmento
            else:
                self.rejected += 1
                rechazado_antes = True
                h = h / min(1.0 / FAC_MIN, fac11 / SEGURIDAD)
                logger.debug(f"Paso rechazado en t={t:.6g} (error={error:.3g}); h={h:.3g}")


def sample_segments(segmentos, grid: np.ndarray, n_componentes: int) -> np.ndarray:
    """Evalúa la salida densa en los puntos de la rejilla."""
    muestras = np.zeros((len(grid), n_componentes))
    g = 0
    for segmento in segmentos:
        while g < len(grid) and grid[g] <= segmento.t1:
            muestras[g] = segmento.evaluate(max(grid[g], segmento.t0))
            g += 1
        if g == len(grid):
            break
    return muestras[:g] if g < len(grid) else muestras


def rre_rhs(red: ReactionNetwork, cantidades) -> np.ndarray:
    """dx/dt = ν·a(x) con la extensión continua de las propensiones."""
    x = np.asarray(cantidades, dtype=float)
    return red.stoichiometry_matrix @ continuous_propensities(red, x)


def integrate_rre(red: ReactionNetwork, x0, t_end: float, grid,
                  config: Optional[IntegratorConfig] = None) -> Trajectory:
    """Trayectoria determinista muestreada por salida densa sobre la rejilla."""
    grid = check_grid(grid, t_end)
    x0 = np.asarray(red.initial_amounts() if x0 is None else x0, dtype=float)
    integrador = DormandPrinceIntegrator(lambda t, x: rre_rhs(red, x), config, floor_at_zero=True)
    muestras = np.zeros((len(grid), red.n_species))
    g = 0
    while g < len(grid) and grid[g] == 0.0:
        muestras[g] = x0
        g += 1
    if g < len(grid):
        muestras[g:] = sample_segments(integrador.segments(x0, 0.0, t_end), grid[g:], red.n_species)
    if integrador.floors:
        logger.warning(f"RRE: {integrador.floors} pasos con componentes negativas llevadas a 0")
    logger.debug(f"RRE: {integrador.accepted} pasos aceptados, {integrador.rejected} rechazados")
    metadata = {"pasos_aceptados": integrador.accepted, "pasos_rechazados": integrador.rejected,
                "pisos": integrador.floors}
    return Trajectory(grid, muestras, "ode", None, metadata)
