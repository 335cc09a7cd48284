"""
Simulación estocástica: SSA exacto (método directo de Gillespie) y sus dos
aceleraciones, tau-leaping de Poisson y la ecuación de Langevin química
(esquema de Euler-Maruyama).
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .config_manager import TauConfig
from .model import (GridSampler, ReactionNetwork, SystemState, Trajectory, check_grid,
                    continuous_propensities, propensities)
from .rng import RngStream

logger = logging.getLogger("Cinetica.Stochastic")


class TipoEvento(Enum):
    FIRED = "disparo"
    EXHAUSTED = "agotado"


@dataclass(frozen=True)
class StepEvent:
    kind: TipoEvento
    reaction: Optional[int] = None
    dt: Optional[float] = None

    @classmethod
    def fired(cls, j: int, dt: float) -> "StepEvent":
        return cls(TipoEvento.FIRED, j, dt)

    @classmethod
    def exhausted(cls) -> "StepEvent":
        return cls(TipoEvento.EXHAUSTED)

    @property
    def is_exhausted(self) -> bool:
        return self.kind is TipoEvento.EXHAUSTED


class Rejected(Enum):
    """Resultado de un salto de tau que dejaría cantidades negativas."""
    REJECTED = "rechazado"


REJECTED = Rejected.REJECTED


@dataclass(frozen=True, eq=False)
class LangevinState(SystemState):
    """Estado producido por cle_step; `clamped` indica si hubo recorte a 0."""
    clamped: bool = False


class MetodoAproximado(Enum):
    TAU_ADAPTATIVO = "tau-adaptive"
    TAU_FIJO = "tau-fixed"
    CLE = "cle"


def _elegir_reaccion(a: Sequence[float], a0: float, u: float) -> int:
    """Menor j con sum_{k<=j} a_k > u·a0."""
    objetivo = u * a0
    acumulada = 0.0
    ultima_positiva = 0
    for j, aj in enumerate(a):
        if aj > 0.0:
            ultima_positiva = j
        acumulada += aj
        if acumulada > objetivo:
            return j
    # Sólo por redondeo: la suma acumulada quedó por debajo de u·a0
    return ultima_positiva


def ssa_step(red: ReactionNetwork, estado: SystemState, rng) -> StepEvent:
    """Un paso del método directo. No modifica el estado (lo aplica quien llama)."""
    a = propensities(red, estado.amounts)
    a0 = math.fsum(a)
    if a0 <= 0.0:
        return StepEvent.exhausted()
    u1 = rng.draw_uniform()
    u2 = rng.draw_uniform()
    dt = math.log(1.0 / u1) / a0
    return StepEvent.fired(_elegir_reaccion(a, a0, u2), dt)


def _aplicar(x: List[int], cambios) -> None:
    for i, delta in cambios:
        x[i] += delta


def simulate_ssa(red: ReactionNetwork, t_end: float, grid, seed: int,
                 rng: Optional[RngStream] = None) -> Trajectory:
    """Camino exacto del CTMC muestreado sobre la rejilla (constante a trozos)."""
    grid = check_grid(grid, t_end)
    rng = rng if rng is not None else RngStream(seed)
    muestreo = GridSampler(grid, red.n_species)
    x = [int(v) for v in red.initial_amounts()]
    estado = SystemState(0.0, x)
    t = 0.0
    eventos = 0
    while True:
        evento = ssa_step(red, estado, rng)
        if evento.is_exhausted:
            break
        t_siguiente = t + evento.dt
        if t_siguiente > t_end:
            break
        muestreo.hasta(t_siguiente, x)
        _aplicar(x, red._cambios[evento.reaction])
        t = t_siguiente
        eventos += 1
    muestreo.completar(x)
    logger.debug(f"SSA semilla={seed}: {eventos} eventos hasta t={t:.6g}")
    return Trajectory(grid, muestreo.samples, "ssa", seed, {"eventos": eventos})


def _ordenes_de_reactivo(red: ReactionNetwork) -> List[int]:
    """g_i: mayor orden de reacción en que la especie i aparece como reactivo (1 si nunca)."""
    g = [1] * red.n_species
    for reaccion in red.reactions:
        for nombre in reaccion.reactants:
            i = red.species_index[nombre]
            g[i] = max(g[i], reaccion.order)
    return g


def select_tau(red: ReactionNetwork, estado: SystemState, epsilon: float = 0.03) -> float:
    """Cota de salto por especie: min(max(εx_i/g_i,1)/|μ_i|, max(εx_i/g_i,1)²/σ²_i).

    Los términos con μ_i = 0 (o σ²_i = 0) se omiten. Devuelve infinito si a0 = 0.
    """
    a = propensities(red, estado.amounts)
    if math.fsum(a) <= 0.0:
        return math.inf
    g = _ordenes_de_reactivo(red)
    tau = math.inf
    for i in range(red.n_species):
        mu = 0.0
        sigma2 = 0.0
        for j, aj in enumerate(a):
            nu = int(red.stoichiometry_matrix[i, j])
            if nu and aj:
                mu += nu * aj
                sigma2 += nu * nu * aj
        if sigma2 == 0.0:
            continue
        cota = max(epsilon * float(estado.amounts[i]) / g[i], 1.0)
        if mu != 0.0:
            tau = min(tau, cota / abs(mu))
        tau = min(tau, cota * cota / sigma2)
    return tau


def tau_leap_step(red: ReactionNetwork, estado: SystemState, tau: float,
                  rng) -> Union[SystemState, Rejected]:
    """Dispara k_j ~ Poisson(a_j·τ) de cada reacción a la vez.

    Si alguna cantidad quedaría negativa devuelve REJECTED (quien llama
    reduce τ a la mitad y reintenta).
    """
    a = propensities(red, estado.amounts)
    disparos = [rng.draw_poisson(aj * tau) for aj in a]
    nuevas = [int(v) for v in estado.amounts]
    for j, k in enumerate(disparos):
        if k:
            for i, delta in red._cambios[j]:
                nuevas[i] += delta * k
    if any(v < 0 for v in nuevas):
        return REJECTED
    return SystemState(estado.time + tau, nuevas)


def cle_step(red: ReactionNetwork, estado: SystemState, tau: float, rng) -> LangevinState:
    """Paso de Euler-Maruyama de la ecuación de Langevin química.

    x' = x + Σ ν_j a_j τ + Σ ν_j sqrt(a_j τ) z_j; las componentes negativas
    se recortan a 0 y se marca `clamped`.
    """
    x = np.asarray(estado.amounts, dtype=float)
    a = continuous_propensities(red, x)
    z = np.array([rng.draw_normal() for _ in range(red.n_reactions)])
    incremento = a * tau + np.sqrt(a * tau) * z
    nuevas = x + red.stoichiometry_matrix @ incremento
    recortado = bool(np.any(nuevas < 0.0))
    if recortado:
        nuevas = np.maximum(nuevas, 0.0)
    return LangevinState(estado.time + tau, nuevas, recortado)


def simulate_approx(red: ReactionNetwork, method: Union[str, MetodoAproximado], t_end: float, grid,
                    seed: int, tau: Optional[float] = None, epsilon: Optional[float] = None,
                    config: Optional[TauConfig] = None) -> Trajectory:
    """Simulación aproximada con tau-leaping (adaptativo o fijo) o CLE.

    El modo adaptativo usa select_tau y cae a pasos exactos del SSA cuando
    τ < umbral_ssa/a0. Los contadores quedan en `metadata`.
    """
    metodo = MetodoAproximado(method)
    config = config or TauConfig()
    epsilon = config.epsilon if epsilon is None else epsilon
    if metodo is not MetodoAproximado.TAU_ADAPTATIVO and not (tau and tau > 0):
        raise ValueError(f"El método {metodo.value} requiere un tau positivo")

    grid = check_grid(grid, t_end)
    rng = RngStream(seed)
    continuo = metodo is MetodoAproximado.CLE
    muestreo = GridSampler(grid, red.n_species, float if continuo else np.int64)
    inicial = red.initial_amounts()
    estado = SystemState(0.0, inicial.astype(float) if continuo else [int(v) for v in inicial])
    contadores: Dict[str, int] = {"saltos": 0, "rechazos": 0, "pasos_ssa": 0, "recortes": 0}

    t = 0.0
    agotado = False
    while t < t_end and not agotado:
        if continuo:
            paso = min(tau, t_end - t)
            nuevo = cle_step(red, estado, paso, rng)
            contadores["recortes"] += int(nuevo.clamped)
        else:
            a0 = math.fsum(propensities(red, estado.amounts))
            if a0 <= 0.0:
                break
            if metodo is MetodoAproximado.TAU_ADAPTATIVO:
                paso = select_tau(red, estado, epsilon)
                if paso < config.umbral_ssa / a0:
                    # Régimen de τ pequeño: pasos exactos antes de volver a saltar
                    for _ in range(config.pasos_ssa):
                        evento = ssa_step(red, estado, rng)
                        if evento.is_exhausted:
                            agotado = True
                            break
                        t_siguiente = t + evento.dt
                        if t_siguiente > t_end:
                            t = t_end
                            break
                        muestreo.hasta(t_siguiente, estado.amounts)
                        x = list(estado.amounts)
                        _aplicar(x, red._cambios[evento.reaction])
                        estado = SystemState(t_siguiente, x)
                        t = t_siguiente
                        contadores["pasos_ssa"] += 1
                    continue
            else:
                paso = tau
            paso = min(paso, t_end - t)
            while True:
                nuevo = tau_leap_step(red, estado, paso, rng)
                if nuevo is not REJECTED:
                    break
                paso /= 2.0
                contadores["rechazos"] += 1
                logger.debug(f"Salto rechazado en t={t:.6g}; nuevo tau={paso:.3g}")
        t_siguiente = t_end if t_end - (t + paso) <= 1e-12 * t_end else t + paso
        muestreo.hasta(t_siguiente, estado.amounts)
        estado = SystemState(t_siguiente, nuevo.amounts)
        t = t_siguiente
        contadores["saltos"] += 1

    muestreo.completar(estado.amounts)
    if contadores["recortes"]:
        logger.warning(f"CLE semilla={seed}: {contadores['recortes']} pasos con recorte a cero")
    return Trajectory(grid, muestreo.samples, metodo.value, seed, contadores)
