"""
Simulador híbrido: X(t) como proceso de Markov determinista a trozos.

Las reacciones rápidas evolucionan por las RRE entre disparos de las lentas;
el instante de cada disparo lento se obtiene integrando el riesgo acumulado
G(t) = ∫ Σ_{j lenta} a_j(x(s)) ds junto con el flujo y resolviendo G(t*) = E,
con E ~ Exp(1), sobre la salida densa del integrador.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, FrozenSet, Optional, Tuple

import numpy as np

from .config_manager import HybridConfig, IntegratorConfig
from .deterministic import DenseSegment, DormandPrinceIntegrator
from .model import GridSampler, ReactionNetwork, SystemState, Trajectory, check_grid, continuous_propensities
from .rng import RngStream
from .stochastic import _elegir_reaccion

logger = logging.getLogger("Cinetica.Hybrid")

TOLERANCIA_RAIZ = 1e-10

AlSegmento = Callable[[DenseSegment, float], None]


@dataclass(frozen=True)
class Partition:
    slow: FrozenSet[int]
    fast: FrozenSet[int]

    def __post_init__(self):
        if self.slow & self.fast:
            raise ValueError("Una reacción no puede ser lenta y rápida a la vez")


def partition_reactions(red: ReactionNetwork, estado: SystemState, config: HybridConfig) -> Partition:
    """j es lenta si a_j < θ_a, si algún reactivo tiene cantidad < θ_x, o si a_j = 0."""
    a = continuous_propensities(red, estado.amounts)
    lentas = set()
    for j, reaccion in enumerate(red.reactions):
        escasez = any(estado.amounts[red.species_index[n]] < config.theta_x for n in reaccion.reactants)
        if a[j] <= 0.0 or a[j] < config.theta_a or escasez:
            lentas.add(j)
    rapidas = frozenset(range(red.n_reactions)) - lentas
    return Partition(frozenset(lentas), rapidas)


def _segmento_constante(t0: float, t1: float, y: np.ndarray) -> DenseSegment:
    cero = np.zeros_like(y)
    return DenseSegment(t0, t1, y, y, cero, cero, cero, cero)


def _biseccion(segmento: DenseSegment, objetivo: float) -> float:
    """Primer t con G(t) = objetivo dentro del segmento; G(lo) < objetivo <= G(hi)."""
    lo, hi = segmento.t0, segmento.t1
    while hi - lo > TOLERANCIA_RAIZ * max(abs(hi), TOLERANCIA_RAIZ):
        medio = 0.5 * (lo + hi)
        if medio <= lo or medio >= hi:
            break
        if segmento.evaluate(medio)[-1] < objetivo:
            lo = medio
        else:
            hi = medio
    return hi


def next_jump(red: ReactionNetwork, estado: SystemState, particion: Partition, t_end: float,
              rng, integrador: Optional[IntegratorConfig] = None,
              al_segmento: Optional[AlSegmento] = None) -> Tuple[Optional[float], SystemState]:
    """Próximo disparo lento antes de t_end, o (None, estado en t_end) si no lo hay.

    `al_segmento(segmento, t_corte)` recibe cada tramo de flujo recorrido
    (hasta t_corte exclusive) para el muestreo sobre la rejilla; el
    segmento se evalúa en el sistema aumentado [x, G].
    """
    x0 = np.asarray(estado.amounts, dtype=float)
    lentas = sorted(particion.slow)
    rapidas = sorted(particion.fast)
    nu_rapidas = red.stoichiometry_matrix[:, rapidas].astype(float)
    umbral = -math.log(rng.draw_uniform()) if lentas else math.inf
    y0 = np.append(x0, 0.0)

    if not rapidas:
        # Sin flujo el riesgo es constante y el salto se obtiene en forma cerrada
        riesgo = float(np.sum(continuous_propensities(red, x0)[lentas])) if lentas else 0.0
        t_salto = estado.time + umbral / riesgo if riesgo > 0.0 else math.inf
        corte = min(t_salto, t_end)
        if al_segmento is not None and corte > estado.time:
            al_segmento(_segmento_constante(estado.time, corte, y0), corte)
        if t_salto <= t_end:
            return t_salto, SystemState(t_salto, x0)
        return None, SystemState(t_end, x0)

    def flujo(_t, y):
        a = continuous_propensities(red, y[:-1])
        dx = nu_rapidas @ a[rapidas]
        return np.append(dx, np.sum(a[lentas]) if lentas else 0.0)

    integrador_dp = DormandPrinceIntegrator(flujo, integrador, floor_at_zero=True)
    y = y0
    for segmento in integrador_dp.segments(y0, estado.time, t_end):
        if segmento.y1[-1] >= umbral:
            t_salto = _biseccion(segmento, umbral)
            if al_segmento is not None:
                al_segmento(segmento, t_salto)
            return t_salto, SystemState(t_salto, segmento.evaluate(t_salto)[:-1])
        if al_segmento is not None:
            al_segmento(segmento, segmento.t1)
        y = segmento.y1
    return None, SystemState(t_end, y[:-1].copy())


def simulate_hybrid(red: ReactionNetwork, t_end: float, grid, seed: int,
                    config: Optional[HybridConfig] = None) -> Trajectory:
    """Trayectoria PDMP: flujo RRE de las rápidas y saltos de las lentas.

    Se reparte tras cada salto y cada `repartition_interval` de tiempo simulado.
    Los disparos lentos suman columnas enteras de ν al estado continuo, sin
    redondear.
    """
    config = config or HybridConfig()
    grid = check_grid(grid, t_end)
    rng = RngStream(seed)
    intervalo = config.repartition_interval or t_end / 100.0
    muestreo = GridSampler(grid, red.n_species, float)
    contadores = {"saltos": 0, "reparticiones": 0, "recortes": 0}

    def al_segmento(segmento: DenseSegment, corte: float) -> None:
        g = muestreo.siguiente
        while g < len(grid) and grid[g] < corte:
            muestreo.samples[g] = segmento.evaluate(max(grid[g], segmento.t0))[:-1]
            g += 1
        muestreo.siguiente = g

    x = red.initial_amounts().astype(float)
    t = 0.0
    n_reparticion = 1
    while t < t_end:
        while n_reparticion * intervalo <= t:
            n_reparticion += 1
        horizonte = min(t_end, n_reparticion * intervalo)
        estado = SystemState(t, x)
        particion = partition_reactions(red, estado, config)
        contadores["reparticiones"] += 1
        t_salto, estado = next_jump(red, estado, particion, horizonte, rng, config.integrator, al_segmento)
        if t_salto is None:
            t, x = horizonte, estado.amounts
            continue

        lentas = sorted(particion.slow)
        a = continuous_propensities(red, estado.amounts)[lentas]
        a0 = float(np.sum(a))
        if not a0 > 0.0:
            # riesgo lento nulo en el punto de salto: se reparte sin disparar
            logger.debug(f"Híbrido semilla={seed}: salto sin riesgo lento en t={t_salto:.6g}")
            t, x = t_salto, estado.amounts
            continue
        j = lentas[_elegir_reaccion(a, a0, rng.draw_uniform())]
        x = estado.amounts + red.stoichiometry_matrix[:, j]
        if np.any(x < 0.0):
            x = np.maximum(x, 0.0)
            contadores["recortes"] += 1
        t = t_salto
        contadores["saltos"] += 1

    muestreo.completar(x)
    logger.debug(f"Híbrido semilla={seed}: {contadores['saltos']} saltos, "
                 f"{contadores['reparticiones']} particiones")
    if contadores["recortes"]:
        logger.warning(f"Híbrido semilla={seed}: {contadores['recortes']} disparos recortados a cero")
    return Trajectory(grid, muestreo.samples, "hybrid", seed, contadores)
