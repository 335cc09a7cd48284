"""
Oráculo de la ecuación maestra química (CME) sobre un espacio truncado.

Cada especie tiene un tope de moléculas; las transiciones que saldrían del
tope se desvían a un estado absorbente de fuga (última fila/columna del
generador), de modo que toda comparación contra el oráculo lleva su error
de truncamiento cuantificado.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
import scipy.sparse

from .config_manager import IntegratorConfig
from .deterministic import DormandPrinceIntegrator
from .errores import CMEError, StateSpaceError
from .model import ReactionNetwork, propensities

logger = logging.getLogger("Cinetica.CME")

LIMITE_ESTADOS = 1_000_000
TOLERANCIAS_ORACULO = IntegratorConfig(rel_tol=1e-8, abs_tol=1e-12)
TOLERANCIA_MASA = 1e-9
TOLERANCIA_NEGATIVOS = 1e-12


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Enumeración lexicográfica (primera especie más significativa) de los estados bajo el tope."""
    species: Tuple[str, ...]
    caps: Tuple[int, ...]
    states: np.ndarray

    @property
    def size(self) -> int:
        return len(self.states)

    def __post_init__(self):
        object.__setattr__(self, "_indices", {tuple(int(v) for v in x): s for s, x in enumerate(self.states)})

    def contains(self, cantidades) -> bool:
        return tuple(int(v) for v in cantidades) in self._indices

    def index(self, cantidades) -> int:
        try:
            return self._indices[tuple(int(v) for v in cantidades)]
        except KeyError:
            raise KeyError(f"Estado fuera del espacio truncado: {tuple(cantidades)}") from None

    def state(self, indice: int) -> Tuple[int, ...]:
        return tuple(int(v) for v in self.states[indice])


@dataclass(frozen=True, eq=False)
class ProbabilityVector:
    p: np.ndarray
    leaked: float = 0.0

    @property
    def total(self) -> float:
        return float(np.sum(self.p)) + self.leaked


def enumerate_states(red: ReactionNetwork, cap: Union[int, Sequence[int]],
                     limit: int = LIMITE_ESTADOS, reachable_only: bool = False) -> StateSpace:
    """Todos los vectores 0 <= x_i <= cap_i en orden lexicográfico.

    Con `reachable_only` se conservan sólo los alcanzables desde el estado
    inicial sin salir del tope (mismo orden relativo).
    """
    topes = (int(cap),) * red.n_species if np.isscalar(cap) else tuple(int(c) for c in cap)
    if len(topes) != red.n_species:
        raise StateSpaceError(f"Se esperaban {red.n_species} topes y se recibieron {len(topes)}")
    for especie, tope in zip(red.species, topes):
        if tope < especie.initial_amount:
            raise StateSpaceError(
                f"El tope de {especie.name} ({tope}) es menor que su cantidad inicial ({especie.initial_amount})")
    tamano = int(np.prod([t + 1 for t in topes], dtype=object)) if topes else 1
    if tamano > limit:
        raise StateSpaceError(f"El espacio truncado tiene {tamano} estados (límite {limit})")
    estados = np.array(list(itertools.product(*(range(t + 1) for t in topes))), dtype=np.int64)
    estados = estados.reshape(tamano, len(topes))
    if reachable_only:
        estados = _alcanzables(red, topes, estados)
        tamano = len(estados)
    logger.debug(f"Espacio de estados con {tamano} estados y topes {topes}")
    return StateSpace(tuple(red.species_names), topes, estados)


def _alcanzables(red: ReactionNetwork, topes: Tuple[int, ...], estados: np.ndarray) -> np.ndarray:
    inicial = tuple(int(v) for v in red.initial_amounts())
    cambios = [red.stoichiometry_matrix[:, j] for j in range(red.n_reactions)]
    visitados = {inicial}
    pendientes = [inicial]
    while pendientes:
        x = pendientes.pop()
        for j, aj in enumerate(propensities(red, x)):
            if aj <= 0.0:
                continue
            destino = tuple(int(v) for v in np.asarray(x) + cambios[j])
            if destino not in visitados and all(0 <= v <= t for v, t in zip(destino, topes)):
                visitados.add(destino)
                pendientes.append(destino)
    return np.array([x for x in estados if tuple(int(v) for v in x) in visitados], dtype=np.int64).reshape(-1, len(topes))


def build_generator(red: ReactionNetwork, espacio: StateSpace) -> scipy.sparse.csr_matrix:
    """Generador Q de tamaño (M+1)x(M+1); el índice M es el estado de fuga.

    Q[s, s'] = a_j(x_s) por cada reacción con x_s + ν_j dentro del tope; el
    resto de la tasa va a la columna de fuga. La fila de fuga es nula.
    """
    m = espacio.size
    filas, columnas, valores = [], [], []
    diagonal = np.zeros(m + 1)
    cambios = [red.stoichiometry_matrix[:, j] for j in range(red.n_reactions)]
    for s, x in enumerate(espacio.states):
        for j, aj in enumerate(propensities(red, x)):
            if aj <= 0.0:
                continue
            destino = x + cambios[j]
            if np.any(destino < 0):
                continue
            filas.append(s)
            columnas.append(espacio.index(destino) if espacio.contains(destino) else m)
            valores.append(aj)
            diagonal[s] -= aj
    filas.extend(range(m + 1))
    columnas.extend(range(m + 1))
    valores.extend(diagonal)
    # Las entradas repetidas (varias reacciones hacia el mismo destino) se suman
    return scipy.sparse.coo_matrix((valores, (filas, columnas)), shape=(m + 1, m + 1)).tocsr()


def _como_vector(espacio: StateSpace, p0) -> Tuple[np.ndarray, float]:
    if isinstance(p0, ProbabilityVector):
        p, fuga = np.asarray(p0.p, dtype=float), float(p0.leaked)
    else:
        p, fuga = np.asarray(p0, dtype=float), 0.0
    if p.shape != (espacio.size,):
        raise CMEError(f"La distribución inicial tiene {p.size} entradas; el espacio tiene {espacio.size}")
    if np.any(p < -TOLERANCIA_NEGATIVOS) or abs(p.sum() + fuga - 1.0) > TOLERANCIA_MASA:
        raise CMEError("La distribución inicial no es una distribución de probabilidad válida")
    return p, fuga


def _recortar(p: np.ndarray) -> np.ndarray:
    minimo = float(p.min()) if p.size else 0.0
    if minimo < -TOLERANCIA_NEGATIVOS:
        logger.warning(f"CME: probabilidades negativas hasta {minimo:.3g} recortadas a 0")
    return np.maximum(p, 0.0)


def solve_cme(red: ReactionNetwork, espacio: StateSpace, p0, t: float,
              config: Optional[IntegratorConfig] = None,
              generador: Optional[scipy.sparse.spmatrix] = None) -> ProbabilityVector:
    """p(t) de dp/dt = Qᵀp integrando con Dormand-Prince; la fuga es una componente más."""
    if t < 0:
        raise ValueError("t debe ser no negativo")
    p, fuga = _como_vector(espacio, p0)
    if t == 0:
        return ProbabilityVector(p.copy(), fuga)
    q = generador if generador is not None else build_generator(red, espacio)
    qt = q.T.tocsr()
    integrador = DormandPrinceIntegrator(lambda _t, y: qt @ y, config or TOLERANCIAS_ORACULO)
    y = np.append(p, fuga)
    for segmento in integrador.segments(y, 0.0, t):
        y = segmento.y1
    logger.debug(f"CME: {integrador.accepted} pasos aceptados, {integrador.rejected} rechazados")
    resultado = ProbabilityVector(_recortar(y[:-1]), max(float(y[-1]), 0.0))
    if resultado.leaked > 1e-6:
        logger.warning(f"CME: masa perdida por el tope = {resultado.leaked:.3g}")
    return resultado


def stationary_distribution(espacio: StateSpace, q) -> ProbabilityVector:
    """Resuelve Qᵀp = 0, Σp = 1 sobre la cadena truncada reflejante.

    Se descartan las transiciones hacia la fuga y se reconstruye la diagonal;
    una fila del sistema se sustituye por la restricción de normalización.
    """
    m = espacio.size
    q = scipy.sparse.csr_matrix(q)
    if q.shape == (m + 1, m + 1):
        q = q[:m, :m]
    denso = q.toarray()
    np.fill_diagonal(denso, 0.0)
    np.fill_diagonal(denso, -denso.sum(axis=1))
    sistema = denso.T
    sistema[-1, :] = 1.0
    lado_derecho = np.zeros(m)
    lado_derecho[-1] = 1.0
    try:
        p = scipy.linalg.solve(sistema, lado_derecho)
    except (scipy.linalg.LinAlgError, ValueError) as e:
        raise CMEError(f"Sistema estacionario singular: {e}") from e
    if not np.all(np.isfinite(p)):
        raise CMEError("La solución estacionaria no es finita")
    p = _recortar(p)
    return ProbabilityVector(p / p.sum(), 0.0)


def initial_distribution(espacio: StateSpace, red: ReactionNetwork) -> ProbabilityVector:
    """Masa puntual en las cantidades iniciales de la red."""
    p = np.zeros(espacio.size)
    p[espacio.index(red.initial_amounts())] = 1.0
    return ProbabilityVector(p, 0.0)


def marginal_distribution(espacio: StateSpace, p, especie: Union[int, str]) -> np.ndarray:
    """P(x_i = n) para n = 0..cap_i."""
    i = espacio.species.index(especie) if isinstance(especie, str) else int(especie)
    valores = p.p if isinstance(p, ProbabilityVector) else np.asarray(p, dtype=float)
    return np.bincount(espacio.states[:, i], weights=valores, minlength=espacio.caps[i] + 1)


def distribution_moments(espacio: StateSpace, p) -> Dict[str, np.ndarray]:
    """Media y varianza por especie, condicionadas a la masa dentro del tope."""
    valores = p.p if isinstance(p, ProbabilityVector) else np.asarray(p, dtype=float)
    masa = float(valores.sum())
    if masa <= 0.0:
        raise CMEError("La distribución no tiene masa dentro del tope")
    x = espacio.states.astype(float)
    media = valores @ x / masa
    varianza = valores @ (x - media) ** 2 / masa
    return {"media": media, "varianza": varianza}
