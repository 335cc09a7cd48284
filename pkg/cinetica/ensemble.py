"""
Ejecución de muchas simulaciones independientes: repeticiones, ensembles y
barridos de parámetros.

La semilla de cada corrida se deriva de (semilla maestra, índice) con el
finalizador de splitmix64, así que cada trayectoria depende sólo del
modelo, del método y de su índice. Las corridas se agrupan en
bloques contiguos de tamaño fijo cuyos acumuladores se fusionan en orden
ascendente, con cualquier número de procesos.
"""

import itertools
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from .config_manager import HybridConfig, IntegratorConfig, TauConfig
from .deterministic import integrate_rre
from .errores import ConfigError, EnsembleError, KineticsError, ModelError, SweepError
from .hybrid import simulate_hybrid
from .model import ReactionNetwork, Trajectory, make_grid
from .stochastic import simulate_approx, simulate_ssa

logger = logging.getLogger("Cinetica.Ensemble")

MASCARA_64 = (1 << 64) - 1
PROPORCION_AUREA = 0x9E3779B97F4A7C15
CORRIDAS_POR_BLOQUE = 32


# ---------------------------------------------------------------------------
# Semillas
# ---------------------------------------------------------------------------

def mix(z: int) -> int:
    """Un paso de splitmix64: suma la constante áurea y aplica el finalizador."""
    z = (z + PROPORCION_AUREA) & MASCARA_64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASCARA_64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASCARA_64
    return z ^ (z >> 31)


def derive_run_seed(master_seed: int, run_index: int) -> int:
    return mix((int(master_seed) + int(run_index) * PROPORCION_AUREA) & MASCARA_64)


# ---------------------------------------------------------------------------
# Métodos
# ---------------------------------------------------------------------------

METODOS = ("ssa", "tau", "tau-fixed", "cle", "ode", "hybrid")


@dataclass(frozen=True)
class MethodSpec:
    """Método de simulación con sus opciones.

    `tau` es el paso de tau-fixed y cle; `epsilon` afina tau (adaptativo).
    """
    name: str = "ssa"
    tau: Optional[float] = None
    epsilon: Optional[float] = None
    tau_config: TauConfig = field(default_factory=TauConfig)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    hybrid: HybridConfig = field(default_factory=HybridConfig)

    def __post_init__(self):
        if self.name not in METODOS:
            raise ConfigError(f"Método desconocido: '{self.name}' (válidos: {', '.join(METODOS)})")
        if self.name in ("tau-fixed", "cle") and not (self.tau is not None and self.tau > 0):
            raise ConfigError(f"El método {self.name} requiere un tau positivo")
        if self.epsilon is not None and not 0 < self.epsilon < 1:
            raise ConfigError("epsilon debe estar en (0, 1)")

    @property
    def deterministic(self) -> bool:
        return self.name == "ode"

    def opciones(self) -> Dict[str, object]:
        """Opciones normalizadas (para el manifiesto)."""
        return {
            "method": self.name,
            "tau": self.tau,
            "epsilon": self.epsilon,
            "tau_config": vars(self.tau_config).copy(),
            "integrator": {k: (None if isinstance(v, float) and math.isinf(v) else v)
                           for k, v in vars(self.integrator).items()},
            "theta_x": None if math.isinf(self.hybrid.theta_x) else self.hybrid.theta_x,
            "theta_a": None if math.isinf(self.hybrid.theta_a) else self.hybrid.theta_a,
            "repartition_interval": self.hybrid.repartition_interval,
        }


def simulate(red: ReactionNetwork, metodo: MethodSpec, t_end: float, grid, seed: int) -> Trajectory:
    """Despacha una simulación según el método."""
    if metodo.name == "ssa":
        return simulate_ssa(red, t_end, grid, seed)
    if metodo.name == "tau":
        return simulate_approx(red, "tau-adaptive", t_end, grid, seed,
                               epsilon=metodo.epsilon, config=metodo.tau_config)
    if metodo.name in ("tau-fixed", "cle"):
        return simulate_approx(red, metodo.name, t_end, grid, seed, tau=metodo.tau, config=metodo.tau_config)
    if metodo.name == "ode":
        trayectoria = integrate_rre(red, None, t_end, grid, metodo.integrator)
        trayectoria.seed = seed
        return trayectoria
    hibrido = replace(metodo.hybrid, integrator=metodo.integrator)
    return simulate_hybrid(red, t_end, grid, seed, hibrido)


# ---------------------------------------------------------------------------
# Estadísticas
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class EnsembleStatistics:
    """Media y suma de cuadrados de desviaciones por punto de rejilla y especie."""
    grid: np.ndarray
    species: Tuple[str, ...]
    n: int = 0
    mean: Optional[np.ndarray] = None
    m2: Optional[np.ndarray] = None

    def __post_init__(self):
        forma = (len(self.grid), len(self.species))
        if self.mean is None:
            self.mean = np.zeros(forma)
        if self.m2 is None:
            self.m2 = np.zeros(forma)

    def update(self, muestras) -> None:
        """Incorpora una trayectoria (paso de Welford elemento a elemento)."""
        x = np.asarray(muestras, dtype=float)
        self.n += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.n
        self.m2 = self.m2 + delta * (x - self.mean)

    @property
    def variance(self) -> np.ndarray:
        if self.n < 2:
            return np.zeros_like(self.m2)
        return self.m2 / (self.n - 1)

    def copy(self) -> "EnsembleStatistics":
        return EnsembleStatistics(self.grid, self.species, self.n, self.mean.copy(), self.m2.copy())

    def merge(self, otra: "EnsembleStatistics") -> "EnsembleStatistics":
        return merge_statistics(self, otra)

    def to_frame(self) -> pd.DataFrame:
        """Tabla "time,<especie>_mean,<especie>_var,..." en orden de especies."""
        columnas = {"time": self.grid}
        varianza = self.variance
        for i, nombre in enumerate(self.species):
            columnas[f"{nombre}_mean"] = self.mean[:, i]
            columnas[f"{nombre}_var"] = varianza[:, i]
        return pd.DataFrame(columnas)


def merge_statistics(a: EnsembleStatistics, b: EnsembleStatistics) -> EnsembleStatistics:
    """Fusión de Chan de dos acumuladores con la misma rejilla y especies."""
    if a.species != b.species or not np.array_equal(a.grid, b.grid):
        raise ValueError("Sólo se pueden fusionar estadísticas con la misma rejilla y especies")
    if b.n == 0:
        return a.copy()
    if a.n == 0:
        return b.copy()
    n = a.n + b.n
    delta = b.mean - a.mean
    media = a.mean + delta * (b.n / n)
    m2 = a.m2 + b.m2 + delta * delta * (a.n * b.n / n)
    return EnsembleStatistics(a.grid, a.species, n, media, m2)


# ---------------------------------------------------------------------------
# Ejecución en paralelo
# ---------------------------------------------------------------------------

def _rangos(n_corridas: int, tamano: int = CORRIDAS_POR_BLOQUE) -> List[Tuple[int, int]]:
    """Particiona [0, n) en bloques contiguos de `tamano` corridas (el último puede ser menor).

    La partición no depende del número de procesos: cada bloque se acumula
    por separado y los bloques se fusionan siempre en el mismo orden.
    """
    tamano = max(1, int(tamano))
    return [(inicio, min(inicio + tamano, n_corridas)) for inicio in range(0, n_corridas, tamano)]


def _ejecutar_rango(red: ReactionNetwork, metodo: MethodSpec, inicio: int, fin: int, t_end: float,
                    grid: np.ndarray, master_seed: int, guardar: bool):
    estadisticas = EnsembleStatistics(grid, tuple(red.species_names))
    trayectorias = [] if guardar else None
    for i in range(inicio, fin):
        try:
            trayectoria = simulate(red, metodo, t_end, grid, derive_run_seed(master_seed, i))
        except Exception as e:
            raise EnsembleError(i, e) from e
        estadisticas.update(trayectoria.samples)
        if guardar:
            trayectorias.append(trayectoria)
    return estadisticas, trayectorias


def _barra(total: int, descripcion: str, activa: bool):
    return tqdm(total=total, desc=descripcion, unit="corrida", leave=False,
                disable=not (activa and sys.stderr.isatty()))


def _acumular(red: ReactionNetwork, metodo: MethodSpec, n_corridas: int, t_end: float, grid,
              master_seed: int, workers: int, guardar: bool, progreso: bool,
              ejecutor: Optional[ProcessPoolExecutor] = None):
    if n_corridas < 1:
        raise ValueError("n_runs debe ser >= 1")
    grid = np.asarray(grid, dtype=float)
    workers = max(1, int(workers))
    rangos = _rangos(n_corridas)

    with _barra(n_corridas, f"{metodo.name} x{n_corridas}", progreso) as barra:
        if workers == 1 and ejecutor is None:
            resultados = []
            for inicio, fin in rangos:
                resultados.append(_ejecutar_rango(red, metodo, inicio, fin, t_end, grid, master_seed, guardar))
                barra.update(fin - inicio)
        else:
            propio = ejecutor is None
            ejecutor = ejecutor or ProcessPoolExecutor(max_workers=workers)
            futuros = []
            try:
                futuros = [ejecutor.submit(_ejecutar_rango, red, metodo, inicio, fin, t_end, grid,
                                           master_seed, guardar) for inicio, fin in rangos]
                resultados = []
                for futuro, (inicio, fin) in zip(futuros, rangos):
                    resultados.append(futuro.result())
                    barra.update(fin - inicio)
            except BaseException:
                for futuro in futuros:
                    futuro.cancel()
                raise
            finally:
                if propio:
                    ejecutor.shutdown(wait=True, cancel_futures=True)

    estadisticas = EnsembleStatistics(grid, tuple(red.species_names))
    trayectorias: List[Trajectory] = []
    for parcial, lote in resultados:
        estadisticas = merge_statistics(estadisticas, parcial)
        if guardar:
            trayectorias.extend(lote)
    return estadisticas, trayectorias


def run_ensemble(red: ReactionNetwork, metodo: MethodSpec, n_runs: int, t_end: float, grid,
                 master_seed: int, workers: int = 1, progreso: bool = False,
                 ejecutor: Optional[ProcessPoolExecutor] = None) -> EnsembleStatistics:
    """Media y varianza por punto de rejilla de n_runs corridas independientes.

    La corrida i usa derive_run_seed(master_seed, i). Un método determinista
    se integra una sola vez: todas las corridas coinciden y la varianza es 0.
    """
    logger.info(f"Ensemble: {n_runs} corridas de {metodo.name} con {workers} proceso(s)")
    if metodo.deterministic:
        if n_runs < 1:
            raise ValueError("n_runs debe ser >= 1")
        estadisticas, _ = _acumular(red, metodo, 1, t_end, grid, master_seed, 1, False, False)
        estadisticas.n = n_runs
        return estadisticas
    estadisticas, _ = _acumular(red, metodo, n_runs, t_end, grid, master_seed, workers, False,
                                progreso, ejecutor)
    logger.info(f"Ensemble de {metodo.name} terminado ({estadisticas.n} corridas)")
    return estadisticas


def collect_trajectories(red: ReactionNetwork, metodo: MethodSpec, n_runs: int, t_end: float, grid,
                         master_seed: int, workers: int = 1) -> List[Trajectory]:
    """Trayectorias individuales en orden de índice de corrida."""
    _, trayectorias = _acumular(red, metodo, n_runs, t_end, grid, master_seed, workers, True, False)
    return trayectorias


# ---------------------------------------------------------------------------
# Validación estadística
# ---------------------------------------------------------------------------

def endpoint_histogram(trayectorias: Sequence[Trajectory], especie: int, soporte: Optional[int] = None) -> np.ndarray:
    """Frecuencia relativa de cada conteo de la especie en el último punto de la rejilla."""
    finales = np.array([int(round(float(t.samples[-1, especie]))) for t in trayectorias], dtype=np.int64)
    if np.any(finales < 0):
        raise ValueError("Conteos negativos en los puntos finales")
    minimo = (soporte + 1) if soporte is not None else 0
    conteos = np.bincount(finales, minlength=minimo)
    return conteos / max(len(finales), 1)


def total_variation(p, q) -> float:
    """Distancia de variación total; el vector más corto se completa con ceros."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    largo = max(len(p), len(q))
    p = np.pad(p, (0, largo - len(p)))
    q = np.pad(q, (0, largo - len(q)))
    return 0.5 * float(np.sum(np.abs(p - q)))


# ---------------------------------------------------------------------------
# Barridos de parámetros
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepConfig:
    """Ejes del barrido; el último eje es el que varía más rápido."""
    axes: Tuple[Tuple[str, Tuple[float, ...]], ...]
    runs_per_point: int = 1
    method: MethodSpec = field(default_factory=MethodSpec)
    master_seed: int = 0
    t_end: float = 1.0
    samples: int = 2

    def __post_init__(self):
        if not self.axes:
            raise SweepError("El barrido no tiene ejes")
        nombres = [nombre for nombre, _ in self.axes]
        if len(set(nombres)) != len(nombres):
            raise SweepError("Eje de barrido repetido")
        for nombre, valores in self.axes:
            if not valores:
                raise SweepError(f"El eje '{nombre}' no tiene valores")
        if self.runs_per_point < 1:
            raise SweepError("runs debe ser >= 1")
        if not self.t_end > 0 or self.samples < 2:
            raise SweepError("t_end debe ser positivo y samples >= 2")

    @property
    def names(self) -> List[str]:
        return [nombre for nombre, _ in self.axes]

    def points(self) -> Iterator[Tuple[float, ...]]:
        return itertools.product(*(valores for _, valores in self.axes))

    @property
    def n_points(self) -> int:
        return math.prod(len(valores) for _, valores in self.axes)


def parse_axis(texto: str) -> Tuple[float, ...]:
    """Valores de un eje: "v1,v2,..." o un rango "lo:hi:n" (lineal) / "lo:hi:n log"."""
    texto = texto.strip()
    try:
        if ":" in texto:
            partes = texto.split()
            escala = partes[1].lower() if len(partes) > 1 else "lin"
            if len(partes) > 2 or escala not in ("lin", "log"):
                raise ValueError(texto)
            lo, hi, n = partes[0].split(":")
            lo, hi, n = float(lo), float(hi), int(n)
            if n < 1:
                raise ValueError(texto)
            if escala == "log":
                if lo <= 0 or hi <= 0:
                    raise SweepError(f"Un rango logarítmico necesita extremos positivos: '{texto}'")
                valores = np.geomspace(lo, hi, n)
            else:
                valores = np.linspace(lo, hi, n)
            return tuple(float(v) for v in valores)
        valores = tuple(float(v) for v in texto.split(",") if v.strip())
    except ValueError:
        raise SweepError(f"Eje de barrido inválido: '{texto}'") from None
    if not valores:
        raise SweepError(f"Eje de barrido vacío: '{texto}'")
    return valores


_OPCIONES_METODO = {
    "tau": float,
    "epsilon": float,
    "theta_x": float,
    "theta_a": float,
    "intervalo_reparticion": float,
}


def _leer_metodo(argumentos: List[str], plantilla: MethodSpec, n_linea: int) -> MethodSpec:
    if not argumentos:
        raise SweepError(f"línea {n_linea}: falta el nombre del método")
    opciones: Dict[str, float] = {}
    for argumento in argumentos[1:]:
        clave, _, valor = argumento.partition("=")
        if clave not in _OPCIONES_METODO or not valor:
            raise SweepError(f"línea {n_linea}: opción de método inválida '{argumento}'")
        try:
            opciones[clave] = _OPCIONES_METODO[clave](valor)
        except ValueError:
            raise SweepError(f"línea {n_linea}: valor inválido en '{argumento}'") from None
    hibrido = plantilla.hybrid
    cambios_hibrido = {}
    if "theta_x" in opciones:
        cambios_hibrido["theta_x"] = opciones["theta_x"]
    if "theta_a" in opciones:
        cambios_hibrido["theta_a"] = opciones["theta_a"]
    if "intervalo_reparticion" in opciones:
        cambios_hibrido["repartition_interval"] = opciones["intervalo_reparticion"]
    try:
        return replace(plantilla, name=argumentos[0], tau=opciones.get("tau", plantilla.tau),
                       epsilon=opciones.get("epsilon", plantilla.epsilon),
                       hybrid=replace(hibrido, **cambios_hibrido))
    except ConfigError as e:
        raise SweepError(f"línea {n_linea}: {e}") from None


def parse_sweep_file(texto: str, plantilla: Optional[MethodSpec] = None) -> SweepConfig:
    """Lee un archivo de barrido.

    Líneas admitidas (``#`` inicia un comentario)::

        axis <param> = v1,v2,...  |  axis <param> = lo:hi:n [log]
        runs <R>
        method <nombre> [tau=T] [epsilon=E] [theta_x=X] [theta_a=A] [intervalo_reparticion=I]
        seed <S>
        t_end <T>
        samples <N>
    """
    plantilla = plantilla or MethodSpec()
    ejes: List[Tuple[str, Tuple[float, ...]]] = []
    valores: Dict[str, object] = {"method": plantilla}
    for n_linea, linea in enumerate(texto.splitlines(), start=1):
        linea = linea.split("#", 1)[0].strip()
        if not linea:
            continue
        palabra, _, resto = linea.partition(" ")
        resto = resto.strip()
        try:
            if palabra == "axis":
                nombre, igual, definicion = resto.partition("=")
                nombre = nombre.strip()
                if not igual or not nombre:
                    raise SweepError(f"línea {n_linea}: se esperaba 'axis <param> = <valores>'")
                ejes.append((nombre, parse_axis(definicion)))
            elif palabra == "runs":
                valores["runs_per_point"] = int(resto)
            elif palabra == "seed":
                valores["master_seed"] = int(resto, 0)
            elif palabra == "t_end":
                valores["t_end"] = float(resto)
            elif palabra == "samples":
                valores["samples"] = int(resto)
            elif palabra == "method":
                valores["method"] = _leer_metodo(resto.split(), plantilla, n_linea)
            else:
                raise SweepError(f"línea {n_linea}: directiva desconocida '{palabra}'")
        except ValueError:
            raise SweepError(f"línea {n_linea}: valor inválido en '{linea}'") from None
    return SweepConfig(axes=tuple(ejes), **valores)


def parameter_sweep(red: ReactionNetwork, barrido: SweepConfig, workers: int = 1,
                    progreso: bool = False) -> pd.DataFrame:
    """Producto cartesiano de los ejes con un ensemble por punto.

    Devuelve una fila por punto y tiempo de la rejilla, con las columnas
    "param:<nombre>", "time", "<especie>_mean", "<especie>_var".
    """
    desconocidos = [nombre for nombre in barrido.names if nombre not in red.parameters]
    if desconocidos:
        raise SweepError(f"Parámetro de barrido no declarado en el modelo: {', '.join(desconocidos)}")

    grid = make_grid(barrido.t_end, barrido.samples)
    logger.info(f"Barrido de {barrido.n_points} puntos x {barrido.runs_per_point} corridas")
    tablas = []
    ejecutor = ProcessPoolExecutor(max_workers=workers) if workers > 1 and not barrido.method.deterministic else None
    try:
        puntos = tqdm(enumerate(barrido.points()), total=barrido.n_points, desc="barrido", unit="punto",
                      leave=False, disable=not (progreso and sys.stderr.isatty()))
        for indice, punto in puntos:
            coordenadas = list(zip(barrido.names, punto))
            try:
                red_punto = red.with_parameters(dict(coordenadas))
            except ModelError as e:
                raise SweepError(str(e), coordenadas) from None
            try:
                estadisticas = run_ensemble(red_punto, barrido.method, barrido.runs_per_point, barrido.t_end,
                                            grid, derive_run_seed(barrido.master_seed, indice), workers,
                                            ejecutor=ejecutor)
            except KineticsError as e:
                raise SweepError("Falló la simulación del punto", coordenadas, causa=e) from e
            tabla = estadisticas.to_frame()
            for posicion, (nombre, valor) in enumerate(coordenadas):
                tabla.insert(posicion, f"param:{nombre}", valor)
            tablas.append(tabla)
    finally:
        if ejecutor is not None:
            ejecutor.shutdown(wait=True, cancel_futures=True)
    return pd.concat(tablas, ignore_index=True)
