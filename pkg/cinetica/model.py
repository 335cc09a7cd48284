"""
Modelo de red de reacciones: tipos de datos, lectura del formato de texto,
propensiones, actualización del estado y leyes de conservación.

Las especies y reacciones se indexan en orden de declaración; ese orden
define las columnas de todos los CSV que produce el paquete.
"""

import logging
import math
import re
from dataclasses import dataclass, field, replace
from math import gcd
from types import MappingProxyType
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import sympy

from .errores import ModelError, NegativeAmountError

logger = logging.getLogger("Cinetica.Model")

NOMBRE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
TERMINO = re.compile(r"^(?:(\d+)\s*)?([A-Za-z_][A-Za-z0-9_]*)$")
NUMERO_REAL = re.compile(r"^[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?$")
ORDEN_MAXIMO = 2


@dataclass(frozen=True)
class Species:
    name: str
    initial_amount: int


@dataclass(frozen=True)
class Reaction:
    """Reacción elemental con constante estocástica c.

    ``reactants`` y ``products`` mapean nombre de especie a estequiometría.
    ``rate_parameter`` guarda el nombre del parámetro ligado, si lo hay.
    """
    name: str
    reactants: Mapping[str, int]
    products: Mapping[str, int]
    rate_constant: float
    rate_parameter: Optional[str] = None

    @property
    def order(self) -> int:
        return sum(self.reactants.values())


@dataclass(frozen=True, eq=False)
class SystemState:
    time: float
    amounts: np.ndarray


@dataclass(eq=False)
class Trajectory:
    grid: np.ndarray
    samples: np.ndarray
    method: str
    seed: Optional[int] = None
    metadata: Dict[str, int] = field(default_factory=dict)


def make_grid(t_end: float, n_muestras: int) -> np.ndarray:
    """Rejilla uniforme de n_muestras tiempos desde 0 hasta t_end inclusive."""
    if n_muestras < 2:
        raise ValueError("Se necesitan al menos 2 muestras")
    return np.linspace(0.0, float(t_end), int(n_muestras))


def check_grid(grid, t_end: float) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("La rejilla de muestreo debe ser un vector no vacío")
    if grid[0] < 0.0 or grid[-1] > t_end:
        raise ValueError(f"La rejilla debe estar contenida en [0, {t_end}]")
    if np.any(np.diff(grid) <= 0.0):
        raise ValueError("La rejilla de muestreo debe ser estrictamente creciente")
    return grid


class GridSampler:
    """Vuelca un camino constante a trozos sobre la rejilla de muestreo.

    El valor en un punto de la rejilla es el estado tras el último evento
    con tiempo <= ese punto.
    """

    def __init__(self, grid: np.ndarray, n_especies: int, dtype=np.int64):
        self.grid = grid
        self.samples = np.zeros((len(grid), n_especies), dtype=dtype)
        self.siguiente = 0

    def hasta(self, t_limite: float, cantidades) -> None:
        """Registra `cantidades` en todos los puntos pendientes con tiempo < t_limite."""
        grid = self.grid
        g = self.siguiente
        while g < len(grid) and grid[g] < t_limite:
            self.samples[g] = cantidades
            g += 1
        self.siguiente = g

    def completar(self, cantidades) -> np.ndarray:
        self.samples[self.siguiente:] = cantidades
        self.siguiente = len(self.grid)
        return self.samples

    @property
    def pendientes(self) -> bool:
        return self.siguiente < len(self.grid)


@dataclass(frozen=True)
class ConservationLaw:
    coefficients: Tuple[int, ...]

    def evaluate(self, amounts) -> float:
        """Valor de wᵀx (entero si x es entero)."""
        return sum(w * x for w, x in zip(self.coefficients, amounts))


class ReactionNetwork:
    """Red de reacciones inmutable, compartible entre simulaciones concurrentes."""

    def __init__(self, species: Sequence[Species], reactions: Sequence[Reaction],
                 parameters: Optional[Mapping[str, float]] = None):
        self.species: Tuple[Species, ...] = tuple(species)
        self.reactions: Tuple[Reaction, ...] = tuple(reactions)
        self.parameters: Mapping[str, float] = MappingProxyType(dict(parameters or {}))
        self.species_index: Mapping[str, int] = MappingProxyType(
            {s.name: i for i, s in enumerate(self.species)}
        )

        n_especies = len(self.species)
        nu = np.zeros((n_especies, len(self.reactions)), dtype=np.int64)
        compiladas = []
        for j, reaccion in enumerate(self.reactions):
            for nombre, coef in reaccion.reactants.items():
                nu[self.species_index[nombre], j] -= coef
            for nombre, coef in reaccion.products.items():
                nu[self.species_index[nombre], j] += coef
            reactivos = tuple((self.species_index[n], c) for n, c in reaccion.reactants.items())
            compiladas.append((float(reaccion.rate_constant), reactivos))
        nu.setflags(write=False)
        self.stoichiometry_matrix = nu

        # Formas compactas para los bucles internos de los simuladores
        self._compiladas = tuple(compiladas)
        self._cambios = tuple(
            tuple((i, int(nu[i, j])) for i in range(n_especies) if nu[i, j] != 0)
            for j in range(len(self.reactions))
        )

    @property
    def n_species(self) -> int:
        return len(self.species)

    @property
    def n_reactions(self) -> int:
        return len(self.reactions)

    @property
    def species_names(self) -> List[str]:
        return [s.name for s in self.species]

    def initial_amounts(self) -> np.ndarray:
        return np.array([s.initial_amount for s in self.species], dtype=np.int64)

    def initial_state(self) -> SystemState:
        return SystemState(0.0, self.initial_amounts())

    def reaction_index(self, nombre: str) -> int:
        for j, reaccion in enumerate(self.reactions):
            if reaccion.name == nombre:
                return j
        raise KeyError(nombre)

    def with_parameters(self, valores: Mapping[str, float]) -> "ReactionNetwork":
        """Devuelve una red nueva con los parámetros indicados reasignados."""
        parametros = dict(self.parameters)
        for nombre, valor in valores.items():
            if nombre not in parametros:
                raise ModelError(f"Parámetro no declarado: '{nombre}'")
            if not valor > 0 or not math.isfinite(valor):
                raise ModelError(f"El parámetro '{nombre}' debe ser un real positivo (recibido {valor!r})")
            parametros[nombre] = float(valor)
        reacciones = [
            replace(r, rate_constant=parametros[r.rate_parameter]) if r.rate_parameter else r
            for r in self.reactions
        ]
        return ReactionNetwork(self.species, reacciones, parametros)

    def with_initial_amounts(self, cantidades: Sequence[int]) -> "ReactionNetwork":
        if len(cantidades) != self.n_species:
            raise ValueError("La cantidad de valores no coincide con el número de especies")
        especies = []
        for s, x in zip(self.species, cantidades):
            if int(x) != x or x < 0:
                raise ModelError(f"Cantidad inicial inválida para '{s.name}': {x!r}")
            especies.append(replace(s, initial_amount=int(x)))
        return ReactionNetwork(especies, self.reactions, self.parameters)

    def __eq__(self, otra) -> bool:
        if not isinstance(otra, ReactionNetwork):
            return NotImplemented
        return (self.species == otra.species and self.reactions == otra.reactions
                and dict(self.parameters) == dict(otra.parameters))

    def __hash__(self) -> int:
        return hash((self.species, tuple(r.name for r in self.reactions)))

    def __repr__(self) -> str:
        return f"ReactionNetwork({self.n_species} especies, {self.n_reactions} reacciones)"

    # mappingproxy no se serializa con pickle
    def __getstate__(self):
        return {
            "species": self.species,
            "reactions": self.reactions,
            "parameters": dict(self.parameters),
        }

    def __setstate__(self, estado):
        self.__init__(estado["species"], estado["reactions"], estado["parameters"])


# ---------------------------------------------------------------------------
# Lectura y escritura del formato de texto
# ---------------------------------------------------------------------------

def _columna(linea: str, fragmento: str, desde: int = 0) -> int:
    posicion = linea.find(fragmento, desde)
    return (posicion if posicion >= 0 else desde) + 1


def _leer_real(texto: str, linea: str, n_linea: int, desde: int = 0) -> float:
    texto = texto.strip()
    if not NUMERO_REAL.match(texto):
        raise ModelError(f"Se esperaba un número real, se encontró '{texto}'",
                         n_linea, _columna(linea, texto, desde))
    return float(texto)


def _leer_lado(texto: str, linea: str, n_linea: int, desde: int) -> Tuple[Dict[str, int], List[Tuple[str, int]]]:
    """Lee un lado de la reacción: términos separados por '+' o el literal 0."""
    texto = texto.strip()
    if not texto:
        raise ModelError("Lado de reacción vacío (use '0' para ningún reactivo)",
                         n_linea, desde + 1)
    if texto == "0":
        return {}, []
    terminos: Dict[str, int] = {}
    posiciones = []
    for crudo in texto.split("+"):
        termino = crudo.strip()
        m = TERMINO.match(termino)
        columna = _columna(linea, termino, desde) if termino else desde + 1
        if not m:
            raise ModelError(f"Término inválido '{termino}'", n_linea, columna)
        coef = int(m.group(1)) if m.group(1) else 1
        if coef <= 0:
            raise ModelError(f"Coeficiente estequiométrico no positivo en '{termino}'", n_linea, columna)
        nombre = m.group(2)
        terminos[nombre] = terminos.get(nombre, 0) + coef
        posiciones.append((nombre, columna))
    return terminos, posiciones


def parse_model(texto: str) -> ReactionNetwork:
    """Construye una ReactionNetwork a partir del formato de texto por líneas.

    Gramática (sensible a mayúsculas, '#' inicia un comentario)::

        species <nombre> = <entero no negativo>
        param <nombre> = <real positivo>
        reaction <nombre>: <lhs> -> <rhs> @ <real positivo | parámetro>
    """
    especies: List[Species] = []
    parametros: Dict[str, float] = {}
    nombres_declarados: Dict[str, int] = {}
    pendientes = []
    nombres_reacciones = set()

    for n_linea, linea in enumerate(texto.splitlines(), start=1):
        contenido = linea.split("#", 1)[0].rstrip()
        if not contenido.strip():
            continue
        desplazamiento = len(contenido) - len(contenido.lstrip())
        partes = contenido.strip().split(None, 1)
        palabra = partes[0]
        resto = partes[1] if len(partes) > 1 else ""

        if palabra in ("species", "param"):
            nombre_txt, igual, valor_txt = resto.partition("=")
            nombre = nombre_txt.strip()
            if not igual:
                raise ModelError("Falta '=' en la declaración", n_linea, len(contenido) + 1)
            if not NOMBRE.fullmatch(nombre):
                raise ModelError(f"Nombre inválido '{nombre}'", n_linea,
                                 _columna(linea, nombre or "=", desplazamiento + len(palabra)))
            if nombre in nombres_declarados:
                raise ModelError(
                    f"Nombre duplicado '{nombre}' (declarado en la línea {nombres_declarados[nombre]})",
                    n_linea, _columna(linea, nombre, desplazamiento + len(palabra)))
            inicio_valor = linea.find("=") + 1
            valor_txt = valor_txt.strip()
            if palabra == "species":
                if not re.fullmatch(r"\d+", valor_txt):
                    raise ModelError(f"Cantidad inicial inválida '{valor_txt}' (entero no negativo)",
                                     n_linea, _columna(linea, valor_txt, inicio_valor))
                especies.append(Species(nombre, int(valor_txt)))
            else:
                valor = _leer_real(valor_txt, linea, n_linea, inicio_valor)
                if not valor > 0 or not math.isfinite(valor):
                    raise ModelError(f"El parámetro '{nombre}' debe ser positivo", n_linea,
                                     _columna(linea, valor_txt, inicio_valor))
                parametros[nombre] = valor
            nombres_declarados[nombre] = n_linea

        elif palabra == "reaction":
            cabecera, dos_puntos, cuerpo = resto.partition(":")
            nombre = cabecera.strip()
            if not dos_puntos:
                raise ModelError("Falta ':' tras el nombre de la reacción", n_linea, len(contenido) + 1)
            if not NOMBRE.fullmatch(nombre):
                raise ModelError(f"Nombre de reacción inválido '{nombre}'", n_linea,
                                 desplazamiento + len(palabra) + 2)
            if nombre in nombres_reacciones:
                raise ModelError(f"Reacción duplicada '{nombre}'", n_linea,
                                 _columna(linea, nombre, desplazamiento + len(palabra)))
            nombres_reacciones.add(nombre)
            inicio_cuerpo = linea.find(":") + 1
            ecuacion, arroba, tasa_txt = cuerpo.rpartition("@")
            if not arroba:
                raise ModelError("Falta '@ <constante>' en la reacción", n_linea, len(contenido) + 1)
            lhs_txt, flecha, rhs_txt = ecuacion.partition("->")
            if not flecha:
                raise ModelError("Falta '->' en la reacción", n_linea, inicio_cuerpo + 1)
            inicio_rhs = linea.find("->", inicio_cuerpo) + 2
            reactivos, pos_reactivos = _leer_lado(lhs_txt, linea, n_linea, inicio_cuerpo)
            productos, pos_productos = _leer_lado(rhs_txt, linea, n_linea, inicio_rhs)
            orden = sum(reactivos.values())
            if orden > ORDEN_MAXIMO:
                raise ModelError(f"Orden de reacción {orden} > {ORDEN_MAXIMO} en '{nombre}'",
                                 n_linea, inicio_cuerpo + 1)
            inicio_tasa = linea.rfind("@") + 1
            tasa = tasa_txt.strip()
            pendientes.append((n_linea, linea, nombre, reactivos, productos,
                               pos_reactivos + pos_productos, tasa, inicio_tasa))
        else:
            raise ModelError(f"Palabra clave desconocida '{palabra}'", n_linea, desplazamiento + 1)

    nombres_especies = {s.name for s in especies}
    reacciones: List[Reaction] = []
    for n_linea, linea, nombre, reactivos, productos, posiciones, tasa, inicio_tasa in pendientes:
        for especie, columna in posiciones:
            if especie not in nombres_especies:
                raise ModelError(f"Especie no declarada '{especie}' en la reacción '{nombre}'",
                                 n_linea, columna)
        parametro = None
        if NOMBRE.fullmatch(tasa):
            if tasa not in parametros:
                raise ModelError(f"Parámetro no declarado '{tasa}'", n_linea,
                                 _columna(linea, tasa, inicio_tasa))
            parametro = tasa
            constante = parametros[tasa]
        else:
            constante = _leer_real(tasa, linea, n_linea, inicio_tasa)
            if not constante > 0 or not math.isfinite(constante):
                raise ModelError(f"Constante de velocidad no positiva en '{nombre}'", n_linea,
                                 _columna(linea, tasa, inicio_tasa))
        reacciones.append(Reaction(nombre, reactivos, productos, constante, parametro))

    red = ReactionNetwork(especies, reacciones, parametros)
    logger.debug(f"Modelo leído: {red!r}")
    return red


def load_model(ruta: str) -> ReactionNetwork:
    """Lee un modelo desde archivo; los errores incluyen el nombre del archivo."""
    try:
        with open(ruta, "r", encoding="utf-8") as f:
            texto = f.read()
    except (OSError, UnicodeDecodeError) as e:
        raise ModelError(f"No se pudo leer el modelo: {e}", archivo=ruta) from e
    try:
        red = parse_model(texto)
    except ModelError as e:
        raise e.con_archivo(ruta) from None
    logger.info(f"Modelo cargado desde {ruta}: {red.n_species} especies, {red.n_reactions} reacciones")
    return red


def _lado_texto(terminos: Mapping[str, int]) -> str:
    if not terminos:
        return "0"
    return " + ".join(nombre if coef == 1 else f"{coef} {nombre}" for nombre, coef in terminos.items())


def render_model(red: ReactionNetwork) -> str:
    """Escribe la red en el formato de texto (inverso de parse_model)."""
    lineas = [f"param {nombre} = {valor!r}" for nombre, valor in red.parameters.items()]
    lineas += [f"species {s.name} = {s.initial_amount}" for s in red.species]
    for r in red.reactions:
        tasa = r.rate_parameter if r.rate_parameter else repr(float(r.rate_constant))
        lineas.append(f"reaction {r.name}: {_lado_texto(r.reactants)} -> {_lado_texto(r.products)} @ {tasa}")
    return "\n".join(lineas) + "\n"


# ---------------------------------------------------------------------------
# Propensiones y actualización del estado
# ---------------------------------------------------------------------------

def _h_discreta(reactivos, x) -> float:
    h = 1.0
    for i, coef in reactivos:
        n = x[i]
        if n < coef:
            return 0.0
        h *= n if coef == 1 else n * (n - 1) / 2
    return h


def _h_continua(reactivos, x) -> float:
    h = 1.0
    for i, coef in reactivos:
        n = x[i]
        if coef == 1:
            h *= n
        else:
            # Extensión continua de x(x-1)/2, sin valores negativos para x < 1
            h *= n * (n - 1) / 2 if n > 1 else 0.0
    return h


def propensity(red: ReactionNetwork, estado: SystemState, j: int) -> float:
    """a_j(x) = c_j·h_j(x), con h_j el número de combinaciones de reactivos."""
    c, reactivos = red._compiladas[j]
    return c * _h_discreta(reactivos, estado.amounts)


def propensities(red: ReactionNetwork, cantidades) -> List[float]:
    """Todas las propensiones (convención combinatoria) en orden de declaración."""
    return [c * _h_discreta(reactivos, cantidades) for c, reactivos in red._compiladas]


def continuous_propensities(red: ReactionNetwork, cantidades) -> np.ndarray:
    """Propensiones sobre cantidades reales (RRE, CLE y flujo híbrido)."""
    return np.array([c * _h_continua(reactivos, cantidades) for c, reactivos in red._compiladas])


def apply_reaction(estado: SystemState, red: ReactionNetwork, j: int) -> SystemState:
    """Dispara una vez la reacción j: x' = x + ν[:, j]. El tiempo no cambia."""
    cantidades = np.array(estado.amounts, copy=True)
    for i, delta in red._cambios[j]:
        cantidades[i] += delta
        if cantidades[i] < 0:
            raise NegativeAmountError(red.reactions[j].name, red.species[i].name, cantidades[i])
    return SystemState(estado.time, cantidades)


# ---------------------------------------------------------------------------
# Leyes de conservación
# ---------------------------------------------------------------------------

def _canonizar(vector) -> Tuple[int, ...]:
    denominador = 1
    for v in vector:
        denominador = denominador * v.q // gcd(denominador, v.q)
    enteros = [int(v * denominador) for v in vector]
    divisor = 0
    for v in enteros:
        divisor = gcd(divisor, abs(v))
    enteros = [v // divisor for v in enteros]
    primero = next(v for v in enteros if v != 0)
    if primero < 0:
        enteros = [-v for v in enteros]
    return tuple(enteros)


def conservation_laws(red: ReactionNetwork) -> List[ConservationLaw]:
    """Base entera del espacio nulo izquierdo de ν (aritmética racional exacta)."""
    if red.n_species == 0:
        return []
    if red.n_reactions == 0:
        identidad = np.eye(red.n_species, dtype=int)
        return [ConservationLaw(tuple(int(v) for v in fila)) for fila in identidad]
    nu = sympy.Matrix(red.stoichiometry_matrix.tolist())
    leyes = []
    for vector in nu.T.nullspace():
        coeficientes = _canonizar([sympy.Rational(v) for v in vector])
        leyes.append(ConservationLaw(coeficientes))
    logger.debug(f"{len(leyes)} leyes de conservación encontradas")
    return leyes
