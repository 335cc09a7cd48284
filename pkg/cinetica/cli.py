"""
Interfaz de línea de comandos: simulate, sweep, cme y replay.

Códigos de salida:
    0   éxito
    1   error de lectura o validación (modelo, configuración, barrido, espacio de estados)
    2   fallo de la simulación (integrador, ensemble, CME)
    64  uso incorrecto de las opciones

Cada archivo de salida se acompaña de ``<salida>.manifest.json`` con todo lo
necesario para reproducirlo con ``replay``.
"""

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import time
from dataclasses import replace
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from . import __version__
from .archivos import escribir_conjunto
from .cme_oracle import (build_generator, enumerate_states, initial_distribution, solve_cme,
                         stationary_distribution)
from .config_manager import ConfigManager, IntegratorConfig
from .ensemble import MethodSpec, parameter_sweep, parse_sweep_file, run_ensemble, simulate
from .errores import (CMEError, ConfigError, EnsembleError, IntegrationError, KineticsError, ModelError,
                      NegativeAmountError, StateSpaceError, SweepError)
from .graficos import render_svg, sweep_plot_table
from .model import load_model, make_grid

logger = logging.getLogger("Cinetica.CLI")

EXIT_OK = 0
EXIT_VALIDACION = 1
EXIT_SIMULACION = 2
EXIT_USO = 64

METODOS_CLI = ("ssa", "tau", "cle", "ode", "hybrid")


class ParserCinetica(argparse.ArgumentParser):
    """ArgumentParser que termina con el código 64 ante opciones inválidas."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USO, f"{self.prog}: error: {message}\n")


def _real_o_infinito(texto: str) -> float:
    try:
        valor = float(texto)
    except ValueError:
        raise argparse.ArgumentTypeError(f"número inválido: '{texto}'") from None
    if math.isnan(valor) or valor < 0:
        raise argparse.ArgumentTypeError(f"se esperaba un número no negativo: '{texto}'")
    return valor


def _tiempo(texto: str) -> float:
    valor = _real_o_infinito(texto)
    if math.isinf(valor):
        raise argparse.ArgumentTypeError(f"se esperaba un tiempo finito: '{texto}'")
    return valor


def _positivo(tipo):
    def convertir(texto: str):
        try:
            valor = tipo(texto)
        except ValueError:
            raise argparse.ArgumentTypeError(f"valor inválido: '{texto}'") from None
        if not valor > 0 or (isinstance(valor, float) and math.isinf(valor)):
            raise argparse.ArgumentTypeError(f"se esperaba un valor positivo: '{texto}'")
        return valor
    return convertir


def construir_parser() -> ParserCinetica:
    """Configura los argumentos de línea de comandos."""
    parser = ParserCinetica(prog="cinetica", description="Simulación de redes de reacciones químicas")
    parser.add_argument("--config", type=str, help="Ruta al archivo de configuración")
    parser.add_argument("--debug", action="store_true", help="Activar mensajes de depuración")
    parser.add_argument("--workers", type=_positivo(int), help="Procesos para ensembles y barridos")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="comando", required=True)

    simular = sub.add_parser("simulate", help="Simular una trayectoria o un ensemble")
    simular.add_argument("--model", required=True, help="Archivo del modelo")
    simular.add_argument("--method", required=True, choices=METODOS_CLI)
    simular.add_argument("--t-end", required=True, type=_positivo(float), dest="t_end")
    simular.add_argument("--samples", required=True, type=int, help="Puntos de la rejilla (incluye 0 y t_end)")
    simular.add_argument("--seed", required=True, type=lambda s: int(s, 0))
    simular.add_argument("--runs", type=_positivo(int), default=1)
    simular.add_argument("--epsilon", type=float, help="Control del tau adaptativo")
    simular.add_argument("--tau", type=_positivo(float), help="Paso fijo (tau fijo o CLE)")
    simular.add_argument("--theta-x", type=_real_o_infinito, dest="theta_x", help="Umbral de cantidad (admite inf)")
    simular.add_argument("--theta-a", type=_real_o_infinito, dest="theta_a", help="Umbral de propensión")
    simular.add_argument("--repartition-interval", type=_positivo(float), dest="repartition_interval")
    simular.add_argument("--rtol", type=_positivo(float), help="Tolerancia relativa del integrador")
    simular.add_argument("--atol", type=_positivo(float), help="Tolerancia absoluta del integrador")
    simular.add_argument("--out", required=True)
    simular.add_argument("--plot", help="Archivo SVG opcional")

    barrer = sub.add_parser("sweep", help="Barrido de parámetros")
    barrer.add_argument("--model", required=True)
    barrer.add_argument("--sweep", required=True, help="Archivo de barrido")
    barrer.add_argument("--out", required=True)
    barrer.add_argument("--plot")

    cme = sub.add_parser("cme", help="Distribución exacta sobre un espacio truncado")
    cme.add_argument("--model", required=True)
    cme.add_argument("--cap", required=True, help="Tope por especie: N o N1,N2,...")
    modo = cme.add_mutually_exclusive_group(required=True)
    modo.add_argument("--at", type=_tiempo, help="Tiempo de la distribución transitoria")
    modo.add_argument("--stationary", action="store_true")
    cme.add_argument("--out", required=True)

    repetir = sub.add_parser("replay", help="Reejecutar un manifiesto")
    repetir.add_argument("--manifest", required=True)
    return parser


# ---------------------------------------------------------------------------
# Salida
# ---------------------------------------------------------------------------

def _csv(tabla: pd.DataFrame) -> str:
    """CSV con la representación decimal más corta de cada real y enteros tal cual."""
    tabla = tabla.copy()
    for columna in tabla.columns:
        if pd.api.types.is_float_dtype(tabla[columna]):
            tabla[columna] = tabla[columna].map(lambda v: repr(float(v)))
    return tabla.to_csv(index=False, lineterminator="\n")


def _sha256(ruta: str) -> str:
    with open(ruta, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()


def _escribir_con_manifiestos(salidas: Dict[str, str], comando: str, argv: Sequence[str], modelo: str,
                              opciones: Dict, seed: Optional[int], inicio: float) -> None:
    """Escribe {ruta: texto} y el manifiesto de cada salida como un único conjunto."""
    manifiesto = {
        "tool": "cinetica",
        "version": __version__,
        "command": comando,
        "argv": list(argv),
        "model": {"path": modelo, "sha256": _sha256(modelo)},
        "options": opciones,
        "seed": seed,
        "outputs": list(salidas),
        "wall_time_seconds": round(time.perf_counter() - inicio, 6),
    }
    texto = json.dumps(manifiesto, indent=2, sort_keys=True) + "\n"
    archivos = dict(salidas)
    archivos.update({f"{salida}.manifest.json": texto for salida in salidas})
    escribir_conjunto(archivos)


# ---------------------------------------------------------------------------
# Subcomandos
# ---------------------------------------------------------------------------

def _workers(args, gestor: ConfigManager) -> int:
    """KINETICS_WORKERS > --workers > configuración > núcleos."""
    if os.environ.get("KINETICS_WORKERS"):
        return gestor.workers()
    return args.workers or gestor.workers()


def _progreso(gestor: ConfigManager) -> bool:
    return bool(gestor.obtener_config("ensemble").get("mostrar_progreso", False))


def metodo_desde_args(args, gestor: ConfigManager) -> MethodSpec:
    integrador = gestor.integrador()
    cambios = {}
    if args.rtol is not None:
        cambios["rel_tol"] = args.rtol
    if args.atol is not None:
        cambios["abs_tol"] = args.atol
    integrador = replace(integrador, **cambios)

    hibrido = gestor.hibrido()
    cambios = {}
    if args.theta_x is not None:
        cambios["theta_x"] = args.theta_x
    if args.theta_a is not None:
        cambios["theta_a"] = args.theta_a
    if args.repartition_interval is not None:
        cambios["repartition_interval"] = args.repartition_interval
    hibrido = replace(hibrido, integrator=integrador, **cambios)

    nombre = args.method
    if nombre == "tau" and args.tau is not None:
        nombre = "tau-fixed"
    return MethodSpec(nombre, tau=args.tau, epsilon=args.epsilon, tau_config=gestor.tau(),
                      integrator=integrador, hybrid=hibrido)


def cmd_simulate(args, gestor: ConfigManager, argv: Sequence[str]) -> int:
    inicio = time.perf_counter()
    red = load_model(args.model)
    metodo = metodo_desde_args(args, gestor)
    try:
        grid = make_grid(args.t_end, args.samples)
    except ValueError as e:
        raise ConfigError(str(e)) from None

    if args.runs == 1:
        trayectoria = simulate(red, metodo, args.t_end, grid, args.seed)
        tabla = pd.DataFrame(trayectoria.samples, columns=red.species_names)
        tabla.insert(0, "time", grid)
        logger.info(f"Trayectoria de {metodo.name} con semilla {args.seed}: {trayectoria.metadata}")
    else:
        workers = _workers(args, gestor)
        estadisticas = run_ensemble(red, metodo, args.runs, args.t_end, grid, args.seed, workers,
                                    progreso=_progreso(gestor))
        tabla = estadisticas.to_frame()

    salidas = {args.out: _csv(tabla)}
    if args.plot:
        salidas[args.plot] = render_svg(tabla, titulo=f"{os.path.basename(args.model)} ({metodo.name})")
    opciones = dict(metodo.opciones(), t_end=args.t_end, samples=args.samples, runs=args.runs)
    _escribir_con_manifiestos(salidas, "simulate", argv, args.model, opciones, args.seed, inicio)
    return EXIT_OK


def cmd_sweep(args, gestor: ConfigManager, argv: Sequence[str]) -> int:
    inicio = time.perf_counter()
    red = load_model(args.model)
    try:
        with open(args.sweep, "r", encoding="utf-8") as f:
            texto = f.read()
    except OSError as e:
        raise SweepError(f"No se pudo leer el archivo de barrido {args.sweep}: {e}") from e
    plantilla = MethodSpec(tau_config=gestor.tau(), integrator=gestor.integrador(), hybrid=gestor.hibrido())
    barrido = parse_sweep_file(texto, plantilla)
    tabla = parameter_sweep(red, barrido, _workers(args, gestor), progreso=_progreso(gestor))

    salidas = {args.out: _csv(tabla)}
    if args.plot:
        salidas[args.plot] = render_svg(sweep_plot_table(tabla), titulo=os.path.basename(args.sweep))
    opciones = dict(barrido.method.opciones(), axes={n: list(v) for n, v in barrido.axes},
                    runs=barrido.runs_per_point, t_end=barrido.t_end, samples=barrido.samples,
                    sweep={"path": args.sweep, "sha256": _sha256(args.sweep)})
    _escribir_con_manifiestos(salidas, "sweep", argv, args.model, opciones, barrido.master_seed, inicio)
    return EXIT_OK


def _leer_topes(texto: str, n_especies: int) -> List[int]:
    try:
        topes = [int(v) for v in texto.split(",")]
    except ValueError:
        raise StateSpaceError(f"Tope inválido: '{texto}'") from None
    if len(topes) == 1:
        topes = topes * n_especies
    if len(topes) != n_especies or any(t < 0 for t in topes):
        raise StateSpaceError(f"Se esperaban {n_especies} topes no negativos y se recibió '{texto}'")
    return topes


def cmd_cme(args, gestor: ConfigManager, argv: Sequence[str]) -> int:
    inicio = time.perf_counter()
    red = load_model(args.model)
    seccion = gestor.obtener_config("cme")
    espacio = enumerate_states(red, _leer_topes(args.cap, red.n_species),
                               limit=int(seccion.get("limite_estados", 1_000_000)))
    generador = build_generator(red, espacio)
    if args.stationary:
        distribucion = stationary_distribution(espacio, generador)
    else:
        tolerancias = IntegratorConfig(rel_tol=float(seccion.get("rel_tol", 1e-8)),
                                       abs_tol=float(seccion.get("abs_tol", 1e-12)))
        distribucion = solve_cme(red, espacio, initial_distribution(espacio, red), args.at,
                                 tolerancias, generador)

    tabla = pd.DataFrame(espacio.states, columns=[f"state_{n}" for n in red.species_names])
    tabla["probability"] = np.asarray(distribucion.p, dtype=float)
    texto = _csv(tabla) + f"# leaked,{float(distribucion.leaked)!r}\n"
    opciones = {"cap": list(espacio.caps), "at": args.at, "stationary": args.stationary,
                "limite_estados": seccion.get("limite_estados")}
    _escribir_con_manifiestos({args.out: texto}, "cme", argv, args.model, opciones, None, inicio)
    return EXIT_OK


def cmd_replay(args, gestor: ConfigManager, argv: Sequence[str]) -> int:
    try:
        with open(args.manifest, "r", encoding="utf-8") as f:
            manifiesto = json.load(f)
        argumentos = manifiesto["argv"]
        modelo = manifiesto["model"]
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise ConfigError(f"Manifiesto inválido {args.manifest}: {e}") from e
    if _sha256(modelo["path"]) != modelo["sha256"]:
        raise ModelError("El modelo cambió desde que se escribió el manifiesto", archivo=modelo["path"])
    logger.info(f"Reejecutando {manifiesto.get('command')} desde {args.manifest}")
    return main(argumentos)


COMANDOS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "cme": cmd_cme,
    "replay": cmd_replay,
}


def codigo_salida(error: BaseException) -> int:
    if isinstance(error, SweepError):
        return EXIT_SIMULACION if error.causa is not None else EXIT_VALIDACION
    if isinstance(error, (IntegrationError, EnsembleError, CMEError, NegativeAmountError)):
        return EXIT_SIMULACION
    return EXIT_VALIDACION


def ejecutar(args, argv: Sequence[str], gestor: Optional[ConfigManager] = None) -> int:
    """Ejecuta el subcomando ya analizado y traduce las excepciones a códigos de salida."""
    try:
        gestor = gestor or ConfigManager(args.config)
        return COMANDOS[args.comando](args, gestor, argv)
    except ModelError as e:
        logger.error(f"Modelo inválido: {e}")
    except KineticsError as e:
        logger.error(str(e))
        return codigo_salida(e)
    except OSError as e:
        logger.error(f"Error de E/S: {e}")
    return EXIT_VALIDACION


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = construir_parser().parse_args(argv)
    except SystemExit as salida:
        return int(salida.code or 0)
    return ejecutar(args, argv)
