#!/usr/bin/env python3
"""
Script para comparar los métodos de simulación disponibles sobre un mismo
modelo: media ± desviación típica de cada especie y tiempo de cómputo.
"""

import argparse
import logging
import os
import sys
import time

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# Asegurar que podemos importar desde el directorio del proyecto
script_dir = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, script_dir)

from cinetica import ConfigManager, MethodSpec, load_model, make_grid, run_ensemble  # noqa: E402
from cinetica.errores import KineticsError  # noqa: E402

# Configurar logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger("CompararMetodos")

METODOS_PREDETERMINADOS = ("ssa", "tau", "cle", "ode", "hybrid")
TAU_CLE = 0.01


def configurar_argumentos():
    parser = argparse.ArgumentParser(description='Comparación de métodos de simulación')
    parser.add_argument('--model', default=os.path.join(script_dir, 'modelos', 'birth_death.model'))
    parser.add_argument('--t-end', type=float, default=10.0, dest='t_end')
    parser.add_argument('--samples', type=int, default=101)
    parser.add_argument('--runs', type=int, default=500)
    parser.add_argument('--seed', type=int, default=2024)
    parser.add_argument('--workers', type=int, default=1)
    parser.add_argument('--metodos', default=','.join(METODOS_PREDETERMINADOS),
                        help='Lista separada por comas')
    parser.add_argument('--out', default='comparacion_metodos.png')
    return parser.parse_args()


def especificacion(nombre: str, gestor: ConfigManager) -> MethodSpec:
    """MethodSpec de cada método con la configuración cargada."""
    tau = TAU_CLE if nombre == 'cle' else None
    return MethodSpec(nombre, tau=tau, tau_config=gestor.tau(), integrator=gestor.integrador(),
                      hybrid=gestor.hibrido())


def comparar_metodos():
    """Función principal para comparar los métodos."""
    args = configurar_argumentos()
    gestor = ConfigManager()
    red = load_model(args.model)
    grid = make_grid(args.t_end, args.samples)

    resultados = {}
    for nombre in [m.strip() for m in args.metodos.split(',') if m.strip()]:
        inicio = time.perf_counter()
        try:
            estadisticas = run_ensemble(red, especificacion(nombre, gestor), args.runs, args.t_end, grid,
                                        args.seed, args.workers)
        except KineticsError as e:
            logger.error(f"El método {nombre} falló: {e}")
            continue
        resultados[nombre] = (estadisticas, time.perf_counter() - inicio)

    if not resultados:
        logger.error("Ningún método terminó correctamente")
        return 1

    print("\n===== RESULTADOS DE LA COMPARACIÓN =====")
    for nombre, (estadisticas, segundos) in resultados.items():
        finales = ", ".join(f"{s}={m:.4g}±{v ** 0.5:.3g}" for s, m, v in
                            zip(red.species_names, estadisticas.mean[-1], estadisticas.variance[-1]))
        print(f"{nombre:>7}: {segundos:8.2f} s   t_end: {finales}")

    figura, ejes = plt.subplots(red.n_species, 1, figsize=(8, 3 * red.n_species), sharex=True, squeeze=False)
    for i, especie in enumerate(red.species_names):
        eje = ejes[i][0]
        for nombre, (estadisticas, _) in resultados.items():
            media = estadisticas.mean[:, i]
            desviacion = estadisticas.variance[:, i] ** 0.5
            eje.plot(grid, media, label=nombre)
            eje.fill_between(grid, media - desviacion, media + desviacion, alpha=0.15)
        eje.set_ylabel(especie)
        eje.legend(loc='best', fontsize='small')
    ejes[-1][0].set_xlabel('tiempo')
    figura.suptitle(f"{os.path.basename(args.model)}: {args.runs} corridas por método")
    figura.tight_layout()
    figura.savefig(args.out, dpi=120)
    logger.info(f"Figura guardada en {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(comparar_metodos())
