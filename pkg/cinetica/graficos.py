"""
Gráficos SVG estáticos de trayectorias y estadísticas de ensembles.

El SVG se escribe como texto con coordenadas de 3 decimales, de modo que
los bytes de salida dependen sólo de los datos de entrada.
"""

import logging
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from .archivos import escribir_atomico

logger = logging.getLogger("Cinetica.Graficos")

ANCHO = 800
ALTO = 500
MARGEN = 60
COLORES = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _series(tabla: pd.DataFrame) -> List[Tuple[str, np.ndarray, Optional[np.ndarray]]]:
    """(nombre, valores, desviación o None) por especie, en orden de columnas."""
    series = []
    for columna in tabla.columns:
        if columna == "time" or columna.startswith("param:") or columna.endswith("_var"):
            continue
        if columna.endswith("_mean"):
            nombre = columna[:-len("_mean")]
            varianza = tabla.get(f"{nombre}_var")
            desviacion = np.sqrt(np.maximum(varianza.to_numpy(dtype=float), 0.0)) if varianza is not None else None
            series.append((nombre, tabla[columna].to_numpy(dtype=float), desviacion))
        else:
            series.append((columna, tabla[columna].to_numpy(dtype=float), None))
    return series


def _puntos(xs, ys) -> str:
    return " ".join(f"{x:.3f},{y:.3f}" for x, y in zip(xs, ys))


def _escapar(texto: str) -> str:
    return texto.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def render_svg(tabla: pd.DataFrame, titulo: str = "") -> str:
    """SVG con el tiempo en x y una polilínea por especie.

    Las columnas "<especie>_mean" con su "<especie>_var" se dibujan con una
    banda de ±1 desviación típica.
    """
    if "time" not in tabla.columns:
        raise ValueError("La tabla no tiene columna 'time'")
    tiempos = tabla["time"].to_numpy(dtype=float)
    series = _series(tabla)

    bajos = [v - d if d is not None else v for _, v, d in series]
    altos = [v + d if d is not None else v for _, v, d in series]
    y_min = min((float(np.min(b)) for b in bajos), default=0.0)
    y_max = max((float(np.max(a)) for a in altos), default=1.0)
    if not y_max > y_min:
        y_min, y_max = y_min - 1.0, y_max + 1.0
    t_min, t_max = float(tiempos[0]), float(tiempos[-1])
    if not t_max > t_min:
        t_max = t_min + 1.0

    def sx(t):
        return MARGEN + (np.asarray(t) - t_min) / (t_max - t_min) * (ANCHO - 2 * MARGEN)

    def sy(y):
        return ALTO - MARGEN - (np.asarray(y) - y_min) / (y_max - y_min) * (ALTO - 2 * MARGEN)

    partes = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{ANCHO}" height="{ALTO}" viewBox="0 0 {ANCHO} {ALTO}">',
        f'<rect x="0" y="0" width="{ANCHO}" height="{ALTO}" fill="white"/>',
        f'<line x1="{MARGEN}" y1="{ALTO - MARGEN}" x2="{ANCHO - MARGEN}" y2="{ALTO - MARGEN}" stroke="black"/>',
        f'<line x1="{MARGEN}" y1="{MARGEN}" x2="{MARGEN}" y2="{ALTO - MARGEN}" stroke="black"/>',
        f'<text x="{ANCHO / 2:.3f}" y="{ALTO - 15}" text-anchor="middle" font-size="14">time</text>',
        f'<text x="{MARGEN - 5}" y="{ALTO - MARGEN + 15}" text-anchor="end" font-size="11">{t_min!r}</text>',
        f'<text x="{ANCHO - MARGEN}" y="{ALTO - MARGEN + 15}" text-anchor="end" font-size="11">{t_max!r}</text>',
        f'<text x="{MARGEN - 5}" y="{MARGEN:.3f}" text-anchor="end" font-size="11">{y_max:.6g}</text>',
        f'<text x="{MARGEN - 5}" y="{ALTO - MARGEN:.3f}" text-anchor="end" font-size="11">{y_min:.6g}</text>',
    ]
    if titulo:
        partes.append(f'<text x="{ANCHO / 2:.3f}" y="25" text-anchor="middle" font-size="16">{_escapar(titulo)}</text>')

    xs = sx(tiempos)
    for k, (nombre, valores, desviacion) in enumerate(series):
        color = COLORES[k % len(COLORES)]
        if desviacion is not None:
            contorno = _puntos(np.concatenate([xs, xs[::-1]]),
                               np.concatenate([sy(valores + desviacion), sy(valores - desviacion)[::-1]]))
            partes.append(f'<polygon points="{contorno}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        partes.append(f'<polyline points="{_puntos(xs, sy(valores))}" fill="none" stroke="{color}" '
                      f'stroke-width="1.5"/>')
        partes.append(f'<text x="{ANCHO - MARGEN + 5}" y="{MARGEN + 15 * k + 10}" font-size="12" '
                      f'fill="{color}">{_escapar(nombre)}</text>')
    partes.append("</svg>")
    return "\n".join(partes) + "\n"


def emit_plot(tabla: pd.DataFrame, ruta: str, titulo: str = "") -> None:
    """Escribe el SVG de una tabla de trayectoria o de estadísticas."""
    logger.debug(f"Gráfico de {len(tabla)} puntos en {ruta}")
    escribir_atomico(ruta, render_svg(tabla, titulo))


def sweep_plot_table(tabla: pd.DataFrame) -> pd.DataFrame:
    """Reordena una tabla de barrido en una sola tabla ancha: una serie por punto y especie."""
    parametros = [c for c in tabla.columns if c.startswith("param:")]
    if not parametros:
        return tabla
    ancha = None
    for clave, grupo in tabla.groupby(parametros, sort=False):
        clave = clave if isinstance(clave, tuple) else (clave,)
        etiqueta = ",".join(f"{p[len('param:'):]}={float(v)!r}" for p, v in zip(parametros, clave))
        grupo = grupo.drop(columns=parametros).reset_index(drop=True)
        renombradas = {}
        for columna in grupo.columns:
            if columna == "time":
                continue
            nombre, _, sufijo = columna.rpartition("_")
            renombradas[columna] = f"{nombre}[{etiqueta}]_{sufijo}"
        grupo = grupo.rename(columns=renombradas)
        ancha = grupo if ancha is None else pd.concat([ancha, grupo.drop(columns="time")], axis=1)
    return ancha
