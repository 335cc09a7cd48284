"""
Escritura atómica de archivos de salida.

Cada archivo se escribe primero en ``<ruta>.tmp`` y se renombra con
``os.replace``. Un conjunto de salidas se renombra sólo cuando todos los
temporales se han escrito; si alguno falla se borran y no queda ninguna
salida a medias.
"""

import logging
import os
from contextlib import suppress
from typing import List, Mapping, Tuple

logger = logging.getLogger("Cinetica.Archivos")


def _borrar(temporales: List[Tuple[str, str]]) -> None:
    for temporal, _ in temporales:
        with suppress(OSError):
            os.remove(temporal)


def escribir_conjunto(archivos: Mapping[str, str]) -> None:
    """Escribe {ruta: texto} como un todo."""
    temporales: List[Tuple[str, str]] = []
    try:
        for ruta, texto in archivos.items():
            temporal = f"{ruta}.tmp"
            temporales.append((temporal, ruta))
            with open(temporal, "w", encoding="utf-8", newline="\n") as f:
                f.write(texto)
    except BaseException:
        _borrar(temporales)
        raise
    for k, (temporal, ruta) in enumerate(temporales):
        try:
            os.replace(temporal, ruta)
        except BaseException:
            _borrar(temporales[k:])
            raise
        logger.info(f"Archivo escrito: {ruta}")


def escribir_atomico(ruta: str, texto: str) -> None:
    escribir_conjunto({ruta: texto})
