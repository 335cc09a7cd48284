#!/usr/bin/env python3
"""
Simulador de cinética química - Archivo Principal
Este archivo sirve como punto de entrada a la línea de comandos.
"""

import logging
import sys

import colorlog
from dotenv import load_dotenv

from cinetica.cli import EXIT_VALIDACION, construir_parser, ejecutar
from cinetica.config_manager import ConfigManager
from cinetica.errores import ConfigError

FORMATO = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def configurar_registro(debug: bool, registro: dict):
    """Consola con colores en stderr y, opcionalmente, un archivo de registro."""
    nivel = logging.DEBUG if debug else getattr(logging, registro.get("nivel", "INFO"))
    consola = colorlog.StreamHandler(sys.stderr)
    consola.setFormatter(colorlog.ColoredFormatter('%(log_color)s' + FORMATO))
    manejadores = [consola]
    if registro.get("archivo"):
        archivo = logging.FileHandler(registro["archivo"], encoding="utf-8")
        archivo.setFormatter(logging.Formatter(FORMATO))
        manejadores.append(archivo)
    logging.basicConfig(level=nivel, handlers=manejadores, force=True)


def main():
    """Función principal del programa."""
    load_dotenv()
    argv = sys.argv[1:]
    args = construir_parser().parse_args(argv)

    try:
        gestor = ConfigManager(args.config)
    except ConfigError as e:
        configurar_registro(args.debug, {})
        logging.getLogger("Main").error(str(e))
        return EXIT_VALIDACION
    configurar_registro(args.debug, gestor.obtener_config("registro"))

    try:
        return ejecutar(args, argv, gestor)
    except KeyboardInterrupt:
        logging.getLogger("Main").info("Programa terminado por el usuario.")
        return 130


if __name__ == "__main__":
    sys.exit(main())
