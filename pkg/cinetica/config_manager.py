"""
Módulo para gestionar la configuración del simulador.
"""

import copy
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import jsonschema

from .errores import ConfigError

logger = logging.getLogger("Cinetica.ConfigManager")


@dataclass(frozen=True)
class IntegratorConfig:
    """Controles del integrador Dormand-Prince 5(4)."""
    rel_tol: float = 1e-6
    abs_tol: float = 1e-9
    h_init: Optional[float] = None  # None: selección automática
    h_max: float = math.inf
    max_steps: int = 100_000

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ConfigError("Las tolerancias del integrador deben ser positivas")
        if self.max_steps <= 0:
            raise ConfigError("max_steps debe ser positivo")
        if self.h_init is not None and not self.h_init > 0:
            raise ConfigError("h_init debe ser positivo")
        if not self.h_max > 0:
            raise ConfigError("h_max debe ser positivo")

    @classmethod
    def desde_dict(cls, datos: Dict[str, Any]) -> "IntegratorConfig":
        h_max = datos.get("h_max")
        return cls(
            rel_tol=float(datos.get("rel_tol", cls.rel_tol)),
            abs_tol=float(datos.get("abs_tol", cls.abs_tol)),
            h_init=datos.get("h_init"),
            h_max=math.inf if h_max is None else float(h_max),
            max_steps=int(datos.get("max_steps", cls.max_steps)),
        )


@dataclass(frozen=True)
class TauConfig:
    """Parámetros del tau-leaping adaptativo."""
    epsilon: float = 0.03
    umbral_ssa: float = 10.0
    pasos_ssa: int = 100

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ConfigError("epsilon debe estar en (0, 1)")

    @classmethod
    def desde_dict(cls, datos: Dict[str, Any]) -> "TauConfig":
        return cls(
            epsilon=float(datos.get("epsilon", cls.epsilon)),
            umbral_ssa=float(datos.get("umbral_ssa", cls.umbral_ssa)),
            pasos_ssa=int(datos.get("pasos_ssa", cls.pasos_ssa)),
        )


@dataclass(frozen=True)
class HybridConfig:
    """Criterios de partición del simulador híbrido.

    `theta_x` admite infinito para forzar todas las reacciones a lentas.
    `repartition_interval` None equivale a t_end/100.
    """
    theta_x: float = 100
    theta_a: float = 10.0
    repartition_interval: Optional[float] = None
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)

    def __post_init__(self):
        if self.theta_x < 0 or self.theta_a < 0:
            raise ConfigError("Los umbrales de partición deben ser no negativos")
        if self.repartition_interval is not None and not self.repartition_interval > 0:
            raise ConfigError("repartition_interval debe ser positivo")

    @classmethod
    def desde_dict(cls, datos: Dict[str, Any], integrador: Optional[IntegratorConfig] = None) -> "HybridConfig":
        return cls(
            theta_x=float(datos.get("theta_x", cls.theta_x)),
            theta_a=float(datos.get("theta_a", cls.theta_a)),
            repartition_interval=datos.get("intervalo_reparticion"),
            integrator=integrador or IntegratorConfig(),
        )


ESQUEMA_NUMERO_POSITIVO = {"type": "number", "exclusiveMinimum": 0}

ESQUEMA_CONFIG = {
    "type": "object",
    "properties": {
        "integrador": {
            "type": "object",
            "properties": {
                "rel_tol": ESQUEMA_NUMERO_POSITIVO,
                "abs_tol": ESQUEMA_NUMERO_POSITIVO,
                "h_init": {"anyOf": [ESQUEMA_NUMERO_POSITIVO, {"type": "null"}]},
                "h_max": {"anyOf": [ESQUEMA_NUMERO_POSITIVO, {"type": "null"}]},
                "max_steps": {"type": "integer", "minimum": 1},
            },
        },
        "tau": {
            "type": "object",
            "properties": {
                "epsilon": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "umbral_ssa": ESQUEMA_NUMERO_POSITIVO,
                "pasos_ssa": {"type": "integer", "minimum": 1},
            },
        },
        "hibrido": {
            "type": "object",
            "properties": {
                "theta_x": {"type": "number", "minimum": 0},
                "theta_a": {"type": "number", "minimum": 0},
                "intervalo_reparticion": {"anyOf": [ESQUEMA_NUMERO_POSITIVO, {"type": "null"}]},
            },
        },
        "cme": {
            "type": "object",
            "properties": {
                "limite_estados": {"type": "integer", "minimum": 1},
                "rel_tol": ESQUEMA_NUMERO_POSITIVO,
                "abs_tol": ESQUEMA_NUMERO_POSITIVO,
            },
        },
        "ensemble": {
            "type": "object",
            "properties": {
                "workers": {"anyOf": [{"type": "integer", "minimum": 1}, {"type": "null"}]},
                "mostrar_progreso": {"type": "boolean"},
            },
        },
        "registro": {
            "type": "object",
            "properties": {
                "nivel": {"enum": ["DEBUG", "INFO", "WARNING", "ERROR"]},
                "archivo": {"type": ["string", "null"]},
            },
        },
    },
}


def _fusionar(base: Dict, encima: Dict) -> Dict:
    resultado = copy.deepcopy(base)
    for clave, valor in encima.items():
        if isinstance(valor, dict) and isinstance(resultado.get(clave), dict):
            resultado[clave] = _fusionar(resultado[clave], valor)
        else:
            resultado[clave] = valor
    return resultado


class ConfigManager:
    """Gestiona la configuración del simulador."""

    CONFIG_FILE = "config.json"
    DEFAULT_CONFIG = {
        "integrador": {
            "rel_tol": 1e-6,
            "abs_tol": 1e-9,
            "h_init": None,
            "h_max": None,
            "max_steps": 100000
        },
        "tau": {
            "epsilon": 0.03,
            "umbral_ssa": 10.0,
            "pasos_ssa": 100
        },
        "hibrido": {
            "theta_x": 100,
            "theta_a": 10.0,
            "intervalo_reparticion": None
        },
        "cme": {
            "limite_estados": 1000000,
            "rel_tol": 1e-8,
            "abs_tol": 1e-12
        },
        "ensemble": {
            "workers": None,
            "mostrar_progreso": True
        },
        "registro": {
            "nivel": "INFO",
            "archivo": None
        }
    }

    def __init__(self, config_path: Optional[str] = None):
        self.config_path = config_path
        self.config = self.cargar_config()

    def cargar_config(self) -> Dict:
        """Carga la configuración desde archivo o usa valores predeterminados."""
        if self.config_path and not os.path.exists(self.config_path):
            raise ConfigError(f"Archivo de configuración no encontrado: {self.config_path}")
        ruta = self.config_path or (self.CONFIG_FILE if os.path.exists(self.CONFIG_FILE) else None)
        if ruta is None:
            logger.info("Archivo de configuración no encontrado. Usando valores predeterminados.")
            return copy.deepcopy(self.DEFAULT_CONFIG)
        try:
            with open(ruta, 'r', encoding='utf-8') as f:
                usuario = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            logger.error(f"Error al cargar configuración: {e}")
            raise ConfigError(f"No se pudo leer {ruta}: {e}") from e
        config = _fusionar(self.DEFAULT_CONFIG, usuario)
        self.validar(config)
        logger.info(f"Configuración cargada desde {ruta}.")
        return config

    @staticmethod
    def validar(config: Dict) -> None:
        try:
            jsonschema.validate(config, ESQUEMA_CONFIG)
        except jsonschema.ValidationError as e:
            ruta = "/".join(str(p) for p in e.absolute_path) or "(raíz)"
            raise ConfigError(f"Configuración inválida en {ruta}: {e.message}") from e

    def guardar_config(self, ruta: Optional[str] = None) -> bool:
        """Guarda la configuración actual en archivo."""
        try:
            with open(ruta or self.CONFIG_FILE, 'w', encoding='utf-8') as f:
                json.dump(self.config, f, indent=4)
            logger.info("Configuración guardada correctamente.")
            return True
        except OSError as e:
            logger.error(f"Error al guardar configuración: {e}")
            return False

    def obtener_config(self, seccion: Optional[str] = None) -> Any:
        """Obtiene toda la configuración o una sección específica."""
        if seccion:
            return self.config.get(seccion, {})
        return self.config

    def actualizar_config(self, seccion: str, clave: str, valor: Any) -> None:
        """Actualiza un valor específico en la configuración."""
        if isinstance(self.config.get(seccion), dict):
            self.config[seccion][clave] = valor
        else:
            self.config[seccion] = {clave: valor}
        self.validar(self.config)

    def integrador(self) -> IntegratorConfig:
        return IntegratorConfig.desde_dict(self.obtener_config("integrador"))

    def tau(self) -> TauConfig:
        return TauConfig.desde_dict(self.obtener_config("tau"))

    def hibrido(self) -> HybridConfig:
        return HybridConfig.desde_dict(self.obtener_config("hibrido"), self.integrador())

    def workers(self) -> int:
        """Número de procesos: KINETICS_WORKERS > configuración > núcleos disponibles."""
        entorno = os.environ.get("KINETICS_WORKERS")
        if entorno:
            try:
                valor = int(entorno)
            except ValueError:
                raise ConfigError(f"KINETICS_WORKERS inválido: '{entorno}'") from None
            if valor < 1:
                raise ConfigError("KINETICS_WORKERS debe ser >= 1")
            return valor
        configurado = self.obtener_config("ensemble").get("workers")
        return int(configurado) if configurado else (os.cpu_count() or 1)
