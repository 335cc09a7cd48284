"""
Fixtures compartidas: modelos de ejemplo, un generador con sorteos
guionizados y la opción --lento para los ensembles grandes.
"""

import os
from typing import Iterable, Optional

import pytest

from cinetica import load_model, parse_model

RAIZ = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DIRECTORIO_MODELOS = os.path.join(RAIZ, "modelos")
DIRECTORIO_BARRIDOS = os.path.join(RAIZ, "barridos")


def pytest_addoption(parser):
    parser.addoption("--lento", action="store_true", default=False,
                     help="Ejecutar también las pruebas marcadas como lentas")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--lento"):
        return
    saltar = pytest.mark.skip(reason="prueba lenta; use --lento")
    for item in items:
        if "lento" in item.keywords:
            item.add_marker(saltar)


class RngGuionizado:
    """Sustituto de RngStream que devuelve sorteos fijados de antemano."""

    def __init__(self, uniformes: Iterable[float] = (), normales: Iterable[float] = (),
                 poisson: Iterable[int] = ()):
        self.uniformes = list(uniformes)
        self.normales = list(normales)
        self.poisson = list(poisson)
        self.medias_poisson = []

    def draw_uniform(self) -> float:
        return self.uniformes.pop(0)

    def draw_normal(self) -> float:
        return self.normales.pop(0)

    def draw_poisson(self, media: float) -> int:
        self.medias_poisson.append(media)
        return self.poisson.pop(0)


@pytest.fixture
def rng_guionizado():
    return RngGuionizado


@pytest.fixture(autouse=True)
def entorno_limpio(monkeypatch):
    monkeypatch.delenv("KINETICS_WORKERS", raising=False)


def modelo(nombre: str):
    return load_model(os.path.join(DIRECTORIO_MODELOS, f"{nombre}.model"))


def red(texto: str, parametros: Optional[dict] = None):
    resultado = parse_model(texto)
    return resultado.with_parameters(parametros) if parametros else resultado


@pytest.fixture
def decay():
    return modelo("decay")


@pytest.fixture
def birth_death():
    return modelo("birth_death")


@pytest.fixture
def isomerization():
    return modelo("isomerization")


@pytest.fixture
def enzyme():
    return modelo("enzyme")


@pytest.fixture
def two_scale():
    return modelo("two_scale")


@pytest.fixture
def linear_hazard():
    return modelo("linear_hazard")
