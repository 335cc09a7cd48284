import json
import math

import pytest

from cinetica import ConfigError, ConfigManager, HybridConfig, IntegratorConfig, TauConfig


@pytest.fixture
def sin_archivo(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def _escribir(ruta, datos):
    ruta.write_text(json.dumps(datos), encoding="utf-8")
    return str(ruta)


class TestCarga:
    def test_valores_predeterminados(self, sin_archivo):
        gestor = ConfigManager()
        assert gestor.obtener_config() == ConfigManager.DEFAULT_CONFIG
        assert gestor.obtener_config() is not ConfigManager.DEFAULT_CONFIG

    def test_config_json_del_directorio(self, sin_archivo):
        _escribir(sin_archivo / "config.json", {"tau": {"epsilon": 0.05}})
        assert ConfigManager().tau().epsilon == 0.05

    def test_ruta_explicita_inexistente(self, sin_archivo):
        with pytest.raises(ConfigError):
            ConfigManager(str(sin_archivo / "otra.json"))

    def test_json_invalido(self, sin_archivo):
        (sin_archivo / "config.json").write_text("{integrador: ", encoding="utf-8")
        with pytest.raises(ConfigError):
            ConfigManager()

    @pytest.mark.parametrize("datos", [
        {"integrador": {"rel_tol": 0}},
        {"integrador": {"max_steps": 1.5}},
        {"tau": {"epsilon": 1}},
        {"hibrido": {"theta_x": -1}},
        {"ensemble": {"workers": 0}},
        {"registro": {"nivel": "TRACE"}},
    ])
    def test_esquema(self, sin_archivo, datos):
        with pytest.raises(ConfigError):
            ConfigManager(_escribir(sin_archivo / "c.json", datos))

    def test_fusion_sobre_los_predeterminados(self, sin_archivo):
        gestor = ConfigManager(_escribir(sin_archivo / "c.json", {"integrador": {"rel_tol": 1e-8}}))
        integrador = gestor.obtener_config("integrador")
        assert integrador["rel_tol"] == 1e-8
        assert integrador["abs_tol"] == 1e-9
        assert gestor.obtener_config("cme") == ConfigManager.DEFAULT_CONFIG["cme"]
        assert ConfigManager.DEFAULT_CONFIG["integrador"]["rel_tol"] == 1e-6


class TestModificacion:
    def test_actualizar(self, sin_archivo):
        gestor = ConfigManager()
        gestor.actualizar_config("hibrido", "theta_a", 2.5)
        assert gestor.hibrido().theta_a == 2.5

    def test_actualizar_valida(self, sin_archivo):
        gestor = ConfigManager()
        with pytest.raises(ConfigError):
            gestor.actualizar_config("tau", "pasos_ssa", 0)

    def test_guardar_y_recargar(self, sin_archivo):
        gestor = ConfigManager()
        gestor.actualizar_config("cme", "limite_estados", 5000)
        assert gestor.guardar_config()
        assert ConfigManager().obtener_config("cme")["limite_estados"] == 5000

    def test_guardar_en_ruta_invalida(self, sin_archivo):
        assert ConfigManager().guardar_config(str(sin_archivo / "no" / "existe.json")) is False

    def test_seccion_inexistente(self, sin_archivo):
        assert ConfigManager().obtener_config("nada") == {}


class TestSecciones:
    def test_integrador(self, sin_archivo):
        gestor = ConfigManager(_escribir(sin_archivo / "c.json", {"integrador": {"h_max": 0.5, "max_steps": 10}}))
        integrador = gestor.integrador()
        assert integrador == IntegratorConfig(h_max=0.5, max_steps=10)
        assert math.isinf(ConfigManager().integrador().h_max)

    def test_hibrido_lleva_el_integrador(self, sin_archivo):
        gestor = ConfigManager(_escribir(sin_archivo / "c.json", {"integrador": {"rel_tol": 1e-7},
                                                                  "hibrido": {"intervalo_reparticion": 0.2}}))
        hibrido = gestor.hibrido()
        assert hibrido.integrator.rel_tol == 1e-7
        assert hibrido.repartition_interval == 0.2

    def test_tau(self, sin_archivo):
        assert ConfigManager().tau() == TauConfig()


class TestWorkers:
    def test_entorno_tiene_prioridad(self, sin_archivo, monkeypatch):
        monkeypatch.setenv("KINETICS_WORKERS", "3")
        gestor = ConfigManager(_escribir(sin_archivo / "c.json", {"ensemble": {"workers": 2}}))
        assert gestor.workers() == 3

    def test_configuracion(self, sin_archivo):
        assert ConfigManager(_escribir(sin_archivo / "c.json", {"ensemble": {"workers": 2}})).workers() == 2

    def test_nucleos_disponibles(self, sin_archivo, mocker):
        mocker.patch("cinetica.config_manager.os.cpu_count", return_value=6)
        assert ConfigManager().workers() == 6

    @pytest.mark.parametrize("valor", ["dos", "0", "-4"])
    def test_entorno_invalido(self, sin_archivo, monkeypatch, valor):
        monkeypatch.setenv("KINETICS_WORKERS", valor)
        with pytest.raises(ConfigError):
            ConfigManager().workers()


class TestValidacionDeValores:
    @pytest.mark.parametrize("argumentos", [{"rel_tol": 0}, {"abs_tol": -1}, {"max_steps": 0},
                                            {"h_init": 0.0}, {"h_max": 0.0}])
    def test_integrador(self, argumentos):
        with pytest.raises(ConfigError):
            IntegratorConfig(**argumentos)

    @pytest.mark.parametrize("epsilon", [0.0, 1.0, -0.1])
    def test_tau(self, epsilon):
        with pytest.raises(ConfigError):
            TauConfig(epsilon=epsilon)

    @pytest.mark.parametrize("argumentos", [{"theta_x": -1}, {"theta_a": -0.5}, {"repartition_interval": 0}])
    def test_hibrido(self, argumentos):
        with pytest.raises(ConfigError):
            HybridConfig(**argumentos)

    def test_umbral_infinito(self):
        assert math.isinf(HybridConfig(theta_x=math.inf).theta_x)
