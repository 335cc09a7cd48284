import math

import numpy as np
import pytest

from cinetica import (IntegrationError, IntegratorConfig, SystemState, conservation_laws, integrate_rre,
                      make_grid, propensities, rk_step)
from cinetica.deterministic import DormandPrinceIntegrator, rre_rhs, sample_segments
from tests.conftest import red


class TestRreRhs:
    def test_degradacion(self, decay):
        assert rre_rhs(decay, [100.0]).tolist() == [-100.0]

    def test_dimerizacion_usa_la_extension_combinatoria(self):
        r = red("species A = 5\nspecies B = 0\nreaction r: 2 A -> B @ 1")
        assert rre_rhs(r, [5.0, 0.0]).tolist() == [-20.0, 10.0]

    def test_bimolecular(self):
        r = red("species A = 4\nspecies B = 3\nspecies C = 0\nreaction r: A + B -> C @ 0.5")
        assert rre_rhs(r, [4.0, 3.0, 0.0]).tolist() == [-6.0, -6.0, 6.0]

    def test_coincide_con_las_propensiones_en_enteros(self, enzyme):
        x = np.array([30, 200, 12, 7])
        esperado = enzyme.stoichiometry_matrix @ np.array(propensities(enzyme, x))
        assert rre_rhs(enzyme, x.astype(float)) == pytest.approx(esperado)


class TestRkStep:
    def test_lado_derecho_nulo(self):
        estado = SystemState(0.0, np.array([3.0, 4.0]))
        nuevo, error = rk_step(lambda t, y: np.zeros_like(y), estado, 0.5)
        assert nuevo.amounts.tolist() == [3.0, 4.0]
        assert nuevo.time == 0.5
        assert error == 0.0

    def test_exponencial(self):
        nuevo, error = rk_step(lambda t, y: -y, SystemState(0.0, np.array([1.0])), 0.1)
        assert abs(nuevo.amounts[0] - math.exp(-0.1)) < 1e-8
        assert error < 1.0

    def test_paso_grande_supera_la_tolerancia(self):
        _, error = rk_step(lambda t, y: -y, SystemState(0.0, np.array([1.0])), 2.0)
        assert error > 1.0

    def test_valores_no_finitos(self):
        with pytest.raises(IntegrationError):
            rk_step(lambda t, y: y * np.inf, SystemState(0.0, np.array([1.0])), 0.1)

    def test_h_no_positivo(self):
        with pytest.raises(ValueError):
            rk_step(lambda t, y: -y, SystemState(0.0, np.array([1.0])), 0.0)


class TestIntegrador:
    def test_rechaza_y_reduce_el_paso(self):
        integrador = DormandPrinceIntegrator(lambda t, y: -50.0 * y, IntegratorConfig(h_init=1.0))
        for _ in integrador.segments([1.0], 0.0, 1.0):
            pass
        assert integrador.rejected > 0
        assert integrador.accepted > 0

    def test_salida_densa_exacta_en_los_extremos(self):
        integrador = DormandPrinceIntegrator(lambda t, y: np.array([y[1], -y[0]]))
        for segmento in integrador.segments([1.0, 0.0], 0.0, 3.0):
            assert np.array_equal(segmento.evaluate(segmento.t0), segmento.y0)
            assert np.array_equal(segmento.evaluate(segmento.t1), segmento.y1)

    def test_salida_densa_entre_pasos(self):
        integrador = DormandPrinceIntegrator(lambda t, y: np.array([y[1], -y[0]]),
                                             IntegratorConfig(rel_tol=1e-9, abs_tol=1e-12))
        grid = np.linspace(0.0, 6.0, 61)
        muestras = sample_segments(integrador.segments([1.0, 0.0], 0.0, 6.0), grid, 2)
        assert muestras[:, 0] == pytest.approx(np.cos(grid), abs=1e-7)
        assert muestras[:, 1] == pytest.approx(-np.sin(grid), abs=1e-7)

    def test_termina_exactamente_en_t_end(self):
        integrador = DormandPrinceIntegrator(lambda t, y: -y)
        segmentos = list(integrador.segments([1.0], 0.0, 0.7))
        assert segmentos[-1].t1 == 0.7
        assert all(a.t1 == b.t0 for a, b in zip(segmentos, segmentos[1:]))

    def test_max_steps(self):
        integrador = DormandPrinceIntegrator(lambda t, y: -y, IntegratorConfig(max_steps=3, h_max=0.01))
        with pytest.raises(IntegrationError, match="max_steps"):
            list(integrador.segments([1.0], 0.0, 1.0))

    def test_explosion_en_tiempo_finito(self):
        integrador = DormandPrinceIntegrator(lambda t, y: y * y)
        with pytest.raises(IntegrationError):
            list(integrador.segments([1.0], 0.0, 2.0))

    def test_piso_en_cero(self):
        integrador = DormandPrinceIntegrator(lambda t, y: np.array([-1.0]), IntegratorConfig(h_init=0.5),
                                             floor_at_zero=True)
        segmentos = list(integrador.segments([0.2], 0.0, 1.0))
        assert all(s.y1[0] >= 0.0 for s in segmentos)
        assert integrador.floors > 0

    def test_pendiente_final_tras_el_piso(self):
        def rhs(t, y):
            return np.array([-1.0 - 10.0 * y[0]])

        integrador = DormandPrinceIntegrator(rhs, floor_at_zero=True)
        recortados = [s for s in integrador.segments([0.2], 0.0, 1.0) if s.y0[0] == 0.0 and s.y1[0] == 0.0]
        assert recortados
        for segmento in recortados:
            delta = 1e-7 * (segmento.t1 - segmento.t0)
            pendiente = (segmento.evaluate(segmento.t1)[0] - segmento.evaluate(segmento.t1 - delta)[0]) / delta
            assert pendiente == pytest.approx(rhs(segmento.t1, segmento.y1)[0], abs=1e-3)


class TestIntegrateRre:
    def test_degradacion_exponencial(self, decay):
        trayectoria = integrate_rre(decay, None, 1.0, make_grid(1.0, 11))
        assert trayectoria.samples[-1, 0] == pytest.approx(100.0 / math.e, rel=1e-6)
        assert trayectoria.samples[-1, 0] == pytest.approx(36.787944, abs=1e-5)
        assert trayectoria.samples[:, 0] == pytest.approx(100.0 * np.exp(-trayectoria.grid), rel=1e-5)
        assert trayectoria.method == "ode"

    def test_nacimiento_y_muerte(self, birth_death):
        trayectoria = integrate_rre(birth_death, None, 3.0, make_grid(3.0, 31))
        assert trayectoria.samples[-1, 0] == pytest.approx(4.7510925, rel=1e-6)
        assert trayectoria.samples[:, 0] == pytest.approx(5.0 * (1.0 - np.exp(-trayectoria.grid)),
                                                          rel=1e-5, abs=1e-9)

    def test_conservacion_en_la_isomerizacion(self, isomerization):
        trayectoria = integrate_rre(isomerization, None, 5.0, make_grid(5.0, 101))
        total = trayectoria.samples.sum(axis=1)
        assert np.all(np.abs(total - 10.0) <= 1e-8 * 10.0)

    def test_leyes_de_conservacion_de_la_enzima(self, enzyme):
        config = IntegratorConfig(rel_tol=1e-6)
        trayectoria = integrate_rre(enzyme, None, 50.0, make_grid(50.0, 51), config)
        for ley in conservation_laws(enzyme):
            inicial = ley.evaluate(enzyme.initial_amounts())
            valores = np.array([ley.evaluate(x) for x in trayectoria.samples])
            assert np.all(np.abs(valores - inicial) <= 10 * config.rel_tol * max(abs(inicial), 1))

    @pytest.mark.parametrize("nombre_fixture, exacta", [
        ("decay", lambda t: 100.0 * np.exp(-t)),
        ("birth_death", lambda t: 5.0 * (1.0 - np.exp(-t))),
    ])
    def test_reducir_la_tolerancia_no_empeora(self, request, nombre_fixture, exacta):
        r = request.getfixturevalue(nombre_fixture)
        grid = make_grid(3.0, 31)
        errores = []
        for rel_tol in (1e-4, 5e-5, 2.5e-5, 1.25e-5):
            config = IntegratorConfig(rel_tol=rel_tol, abs_tol=1e-12)
            final = integrate_rre(r, None, 3.0, grid, config).samples[-1, 0]
            errores.append(abs(final - exacta(3.0)))
        assert all(b <= a * 1.05 for a, b in zip(errores, errores[1:]))

    def test_estado_inicial_explicito(self, decay):
        trayectoria = integrate_rre(decay, [50.0], 1.0, make_grid(1.0, 3))
        assert trayectoria.samples[0, 0] == 50.0
        assert trayectoria.samples[-1, 0] == pytest.approx(50.0 / math.e, rel=1e-6)

    def test_contadores(self, decay):
        metadata = integrate_rre(decay, None, 1.0, make_grid(1.0, 3)).metadata
        assert metadata["pasos_aceptados"] > 0
        assert metadata["pisos"] == 0
