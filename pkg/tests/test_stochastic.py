import math
import os

import numpy as np
import pytest
from scipy import stats

from cinetica import (REJECTED, MethodSpec, SystemState, cle_step, conservation_laws, enumerate_states,
                      initial_distribution, integrate_rre, make_grid, run_ensemble, select_tau, simulate_approx,
                      simulate_ssa, solve_cme, ssa_step, tau_leap_step)
from cinetica import stochastic
from cinetica.cme_oracle import distribution_moments
from cinetica.deterministic import rre_rhs
from cinetica.ensemble import derive_run_seed, endpoint_histogram, total_variation
from cinetica.stochastic import _elegir_reaccion
from tests.conftest import red

DOS_REACCIONES = "species A = 1\nreaction r1: A -> 0 @ 3\nreaction r2: A -> A + A @ 1"


class TestSsaStep:
    def test_tiempo_exponencial(self, rng_guionizado):
        r = red("species A = 1\nreaction r: A -> 0 @ 2")
        evento = ssa_step(r, r.initial_state(), rng_guionizado([0.5, 0.3]))
        assert not evento.is_exhausted
        assert evento.reaction == 0
        assert evento.dt == pytest.approx(math.log(2) / 2)
        assert evento.dt == pytest.approx(0.346574, abs=1e-6)

    def test_agotado_sin_sorteos(self, rng_guionizado):
        r = red("species A = 0\nreaction r: A -> 0 @ 2")
        rng = rng_guionizado([])
        assert ssa_step(r, r.initial_state(), rng).is_exhausted

    @pytest.mark.parametrize("u2, esperada", [(0.7, 0), (0.8, 1), (0.74, 0), (0.76, 1)])
    def test_seleccion_por_suma_acumulada(self, rng_guionizado, u2, esperada):
        r = red(DOS_REACCIONES)
        assert ssa_step(r, r.initial_state(), rng_guionizado([0.5, u2])).reaction == esperada

    def test_barrido_fino_de_u2_reproduce_proporciones(self):
        n = 1000
        elegidas = [_elegir_reaccion([3.0, 1.0], 4.0, (k + 0.5) / n) for k in range(n)]
        assert elegidas.count(0) == 750
        assert elegidas.count(1) == 250

    def test_salta_reacciones_sin_propension(self):
        assert _elegir_reaccion([0.0, 2.0, 0.0], 2.0, 0.0) == 1
        assert _elegir_reaccion([1.0, 2.0, 0.0], 3.0, 1.0 - 1e-17) == 1

    def test_no_modifica_el_estado(self, rng_guionizado, isomerization):
        estado = isomerization.initial_state()
        ssa_step(isomerization, estado, rng_guionizado([0.2, 0.9]))
        assert estado.amounts.tolist() == [10, 0]


class TestSimulateSsa:
    def test_sin_propensiones_trayectoria_plana(self):
        r = red("species A = 0\nspecies B = 4\nreaction r: A -> B @ 1")
        trayectoria = simulate_ssa(r, 5.0, make_grid(5.0, 6), seed=1)
        assert trayectoria.samples.tolist() == [[0, 4]] * 6
        assert trayectoria.metadata["eventos"] == 0

    def test_conservacion_exacta(self, isomerization):
        trayectoria = simulate_ssa(isomerization, 10.0, make_grid(10.0, 201), seed=5)
        assert (trayectoria.samples.sum(axis=1) == 10).all()
        assert trayectoria.samples.dtype.kind == "i"

    def test_leyes_de_conservacion_de_la_enzima(self, enzyme):
        trayectoria = simulate_ssa(enzyme, 2.0, make_grid(2.0, 41), seed=13)
        assert trayectoria.samples.dtype.kind == "i"
        assert trayectoria.metadata["eventos"] > 0
        leyes = conservation_laws(enzyme)
        assert leyes
        for ley in leyes:
            inicial = ley.evaluate(enzyme.initial_amounts())
            assert all(ley.evaluate(x) == inicial for x in trayectoria.samples)

    def test_reproducible(self, enzyme):
        grid = make_grid(2.0, 21)
        a = simulate_ssa(enzyme, 2.0, grid, seed=77)
        b = simulate_ssa(enzyme, 2.0, grid, seed=77)
        c = simulate_ssa(enzyme, 2.0, grid, seed=78)
        assert np.array_equal(a.samples, b.samples)
        assert a.metadata == b.metadata
        assert not np.array_equal(a.samples, c.samples)

    def test_primer_punto_es_el_estado_inicial(self, birth_death):
        trayectoria = simulate_ssa(birth_death, 3.0, make_grid(3.0, 4), seed=3)
        assert trayectoria.samples[0].tolist() == [0]
        assert trayectoria.method == "ssa"
        assert trayectoria.seed == 3

    def test_rejilla_fuera_de_rango(self, birth_death):
        with pytest.raises(ValueError):
            simulate_ssa(birth_death, 1.0, [0.0, 2.0], seed=0)

    def test_estacionaria_de_nacimiento_y_muerte(self, birth_death):
        finales = [simulate_ssa(birth_death, 20.0, [0.0, 20.0], derive_run_seed(2024, i))
                   for i in range(4000)]
        empirica = endpoint_histogram(finales, 0)
        poisson = stats.poisson.pmf(np.arange(60), 5.0)
        assert total_variation(empirica, poisson) < 0.05

    @pytest.mark.lento
    def test_estacionaria_de_nacimiento_y_muerte_completa(self, birth_death):
        finales = [simulate_ssa(birth_death, 20.0, [0.0, 20.0], derive_run_seed(7, i))
                   for i in range(20_000)]
        empirica = endpoint_histogram(finales, 0)
        poisson = stats.poisson.pmf(np.arange(60), 5.0)
        assert total_variation(empirica, poisson) < 0.02


class TestSelectTau:
    def test_produccion_pura(self):
        r = red("species A = 100\nreaction r: 0 -> A @ 10")
        assert select_tau(r, r.initial_state(), 0.03) == pytest.approx(0.3)

    def test_sin_propensiones(self):
        r = red("species A = 0\nreaction r: A -> 0 @ 10")
        assert select_tau(r, r.initial_state()) == math.inf

    def test_deriva_nula_usa_solo_la_varianza(self, birth_death):
        estado = SystemState(0.0, np.array([5]))
        assert select_tau(birth_death, estado, 0.03) == pytest.approx(0.1)

    def test_orden_de_reactivo_reduce_tau(self):
        r = red("species A = 1000\nspecies B = 0\nreaction r: 2 A -> B @ 0.001")
        tau = select_tau(r, r.initial_state(), 0.03)
        a = 0.001 * 1000 * 999 / 2
        cota = 0.03 * 1000 / 2
        assert tau == pytest.approx(min(cota / (2 * a), cota ** 2 / (4 * a)))


class TestTauLeapStep:
    def test_disparos_inyectados(self, rng_guionizado):
        r = red("species A = 10\nspecies B = 0\nreaction r: A -> B @ 1")
        rng = rng_guionizado(poisson=[3])
        nuevo = tau_leap_step(r, r.initial_state(), 0.5, rng)
        assert nuevo.amounts == [7, 3]
        assert nuevo.time == 0.5
        assert rng.medias_poisson == [5.0]

    def test_rechazo_si_queda_negativo(self, rng_guionizado):
        r = red("species A = 2\nreaction r: A -> 0 @ 1")
        assert tau_leap_step(r, r.initial_state(), 1.0, rng_guionizado(poisson=[5])) is REJECTED

    def test_propensiones_nulas_no_cambian_el_estado(self, rng_guionizado):
        r = red("species A = 0\nspecies B = 7\nreaction r: A -> B @ 1")
        nuevo = tau_leap_step(r, r.initial_state(), 0.1, rng_guionizado(poisson=[0]))
        assert nuevo.amounts == [0, 7]


class TestCleStep:
    def test_ruido_nulo_es_euler_explicito(self, rng_guionizado, enzyme):
        estado = SystemState(0.0, enzyme.initial_amounts().astype(float))
        nuevo = cle_step(enzyme, estado, 0.01, rng_guionizado(normales=[0.0, 0.0, 0.0]))
        esperado = estado.amounts + 0.01 * rre_rhs(enzyme, estado.amounts)
        assert nuevo.amounts == pytest.approx(esperado)
        assert not nuevo.clamped

    def test_evaluacion_a_mano(self, rng_guionizado, decay):
        nuevo = cle_step(decay, SystemState(0.0, np.array([100.0])), 0.01, rng_guionizado(normales=[1.0]))
        assert nuevo.amounts[0] == pytest.approx(98.0)
        assert nuevo.time == pytest.approx(0.01)

    def test_recorte_a_cero(self, rng_guionizado, decay):
        nuevo = cle_step(decay, SystemState(0.0, np.array([0.5])), 0.1, rng_guionizado(normales=[-10.0]))
        assert nuevo.amounts[0] == 0.0
        assert nuevo.clamped


class TestSimulateApprox:
    @pytest.mark.parametrize("metodo, tau", [("tau-adaptive", None), ("tau-fixed", 0.1), ("cle", 0.1)])
    def test_sin_reacciones_trayectoria_plana(self, metodo, tau):
        r = red("species A = 3\nspecies B = 1")
        trayectoria = simulate_approx(r, metodo, 1.0, make_grid(1.0, 5), seed=0, tau=tau)
        assert trayectoria.samples.tolist() == [[3, 1]] * 5

    def test_metodo_fijo_requiere_tau(self, decay):
        with pytest.raises(ValueError):
            simulate_approx(decay, "tau-fixed", 1.0, make_grid(1.0, 3), seed=0)

    def test_caida_a_ssa_con_pocas_moleculas(self, mocker, birth_death):
        espia = mocker.spy(stochastic, "ssa_step")
        trayectoria = simulate_approx(birth_death, "tau-adaptive", 5.0, make_grid(5.0, 6), seed=3)
        assert espia.call_count > 0
        assert trayectoria.metadata["pasos_ssa"] > 0

    def test_salta_con_muchas_moleculas(self, mocker, decay):
        espia = mocker.spy(stochastic, "ssa_step")
        r = decay.with_initial_amounts([100_000])
        trayectoria = simulate_approx(r, "tau-adaptive", 1.0, make_grid(1.0, 11), seed=3)
        assert espia.call_count == 0
        assert trayectoria.metadata["saltos"] > 0
        assert trayectoria.metadata["pasos_ssa"] == 0
        assert trayectoria.samples[-1, 0] == pytest.approx(100_000 * math.exp(-1), rel=0.05)

    def test_rechazos_contados(self, decay):
        r = decay.with_initial_amounts([2])
        trayectoria = simulate_approx(r, "tau-fixed", 50.0, make_grid(50.0, 3), seed=11, tau=10.0)
        assert trayectoria.metadata["rechazos"] > 0
        assert (trayectoria.samples >= 0).all()
        assert trayectoria.samples[-1, 0] == 0

    def test_conservacion_en_tau_leap(self, isomerization):
        trayectoria = simulate_approx(isomerization, "tau-fixed", 5.0, make_grid(5.0, 51), seed=9, tau=0.05)
        assert (trayectoria.samples.sum(axis=1) == 10).all()

    @pytest.mark.parametrize("metodo, opciones", [("tau-fixed", {"tau": 0.01}), ("tau-adaptive", {})])
    def test_leyes_de_conservacion_de_la_enzima(self, enzyme, metodo, opciones):
        trayectoria = simulate_approx(enzyme, metodo, 2.0, make_grid(2.0, 41), seed=13, **opciones)
        assert trayectoria.samples.dtype.kind == "i"
        for ley in conservation_laws(enzyme):
            inicial = ley.evaluate(enzyme.initial_amounts())
            assert all(ley.evaluate(x) == inicial for x in trayectoria.samples)

    def test_reproducible(self, enzyme):
        grid = make_grid(1.0, 11)
        a = simulate_approx(enzyme, "tau-adaptive", 1.0, grid, seed=21)
        b = simulate_approx(enzyme, "tau-adaptive", 1.0, grid, seed=21)
        assert np.array_equal(a.samples, b.samples)
        assert a.metadata == b.metadata

    def test_ultimo_punto_en_t_end(self, birth_death):
        trayectoria = simulate_approx(birth_death, "tau-fixed", 1.0, make_grid(1.0, 4), seed=2, tau=0.3)
        assert trayectoria.metadata["saltos"] == 4
        assert trayectoria.method == "tau-fixed"

    def test_cle_de_un_millon_contra_rre(self, decay):
        r = decay.with_initial_amounts([1_000_000])
        grid = make_grid(1.0, 2)
        finales = np.array([simulate_approx(r, "cle", 1.0, grid, derive_run_seed(5, i), tau=0.0005).samples[-1, 0]
                            for i in range(30)])
        referencia = integrate_rre(r, None, 1.0, grid).samples[-1, 0]
        error_estandar = finales.std(ddof=1) / math.sqrt(len(finales))
        assert abs(finales.mean() - referencia) < 5 * error_estandar


def _sesgo_tau(birth_death, tau: float, corridas: int, oraculo: float) -> float:
    metodo = MethodSpec("tau-fixed", tau=tau)
    estadisticas = run_ensemble(birth_death, metodo, corridas, 1.0, make_grid(1.0, 2), 31)
    return abs(estadisticas.mean[-1, 0] - oraculo)


@pytest.fixture
def media_oraculo(birth_death):
    espacio = enumerate_states(birth_death, 40)
    p = solve_cme(birth_death, espacio, initial_distribution(espacio, birth_death), 1.0)
    return float(distribution_moments(espacio, p)["media"][0])


def test_oraculo_de_nacimiento_y_muerte(media_oraculo):
    assert media_oraculo == pytest.approx(5.0 * (1.0 - math.exp(-1.0)), rel=1e-6)


def test_tau_leap_converge_al_reducir_tau(birth_death, media_oraculo):
    grueso = _sesgo_tau(birth_death, 0.25, 4000, media_oraculo)
    fino = _sesgo_tau(birth_death, 0.05, 4000, media_oraculo)
    assert fino < grueso
    assert fino < 0.2


@pytest.mark.lento
@pytest.mark.timeout(3600)
def test_tau_leap_converge_monotonamente(birth_death, media_oraculo):
    corridas = 20_000
    error_estandar = math.sqrt(media_oraculo / corridas)
    sesgos = [_sesgo_tau(birth_death, tau, corridas, media_oraculo) for tau in (0.1, 0.01, 0.001)]
    assert sesgos[1] < sesgos[0]
    assert sesgos[2] < sesgos[1] + 4 * error_estandar


@pytest.mark.lento
@pytest.mark.timeout(3600)
def test_ruido_relativo_decrece_como_raiz_del_tamano(decay):
    corridas = 1000
    semiancho = {}
    for x0 in (100, 10_000):
        estadisticas = run_ensemble(decay.with_initial_amounts([x0]), MethodSpec("ssa"), corridas, 1.0,
                                    [0.0, 1.0], 31, workers=os.cpu_count() or 1)
        media = estadisticas.mean[-1, 0]
        varianza = estadisticas.variance[-1, 0]
        assert abs(media - x0 / math.e) < 3 * math.sqrt(varianza / corridas)
        semiancho[x0] = math.sqrt(varianza) / media
    assert 5.0 <= semiancho[100] / semiancho[10_000] <= 20.0
