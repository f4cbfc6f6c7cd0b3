import numpy as np
import pytest

from src import tensor_core as tc
from src.exceptions import (
    ConfiguracaoError,
    CronogramaInvalidoError,
    ResolucaoIncompativelError,
)
from src.imaging import KSpace, NoiseModel, reconstruct
from src.proagan import (
    FadeState,
    Fase,
    OpcoesRede,
    PiramideReal,
    ProgressiveSchedule,
    build_networks,
    canais_por_nivel,
    clip_weights,
    disc_forward,
    gen_forward,
    grow,
    loss_discriminator,
    loss_generator,
    nivel_de_resolucao,
    real_pyramid,
    resolucao,
    synth_measurement_path,
)
from src.tensor_core import Tape, Tensor, backward


@pytest.fixture
def opcoes():
    return OpcoesRede(nivel_max=2, latent_dim=8, c0=4, c_max=8, dtype="float64")


def _redes_no_nivel(opcoes, nivel, seed=0):
    schedule = ProgressiveSchedule.padrao(nivel, 4, 4)
    gen, disc = build_networks(opcoes, np.random.default_rng(seed))
    for i in range(1, nivel + 1):
        gen, disc = grow(gen, disc, schedule, i, np.random.default_rng([seed, i]))
    return gen, disc


def test_resolucao_por_nivel():
    assert [resolucao(l) for l in range(6)] == [4, 8, 16, 32, 64, 128]
    assert nivel_de_resolucao(32) == 3
    with pytest.raises(ResolucaoIncompativelError):
        nivel_de_resolucao(24)


def test_cronograma_padrao():
    s = ProgressiveSchedule.padrao(3, 100, 200)
    assert s.como_lista() == [[0, 0, 200], [1, 100, 200], [2, 100, 200], [3, 100, 200]]
    assert s.total_images == 200 + 3 * 300
    assert s.nivel_final == 3


@pytest.mark.parametrize("fases", [
    (),
    (Fase(0, 10, 10),),
    (Fase(0, 0, 10), Fase(2, 10, 10)),
    (Fase(0, 0, 10), Fase(1, -1, 10)),
])
def test_cronograma_invalido(fases):
    with pytest.raises(CronogramaInvalidoError):
        ProgressiveSchedule(tuple(fases))


def test_canais_espelhados_em_g_e_d(opcoes):
    gen, disc = _redes_no_nivel(opcoes, 2)
    assert canais_por_nivel(gen) == canais_por_nivel(disc) == {0: 8, 1: 8, 2: 4}


def test_formas_de_saida_por_nivel(opcoes, rng):
    for nivel in range(3):
        gen, disc = _redes_no_nivel(opcoes, nivel)
        fs = FadeState(1.0, nivel)
        x = gen_forward(Tensor(rng.standard_normal((3, 8))), gen, fs)
        r = resolucao(nivel)
        assert x.shape == (3, 1, r, r)
        assert disc_forward(x, disc, fs).shape == (3,)


def test_saida_do_gerador_respeita_a_faixa(rng):
    op = OpcoesRede(nivel_max=1, latent_dim=8, c0=4, c_max=8, faixa=(-0.5, 2.0), dtype="float64")
    gen, _ = build_networks(op, rng)
    x = gen_forward(Tensor(10 * rng.standard_normal((16, 8))), gen, FadeState(1.0, 0)).data
    assert x.min() >= -0.5 and x.max() <= 2.0


def test_grow_preserva_parametros_antigos(opcoes):
    schedule = ProgressiveSchedule.padrao(2, 4, 4)
    gen, disc = build_networks(opcoes, np.random.default_rng(1))
    gen2, disc2 = grow(gen, disc, schedule, 1, np.random.default_rng(2))
    for nome, p in gen.params.items():
        assert gen2.params[nome] is p
    for nome, p in disc.params.items():
        assert disc2.params[nome] is p
    assert set(gen2.params) - set(gen.params) == {"g.n1.conv1.w", "g.n1.conv1.b", "g.n1.conv2.w",
                                                  "g.n1.conv2.b", "g.torgb.1.w", "g.torgb.1.b"}


def test_grow_nao_pula_niveis(opcoes):
    schedule = ProgressiveSchedule((Fase(0, 0, 4), Fase(1, 4, 4), Fase(2, 4, 4)))
    gen, disc = build_networks(opcoes, np.random.default_rng(1))
    with pytest.raises(CronogramaInvalidoError):
        grow(gen, disc, schedule, 2, np.random.default_rng(2))


def test_grow_acima_do_nivel_maximo():
    op = OpcoesRede(nivel_max=0, latent_dim=4, c0=2, c_max=4)
    gen, disc = build_networks(op, np.random.default_rng(0))
    with pytest.raises(ResolucaoIncompativelError):
        grow(gen, disc, ProgressiveSchedule.padrao(1, 2, 2), 1, np.random.default_rng(1))


def test_fade_extremos_e_ponto_medio(opcoes, rng):
    gen, disc = _redes_no_nivel(opcoes, 1)
    z = Tensor(rng.standard_normal((2, 8)))
    novo = gen_forward(z, gen, FadeState(1.0, 1)).data
    velho = gen_forward(z, gen, FadeState(0.0, 1)).data
    meio = gen_forward(z, gen, FadeState(0.5, 1)).data
    np.testing.assert_allclose(meio, 0.5 * novo + 0.5 * velho, atol=1e-12)

    gen0 = type(gen)({k: v for k, v in gen.params.items() if ".n1." not in k and "torgb.1" not in k}, 0, opcoes)
    np.testing.assert_array_equal(velho, tc.upsample_2x_array(gen_forward(z, gen0, FadeState(1.0, 0)).data))


def test_discriminador_com_alpha_zero_usa_so_o_caminho_antigo(opcoes, rng):
    _, disc = _redes_no_nivel(opcoes, 1)
    x = Tensor(rng.standard_normal((2, 1, 8, 8)))
    disc0 = type(disc)({k: v for k, v in disc.params.items() if ".n1." not in k and "fromrgb.1" not in k}, 0, opcoes)
    np.testing.assert_array_equal(disc_forward(x, disc, FadeState(0.0, 1)).data,
                                  disc_forward(tc.avgpool_2x(x), disc0, FadeState(1.0, 0)).data)
    with pytest.raises(ResolucaoIncompativelError):
        disc_forward(Tensor(rng.standard_normal((2, 1, 4, 4))), disc, FadeState(1.0, 1))


def test_fade_state_invalido():
    with pytest.raises(ConfiguracaoError):
        FadeState(1.5, 0)


def test_nivel_da_rede_e_do_fade_devem_casar(opcoes, rng):
    gen, _ = _redes_no_nivel(opcoes, 1)
    with pytest.raises(ResolucaoIncompativelError):
        gen_forward(Tensor(rng.standard_normal((2, 8))), gen, FadeState(1.0, 0))


def test_caminho_de_medicao_sem_ruido_e_identidade(opcoes, rng):
    for nivel in range(3):
        r = resolucao(nivel)
        f_hat = Tensor(rng.standard_normal((3, 1, r, r)).astype(np.float32))
        y = synth_measurement_path(f_hat, NoiseModel(0.0), rng, 2)
        assert np.max(np.abs(y.data - f_hat.data)) <= 1e-4


def test_caminho_de_medicao_diferenciavel(rng):
    f_hat = rng.standard_normal((1, 1, 4, 4))
    x = Tensor(f_hat)
    with Tape() as fita:
        y = synth_measurement_path(x, NoiseModel(0.0), rng, 1)
        perda = tc.reduce_mean(y)
    g = backward(fita, perda).de(x).data
    np.testing.assert_allclose(g, np.full((1, 1, 4, 4), 1 / 16), atol=1e-12)


@pytest.mark.lento
@pytest.mark.parametrize("modo", ["resolucao_total", "por_nivel"])
def test_ruido_sintetico_casa_com_piramide_real(modo):
    """Variância por pixel do ruído nos dois caminhos, níveis 0 a 3, 10⁵ sorteios."""
    sigma, nivel_max, n = 0.3, 3, 32
    lotes, tamanho_lote = 20, 5000
    rng = np.random.default_rng(0)
    soma_real = {nivel: np.zeros((resolucao(nivel),) * 2) for nivel in range(nivel_max + 1)}
    soma_sint = {nivel: np.zeros((resolucao(nivel),) * 2) for nivel in range(nivel_max + 1)}
    for _ in range(lotes):
        ruido = KSpace(rng.normal(0, sigma, (tamanho_lote, n, n)), rng.normal(0, sigma, (tamanho_lote, n, n)))
        piramide = PiramideReal(reconstruct(ruido))
        for nivel in range(nivel_max + 1):
            r = resolucao(nivel)
            # média zero conhecida: a variância por pixel é a média dos quadrados
            soma_real[nivel] += np.sum(piramide.nivel(nivel)[:, 0] ** 2, axis=0)
            zeros = Tensor(np.zeros((tamanho_lote, 1, r, r)))
            y = synth_measurement_path(zeros, NoiseModel(sigma), rng, nivel_max, modo).data
            soma_sint[nivel] += np.sum(y[:, 0] ** 2, axis=0)
    for nivel in range(nivel_max + 1):
        razao = soma_sint[nivel] / soma_real[nivel]
        np.testing.assert_allclose(razao, 1.0, atol=0.05, err_msg=f"nível {nivel}")


def test_ruido_novo_a_cada_chamada_e_reproduzivel_pelo_subfluxo(rng):
    f_hat = Tensor(rng.standard_normal((2, 1, 4, 4)))
    nm = NoiseModel(0.2)
    fluxo = np.random.default_rng([3, 2, 7])
    primeira = synth_measurement_path(f_hat, nm, fluxo, 1).data
    segunda = synth_measurement_path(f_hat, nm, fluxo, 1).data
    assert not np.allclose(primeira, segunda)
    repetida = synth_measurement_path(f_hat, nm, np.random.default_rng([3, 2, 7]), 1).data
    np.testing.assert_array_equal(repetida, primeira)


def test_piramide_real_usa_cache():
    base = np.arange(2 * 8 * 8, dtype=np.float64).reshape(2, 8, 8)
    piramide = PiramideReal(base)
    assert len(piramide) == 2
    nivel0 = piramide.nivel(0)
    assert nivel0.shape == (2, 1, 4, 4)
    assert piramide.nivel(0) is nivel0
    np.testing.assert_array_equal(nivel0, real_pyramid(base, 0))


def test_perdas_wgan():
    real = Tensor(np.array([1.0, 3.0]))
    falso = Tensor(np.array([0.5, 0.5]))
    assert loss_discriminator(real, falso, "wgan_clip").item() == pytest.approx(0.5 - 2.0)
    assert loss_generator(falso, "wgan_clip").item() == pytest.approx(-0.5)


def test_perdas_logisticas():
    real = Tensor(np.array([0.0, 2.0]))
    falso = Tensor(np.array([-1.0, 1.0]))
    esperado_d = np.mean(np.logaddexp(0, -real.data)) + np.mean(np.logaddexp(0, falso.data))
    assert loss_discriminator(real, falso, "logistic_ns").item() == pytest.approx(esperado_d)
    assert loss_generator(falso, "logistic_ns").item() == pytest.approx(np.mean(np.logaddexp(0, -falso.data)))


def test_variante_desconhecida():
    with pytest.raises(ConfiguracaoError):
        loss_generator(Tensor(np.zeros(2)), "hinge")


def test_clip_weights():
    params = {"w": Tensor(np.array([-1.0, 0.005, 2.0]), dtype=np.float32)}
    recortados = clip_weights(params, 0.01)
    np.testing.assert_array_equal(recortados["w"].data, np.array([-0.01, 0.005, 0.01], dtype=np.float32))
    assert recortados["w"].dtype == np.float32


def test_learning_rate_equalizado_inicializa_normal_padrao():
    op = OpcoesRede(nivel_max=1, latent_dim=16, c0=8, c_max=8, equalized_lr=True, dtype="float64")
    gen, _ = build_networks(op, np.random.default_rng(0))
    w = gen.params["g.base.conv.w"].data
    assert np.std(w) == pytest.approx(1.0, rel=0.15)


def test_minibatch_stddev_no_discriminador(rng):
    op = OpcoesRede(nivel_max=0, latent_dim=4, c0=2, c_max=4, minibatch_stddev=True, dtype="float64")
    gen, disc = build_networks(op, rng)
    assert disc.params["d.base.conv.w"].shape[1] == op.canais(0) + 1
    x = gen_forward(Tensor(rng.standard_normal((3, 4))), gen, FadeState(1.0, 0))
    assert disc_forward(x, disc, FadeState(1.0, 0)).shape == (3,)


def test_gradientes_fluem_por_g_e_d(opcoes, rng):
    gen, disc = _redes_no_nivel(opcoes, 1)
    fs = FadeState(0.5, 1)
    with Tape() as fita:
        f_hat = gen_forward(Tensor(rng.standard_normal((2, 8))), gen, fs)
        y = synth_measurement_path(f_hat, NoiseModel(0.1), rng, 2)
        perda = loss_generator(disc_forward(y, disc, fs), "wgan_clip")
    grads = backward(fita, perda)
    for nome in ("g.base.dense.w", "g.n1.conv2.w", "g.torgb.0.w", "g.torgb.1.w"):
        assert np.any(grads.de(gen.params[nome]).data != 0), nome
