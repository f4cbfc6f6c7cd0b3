import numpy as np
import pytest

from src import tensor_core as tc
from src.exceptions import (
    FormaIncompativelError,
    GradienteNaoFinitoError,
    NumericoError,
    PrimitivaDesconhecidaError,
    TipoDadoIncompativelError,
)
from src.tensor_core import AdamState, Tape, Tensor, adam_step, backward


def _n(rng, *forma):
    return rng.standard_normal(forma)


CASOS_GRADIENTE = [
    ("conv2d", lambda r: [_n(r, 2, 2, 4, 4), _n(r, 3, 2, 3, 3)], None),
    ("conv2d", lambda r: [_n(r, 1, 3, 4, 4), _n(r, 2, 3, 1, 1)], None),
    ("dense", lambda r: [_n(r, 3, 5), _n(r, 5, 4)], None),
    ("leaky_relu", lambda r: [r.uniform(0.1, 1, (2, 6)) * r.choice([-1, 1], (2, 6))], {"inclinacao": 0.2}),
    ("upsample_nearest_2x", lambda r: [_n(r, 2, 1, 2, 2)], None),
    ("avgpool_2x", lambda r: [_n(r, 1, 2, 4, 4)], None),
    ("add", lambda r: [_n(r, 3, 2), _n(r, 3, 2)], None),
    ("scale_by_constant", lambda r: [_n(r, 2, 3)], {"c": -1.7}),
    ("pixel_norm", lambda r: [_n(r, 2, 4)], {"eps": 1e-8}),
    ("pixel_norm", lambda r: [_n(r, 2, 3, 2, 2)], {"eps": 1e-8}),
    ("reduce_mean", lambda r: [_n(r, 4, 3)], None),
    ("tanh", lambda r: [_n(r, 3, 3)], None),
    ("bias_add", lambda r: [_n(r, 2, 3), _n(r, 3)], None),
    ("bias_add", lambda r: [_n(r, 2, 3, 2, 2), _n(r, 3)], None),
    ("reshape", lambda r: [_n(r, 2, 6)], {"forma": (3, 2, 2)}),
    ("softplus", lambda r: [_n(r, 2, 4)], None),
    ("minibatch_stddev", lambda r: [_n(r, 4, 2, 2, 2)], None),
]


@pytest.mark.parametrize("op,entradas,attrs", CASOS_GRADIENTE, ids=[c[0] for c in CASOS_GRADIENTE])
def test_gradiente_confere_com_diferencas_centrais(op, entradas, attrs, rng):
    assert tc.verificar_gradiente(op, entradas(rng), attrs, rng=rng) <= 1e-4


def test_todas_as_primitivas_estao_registradas():
    import src.imaging  # noqa: F401  (registra dft2 e idft2_real)
    esperadas = {"conv2d", "dense", "leaky_relu", "upsample_nearest_2x", "avgpool_2x", "add",
                 "scale_by_constant", "pixel_norm", "reduce_mean", "tanh", "bias_add", "reshape",
                 "softplus", "minibatch_stddev", "dft2", "idft2_real"}
    assert esperadas <= set(tc.primitivas_registradas())


def test_tensor_e_imutavel():
    t = Tensor(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        t.data[0, 0] = 1.0


def test_tensor_rejeita_dtype_e_dimensoes():
    with pytest.raises(TipoDadoIncompativelError):
        Tensor(np.zeros(3), dtype=np.int32)
    with pytest.raises(FormaIncompativelError):
        Tensor(np.zeros((1, 1, 1, 1, 1)))


def test_erro_de_forma_cita_primitiva_e_formas():
    x = Tensor(np.zeros((2, 3, 4, 4)))
    w = Tensor(np.zeros((5, 2, 3, 3)))
    with pytest.raises(FormaIncompativelError) as exc:
        tc.conv2d(x, w)
    mensagem = str(exc.value)
    assert "conv2d" in mensagem and "(2, 3, 4, 4)" in mensagem and "(5, 2, 3, 3)" in mensagem


def test_dtypes_misturados_sao_rejeitados():
    a = Tensor(np.zeros(3), dtype=np.float32)
    b = Tensor(np.zeros(3), dtype=np.float64)
    with pytest.raises(TipoDadoIncompativelError):
        tc.add(a, b)


def test_primitiva_desconhecida():
    with pytest.raises(PrimitivaDesconhecidaError):
        tc.forward_primitive("nao_existe", [Tensor(np.zeros(1))])


def test_fita_so_grava_quando_ativa():
    x = Tensor(np.ones((2, 2)))
    tc.tanh(x)
    with Tape() as fita:
        y = tc.tanh(x)
        tc.reduce_mean(y)
    assert len(fita) == 2
    assert tc.fita_ativa() is None


def test_backward_exige_perda_escalar_da_fita():
    x = Tensor(np.ones((2, 2)))
    with Tape() as fita:
        y = tc.tanh(x)
    with pytest.raises(NumericoError):
        backward(fita, y)
    fora = tc.reduce_mean(x)
    with pytest.raises(NumericoError):
        backward(fita, fora)


def test_backward_composto_confere_com_analitico(rng):
    x = Tensor(rng.standard_normal((3, 4)))
    w = Tensor(rng.standard_normal((4, 2)))
    with Tape() as fita:
        perda = tc.reduce_mean(tc.dense(x, w))
    grads = backward(fita, perda)
    esperado_w = np.repeat(x.data.sum(axis=0)[:, None], 2, axis=1) / 6.0
    np.testing.assert_allclose(grads.de(w).data, esperado_w, rtol=1e-12)


def test_no_fora_do_caminho_recebe_gradiente_zero(rng):
    x = Tensor(rng.standard_normal((2, 2)))
    z = Tensor(rng.standard_normal((2, 2)))
    with Tape() as fita:
        tc.tanh(z)
        perda = tc.reduce_mean(x)
    grads = backward(fita, perda)
    np.testing.assert_array_equal(grads.de(z).data, np.zeros((2, 2)))


def test_avgpool_desfaz_upsample_exatamente(rng):
    for dtype in (np.float32, np.float64):
        x = rng.standard_normal((2, 3, 4, 4)).astype(dtype)
        np.testing.assert_array_equal(tc.avgpool_2x_array(tc.upsample_2x_array(x)), x)


def test_upsample_replica_blocos():
    x = np.arange(4.0).reshape(1, 1, 2, 2)
    y = tc.upsample_2x_array(x)
    np.testing.assert_array_equal(y[0, 0], [[0, 0, 1, 1], [0, 0, 1, 1], [2, 2, 3, 3], [2, 2, 3, 3]])


def test_modo_deterministico_preserva_resultado(rng):
    x = Tensor(rng.standard_normal((3, 5, 2, 2)))
    livre = tc.pixel_norm(x).data
    tc.definir_modo_deterministico(True)
    try:
        fixo1 = tc.pixel_norm(x).data
        fixo2 = tc.pixel_norm(x).data
    finally:
        tc.definir_modo_deterministico(False)
    np.testing.assert_array_equal(fixo1, fixo2)
    np.testing.assert_allclose(fixo1, livre, rtol=1e-12)


def test_minibatch_stddev_acrescenta_canal_constante(rng):
    x = Tensor(rng.standard_normal((4, 2, 2, 2)))
    y = tc.minibatch_stddev(x).data
    assert y.shape == (4, 3, 2, 2)
    esperado = np.mean(np.sqrt(np.var(x.data, axis=0) + 1e-8))
    np.testing.assert_allclose(y[:, 2], esperado, rtol=1e-12)


def _adam_escalar(p, gs, lr, b1, b2, eps):
    m = v = 0.0
    for t, g in enumerate(gs, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    return p


def test_adam_confere_com_referencia_escalar():
    params = {"p": Tensor(np.array([0.5]))}
    estado = AdamState.inicial(params, lr=0.01, beta1=0.0, beta2=0.99, epsilon=1e-8)
    gs = [1.0, -2.0, 0.5, 0.25]
    for g in gs:
        params, estado = adam_step(params, {"p": np.array([g])}, estado)
    assert estado.t == 4
    assert params["p"].item() == pytest.approx(_adam_escalar(0.5, gs, 0.01, 0.0, 0.99, 1e-8), abs=1e-14)


def test_adam_nao_modifica_entradas():
    params = {"p": Tensor(np.array([1.0, 2.0]))}
    estado = AdamState.inicial(params)
    novos, novo_estado = adam_step(params, {"p": np.array([0.1, 0.1])}, estado)
    np.testing.assert_array_equal(params["p"].data, [1.0, 2.0])
    assert estado.t == 0 and novo_estado.t == 1
    assert not np.array_equal(novos["p"].data, params["p"].data)


def test_adam_rejeita_gradiente_nao_finito():
    params = {"camada.w": Tensor(np.zeros(2))}
    estado = AdamState.inicial(params)
    with pytest.raises(GradienteNaoFinitoError) as exc:
        adam_step(params, {"camada.w": np.array([np.nan, 0.0])}, estado)
    assert exc.value.nome_parametro == "camada.w"


def test_adam_rejeita_formas_divergentes():
    params = {"w": Tensor(np.zeros(2))}
    estado = AdamState.inicial(params)
    with pytest.raises(FormaIncompativelError):
        adam_step(params, {"w": np.zeros(3)}, estado)


def test_adam_estender_zera_momentos_novos():
    params = {"a": Tensor(np.zeros(2))}
    estado = AdamState.inicial(params)
    params, estado = adam_step(params, {"a": np.ones(2)}, estado)
    estendido = estado.estender({**params, "b": Tensor(np.zeros(3))})
    np.testing.assert_array_equal(estendido.m["b"], np.zeros(3))
    np.testing.assert_array_equal(estendido.m["a"], estado.m["a"])
    assert estendido.t == estado.t
