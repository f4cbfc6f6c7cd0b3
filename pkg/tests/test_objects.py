import numpy as np
import pytest
from scipy.stats import chi2

from src.exceptions import ArmazenamentoError, DadosInvalidosError, FormatoArquivoInvalidoError
from src.formato_somt import save_tensors
from src.imaging import dft2
from src.objects import (
    GaussianBlobSignal,
    LumpyParams,
    carregar_dataset,
    gen_dataset,
    rng_amostra,
    sample_lumpy,
    verificar_medicoes,
)


def test_nbar_zero_gera_imagem_nula(rng):
    f = sample_lumpy(LumpyParams(nbar=0.0, n=16), rng)
    np.testing.assert_array_equal(f, np.zeros((16, 16)))


def test_imagem_nao_negativa_e_limitada(rng):
    p = LumpyParams(nbar=10.0, amplitude=2.0, width=1.5, n=16)
    for _ in range(20):
        f = sample_lumpy(p, rng)
        assert f.shape == (16, 16)
        assert np.all(f >= 0)


def test_media_empirica_confere_com_teoria():
    p = LumpyParams(nbar=8.0, amplitude=1.0, width=1.5, n=16)
    imagens = np.stack([sample_lumpy(p, rng_amostra(1, 0, i)) for i in range(800)])
    assert np.mean(imagens) == pytest.approx(p.media_teorica, rel=0.05)


@pytest.mark.lento
def test_media_por_pixel_estacionaria():
    # pixels espaçados de 4 (w = 1) para que as médias sejam praticamente independentes;
    # a grade inclui a borda, onde um modelo sem enrolamento teria média menor
    p = LumpyParams(nbar=8.0, amplitude=1.0, width=1.0, n=16)
    n_amostras = 10_000
    imagens = np.stack([sample_lumpy(p, rng_amostra(2, 0, i)) for i in range(n_amostras)])
    grade = imagens[:, ::4, ::4].reshape(n_amostras, -1)
    medias = grade.mean(axis=0)
    variancias = grade.var(axis=0, ddof=1)
    estatistica = np.sum((medias - p.media_teorica) ** 2 / (variancias / n_amostras))
    assert chi2.sf(estatistica, df=grade.shape[1]) > 1e-3


def test_borda_periodica_preserva_a_massa_do_lump():
    # com borda periódica a soma de um lump isolado é 2πw²·a, esteja o centro onde estiver
    p = LumpyParams(nbar=1.0, amplitude=1.0, width=1.0, n=8)
    somas = []
    for seed in range(300):
        if np.random.default_rng(seed).poisson(1.0) == 1:
            somas.append(sample_lumpy(p, np.random.default_rng(seed)).sum())
    assert len(somas) > 20
    np.testing.assert_allclose(somas, 2 * np.pi, rtol=1e-2)


@pytest.mark.parametrize("kwargs", [{"nbar": -1.0}, {"amplitude": 0.0}, {"width": -2.0}, {"n": 12}])
def test_parametros_invalidos(kwargs):
    with pytest.raises(DadosInvalidosError):
        LumpyParams(**kwargs)


def test_gen_dataset_formas_e_metadados(dataset_8):
    ds = dataset_8
    assert ds.count == 40 and ds.n == 8
    assert ds.objetos.dtype == np.float32
    assert ds.kspace.shape == (40, 8, 8, 2)
    meta = ds.metadados
    assert meta["seed"] == 99 and meta["count"] == 40 and meta["n"] == 8
    assert meta["sigma_k"] > 0
    assert meta["lumpy"]["nbar"] == 6.0


def test_normalizacao_media_zero_rms_unitario(dataset_8):
    objetos = dataset_8.objetos.astype(np.float64)
    assert abs(objetos.mean()) <= 1e-5
    assert np.sqrt(np.mean(objetos ** 2)) == pytest.approx(1.0, rel=1e-4)
    assert dataset_8.sigma_k == pytest.approx(0.1, rel=1e-4)


def test_medicoes_reproduziveis_pelo_cabecalho(dataset_8):
    assert verificar_medicoes(dataset_8) == 0.0


def test_sem_ruido_kspace_e_a_dft(dataset_8_sem_ruido):
    ds = dataset_8_sem_ruido
    esperado = dft2(ds.objetos[3])
    np.testing.assert_array_equal(ds.kspace[3, ..., 0], esperado.real)
    np.testing.assert_allclose(ds.reconstrucoes, ds.objetos, atol=1e-5)


def test_geracao_deterministica_e_independente_de_threads(tmp_path, lumpy_8):
    a = gen_dataset(lumpy_8, 10, None, 7, str(tmp_path / "a.somt"), threads=1)
    b = gen_dataset(lumpy_8, 10, None, 7, str(tmp_path / "b.somt"), threads=3)
    assert (tmp_path / "a.somt").read_bytes() == (tmp_path / "b.somt").read_bytes()
    np.testing.assert_array_equal(a.objetos, b.objetos)


def test_prefixo_do_conjunto_nao_depende_do_count(tmp_path, lumpy_8):
    pequeno = gen_dataset(lumpy_8, 5, None, 7, str(tmp_path / "p.somt"), normalizar=False)
    grande = gen_dataset(lumpy_8, 9, None, 7, str(tmp_path / "g.somt"), normalizar=False)
    np.testing.assert_array_equal(pequeno.objetos, grande.objetos[:5])


def test_count_invalido(tmp_path, lumpy_8):
    with pytest.raises(DadosInvalidosError):
        gen_dataset(lumpy_8, 0, None, 1, str(tmp_path / "x.somt"))
    with pytest.raises(ArmazenamentoError):
        gen_dataset(lumpy_8, 2 ** 32, None, 1, str(tmp_path / "x.somt"))


def test_carregar_dataset_ida_e_volta(dataset_8):
    lido = carregar_dataset(dataset_8.caminho)
    np.testing.assert_array_equal(lido.kspace, dataset_8.kspace)
    assert lido.metadados == dataset_8.metadados
    np.testing.assert_array_equal(lido.kspace_de(2).real, dataset_8.kspace[2, ..., 0])


def test_carregar_arquivo_que_nao_e_dataset(tmp_path):
    caminho = str(tmp_path / "outro.somt")
    save_tensors(caminho, {"amostras": np.zeros((2, 4, 4), dtype=np.float32)})
    with pytest.raises(FormatoArquivoInvalidoError):
        carregar_dataset(caminho)


def test_sinal_gaussiano_centrado():
    s = GaussianBlobSignal(2.0, 1.5).rasterizar(16)
    assert s.shape == (16, 16)
    assert np.unravel_index(np.argmax(s), s.shape) == (8, 8)
    assert s.max() == pytest.approx(2.0)


def test_sinal_deslocado_e_texto():
    s = GaussianBlobSignal.de_texto("1.0, 2.0, 2, -3")
    assert (s.offset_linha, s.offset_coluna) == (2.0, -3.0)
    assert np.unravel_index(np.argmax(s.rasterizar(16)), (16, 16)) == (10, 5)


@pytest.mark.parametrize("texto", ["1.0", "a,b", "1,2,3,4,5", "0,1", "1,-1"])
def test_sinal_invalido(texto):
    with pytest.raises(DadosInvalidosError):
        GaussianBlobSignal.de_texto(texto)
