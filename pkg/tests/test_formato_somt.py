import struct

import numpy as np
import pytest

from src.exceptions import (
    ArquivoNaoEncontradoError,
    ArquivoTruncadoError,
    DadosInvalidosError,
    FormatoArquivoInvalidoError,
    MagicInvalidoError,
    VersaoIncompativelError,
)
from src.formato_somt import (
    FLAG_METADADOS,
    FLAG_NOMES,
    codificar_tensores,
    decodificar_tensores,
    ler_somt,
    load_tensors,
    save_tensors,
)


def test_cabecalho_segue_o_layout():
    dados = codificar_tensores({"a": np.arange(6, dtype=np.float32).reshape(2, 3)})
    assert dados[:4] == b"SOMT"
    versao, codigo, flags, contagem = struct.unpack("<BBBI", dados[4:11])
    assert (versao, codigo, flags, contagem) == (1, 1, FLAG_NOMES, 1)
    (tamanho_nome,) = struct.unpack("<H", dados[11:13])
    assert dados[13:13 + tamanho_nome] == b"a"
    assert dados[14] == 2
    assert struct.unpack("<2I", dados[15:23]) == (2, 3)
    np.testing.assert_array_equal(np.frombuffer(dados[23:], dtype="<f4"), np.arange(6))


def test_metadados_ordenados_e_flag():
    dados = codificar_tensores({"x": np.zeros(1, dtype=np.float64)}, {"b": 1, "a": [1, 2]})
    assert dados[6] == FLAG_NOMES | FLAG_METADADOS
    (tamanho,) = struct.unpack("<I", dados[11:15])
    assert dados[15:15 + tamanho] == b'{"a": [1, 2], "b": 1}'
    conteudo = decodificar_tensores(dados)
    assert conteudo.metadados == {"a": [1, 2], "b": 1}
    assert conteudo.dtype == np.float64


def test_ordem_dos_tensores_preservada(tmp_path, rng):
    tensores = {"z": rng.standard_normal((2, 2)), "a": rng.standard_normal(3), "m": np.array(1.5)}
    caminho = str(tmp_path / "t.somt")
    save_tensors(caminho, tensores)
    lidos = load_tensors(caminho)
    assert list(lidos) == ["z", "a", "m"]
    for nome in tensores:
        np.testing.assert_array_equal(lidos[nome], tensores[nome])


def test_complexo_f32_intercalado():
    z = np.array([1 + 2j, 3 - 4j], dtype=np.complex64)
    dados = codificar_tensores({"z": z})
    assert dados[5] == 3
    np.testing.assert_array_equal(np.frombuffer(dados[-16:], dtype="<f4"), [1, 2, 3, -4])
    np.testing.assert_array_equal(decodificar_tensores(dados).tensores["z"], z)


def test_dtypes_misturados_exigem_conversao_explicita():
    tensores = {"a": np.zeros(2, dtype=np.float32), "b": np.zeros(2, dtype=np.float64)}
    with pytest.raises(DadosInvalidosError):
        codificar_tensores(tensores)
    conteudo = decodificar_tensores(codificar_tensores(tensores, dtype=np.float64))
    assert conteudo.tensores["a"].dtype == np.float64


def test_magic_invalido():
    dados = bytearray(codificar_tensores({"a": np.zeros(1, dtype=np.float32)}))
    dados[:4] = b"XXXX"
    with pytest.raises(MagicInvalidoError):
        decodificar_tensores(bytes(dados))


def test_versao_incompativel():
    dados = bytearray(codificar_tensores({"a": np.zeros(1, dtype=np.float32)}))
    dados[4] = 2
    with pytest.raises(VersaoIncompativelError):
        decodificar_tensores(bytes(dados))


@pytest.mark.parametrize("corte", [6, 12, 20, -1])
def test_arquivo_truncado(corte):
    dados = codificar_tensores({"abc": np.ones((2, 2), dtype=np.float32)}, {"k": "v"})
    with pytest.raises(ArquivoTruncadoError):
        decodificar_tensores(dados[:corte])


def test_bytes_excedentes():
    dados = codificar_tensores({"a": np.zeros(1, dtype=np.float32)}) + b"\x00"
    with pytest.raises(FormatoArquivoInvalidoError):
        decodificar_tensores(dados)


def test_dtype_desconhecido():
    dados = bytearray(codificar_tensores({"a": np.zeros(1, dtype=np.float32)}))
    dados[5] = 9
    with pytest.raises(FormatoArquivoInvalidoError):
        decodificar_tensores(bytes(dados))


def test_sem_tabela_de_nomes_usa_indices():
    payload = np.array([1.0, 2.0], dtype="<f4").tobytes()
    dados = b"SOMT" + struct.pack("<BBBI", 1, 1, 0, 1) + struct.pack("<B", 1) + struct.pack("<I", 2) + payload
    assert list(decodificar_tensores(dados).tensores) == ["t0"]


def test_arquivo_inexistente(tmp_path):
    with pytest.raises(ArquivoNaoEncontradoError):
        ler_somt(str(tmp_path / "nao_existe.somt"))


def test_escrita_atomica_nao_deixa_temporarios(tmp_path):
    caminho = tmp_path / "saida.somt"
    save_tensors(str(caminho), {"a": np.zeros(3, dtype=np.float32)})
    save_tensors(str(caminho), {"a": np.ones(3, dtype=np.float32)})
    assert [p.name for p in tmp_path.iterdir()] == ["saida.somt"]
    np.testing.assert_array_equal(load_tensors(str(caminho))["a"], np.ones(3))


def test_gravacao_deterministica(tmp_path, rng):
    tensores = {"a": rng.standard_normal((3, 3)).astype(np.float32)}
    meta = {"seed": 1, "config": {"x": 1.5}}
    save_tensors(str(tmp_path / "1.somt"), tensores, meta)
    save_tensors(str(tmp_path / "2.somt"), tensores, meta)
    assert (tmp_path / "1.somt").read_bytes() == (tmp_path / "2.somt").read_bytes()
