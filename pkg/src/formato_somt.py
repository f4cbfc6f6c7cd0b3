"""
Contêiner binário "SOMT" para conjuntos de tensores nomeados.

Layout (inteiros little-endian):
    magic "SOMT" (4 bytes), u8 versão (=1), u8 dtype (1=f32, 2=f64,
    3=complex-f32 intercalado), u8 flags, u32 número de tensores;
    se flags bit 1: u32 tamanho + JSON UTF-8 (chaves ordenadas) de metadados;
    por tensor: [u16 tamanho + nome UTF-8, se flags bit 0], u8 ndim,
    ndim × u32 dimensões, payload row-major.
"""
import json
import os
import struct
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional

import numpy as np

from src.exceptions import (
    ArmazenamentoError,
    ArquivoNaoEncontradoError,
    ArquivoTruncadoError,
    DadosInvalidosError,
    FormatoArquivoInvalidoError,
    MagicInvalidoError,
    VersaoIncompativelError,
)
from src.logger import logger
from src.utils.arquivos import escrever_atomico

MAGIC = b"SOMT"
VERSAO = 1
FLAG_NOMES = 0x01
FLAG_METADADOS = 0x02

DTYPE_POR_CODIGO = {
    1: np.dtype("<f4"),
    2: np.dtype("<f8"),
    3: np.dtype("<c8"),
}
CODIGO_POR_DTYPE = {np.dtype(np.float32): 1, np.dtype(np.float64): 2, np.dtype(np.complex64): 3}

_LIMITE_U32 = 0xFFFFFFFF
_LIMITE_U16 = 0xFFFF


@dataclass
class ConteudoSOMT:
    """Tensores lidos de um arquivo SOMT, na ordem gravada, e seus metadados."""
    tensores: Dict[str, np.ndarray]
    metadados: Dict[str, Any] = field(default_factory=dict)
    dtype: np.dtype = np.dtype(np.float32)
    versao: int = VERSAO


def converter_json(valor: Any) -> Any:
    if isinstance(valor, np.generic):
        return valor.item()
    if isinstance(valor, np.ndarray):
        return valor.tolist()
    if isinstance(valor, (set, frozenset)):
        return sorted(valor)
    raise TypeError(f"Valor não serializável em metadados: {type(valor).__name__}")


def serializar_metadados(metadados: Mapping[str, Any]) -> bytes:
    return json.dumps(metadados, sort_keys=True, ensure_ascii=False, default=converter_json).encode("utf-8")


def _resolver_dtype(tensores: Mapping[str, np.ndarray], dtype: Optional[Any]) -> np.dtype:
    if dtype is not None:
        alvo = np.dtype(dtype)
    elif tensores:
        alvo = np.asarray(next(iter(tensores.values()))).dtype
    else:
        alvo = np.dtype(np.float32)
    if alvo not in CODIGO_POR_DTYPE:
        raise DadosInvalidosError(f"dtype {alvo} não suportado no formato SOMT")
    return alvo


def codificar_tensores(tensores: Mapping[str, np.ndarray],
                       metadados: Optional[Mapping[str, Any]] = None,
                       dtype: Optional[Any] = None) -> bytes:
    """
    Monta os bytes de um arquivo SOMT.

    Args:
        tensores: Mapa nome -> array (ordem preservada).
        metadados: Proveniência opcional (JSON).
        dtype: dtype do arquivo; sem ele, usa o dtype do primeiro tensor.

    Raises:
        DadosInvalidosError: dtype não suportado ou tensores com dtypes diferentes sem conversão explícita.
        ArmazenamentoError: Contagem, nome ou dimensão que não cabem nos campos do cabeçalho.
    """
    alvo = _resolver_dtype(tensores, dtype)
    if len(tensores) > _LIMITE_U32:
        raise ArmazenamentoError(f"Número de tensores ({len(tensores)}) excede o limite u32")

    flags = FLAG_NOMES | (FLAG_METADADOS if metadados else 0)
    partes = [MAGIC, struct.pack("<BBBI", VERSAO, CODIGO_POR_DTYPE[alvo], flags, len(tensores))]
    if metadados:
        bloco = serializar_metadados(metadados)
        partes.append(struct.pack("<I", len(bloco)))
        partes.append(bloco)

    for nome, valor in tensores.items():
        arr = np.asarray(valor)
        if dtype is None and arr.dtype != alvo:
            raise DadosInvalidosError(
                f"Tensor '{nome}' com dtype {arr.dtype}; o arquivo usa {alvo} (informe dtype para converter)")
        nome_bytes = nome.encode("utf-8")
        if len(nome_bytes) > _LIMITE_U16:
            raise ArmazenamentoError(f"Nome de tensor longo demais ({len(nome_bytes)} bytes)")
        if arr.ndim > 255 or any(d > _LIMITE_U32 for d in arr.shape):
            raise ArmazenamentoError(f"Forma {arr.shape} de '{nome}' não cabe no cabeçalho")
        partes.append(struct.pack("<H", len(nome_bytes)))
        partes.append(nome_bytes)
        partes.append(struct.pack("<B", arr.ndim))
        partes.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        partes.append(np.ascontiguousarray(arr, dtype=DTYPE_POR_CODIGO[CODIGO_POR_DTYPE[alvo]]).tobytes(order="C"))
    return b"".join(partes)


def save_tensors(caminho: str,
                 tensores: Mapping[str, np.ndarray],
                 metadados: Optional[Mapping[str, Any]] = None,
                 dtype: Optional[Any] = None) -> str:
    """Grava tensores nomeados em `caminho` (escrita atômica)."""
    dados = codificar_tensores(tensores, metadados, dtype)
    caminho_final = escrever_atomico(caminho, dados)
    logger.debug(f"SOMT gravado: {caminho_final} ({len(tensores)} tensores)")
    return caminho_final


class _Leitor:
    def __init__(self, dados: bytes, origem: str):
        self.dados = dados
        self.pos = 0
        self.origem = origem

    def ler(self, n: int, oque: str) -> bytes:
        if self.pos + n > len(self.dados):
            raise ArquivoTruncadoError(
                f"'{self.origem}' truncado ao ler {oque}: precisa de {n} bytes no offset {self.pos}, "
                f"restam {len(self.dados) - self.pos}")
        trecho = self.dados[self.pos:self.pos + n]
        self.pos += n
        return trecho

    def desempacotar(self, formato: str, oque: str):
        return struct.unpack(formato, self.ler(struct.calcsize(formato), oque))


def decodificar_tensores(dados: bytes, origem: str = "<memória>") -> ConteudoSOMT:
    """
    Interpreta os bytes de um arquivo SOMT.

    Raises:
        MagicInvalidoError: Os 4 primeiros bytes não são 'SOMT'.
        VersaoIncompativelError: Versão diferente de 1.
        ArquivoTruncadoError: Cabeçalho ou payload incompletos.
        FormatoArquivoInvalidoError: dtype desconhecido, metadados inválidos ou bytes sobrando.
    """
    leitor = _Leitor(dados, origem)
    if len(dados) < 4 or dados[:4] != MAGIC:
        raise MagicInvalidoError(f"'{origem}' não é um arquivo SOMT (magic {dados[:4]!r})")
    leitor.pos = 4
    versao, codigo, flags, contagem = leitor.desempacotar("<BBBI", "cabeçalho")
    if versao != VERSAO:
        raise VersaoIncompativelError(f"'{origem}': versão {versao} não suportada (esperada {VERSAO})")
    if codigo not in DTYPE_POR_CODIGO:
        raise FormatoArquivoInvalidoError(f"'{origem}': código de dtype desconhecido {codigo}")
    dtype_arquivo = DTYPE_POR_CODIGO[codigo]

    metadados: Dict[str, Any] = {}
    if flags & FLAG_METADADOS:
        (tamanho,) = leitor.desempacotar("<I", "tamanho dos metadados")
        bloco = leitor.ler(tamanho, "metadados")
        try:
            metadados = json.loads(bloco.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatoArquivoInvalidoError(f"'{origem}': metadados ilegíveis ({e})") from e

    tensores: Dict[str, np.ndarray] = {}
    for i in range(contagem):
        if flags & FLAG_NOMES:
            (tamanho_nome,) = leitor.desempacotar("<H", f"nome do tensor {i}")
            nome = leitor.ler(tamanho_nome, f"nome do tensor {i}").decode("utf-8")
        else:
            nome = f"t{i}"
        (ndim,) = leitor.desempacotar("<B", f"ndim de '{nome}'")
        forma = leitor.desempacotar(f"<{ndim}I", f"dimensões de '{nome}'") if ndim else ()
        n_elementos = int(np.prod(forma, dtype=np.int64)) if ndim else 1
        payload = leitor.ler(n_elementos * dtype_arquivo.itemsize, f"payload de '{nome}'")
        arr = np.frombuffer(payload, dtype=dtype_arquivo).reshape(forma)
        tensores[nome] = arr.astype(dtype_arquivo.newbyteorder("="))

    if leitor.pos != len(dados):
        raise FormatoArquivoInvalidoError(
            f"'{origem}': {len(dados) - leitor.pos} bytes excedentes após o último tensor")
    return ConteudoSOMT(tensores=tensores, metadados=metadados,
                        dtype=dtype_arquivo.newbyteorder("="), versao=versao)


def ler_somt(caminho: str) -> ConteudoSOMT:
    """Lê um arquivo SOMT completo (tensores + metadados)."""
    if not os.path.isfile(caminho):
        raise ArquivoNaoEncontradoError(f"Arquivo não encontrado: {caminho}")
    try:
        with open(caminho, "rb") as f:
            dados = f.read()
    except OSError as e:
        raise ArmazenamentoError(f"Não foi possível ler '{caminho}': {e}") from e
    conteudo = decodificar_tensores(dados, caminho)
    logger.debug(f"SOMT lido: {caminho} ({len(conteudo.tensores)} tensores, dtype {conteudo.dtype})")
    return conteudo


def load_tensors(caminho: str) -> Dict[str, np.ndarray]:
    """Lê apenas os tensores nomeados de um arquivo SOMT."""
    return ler_somt(caminho).tensores
