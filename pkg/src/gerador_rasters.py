"""
Geração dos artefatos de saída legíveis: rasters PGM (P5, 8 bits), grades de
amostras, CSV (pandas) e relatórios JSON. Todo artefato recebe a
configuração resolvida, embutida (JSON) ou num arquivo lateral (PGM, CSV).
"""
import json
import math
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from src.exceptions import DadosInvalidosError
from src.formato_somt import converter_json
from src.logger import logger
from src.utils.arquivos import escrever_atomico


def escalar_para_8bits(imagem: np.ndarray) -> tuple:
    """
    Escala linear min-max para 0..255.

    Returns:
        (pixels uint8, mínimo, máximo). Imagem constante vira zeros.
    """
    arr = np.asarray(imagem, dtype=np.float64)
    if arr.ndim != 2:
        raise DadosInvalidosError(f"Raster deve ser 2D; forma {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DadosInvalidosError("Raster contém valores não finitos")
    minimo, maximo = float(arr.min()), float(arr.max())
    if maximo == minimo:
        return np.zeros(arr.shape, dtype=np.uint8), minimo, maximo
    escalado = np.rint((arr - minimo) / (maximo - minimo) * 255.0)
    return np.clip(escalado, 0, 255).astype(np.uint8), minimo, maximo


def _texto_lateral(minimo: float, maximo: float, largura: int, altura: int,
                   metadados: Optional[Mapping[str, Any]]) -> str:
    linhas = [
        "formato=P5",
        "maxval=255",
        f"largura={largura}",
        f"altura={altura}",
        f"minimo={minimo!r}",
        f"maximo={maximo!r}",
        "escala=pixel = rint((valor - minimo) / (maximo - minimo) * 255)",
        "config=" + json.dumps(dict(metadados or {}), sort_keys=True, ensure_ascii=False, default=converter_json),
    ]
    return "\n".join(linhas) + "\n"


def escrever_pgm(caminho: str, imagem: np.ndarray, metadados: Optional[Mapping[str, Any]] = None) -> str:
    """
    Grava um PGM binário (P5, maxval 255) e o arquivo lateral '<caminho>.txt'
    com a escala usada e a configuração.
    """
    pixels, minimo, maximo = escalar_para_8bits(imagem)
    altura, largura = pixels.shape
    cabecalho = f"P5\n{largura} {altura}\n255\n".encode("ascii")
    escrever_atomico(caminho, cabecalho + pixels.tobytes())
    escrever_atomico(f"{caminho}.txt", _texto_lateral(minimo, maximo, largura, altura, metadados))
    logger.debug(f"PGM gravado: {caminho} ({largura}x{altura}, faixa [{minimo:.4g}, {maximo:.4g}])")
    return caminho


def ler_pgm(caminho: str) -> np.ndarray:
    """Lê um PGM P5 de 8 bits gravado por `escrever_pgm`."""
    with open(caminho, "rb") as f:
        dados = f.read()
    partes = dados.split(b"\n", 3)
    if len(partes) < 4 or partes[0] != b"P5":
        raise DadosInvalidosError(f"'{caminho}' não é um PGM P5")
    largura, altura = (int(v) for v in partes[1].split())
    return np.frombuffer(partes[3], dtype=np.uint8).reshape(altura, largura)


def dimensoes_grade(count: int) -> tuple:
    """(linhas, colunas) com colunas = ceil(sqrt(count)): 25 -> 5×5, 16 -> 4×4, 10 -> 3×4."""
    if count < 1:
        raise DadosInvalidosError(f"Grade precisa de ao menos uma imagem; recebido {count}")
    colunas = math.ceil(math.sqrt(count))
    linhas = math.ceil(count / colunas)
    return linhas, colunas


def montar_grade(imagens: np.ndarray) -> np.ndarray:
    """Justapõe (N,r,r) numa grade sem separadores; células vazias recebem o mínimo global."""
    arr = np.asarray(imagens, dtype=np.float64)
    if arr.ndim == 4:
        arr = arr[:, 0]
    if arr.ndim != 3:
        raise DadosInvalidosError(f"Imagens com forma {arr.shape}; esperado (N,r,r)")
    n, r, c = arr.shape
    linhas, colunas = dimensoes_grade(n)
    grade = np.full((linhas * r, colunas * c), arr.min())
    for i in range(n):
        li, ci = divmod(i, colunas)
        grade[li * r:(li + 1) * r, ci * c:(ci + 1) * c] = arr[i]
    return grade


def escrever_grade_pgm(caminho: str, imagens: np.ndarray, metadados: Optional[Mapping[str, Any]] = None) -> str:
    return escrever_pgm(caminho, montar_grade(imagens), metadados)


def escrever_csv(caminho: str, tabela: pd.DataFrame, metadados: Optional[Mapping[str, Any]] = None) -> str:
    """CSV com '\\n' como fim de linha; a configuração vai para '<caminho>.json'."""
    texto = tabela.to_csv(index=False, lineterminator="\n")
    escrever_atomico(caminho, texto)
    if metadados is not None:
        escrever_json(f"{caminho}.json", metadados)
    return caminho


def escrever_roc_csv(caminho: str, pontos: Sequence[Sequence[float]],
                     metadados: Optional[Mapping[str, Any]] = None) -> str:
    tabela = pd.DataFrame(np.asarray(pontos, dtype=np.float64).reshape(-1, 2), columns=["fpr", "tpr"])
    return escrever_csv(caminho, tabela, metadados)


def escrever_json(caminho: str, dados: Mapping[str, Any]) -> str:
    texto = json.dumps(dict(dados), sort_keys=True, indent=2, ensure_ascii=False, default=converter_json)
    return escrever_atomico(caminho, texto + "\n")


def pontos_como_lista(pontos: np.ndarray) -> List[List[float]]:
    return [[float(a), float(b)] for a, b in np.asarray(pontos)]


def resumo_imagens(imagens: np.ndarray) -> Dict[str, float]:
    arr = np.asarray(imagens, dtype=np.float64)
    return {"min": float(arr.min()), "max": float(arr.max()), "media": float(arr.mean()), "desvio": float(arr.std())}
