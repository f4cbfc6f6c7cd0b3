"""
Escrita atômica de arquivos (arquivo temporário + rename).
"""
import os
import tempfile
from typing import Union

from src.exceptions import ArmazenamentoError
from src.logger import logger


def escrever_atomico(caminho: str, conteudo: Union[bytes, str]) -> str:
    """
    Grava `conteudo` em `caminho` sem deixar arquivo parcial em caso de falha.

    Args:
        caminho: Caminho final do arquivo.
        conteudo: bytes, ou str (gravada em UTF-8).

    Returns:
        O caminho absoluto gravado.

    Raises:
        ArmazenamentoError: Se o diretório não puder ser criado ou o arquivo gravado.
    """
    dados = conteudo.encode("utf-8") if isinstance(conteudo, str) else conteudo
    caminho_abs = os.path.abspath(caminho)
    pasta = os.path.dirname(caminho_abs)
    try:
        os.makedirs(pasta, exist_ok=True)
        fd, temporario = tempfile.mkstemp(prefix=".tmp_", dir=pasta)
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(dados)
            os.replace(temporario, caminho_abs)
        except BaseException:
            if os.path.exists(temporario):
                os.remove(temporario)
            raise
    except OSError as e:
        logger.error(f"Falha ao gravar '{caminho_abs}': {e}")
        raise ArmazenamentoError(f"Não foi possível gravar '{caminho_abs}': {e}") from e
    logger.debug(f"Arquivo gravado: {caminho_abs} ({len(dados)} bytes)")
    return caminho_abs
