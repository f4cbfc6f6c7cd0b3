# logger.py
"""
Sistema de logging do somforge (loguru).

Uso:
    from src.logger import logger, configurar_logger
    configurar_logger("DEBUG", arquivo_log="logs/somforge.log")
    logger.info("Mensagem")
"""
import os
import sys
from typing import Optional

from loguru import logger

# Adiciona o diretório raiz ao path para encontrar 'config.py'
project_root_candidate = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if project_root_candidate not in sys.path:
    sys.path.insert(0, project_root_candidate)

import config

FORMATO_ARQUIVO = "{time:YYYY-MM-DD HH:mm:ss.SSS} | {level: <8} | {name}:{function}:{line} - {message}"
FORMATO_CONSOLE = "<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | <cyan>{name}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>"
FORMATO_CONSOLE_SIMPLES = "<level>{level}</level>: {message}"


def configurar_logger(nivel: Optional[str] = None,
                      arquivo_log: Optional[str] = None,
                      serializar: bool = False) -> None:
    """
    Configura (ou reconfigura) os sinks do loguru.

    Args:
        nivel: Nível mínimo (DEBUG, INFO, ...). Se None, usa config.LOG_LEVEL.
        arquivo_log: Se fornecido, adiciona um sink de arquivo com rotação.
        serializar: Se True, adiciona também um sink JSON (<arquivo_log>.json)
            para análise por máquina.
    """
    nivel_final = (nivel or config.LOG_LEVEL).upper()

    # Limpa handlers pré-existentes para evitar duplicação ao reconfigurar
    logger.remove()

    formato = FORMATO_CONSOLE if nivel_final == "DEBUG" else FORMATO_CONSOLE_SIMPLES
    logger.add(sys.stderr, level=nivel_final, format=formato, colorize=True)

    if arquivo_log:
        pasta = os.path.dirname(arquivo_log)
        if pasta:
            os.makedirs(pasta, exist_ok=True)
        logger.add(
            arquivo_log,
            rotation="10 MB",
            retention="7 days",
            level="DEBUG",
            format=FORMATO_ARQUIVO,
            encoding="utf-8",
        )
        if serializar:
            logger.add(
                f"{arquivo_log}.json",
                serialize=True,
                level="DEBUG",
                rotation="50 MB",
                retention="14 days",
                encoding="utf-8",
            )
    logger.debug(f"Logger configurado. Nível: {nivel_final}. Arquivo: {arquivo_log or '-'}")


# Configuração inicial mínima ao importar o módulo (apenas console).
# main.py chama configurar_logger novamente com os argumentos da linha de comando.
configurar_logger()
