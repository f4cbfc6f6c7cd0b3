"""
Modelo de objeto estocástico de referência (fundo "lumpy") e geração do
conjunto de treinamento: objetos limpos, k-space ruidoso e reconstruções.

Cada amostra usa sub-fluxos próprios de números aleatórios derivados de
(seed, fluxo, índice): fluxo 0 para o objeto e fluxo 1 para o ruído de
medição. Isso torna a geração paralelizável sem perder a reprodutibilidade
e permite refazer qualquer medição a partir do cabeçalho do arquivo.
"""
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Optional, Sequence

import numpy as np

# Adiciona o diretório raiz ao path para encontrar 'config.py'
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
import config

from src.exceptions import ArmazenamentoError, DadosInvalidosError, FormatoArquivoInvalidoError
from src.formato_somt import load_tensors, ler_somt, save_tensors  # noqa: F401  (reexportados)
from src.imaging import KSpace, NoiseModel, measure, reconstruct
from src.logger import logger
from src.utils.debug_tools import debug_tracker

FLUXO_OBJETOS = 0
FLUXO_RUIDO = 1


@dataclass(frozen=True)
class LumpyParams:
    """Parâmetros do fundo lumpy: média de Poisson, amplitude, largura (pixels) e lado n."""
    nbar: float = config.LUMPY_NBAR
    amplitude: float = config.LUMPY_AMPLITUDE
    width: float = config.LUMPY_WIDTH
    n: int = config.DATASET_SIZE

    def __post_init__(self):
        if not (self.nbar >= 0):
            raise DadosInvalidosError(f"nbar deve ser >= 0; recebido {self.nbar}")
        if not (self.amplitude > 0):
            raise DadosInvalidosError(f"amplitude deve ser > 0; recebido {self.amplitude}")
        if not (self.width > 0):
            raise DadosInvalidosError(f"width deve ser > 0; recebido {self.width}")
        if self.n not in config.TAMANHOS_VALIDOS:
            raise DadosInvalidosError(f"n={self.n} inválido; use um de {config.TAMANHOS_VALIDOS}")

    @property
    def media_teorica(self) -> float:
        """Valor médio por pixel esperado (w << n): nbar·a·2πw²/n²."""
        return self.nbar * self.amplitude * 2 * np.pi * self.width ** 2 / self.n ** 2


def _perfil_toroidal(coordenadas: np.ndarray, centros: np.ndarray, n: int, largura: float) -> np.ndarray:
    """exp(-d²/2w²) com d a distância de imagem mínima sobre o toro, forma (k, n)."""
    d = coordenadas[None, :] - centros[:, None]
    d = d - n * np.round(d / n)
    return np.exp(-(d * d) / (2.0 * largura * largura))


def sample_lumpy(p: LumpyParams, rng: np.random.Generator) -> np.ndarray:
    """
    Sorteia uma imagem do fundo lumpy (float64, n×n).

    N ~ Poisson(nbar) blobs gaussianos com centros contínuos uniformes em
    [0, n)², com borda periódica.
    """
    k = int(rng.poisson(p.nbar))
    if k == 0:
        return np.zeros((p.n, p.n))
    centros = rng.uniform(0.0, p.n, size=(k, 2))
    coords = np.arange(p.n, dtype=np.float64)
    perfil_linhas = _perfil_toroidal(coords, centros[:, 0], p.n, p.width)
    perfil_colunas = _perfil_toroidal(coords, centros[:, 1], p.n, p.width)
    return p.amplitude * np.einsum("ki,kj->ij", perfil_linhas, perfil_colunas)


def rng_amostra(seed: int, fluxo: int, indice: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(fluxo), int(indice)])


@dataclass
class Dataset:
    """Conjunto alinhado: objetos (N,n,n), kspace (N,n,n,2) e reconstrucoes (N,n,n), float32."""
    objetos: np.ndarray
    kspace: np.ndarray
    reconstrucoes: np.ndarray
    metadados: Dict[str, Any] = field(default_factory=dict)
    caminho: Optional[str] = None

    @property
    def count(self) -> int:
        return int(self.objetos.shape[0])

    @property
    def n(self) -> int:
        return int(self.objetos.shape[-1])

    @property
    def sigma_k(self) -> float:
        return float(self.metadados.get("sigma_k", 0.0))

    def kspace_de(self, indice: int) -> KSpace:
        return KSpace(self.kspace[indice, ..., 0], self.kspace[indice, ..., 1])


def _gerar_objetos(p: LumpyParams, count: int, seed: int, threads: int) -> np.ndarray:
    def uma(indice: int) -> np.ndarray:
        return sample_lumpy(p, rng_amostra(seed, FLUXO_OBJETOS, indice))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            imagens = list(executor.map(uma, range(count)))
    else:
        imagens = [uma(i) for i in range(count)]
    return np.stack(imagens)


@debug_tracker
def gen_dataset(p: LumpyParams,
                count: int,
                nm: Optional[NoiseModel],
                seed: int,
                caminho: str,
                fator_ruido: float = config.NOISE_FACTOR,
                normalizar: bool = True,
                threads: Optional[int] = None,
                eco_config: Optional[Dict[str, Any]] = None) -> Dataset:
    """
    Gera e grava o conjunto de treinamento.

    Args:
        p: Parâmetros do modelo lumpy.
        count: Número de imagens (>= 1, cabe em u32).
        nm: Modelo de ruído explícito; se None, sigma_k = fator_ruido × RMS
            dos objetos (após a normalização, quando ativa).
        seed: Semente raiz dos sub-fluxos.
        caminho: Arquivo SOMT de saída.
        normalizar: Normaliza o conjunto para média zero e RMS unitário antes da medição.
        threads: Trabalhadores para o sorteio dos objetos (padrão: config.THREADS).
        eco_config: Configuração resolvida, gravada nos metadados.

    Returns:
        O Dataset gravado.

    Raises:
        DadosInvalidosError: count < 1.
        ArmazenamentoError: count acima de u32 ou caminho não gravável.
    """
    if count < 1:
        raise DadosInvalidosError(f"count deve ser >= 1; recebido {count}")
    if count > 0xFFFFFFFF:
        raise ArmazenamentoError(f"count={count} não cabe no campo u32 do formato SOMT")
    threads = threads or config.THREADS

    logger.info(f"Gerando {count} objetos lumpy {p.n}x{p.n} (nbar={p.nbar}, a={p.amplitude}, w={p.width}, seed={seed})")
    brutos = _gerar_objetos(p, count, seed, threads)

    media, rms = 0.0, 1.0
    if normalizar:
        media = float(np.mean(brutos))
        rms = float(np.sqrt(np.mean((brutos - media) ** 2)))
        if rms == 0.0:
            logger.warning("Conjunto constante (RMS nulo); normalização aplica apenas o deslocamento da média")
            rms = 1.0
        objetos = ((brutos - media) / rms).astype(np.float32)
    else:
        objetos = brutos.astype(np.float32)

    if nm is None:
        rms_objetos = float(np.sqrt(np.mean(objetos.astype(np.float64) ** 2)))
        nm = NoiseModel(fator_ruido * rms_objetos)
    logger.info(f"sigma_k = {nm.sigma_k:.6g} (normalização: média={media:.6g}, rms={rms:.6g})")

    kspace = np.empty(objetos.shape + (2,), dtype=np.float32)
    reconstrucoes = np.empty_like(objetos)
    for i in range(count):
        g = measure(objetos[i], nm, rng_amostra(seed, FLUXO_RUIDO, i))
        kspace[i, ..., 0] = g.real
        kspace[i, ..., 1] = g.imag
        reconstrucoes[i] = reconstruct(g)

    metadados = {
        "tipo": "dataset",
        "versao_gerador": 1,
        "count": count,
        "n": p.n,
        "seed": seed,
        "sigma_k": nm.sigma_k,
        "lumpy": asdict(p),
        "normalizacao": {"ativa": normalizar, "media": media, "rms": rms},
        "subfluxos": {"objetos": FLUXO_OBJETOS, "ruido": FLUXO_RUIDO, "semente": "default_rng([seed, fluxo, indice])"},
        "kspace": "eixo final = (real, imag), DFT unitária",
        "config": eco_config or {},
    }
    save_tensors(caminho, {"objetos": objetos, "kspace": kspace, "reconstrucoes": reconstrucoes}, metadados)
    logger.info(f"Conjunto gravado em {caminho}")
    return Dataset(objetos, kspace, reconstrucoes, metadados, caminho)


def carregar_dataset(caminho: str) -> Dataset:
    """
    Lê um conjunto gravado por `gen_dataset`.

    Raises:
        FormatoArquivoInvalidoError: Tensores ausentes ou com formas desalinhadas.
    """
    conteudo = ler_somt(caminho)
    faltando = [k for k in ("objetos", "kspace", "reconstrucoes") if k not in conteudo.tensores]
    if faltando:
        raise FormatoArquivoInvalidoError(f"'{caminho}' não é um conjunto de dados (faltam {faltando})")
    objetos = conteudo.tensores["objetos"]
    kspace = conteudo.tensores["kspace"]
    reconstrucoes = conteudo.tensores["reconstrucoes"]
    if (objetos.ndim != 3 or reconstrucoes.shape != objetos.shape
            or kspace.shape != objetos.shape + (2,) or objetos.shape[1] != objetos.shape[2]):
        raise FormatoArquivoInvalidoError(
            f"'{caminho}': formas desalinhadas objetos={objetos.shape} kspace={kspace.shape} "
            f"reconstrucoes={reconstrucoes.shape}")
    return Dataset(objetos, kspace, reconstrucoes, conteudo.metadados, caminho)


def verificar_medicoes(ds: Dataset, indices: Optional[Sequence[int]] = None) -> float:
    """
    Refaz g = dft2(f) + ruído a partir do sub-fluxo registrado e devolve o
    maior desvio absoluto em relação ao k-space gravado (0 para um arquivo íntegro).
    """
    seed = int(ds.metadados["seed"])
    fluxo = int(ds.metadados.get("subfluxos", {}).get("ruido", FLUXO_RUIDO))
    nm = NoiseModel(ds.sigma_k)
    indices = range(ds.count) if indices is None else indices
    desvio = 0.0
    for i in indices:
        g = measure(ds.objetos[i], nm, rng_amostra(seed, fluxo, i))
        desvio = max(desvio,
                     float(np.max(np.abs(g.real - ds.kspace[i, ..., 0]))),
                     float(np.max(np.abs(g.imag - ds.kspace[i, ..., 1]))))
    return desvio


@dataclass(frozen=True)
class GaussianBlobSignal:
    """Sinal paramétrico para a tarefa SKE: blob gaussiano deslocado do centro da ROI."""
    amplitude: float
    width: float
    offset_linha: float = 0.0
    offset_coluna: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.amplitude) or self.amplitude == 0:
            raise DadosInvalidosError(f"amplitude do sinal deve ser finita e não nula; recebido {self.amplitude}")
        if not (self.width > 0):
            raise DadosInvalidosError(f"largura do sinal deve ser > 0; recebido {self.width}")

    def rasterizar(self, p: int) -> np.ndarray:
        """Imagem p×p (float64) com o blob centrado em (p//2 + offset_linha, p//2 + offset_coluna)."""
        coords = np.arange(p, dtype=np.float64)
        dy = coords - (p // 2 + self.offset_linha)
        dx = coords - (p // 2 + self.offset_coluna)
        s = self.amplitude * np.exp(-(dy[:, None] ** 2 + dx[None, :] ** 2) / (2.0 * self.width ** 2))
        if not np.any(s):
            raise DadosInvalidosError(f"Sinal {self} é nulo numa ROI {p}x{p}")
        return s

    @classmethod
    def de_texto(cls, texto: str) -> "GaussianBlobSignal":
        """Lê 'amplitude,width,offset_linha,offset_coluna' (offsets opcionais)."""
        try:
            valores = [float(v) for v in texto.split(",")]
        except ValueError as e:
            raise DadosInvalidosError(f"Sinal inválido '{texto}': {e}") from e
        if not 2 <= len(valores) <= 4:
            raise DadosInvalidosError(f"Sinal '{texto}' deve ter 2 a 4 valores")
        return cls(*valores)
