"""
Validação por tarefa: detecção SKE com o observador de Hotelling (HO).

A covariância dos dados é K = sigma²·I + A·Aᵀ, com A (p² × N) formado pelas
ROIs centradas e escaladas por 1/√(N−1). O template w = K⁻¹s é obtido pela
identidade de Woodbury, resolvendo apenas um sistema N×N.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm, rankdata

from src.exceptions import (
    CovarianciaSingularError,
    DadosInvalidosError,
    ResolucaoIncompativelError,
    ValidacaoError,
)
from src.gerador_rasters import pontos_como_lista
from src.logger import logger


@dataclass(frozen=True)
class ROISpec:
    """ROI quadrada de lado p; o canto superior esquerdo é (centro − p//2)."""
    centro_linha: int
    centro_coluna: int
    p: int = 32

    @classmethod
    def central(cls, n: int, p: int) -> "ROISpec":
        return cls(n // 2, n // 2, p)

    @property
    def inicio(self) -> Tuple[int, int]:
        return self.centro_linha - self.p // 2, self.centro_coluna - self.p // 2

    def validar(self, n_linhas: int, n_colunas: int) -> None:
        l0, c0 = self.inicio
        if self.p < 1 or l0 < 0 or c0 < 0 or l0 + self.p > n_linhas or c0 + self.p > n_colunas:
            raise DadosInvalidosError(
                f"ROI {self.p}x{self.p} centrada em ({self.centro_linha}, {self.centro_coluna}) "
                f"sai da imagem {n_linhas}x{n_colunas}")


def _como_imagens(imagens: np.ndarray) -> np.ndarray:
    arr = np.asarray(imagens)
    if arr.ndim == 4 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 3:
        raise DadosInvalidosError(f"Imagens com forma {arr.shape}; esperado (N,n,n)")
    return arr


def extract_rois(imagens: np.ndarray, spec: ROISpec) -> np.ndarray:
    """Recortes p×p achatados em ordem row-major: (N, p²) float64."""
    arr = _como_imagens(imagens)
    spec.validar(arr.shape[1], arr.shape[2])
    l0, c0 = spec.inicio
    recortes = arr[:, l0:l0 + spec.p, c0:c0 + spec.p].astype(np.float64)
    return recortes.reshape(arr.shape[0], spec.p * spec.p)


@dataclass(frozen=True)
class CovModel:
    media: np.ndarray
    A: np.ndarray
    sigma2: float

    def densa(self) -> np.ndarray:
        """K = sigma²·I + A·Aᵀ (apenas para instâncias pequenas e testes)."""
        return self.sigma2 * np.eye(self.A.shape[0]) + self.A @ self.A.T


def fit_cov(rois: np.ndarray, sigma2: float) -> CovModel:
    """
    Média amostral e fator de posto baixo A[:, j] = (roi_j − média)/√(N−1).

    Raises:
        DadosInvalidosError: N < 2 ou sigma² negativo.
    """
    rois = np.asarray(rois, dtype=np.float64)
    if rois.ndim != 2 or rois.shape[0] < 2:
        raise DadosInvalidosError(f"fit_cov precisa de N >= 2 ROIs; forma recebida {rois.shape}")
    if not sigma2 >= 0:
        raise DadosInvalidosError(f"sigma² deve ser >= 0; recebido {sigma2}")
    media = rois.mean(axis=0)
    A = (rois - media).T / np.sqrt(rois.shape[0] - 1)
    return CovModel(media, A, float(sigma2))


def hotelling_template(cm: CovModel, s: np.ndarray) -> Tuple[np.ndarray, float]:
    """
    w = K⁻¹s e SNR = sqrt(sᵀK⁻¹s).

    Com sigma² > 0 usa Woodbury:
        K⁻¹s = s/σ² − A·(I_N + AᵀA/σ²)⁻¹·Aᵀs/σ⁴.

    Raises:
        CovarianciaSingularError: sigma² = 0 e A·Aᵀ sem posto completo.
    """
    s = np.asarray(s, dtype=np.float64).reshape(-1)
    A = cm.A
    if s.shape[0] != A.shape[0]:
        raise DadosInvalidosError(f"Sinal com {s.shape[0]} pixels; covariância com {A.shape[0]}")
    if cm.sigma2 > 0:
        s2 = cm.sigma2
        meio = np.eye(A.shape[1]) + (A.T @ A) / s2
        w = s / s2 - A @ np.linalg.solve(meio, A.T @ s / s2) / s2
    else:
        K = A @ A.T
        if np.linalg.matrix_rank(K) < K.shape[0]:
            raise CovarianciaSingularError(
                f"sigma² = 0 e covariância de posto {np.linalg.matrix_rank(K)} < {K.shape[0]}")
        w = np.linalg.solve(K, s)
    snr2 = float(s @ w)
    return w, float(np.sqrt(max(snr2, 0.0)))


@dataclass
class EnsaiosDeteccao:
    """Vetores de dados dos pares de ensaio: g0 = f + n (H0), g1 = f + s + n' (H1)."""
    g0: np.ndarray
    g1: np.ndarray
    indices_fundo: np.ndarray

    def pontuar(self, w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return self.g0 @ w, self.g1 @ w


def run_detection_trials(imagens_fundo: np.ndarray, spec: ROISpec, s: np.ndarray, sigma2: float,
                         n_pairs: int, rng: np.random.Generator) -> EnsaiosDeteccao:
    """
    Sorteia n_pairs fundos distintos; cada par usa o mesmo fundo f com ruídos
    i.i.d. independentes n e n'.

    Raises:
        DadosInvalidosError: Menos fundos distintos do que pares.
    """
    rois = extract_rois(imagens_fundo, spec)
    if n_pairs < 1:
        raise DadosInvalidosError(f"n_pairs deve ser >= 1; recebido {n_pairs}")
    if rois.shape[0] < n_pairs:
        raise DadosInvalidosError(f"Fundos insuficientes: {rois.shape[0]} imagens para {n_pairs} pares")
    s = np.asarray(s, dtype=np.float64).reshape(-1)
    sigma = np.sqrt(sigma2)
    indices = rng.permutation(rois.shape[0])[:n_pairs]
    f = rois[indices]
    g0 = f + rng.normal(0.0, sigma, size=f.shape)
    g1 = f + s + rng.normal(0.0, sigma, size=f.shape)
    return EnsaiosDeteccao(g0, g1, indices)


def empirical_auc(scores0: np.ndarray, scores1: np.ndarray) -> float:
    """Estatística de Mann–Whitney normalizada; empates contam 1/2."""
    s0 = np.asarray(scores0, dtype=np.float64).reshape(-1)
    s1 = np.asarray(scores1, dtype=np.float64).reshape(-1)
    if s0.size == 0 or s1.size == 0:
        raise DadosInvalidosError("empirical_auc: conjuntos de escores vazios")
    postos = rankdata(np.concatenate([s0, s1]))
    u = postos[s0.size:].sum() - s1.size * (s1.size + 1) / 2.0
    return float(u / (s0.size * s1.size))


def roc_points(scores0: np.ndarray, scores1: np.ndarray) -> np.ndarray:
    """
    Pontos (FPR, TPR) de (0,0) a (1,1) varrendo limiares nos pontos médios
    entre escores distintos consecutivos (decisão: t > limiar).
    """
    s0 = np.asarray(scores0, dtype=np.float64).reshape(-1)
    s1 = np.asarray(scores1, dtype=np.float64).reshape(-1)
    if s0.size == 0 or s1.size == 0:
        raise DadosInvalidosError("roc_points: conjuntos de escores vazios")
    distintos = np.unique(np.concatenate([s0, s1]))
    medios = (distintos[:-1] + distintos[1:]) / 2.0
    limiares = np.concatenate([[np.inf], medios[::-1], [-np.inf]])
    fpr = (s0[None, :] > limiares[:, None]).mean(axis=1)
    tpr = (s1[None, :] > limiares[:, None]).mean(axis=1)
    return np.stack([fpr, tpr], axis=1)


def binomial_ci(auc: float, n: int, z: float = 1.96) -> Tuple[float, float]:
    """Intervalo auc ± z·sqrt(auc(1−auc)/n), recortado a [0, 1]."""
    meia = z * np.sqrt(max(auc * (1.0 - auc), 0.0) / n)
    return max(0.0, auc - meia), min(1.0, auc + meia)


def auc_analitica(snr: float) -> float:
    """Φ(SNR/2), a AUC do HO para estatísticas gaussianas."""
    return float(norm.cdf(snr / 2.0))


def calibrate_task_sigma(rois: np.ndarray, s: np.ndarray, auc_alvo: float = 0.85) -> float:
    """
    Desvio padrão do ruído da tarefa tal que Φ(SNR/2) do HO real seja `auc_alvo`.

    SNR²(σ) = Σ (uᵢᵀs)²/(σ² + λᵢ²) + ‖resíduo‖²/σ², com A = U·diag(λ)·Vᵀ,
    é decrescente em σ; a raiz é buscada com brentq em log σ.
    """
    if not 0.5 < auc_alvo < 1.0:
        raise DadosInvalidosError(f"AUC alvo deve estar em (0.5, 1); recebido {auc_alvo}")
    s = np.asarray(s, dtype=np.float64).reshape(-1)
    A = fit_cov(rois, 0.0).A
    U, lambdas, _ = np.linalg.svd(A, full_matrices=False)
    projecoes = U.T @ s
    residuo = max(float(s @ s - projecoes @ projecoes), 0.0)
    snr_alvo = 2.0 * norm.ppf(auc_alvo)

    def excesso(log_sigma: float) -> float:
        s2 = np.exp(2.0 * log_sigma)
        return float(np.sqrt(np.sum(projecoes ** 2 / (s2 + lambdas ** 2)) + residuo / s2)) - snr_alvo

    escala = float(np.sqrt(np.mean(lambdas ** 2) + s @ s / s.size)) or 1.0
    lo, hi = np.log(escala * 1e-6), np.log(escala)
    if excesso(lo) < 0:
        raise DadosInvalidosError(f"AUC alvo {auc_alvo} inatingível para este sinal e fundo")
    for _ in range(60):
        if excesso(hi) < 0:
            break
        hi += np.log(10.0)
    else:
        raise DadosInvalidosError("calibrate_task_sigma: não foi possível limitar a raiz")
    sigma = float(np.exp(brentq(excesso, lo, hi, xtol=1e-12)))
    logger.info(f"sigma da tarefa calibrado: {sigma:.6g} (AUC analítica alvo {auc_alvo})")
    return sigma


def white_noise_like(imagens: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Ruído branco com média e variância de cada pixel iguais às do conjunto (controle negativo)."""
    arr = _como_imagens(imagens).astype(np.float64)
    media = arr.mean(axis=0)
    desvio = arr.std(axis=0)
    return (media + desvio * rng.standard_normal(arr.shape)).astype(np.asarray(imagens).dtype)


@dataclass
class HotellingResult:
    template: np.ndarray
    snr: float
    auc: float
    roc: np.ndarray
    auc_analitica: float


@dataclass
class RelatorioComparacao:
    real: HotellingResult
    sintetico: HotellingResult
    cosseno_template: float
    n_pairs: int
    sigma2: float
    indices_estimacao_real: Tuple[int, int]
    indices_ensaio: Tuple[int, int]
    n_estimacao_sintetico: int
    eco_config: Dict[str, Any] = field(default_factory=dict)

    @property
    def delta_auc(self) -> float:
        return abs(self.sintetico.auc - self.real.auc)

    def para_dict(self) -> Dict[str, Any]:
        return {
            "auc_real": self.real.auc,
            "auc_synth": self.sintetico.auc,
            "delta_auc": self.delta_auc,
            "snr_real": self.real.snr,
            "snr_synth": self.sintetico.snr,
            "template_cosine": self.cosseno_template,
            "roc_real": pontos_como_lista(self.real.roc),
            "roc_synth": pontos_como_lista(self.sintetico.roc),
            "auc_analitica_real": self.real.auc_analitica,
            "auc_analitica_synth": self.sintetico.auc_analitica,
            "ic95_auc_real": list(binomial_ci(self.real.auc, self.n_pairs)),
            "n_pairs": self.n_pairs,
            "sigma2": self.sigma2,
            "divisao": {
                "estimacao_real": list(self.indices_estimacao_real),
                "ensaio_real": list(self.indices_ensaio),
                "estimacao_sintetico": [0, self.n_estimacao_sintetico],
            },
            "config": self.eco_config,
        }


def _cosseno(a: np.ndarray, b: np.ndarray) -> float:
    denominador = np.linalg.norm(a) * np.linalg.norm(b)
    if denominador == 0:
        return 0.0
    return float(np.clip(a @ b / denominador, -1.0, 1.0))


def _observador(rois_estimacao: np.ndarray, s: np.ndarray, sigma2: float,
                ensaios: EnsaiosDeteccao) -> HotellingResult:
    w, snr = hotelling_template(fit_cov(rois_estimacao, sigma2), s)
    t0, t1 = ensaios.pontuar(w)
    return HotellingResult(w, snr, empirical_auc(t0, t1), roc_points(t0, t1), auc_analitica(snr))


def compare_ensembles(reais: np.ndarray, sinteticas: np.ndarray, spec: ROISpec, s: np.ndarray,
                      sigma2: float, n_pairs: int, seed: int,
                      eco_config: Optional[Dict[str, Any]] = None) -> RelatorioComparacao:
    """
    Ajusta um HO em cada conjunto e avalia ambos nos MESMOS ensaios, sorteados
    de fundos reais.

    Divisão por índices: as primeiras N − n_pairs imagens reais estimam a
    covariância; as últimas n_pairs são os fundos dos ensaios. O conjunto
    sintético usa as primeiras min(N − n_pairs, M) imagens.

    Raises:
        ResolucaoIncompativelError: Conjuntos com resoluções diferentes.
        DadosInvalidosError: Imagens reais insuficientes para a divisão.
    """
    reais = _como_imagens(reais)
    sinteticas = _como_imagens(sinteticas)
    if reais.shape[1:] != sinteticas.shape[1:]:
        raise ResolucaoIncompativelError(
            f"Resoluções diferentes: reais {reais.shape[1:]} e sintéticas {sinteticas.shape[1:]}")
    n_reais = reais.shape[0]
    n_estimacao = n_reais - n_pairs
    if n_estimacao < 2:
        raise DadosInvalidosError(
            f"{n_reais} imagens reais não bastam para {n_pairs} pares e ao menos 2 de estimação")
    estimacao = np.arange(0, n_estimacao)
    ensaio = np.arange(n_estimacao, n_reais)
    if np.intersect1d(estimacao, ensaio).size:
        raise ValidacaoError("Fundos de ensaio sobrepõem o conjunto de estimação")
    n_sint = min(n_estimacao, sinteticas.shape[0])
    if n_sint < 2:
        raise DadosInvalidosError(f"Conjunto sintético com {sinteticas.shape[0]} imagens; mínimo 2")

    s = np.asarray(s, dtype=np.float64).reshape(-1)
    ensaios = run_detection_trials(reais[ensaio], spec, s, sigma2, n_pairs, np.random.default_rng(seed))
    real = _observador(extract_rois(reais[estimacao], spec), s, sigma2, ensaios)
    sintetico = _observador(extract_rois(sinteticas[:n_sint], spec), s, sigma2, ensaios)
    relatorio = RelatorioComparacao(
        real=real, sintetico=sintetico, cosseno_template=_cosseno(real.template, sintetico.template),
        n_pairs=n_pairs, sigma2=float(sigma2),
        indices_estimacao_real=(0, n_estimacao), indices_ensaio=(n_estimacao, n_reais),
        n_estimacao_sintetico=n_sint, eco_config=eco_config or {},
    )
    logger.info(f"AUC real {real.auc:.4f} | AUC sintética {sintetico.auc:.4f} | "
                f"|ΔAUC| {relatorio.delta_auc:.4f} | cosseno {relatorio.cosseno_template:.4f}")
    return relatorio


@dataclass
class VerificacaoAceitacao:
    aprovado: bool
    motivos: List[str]


def acceptance_check(relatorio: RelatorioComparacao, limiar_delta: float = 0.05,
                     limiar_cosseno: float = 0.8) -> VerificacaoAceitacao:
    """Aprova quando |ΔAUC| <= limiar_delta e cosseno do template >= limiar_cosseno."""
    motivos = []
    if relatorio.delta_auc > limiar_delta:
        motivos.append(f"|ΔAUC| = {relatorio.delta_auc:.4f} > {limiar_delta}")
    if relatorio.cosseno_template < limiar_cosseno:
        motivos.append(f"cosseno do template = {relatorio.cosseno_template:.4f} < {limiar_cosseno}")
    return VerificacaoAceitacao(not motivos, motivos)
