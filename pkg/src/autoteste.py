"""
Bateria rápida de invariantes numéricos, executada pelo comando `self-test`.

Cada caso produz um erro (relativo ou absoluto) comparado a uma tolerância
fixa; nenhum caso depende de dados gravados em disco.
"""
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from src import imaging
from src import tensor_core as tc
from src.logger import logger
from src.observer import empirical_auc, fit_cov, hotelling_template
from src.utils.debug_tools import debug_tracker

TOL_GRADIENTE = 1e-4
TOL_IDA_VOLTA_F32 = 1e-5
TOL_PARSEVAL = 1e-10
TOL_ADJUNTO = 1e-10
TOL_DFT_INGENUA = 1e-10
TOL_WOODBURY = 1e-8
TOL_EXATO = 1e-12


@dataclass
class CasoAutoteste:
    nome: str
    erro: float
    tolerancia: float

    @property
    def aprovado(self) -> bool:
        return bool(np.isfinite(self.erro)) and self.erro <= self.tolerancia


@dataclass
class ResultadoAutoteste:
    casos: List[CasoAutoteste] = field(default_factory=list)

    @property
    def aprovado(self) -> bool:
        return all(c.aprovado for c in self.casos)

    def falhas(self) -> List[CasoAutoteste]:
        return [c for c in self.casos if not c.aprovado]


def _longe_de_zero(rng: np.random.Generator, forma) -> np.ndarray:
    """Valores com |x| >= 0.1, para não cruzar o joelho da leaky_relu na diferença finita."""
    return rng.uniform(0.1, 1.0, forma) * rng.choice([-1.0, 1.0], forma)


def _entradas_gradiente(rng: np.random.Generator):
    n = rng.standard_normal
    return [
        ("conv2d", [n((2, 2, 4, 4)), n((3, 2, 3, 3))], None),
        ("dense", [n((3, 5)), n((5, 4))], None),
        ("leaky_relu", [_longe_de_zero(rng, (2, 3, 4))], {"inclinacao": 0.2}),
        ("upsample_nearest_2x", [n((2, 2, 2, 2))], None),
        ("avgpool_2x", [n((2, 2, 4, 4))], None),
        ("add", [n((2, 3)), n((2, 3))], None),
        ("scale_by_constant", [n((2, 3))], {"c": 0.37}),
        ("pixel_norm", [n((2, 4, 2, 2))], {"eps": 1e-8}),
        ("reduce_mean", [n((2, 3, 2))], None),
        ("tanh", [n((2, 5))], None),
        ("bias_add", [n((2, 3, 2, 2)), n((3,))], None),
        ("reshape", [n((3, 4))], {"forma": (2, 6)}),
        ("softplus", [n((2, 5))], None),
        ("minibatch_stddev", [n((3, 2, 2, 2))], None),
        ("dft2", [n((2, 1, 4, 4))], None),
        ("idft2_real", [n((2, 2, 4, 4))], None),
    ]


def _dft_ingenua(f: np.ndarray) -> np.ndarray:
    """Soma direta O(n⁴) da DFT 2D unitária."""
    n1, n2 = f.shape
    k1 = np.arange(n1)
    k2 = np.arange(n2)
    fase = np.exp(-2j * np.pi * (np.multiply.outer(k1, k1)[:, None, :, None] / n1
                                 + np.multiply.outer(k2, k2)[None, :, None, :] / n2))
    return np.einsum("abmn,mn->ab", fase, f) / np.sqrt(n1 * n2)


def _auc_forca_bruta(s0: np.ndarray, s1: np.ndarray) -> float:
    total = 0.0
    for a in s0:
        for b in s1:
            total += 1.0 if b > a else (0.5 if b == a else 0.0)
    return total / (len(s0) * len(s1))


def _adam_referencia(p: float, gs: List[float], lr: float, b1: float, b2: float, eps: float) -> float:
    m = v = 0.0
    for t, g in enumerate(gs, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p = p - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    return p


def _relativo(a: np.ndarray, b: np.ndarray) -> float:
    escala = max(float(np.linalg.norm(b)), np.finfo(np.float64).tiny)
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / escala)


@debug_tracker
def executar_autoteste(dft2_fn: Optional[Callable[[np.ndarray], imaging.KSpace]] = None,
                       seed: int = 0) -> ResultadoAutoteste:
    """
    Executa todos os casos e devolve o resultado (não levanta em caso de falha).

    Args:
        dft2_fn: Implementação da DFT usada no caso de Parseval (injetável para
            controle negativo); padrão `imaging.dft2`.
        seed: Semente das entradas aleatórias.
    """
    dft2_fn = dft2_fn or imaging.dft2
    rng = np.random.default_rng(seed)
    resultado = ResultadoAutoteste()

    def registrar(nome: str, erro: float, tolerancia: float) -> None:
        caso = CasoAutoteste(nome, float(erro), tolerancia)
        resultado.casos.append(caso)
        (logger.info if caso.aprovado else logger.error)(
            f"[{'OK' if caso.aprovado else 'FALHA'}] {nome}: erro {caso.erro:.3e} (tolerância {tolerancia:.0e})")

    for op, entradas, attrs in _entradas_gradiente(rng):
        registrar(f"gradiente/{op}", tc.verificar_gradiente(op, entradas, attrs, rng=rng), TOL_GRADIENTE)

    x = rng.standard_normal((2, 3, 4, 4))
    registrar("avgpool∘upsample = identidade",
              float(np.max(np.abs(tc.avgpool_2x_array(tc.upsample_2x_array(x)) - x))), 0.0)

    f64 = rng.standard_normal((16, 16))
    k = dft2_fn(f64)
    k = k.complexo if isinstance(k, imaging.KSpace) else np.asarray(k)
    energia = float(np.sum(f64 ** 2))
    registrar("Parseval (f64)", abs(float(np.sum(np.abs(k) ** 2)) - energia) / energia, TOL_PARSEVAL)

    f8 = rng.standard_normal((8, 8))
    registrar("dft2 vs DFT ingênua (n=8)",
              _relativo(imaging.dft2(f8).complexo, _dft_ingenua(f8)), TOL_DFT_INGENUA)

    f32 = rng.standard_normal((32, 32)).astype(np.float32)
    volta = imaging.reconstruct(imaging.dft2(f32))
    registrar("idft2∘dft2 (f32)", float(np.max(np.abs(volta.astype(np.float64) - f32))), TOL_IDA_VOLTA_F32)

    for op in (imaging.operador_dft2(8), imaging.operador_reconstrucao(8), imaging.operador_reconstrucao_dft2(8)):
        registrar(f"adjunto/{op.nome}", imaging.adjoint_check(op, 5, rng), TOL_ADJUNTO)

    rois = rng.standard_normal((100, 16))
    s = rng.standard_normal(16)
    cm = fit_cov(rois, 0.5)
    w, _ = hotelling_template(cm, s)
    registrar("Woodbury vs inversa densa (p²=16, N=100)", _relativo(w, np.linalg.solve(cm.densa(), s)), TOL_WOODBURY)

    sigma2 = 0.7
    w_branco, _ = hotelling_template(fit_cov(np.full((5, 16), 3.0), sigma2), s)
    registrar("HO em ruído branco: w = s/σ²", _relativo(w_branco, s / sigma2), TOL_EXATO)

    s0 = rng.integers(0, 5, 10).astype(np.float64)
    s1 = rng.integers(1, 6, 10).astype(np.float64)
    registrar("Mann–Whitney vs contagem de pares", abs(empirical_auc(s0, s1) - _auc_forca_bruta(s0, s1)), TOL_EXATO)

    gs = [0.5, -0.25, 1.5]
    params = {"p": tc.Tensor(np.array([1.0]), dtype=np.float64)}
    estado = tc.AdamState.inicial(params, lr=0.1, beta1=0.9, beta2=0.999, epsilon=1e-8)
    for g in gs:
        params, estado = tc.adam_step(params, {"p": np.array([g])}, estado)
    registrar("Adam escalar vs referência",
              abs(params["p"].item() - _adam_referencia(1.0, gs, 0.1, 0.9, 0.999, 1e-8)), TOL_EXATO)

    logger.info(f"Autoteste: {len(resultado.casos) - len(resultado.falhas())}/{len(resultado.casos)} casos aprovados")
    return resultado
