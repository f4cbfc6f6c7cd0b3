"""
Operadores de medição do sistema de RM idealizado: g = F(f) + n.

F é a DFT 2D unitária (escala 1/n no total), implementada como FFT radix-2
iterativa. A reconstrução é a parte real da IDFT. Além das funções sobre
arrays numpy, este módulo registra no motor de tensores as primitivas
diferenciáveis 'dft2' e 'idft2_real', usadas pelo caminho de medição
sintética da ProAGAN.
"""
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from src.exceptions import DadosInvalidosError, FormaIncompativelError
from src.logger import logger
from src import tensor_core as tc


def _potencia_de_2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _validar_tamanho(forma: Tuple[int, ...]) -> None:
    if len(forma) < 2:
        raise FormaIncompativelError(f"DFT 2D requer ao menos 2 dimensões; forma {forma}")
    for n in forma[-2:]:
        if not _potencia_de_2(n):
            raise FormaIncompativelError(f"Tamanho {n} não é potência de 2 (forma {forma})")


def _bit_reverso(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _fft_radix2(x: np.ndarray, inverso: bool) -> np.ndarray:
    """FFT de decimação no tempo no último eixo, sem normalização."""
    n = x.shape[-1]
    a = np.asarray(x, dtype=np.complex128)[..., _bit_reverso(n)]
    sinal = 1.0 if inverso else -1.0
    m = 2
    while m <= n:
        meio = m // 2
        fatores = np.exp(sinal * 2j * np.pi * np.arange(meio) / m)
        blocos = a.reshape(a.shape[:-1] + (n // m, m))
        par = blocos[..., :meio]
        impar = blocos[..., meio:] * fatores
        a = np.concatenate([par + impar, par - impar], axis=-1).reshape(a.shape)
        m *= 2
    return a


def _dft2_complexo(z: np.ndarray, inverso: bool = False) -> np.ndarray:
    _validar_tamanho(z.shape)
    y = _fft_radix2(z, inverso)
    y = np.swapaxes(_fft_radix2(np.swapaxes(y, -1, -2), inverso), -1, -2)
    return y / np.sqrt(z.shape[-1] * z.shape[-2])


def _dtype_real(arr: np.ndarray) -> np.dtype:
    if arr.dtype in (np.float32, np.complex64):
        return np.dtype(np.float32)
    return np.dtype(np.float64)


@dataclass
class KSpace:
    """Dados de k-space em planos real/imaginário separados (unidades da DFT unitária)."""
    real: np.ndarray
    imag: np.ndarray

    def __post_init__(self):
        self.real = np.asarray(self.real)
        self.imag = np.asarray(self.imag)
        if self.real.shape != self.imag.shape:
            raise FormaIncompativelError(f"KSpace: planos com formas {self.real.shape} e {self.imag.shape}")

    @classmethod
    def de_complexo(cls, z: np.ndarray, dtype=np.float64) -> "KSpace":
        return cls(np.real(z).astype(dtype), np.imag(z).astype(dtype))

    @property
    def complexo(self) -> np.ndarray:
        return self.real.astype(np.float64) + 1j * self.imag.astype(np.float64)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.real.shape

    def __add__(self, outro: "KSpace") -> "KSpace":
        return KSpace(self.real + outro.real, self.imag + outro.imag)


@dataclass(frozen=True)
class NoiseModel:
    """Ruído gaussiano complexo i.i.d.: partes real e imaginária ~ N(0, sigma_k²)."""
    sigma_k: float

    def __post_init__(self):
        if not np.isfinite(self.sigma_k) or self.sigma_k < 0:
            raise DadosInvalidosError(f"sigma_k deve ser finito e >= 0; recebido {self.sigma_k}")


def dft2(f: np.ndarray) -> KSpace:
    """
    DFT 2D unitária de uma imagem real (ou lote de imagens, eixos finais n×n).

    Raises:
        FormaIncompativelError: Se os lados não forem potências de 2.
    """
    f = np.asarray(f)
    return KSpace.de_complexo(_dft2_complexo(f, inverso=False), _dtype_real(f))


def idft2(g: KSpace) -> np.ndarray:
    """IDFT 2D unitária; devolve a imagem complexa (complex128)."""
    return _dft2_complexo(g.complexo, inverso=True)


def real_part(z: np.ndarray, dtype=np.float64) -> np.ndarray:
    return np.real(z).astype(dtype)


def measure(f: np.ndarray, nm: NoiseModel, rng: np.random.Generator) -> KSpace:
    """
    Simula g = dft2(f) + n com ruído complexo fresco retirado de `rng`.

    A parte real do ruído é sorteada antes da imaginária. Com sigma_k = 0
    nenhum número aleatório é consumido e o resultado é exatamente dft2(f).
    """
    g = dft2(f)
    if nm.sigma_k == 0:
        return g
    dtype = g.real.dtype
    ruido_re = rng.normal(0.0, nm.sigma_k, size=g.shape)
    ruido_im = rng.normal(0.0, nm.sigma_k, size=g.shape)
    return KSpace((g.real + ruido_re).astype(dtype), (g.imag + ruido_im).astype(dtype))


def reconstruct(g: KSpace) -> np.ndarray:
    """Parte real da IDFT (entrada do discriminador)."""
    return real_part(idft2(g), _dtype_real(g.real))


def log_magnitude(g: KSpace) -> np.ndarray:
    """log(1 + |g|), para visualização do k-space."""
    return np.log1p(np.abs(g.complexo))


# ---------------------------------------------------------------------------
# Operadores lineares e teste de adjunto
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearOperator:
    """
    Operador linear com adjunto explícito.

    `apenas_real_linear` marca mapas lineares só sobre os reais (ex.: parte real
    da IDFT); nesse caso o teste de adjunto usa Re⟨·,·⟩.
    """
    nome: str
    apply: Callable[[np.ndarray], np.ndarray]
    adjoint: Callable[[np.ndarray], np.ndarray]
    forma_dominio: Tuple[int, ...]
    forma_contradominio: Tuple[int, ...]
    dominio_complexo: bool = False
    contradominio_complexo: bool = False
    apenas_real_linear: bool = False


def _vetor_aleatorio(forma, complexo: bool, rng: np.random.Generator) -> np.ndarray:
    x = rng.standard_normal(forma)
    if complexo:
        x = x + 1j * rng.standard_normal(forma)
    return x


def adjoint_check(op: LinearOperator, trials: int, rng: np.random.Generator) -> float:
    """
    Máximo, sobre `trials` pares aleatórios (x, y), de
    |⟨Ax,y⟩ − ⟨x,Aᵀy⟩| / (‖Ax‖‖y‖).
    """
    if trials < 1:
        raise DadosInvalidosError(f"trials deve ser >= 1; recebido {trials}")
    erro_max = 0.0
    for _ in range(trials):
        x = _vetor_aleatorio(op.forma_dominio, op.dominio_complexo, rng)
        y = _vetor_aleatorio(op.forma_contradominio, op.contradominio_complexo, rng)
        ax = np.asarray(op.apply(x))
        aty = np.asarray(op.adjoint(y))
        lado_a = np.vdot(y, ax)
        lado_b = np.vdot(aty, x)
        if op.apenas_real_linear:
            lado_a, lado_b = lado_a.real, lado_b.real
        denominador = np.linalg.norm(ax) * np.linalg.norm(y)
        diferenca = abs(lado_a - lado_b)
        erro = 0.0 if diferenca == 0 else float(diferenca / denominador)
        erro_max = max(erro_max, erro)
    logger.debug(f"Teste de adjunto '{op.nome}': erro máximo {erro_max:.3e}")
    return erro_max


def operador_dft2(n: int) -> LinearOperator:
    """DFT 2D como operador complexo-linear em C^(n×n)."""
    return LinearOperator(
        nome=f"dft2_{n}x{n}",
        apply=lambda x: _dft2_complexo(x, inverso=False),
        adjoint=lambda y: _dft2_complexo(y, inverso=True),
        forma_dominio=(n, n), forma_contradominio=(n, n),
        dominio_complexo=True, contradominio_complexo=True,
    )


def operador_reconstrucao(n: int) -> LinearOperator:
    """reconstruct: k-space complexo -> imagem real; adjunto é a dft2."""
    return LinearOperator(
        nome=f"reconstruct_{n}x{n}",
        apply=lambda z: np.real(_dft2_complexo(z, inverso=True)),
        adjoint=lambda y: _dft2_complexo(y, inverso=False),
        forma_dominio=(n, n), forma_contradominio=(n, n),
        dominio_complexo=True, apenas_real_linear=True,
    )


def operador_reconstrucao_dft2(n: int) -> LinearOperator:
    """Composição reconstruct∘dft2 sobre imagens reais."""
    def composto(x: np.ndarray) -> np.ndarray:
        return np.real(_dft2_complexo(_dft2_complexo(x, inverso=False), inverso=True))

    return LinearOperator(
        nome=f"reconstruct_dft2_{n}x{n}",
        apply=composto,
        adjoint=composto,
        forma_dominio=(n, n), forma_contradominio=(n, n),
    )


# ---------------------------------------------------------------------------
# Primitivas diferenciáveis (planos real/imag no eixo de canais)
# ---------------------------------------------------------------------------

def _validar_dft2_prim(formas, attrs):
    f = formas[0]
    if len(f) != 4 or f[1] != 1:
        return "esperado (B,1,n,n)"
    if not (_potencia_de_2(f[2]) and _potencia_de_2(f[3])):
        return "lados devem ser potências de 2"
    return None


def _validar_idft2_prim(formas, attrs):
    f = formas[0]
    if len(f) != 4 or f[1] != 2:
        return "esperado (B,2,n,n) com planos real/imag"
    if not (_potencia_de_2(f[2]) and _potencia_de_2(f[3])):
        return "lados devem ser potências de 2"
    return None


def _planos(z: np.ndarray) -> np.ndarray:
    return np.stack([z.real, z.imag], axis=1)


def _dft2_fwd(x):
    return _planos(_dft2_complexo(x[:, 0], inverso=False)), {}


def _dft2_bwd(g, salvos, attrs):
    z = g[:, 0].astype(np.float64) + 1j * g[:, 1].astype(np.float64)
    return (np.real(_dft2_complexo(z, inverso=True))[:, None],)


def _idft2_real_fwd(x):
    z = x[:, 0].astype(np.float64) + 1j * x[:, 1].astype(np.float64)
    return np.real(_dft2_complexo(z, inverso=True))[:, None], {}


def _idft2_real_bwd(g, salvos, attrs):
    return (_planos(_dft2_complexo(g[:, 0], inverso=False)),)


tc.registrar_primitiva("dft2", 1, _dft2_fwd, _dft2_bwd, _validar_dft2_prim)
tc.registrar_primitiva("idft2_real", 1, _idft2_real_fwd, _idft2_real_bwd, _validar_idft2_prim)


def dft2_tensor(x: tc.Tensor) -> tc.Tensor:
    """(B,1,n,n) real -> (B,2,n,n) planos real/imag, diferenciável."""
    return tc.forward_primitive("dft2", [x])


def idft2_real_tensor(x: tc.Tensor) -> tc.Tensor:
    """(B,2,n,n) -> parte real da IDFT (B,1,n,n), diferenciável."""
    return tc.forward_primitive("idft2_real", [x])
