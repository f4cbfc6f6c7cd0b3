"""
ProAGAN: gerador e discriminador progressivos espelhados, blend de fade-in e
as perdas adversariais AmbientGAN com o caminho de medição (DFT + ruído +
reconstrução) entre o gerador e o discriminador.

Convenções:
    - nível ℓ tem resolução 2^(ℓ+2): níveis 0..5 -> 4, 8, ..., 128;
    - imagens nas redes têm forma (B, 1, r, r);
    - canais(ℓ) = min(c_max, c0·2^(L_max−ℓ)), iguais em G e D no mesmo nível.

Nomes de parâmetros:
    g.base.dense.{w,b}, g.base.conv.{w,b}, g.n<ℓ>.conv{1,2}.{w,b}, g.torgb.<ℓ>.{w,b}
    d.fromrgb.<ℓ>.{w,b}, d.n<ℓ>.conv{1,2}.{w,b}, d.base.conv.{w,b},
    d.base.dense1.{w,b}, d.base.dense2.{w,b}
"""
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.exceptions import (
    ConfiguracaoError,
    CronogramaInvalidoError,
    FormaIncompativelError,
    ResolucaoIncompativelError,
)
from src.imaging import NoiseModel, dft2_tensor, idft2_real_tensor
from src.logger import logger
from src import tensor_core as tc
from src.tensor_core import Tensor

NIVEL_MAXIMO_SUPORTADO = 5
VARIANTES_PERDA = ("wgan_clip", "logistic_ns")
MODOS_MEDICAO = ("resolucao_total", "por_nivel")


def resolucao(nivel: int) -> int:
    return 2 ** (nivel + 2)


def nivel_de_resolucao(n: int) -> int:
    """Inverso de `resolucao`; n deve ser potência de 2 entre 4 e 128."""
    if n < 4 or n & (n - 1) or n > resolucao(NIVEL_MAXIMO_SUPORTADO):
        raise ResolucaoIncompativelError(f"Resolução {n} fora do conjunto 4..128 (potências de 2)")
    return n.bit_length() - 3


# ---------------------------------------------------------------------------
# Cronograma e estado de fade
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Fase:
    nivel: int
    fade_images: int
    stabilize_images: int

    @property
    def total_images(self) -> int:
        return self.fade_images + self.stabilize_images


@dataclass(frozen=True)
class ProgressiveSchedule:
    """Fases ordenadas; níveis crescem de 1 em 1 e a primeira fase não tem fade."""
    fases: Tuple[Fase, ...]

    def __post_init__(self):
        if not self.fases:
            raise CronogramaInvalidoError("Cronograma vazio")
        if self.fases[0].fade_images != 0:
            raise CronogramaInvalidoError(
                f"A primeira fase deve ter fade_images = 0 (recebido {self.fases[0].fade_images})")
        for anterior, atual in zip(self.fases, self.fases[1:]):
            if atual.nivel != anterior.nivel + 1:
                raise CronogramaInvalidoError(
                    f"Níveis devem crescer de 1 em 1: {anterior.nivel} seguido de {atual.nivel}")
        for f in self.fases:
            if not 0 <= f.nivel <= NIVEL_MAXIMO_SUPORTADO:
                raise CronogramaInvalidoError(f"Nível {f.nivel} fora de 0..{NIVEL_MAXIMO_SUPORTADO}")
            if f.fade_images < 0 or f.stabilize_images < 0:
                raise CronogramaInvalidoError(f"Orçamentos de imagens negativos na fase do nível {f.nivel}")

    @classmethod
    def padrao(cls, nivel_final: int, fade_images: int, stabilize_images: int,
               nivel_inicial: int = 0) -> "ProgressiveSchedule":
        fases = [Fase(nivel_inicial, 0, stabilize_images)]
        fases += [Fase(l, fade_images, stabilize_images) for l in range(nivel_inicial + 1, nivel_final + 1)]
        return cls(tuple(fases))

    @property
    def nivel_final(self) -> int:
        return self.fases[-1].nivel

    @property
    def total_images(self) -> int:
        return sum(f.total_images for f in self.fases)

    def como_lista(self) -> List[List[int]]:
        return [[f.nivel, f.fade_images, f.stabilize_images] for f in self.fases]


@dataclass(frozen=True)
class FadeState:
    alpha: float
    nivel: int

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfiguracaoError(f"alpha deve estar em [0, 1]; recebido {self.alpha}")


# ---------------------------------------------------------------------------
# Redes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OpcoesRede:
    """Hiperparâmetros de arquitetura compartilhados por G e D."""
    nivel_max: int
    latent_dim: int = 64
    c0: int = 16
    c_max: int = 128
    inclinacao: float = 0.2
    equalized_lr: bool = False
    minibatch_stddev: bool = False
    faixa: Tuple[float, float] = (-1.0, 1.0)
    dtype: str = "float32"

    def __post_init__(self):
        if not 0 <= self.nivel_max <= NIVEL_MAXIMO_SUPORTADO:
            raise ConfiguracaoError(f"nivel_max {self.nivel_max} fora de 0..{NIVEL_MAXIMO_SUPORTADO}")
        if self.latent_dim < 1 or self.c0 < 1 or self.c_max < 1:
            raise ConfiguracaoError("latent_dim, c0 e c_max devem ser >= 1")
        lo, hi = self.faixa
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise ConfiguracaoError(f"Faixa de amplitude inválida {self.faixa}")

    def canais(self, nivel: int) -> int:
        return min(self.c_max, self.c0 * 2 ** (self.nivel_max - nivel))


@dataclass(frozen=True)
class GeneratorNet:
    params: Dict[str, Tensor]
    nivel: int
    opcoes: OpcoesRede


@dataclass(frozen=True)
class DiscriminatorNet:
    params: Dict[str, Tensor]
    nivel: int
    opcoes: OpcoesRede


def _especificacao_g(op: OpcoesRede, nivel: int) -> List[Tuple[str, Tuple[int, ...]]]:
    c = op.canais(nivel)
    if nivel == 0:
        return [
            ("g.base.dense.w", (op.latent_dim, c * 16)),
            ("g.base.dense.b", (c,)),
            ("g.base.conv.w", (c, c, 3, 3)),
            ("g.base.conv.b", (c,)),
            ("g.torgb.0.w", (1, c, 1, 1)),
            ("g.torgb.0.b", (1,)),
        ]
    cp = op.canais(nivel - 1)
    return [
        (f"g.n{nivel}.conv1.w", (c, cp, 3, 3)),
        (f"g.n{nivel}.conv1.b", (c,)),
        (f"g.n{nivel}.conv2.w", (c, c, 3, 3)),
        (f"g.n{nivel}.conv2.b", (c,)),
        (f"g.torgb.{nivel}.w", (1, c, 1, 1)),
        (f"g.torgb.{nivel}.b", (1,)),
    ]


def _especificacao_d(op: OpcoesRede, nivel: int) -> List[Tuple[str, Tuple[int, ...]]]:
    c = op.canais(nivel)
    if nivel == 0:
        extra = 1 if op.minibatch_stddev else 0
        return [
            ("d.fromrgb.0.w", (c, 1, 1, 1)),
            ("d.fromrgb.0.b", (c,)),
            ("d.base.conv.w", (c, c + extra, 3, 3)),
            ("d.base.conv.b", (c,)),
            ("d.base.dense1.w", (c * 16, c)),
            ("d.base.dense1.b", (c,)),
            ("d.base.dense2.w", (c, 1)),
            ("d.base.dense2.b", (1,)),
        ]
    cp = op.canais(nivel - 1)
    return [
        (f"d.fromrgb.{nivel}.w", (c, 1, 1, 1)),
        (f"d.fromrgb.{nivel}.b", (c,)),
        (f"d.n{nivel}.conv1.w", (c, c, 3, 3)),
        (f"d.n{nivel}.conv1.b", (c,)),
        (f"d.n{nivel}.conv2.w", (cp, c, 3, 3)),
        (f"d.n{nivel}.conv2.b", (cp,)),
    ]


def _fan_in(forma: Tuple[int, ...]) -> int:
    return int(np.prod(forma[1:])) if len(forma) == 4 else int(forma[0])


def _inicializar(especificacao, rng: np.random.Generator, op: OpcoesRede) -> Dict[str, Tensor]:
    """He: pesos N(0, 2/fan_in) (ou N(0,1) com equalized LR); bias zero."""
    params: Dict[str, Tensor] = {}
    for nome, forma in especificacao:
        if nome.endswith(".b"):
            valor = np.zeros(forma)
        else:
            valor = rng.standard_normal(forma)
            if not op.equalized_lr:
                valor = valor * math.sqrt(2.0 / _fan_in(forma))
        params[nome] = Tensor(valor, dtype=op.dtype, nome=nome)
    return params


def build_networks(op: OpcoesRede, rng: np.random.Generator,
                   nivel: int = 0) -> Tuple[GeneratorNet, DiscriminatorNet]:
    """Cria G e D com todos os blocos até `nivel` (G sorteado antes de D, nível a nível)."""
    if nivel > op.nivel_max:
        raise ResolucaoIncompativelError(f"Nível {nivel} acima do máximo da rede ({op.nivel_max})")
    params_g: Dict[str, Tensor] = {}
    params_d: Dict[str, Tensor] = {}
    for l in range(nivel + 1):
        params_g.update(_inicializar(_especificacao_g(op, l), rng, op))
        params_d.update(_inicializar(_especificacao_d(op, l), rng, op))
    return GeneratorNet(params_g, nivel, op), DiscriminatorNet(params_d, nivel, op)


def grow(gen: GeneratorNet, disc: DiscriminatorNet, schedule: ProgressiveSchedule,
         fase_indice: int, rng: np.random.Generator) -> Tuple[GeneratorNet, DiscriminatorNet]:
    """
    Acrescenta o bloco do topo de G (e o bloco de entrada espelhado de D) para
    a fase `fase_indice`. Parâmetros existentes são mantidos como estão.

    Raises:
        CronogramaInvalidoError: A fase não é exatamente o nível seguinte ao atual.
        ResolucaoIncompativelError: O novo nível excede nivel_max das redes.
    """
    if not 0 <= fase_indice < len(schedule.fases):
        raise CronogramaInvalidoError(f"Fase {fase_indice} inexistente no cronograma")
    novo_nivel = schedule.fases[fase_indice].nivel
    if gen.nivel != disc.nivel:
        raise CronogramaInvalidoError(f"G no nível {gen.nivel} e D no nível {disc.nivel}")
    if novo_nivel != gen.nivel + 1:
        raise CronogramaInvalidoError(
            f"Crescimento do nível {gen.nivel} para {novo_nivel}: níveis não podem ser pulados")
    op = gen.opcoes
    if novo_nivel > op.nivel_max:
        raise ResolucaoIncompativelError(f"Nível {novo_nivel} acima do máximo da rede ({op.nivel_max})")

    novos_g = _inicializar(_especificacao_g(op, novo_nivel), rng, op)
    novos_d = _inicializar(_especificacao_d(op, novo_nivel), rng, op)
    logger.info(f"Crescendo redes para o nível {novo_nivel} ({resolucao(novo_nivel)}x{resolucao(novo_nivel)}), "
                f"canais={op.canais(novo_nivel)}")
    return (GeneratorNet({**gen.params, **novos_g}, novo_nivel, op),
            DiscriminatorNet({**disc.params, **novos_d}, novo_nivel, op))


def contar_parametros(net) -> int:
    return sum(p.size for p in net.params.values())


def canais_por_nivel(net) -> Dict[int, int]:
    """Canais de cada nível lidos das projeções toRGB (G) ou fromRGB (D)."""
    if isinstance(net, GeneratorNet):
        return {l: net.params[f"g.torgb.{l}.w"].shape[1] for l in range(net.nivel + 1)}
    return {l: net.params[f"d.fromrgb.{l}.w"].shape[0] for l in range(net.nivel + 1)}


def clip_weights(params: Dict[str, Tensor], c: float) -> Dict[str, Tensor]:
    """Recorta todos os parâmetros para [-c, c] (variante wgan_clip)."""
    return {k: Tensor._envolver(np.clip(p.data, -c, c).astype(p.dtype), nome=k) for k, p in params.items()}


# ---------------------------------------------------------------------------
# Forward
# ---------------------------------------------------------------------------

def _peso(net, nome: str) -> Tensor:
    p = net.params[nome]
    if net.opcoes.equalized_lr:
        return tc.scale_by_constant(p, math.sqrt(2.0 / _fan_in(p.shape)))
    return p


def _checar_nivel(net, fs: FadeState) -> None:
    if net.nivel != fs.nivel:
        raise ResolucaoIncompativelError(f"Rede construída até o nível {net.nivel}, FadeState no nível {fs.nivel}")


def _conv_g(h: Tensor, net: GeneratorNet, prefixo: str) -> Tensor:
    h = tc.bias_add(tc.conv2d(h, _peso(net, f"{prefixo}.w")), net.params[f"{prefixo}.b"])
    return tc.pixel_norm(tc.leaky_relu(h, net.opcoes.inclinacao))


def _to_rgb(h: Tensor, net: GeneratorNet, nivel: int) -> Tensor:
    lo, hi = net.opcoes.faixa
    y = tc.conv2d(h, _peso(net, f"g.torgb.{nivel}.w"))
    y = tc.tanh(tc.bias_add(y, net.params[f"g.torgb.{nivel}.b"]))
    centro = Tensor(np.array([(hi + lo) / 2.0]), dtype=y.dtype)
    return tc.bias_add(tc.scale_by_constant(y, (hi - lo) / 2.0), centro)


def gen_forward(z: Tensor, net: GeneratorNet, fs: FadeState) -> Tensor:
    """
    Imagens (B,1,r,r) no nível fs.nivel.

    Durante o fade: alpha·toRGB(bloco novo) + (1−alpha)·upsample(toRGB(nível anterior)).
    Nos extremos alpha=0 e alpha=1 apenas o caminho usado é calculado.
    """
    _checar_nivel(net, fs)
    op = net.opcoes
    if z.ndim != 2 or z.shape[1] != op.latent_dim:
        raise FormaIncompativelError(f"gen_forward: z com forma {z.shape}, esperado (B, {op.latent_dim})")
    b = z.shape[0]
    h = tc.dense(tc.pixel_norm(z), _peso(net, "g.base.dense.w"))
    h = tc.reshape(h, (b, op.canais(0), 4, 4))
    h = tc.bias_add(h, net.params["g.base.dense.b"])
    h = tc.pixel_norm(tc.leaky_relu(h, op.inclinacao))
    h = _conv_g(h, net, "g.base.conv")

    nivel = fs.nivel
    so_anterior = nivel > 0 and fs.alpha == 0.0
    ultimo = nivel - 1 if so_anterior else nivel
    anterior: Optional[Tensor] = None
    for l in range(1, ultimo + 1):
        if l == nivel:
            anterior = h
        h = tc.upsample_nearest_2x(h)
        h = _conv_g(h, net, f"g.n{l}.conv1")
        h = _conv_g(h, net, f"g.n{l}.conv2")

    if nivel == 0 or fs.alpha == 1.0:
        return _to_rgb(h, net, nivel)
    if so_anterior:
        return tc.upsample_nearest_2x(_to_rgb(h, net, nivel - 1))
    novo = _to_rgb(h, net, nivel)
    velho = tc.upsample_nearest_2x(_to_rgb(anterior, net, nivel - 1))
    return tc.add(tc.scale_by_constant(novo, fs.alpha), tc.scale_by_constant(velho, 1.0 - fs.alpha))


def _from_rgb(x: Tensor, net: DiscriminatorNet, nivel: int) -> Tensor:
    h = tc.bias_add(tc.conv2d(x, _peso(net, f"d.fromrgb.{nivel}.w")), net.params[f"d.fromrgb.{nivel}.b"])
    return tc.leaky_relu(h, net.opcoes.inclinacao)


def _bloco_d(h: Tensor, net: DiscriminatorNet, nivel: int) -> Tensor:
    for conv in ("conv1", "conv2"):
        prefixo = f"d.n{nivel}.{conv}"
        h = tc.bias_add(tc.conv2d(h, _peso(net, f"{prefixo}.w")), net.params[f"{prefixo}.b"])
        h = tc.leaky_relu(h, net.opcoes.inclinacao)
    return tc.avgpool_2x(h)


def disc_forward(x: Tensor, net: DiscriminatorNet, fs: FadeState) -> Tensor:
    """
    Escores (B,) não limitados.

    Blend espelhado na entrada: alpha·bloco(fromRGB(x)) + (1−alpha)·fromRGB(avgpool(x)).
    """
    _checar_nivel(net, fs)
    nivel = fs.nivel
    r = resolucao(nivel)
    if x.ndim != 4 or x.shape[1] != 1 or x.shape[2:] != (r, r):
        raise ResolucaoIncompativelError(f"disc_forward: entrada {x.shape}, esperado (B, 1, {r}, {r})")
    op = net.opcoes
    b = x.shape[0]

    if nivel == 0:
        h = _from_rgb(x, net, 0)
    elif fs.alpha == 1.0:
        h = _bloco_d(_from_rgb(x, net, nivel), net, nivel)
    elif fs.alpha == 0.0:
        h = _from_rgb(tc.avgpool_2x(x), net, nivel - 1)
    else:
        novo = _bloco_d(_from_rgb(x, net, nivel), net, nivel)
        velho = _from_rgb(tc.avgpool_2x(x), net, nivel - 1)
        h = tc.add(tc.scale_by_constant(novo, fs.alpha), tc.scale_by_constant(velho, 1.0 - fs.alpha))
    for l in range(nivel - 1, 0, -1):
        h = _bloco_d(h, net, l)

    if op.minibatch_stddev:
        h = tc.minibatch_stddev(h)
    h = tc.bias_add(tc.conv2d(h, _peso(net, "d.base.conv.w")), net.params["d.base.conv.b"])
    h = tc.leaky_relu(h, op.inclinacao)
    h = tc.reshape(h, (b, op.canais(0) * 16))
    h = tc.bias_add(tc.dense(h, _peso(net, "d.base.dense1.w")), net.params["d.base.dense1.b"])
    h = tc.leaky_relu(h, op.inclinacao)
    h = tc.bias_add(tc.dense(h, _peso(net, "d.base.dense2.w")), net.params["d.base.dense2.b"])
    return tc.reshape(h, (b,))


# ---------------------------------------------------------------------------
# Caminho de medição e pirâmide real
# ---------------------------------------------------------------------------

def _ruido_kspace(forma: Tuple[int, ...], sigma: float, rng: np.random.Generator, dtype) -> Tensor:
    # parte real antes da imaginária, como em imaging.measure
    b, _, n, m = forma
    real = rng.normal(0.0, sigma, size=(b, n, m))
    imag = rng.normal(0.0, sigma, size=(b, n, m))
    return Tensor(np.stack([real, imag], axis=1), dtype=dtype)


def synth_measurement_path(f_hat: Tensor, nm: NoiseModel, rng: np.random.Generator,
                           nivel_max: int, modo: str = "resolucao_total") -> Tensor:
    """
    Reconstrução ruidosa de f_hat no mesmo nível, diferenciável de ponta a ponta.

    resolucao_total: upsample até L_max, DFT, ruído novo, parte real da IDFT,
    avgpool de volta ao nível. por_nivel: DFT no próprio nível com sigma
    escalado por 2^(ℓ−L_max).
    """
    if modo not in MODOS_MEDICAO:
        raise ConfiguracaoError(f"Modo de medição desconhecido: '{modo}' (use {MODOS_MEDICAO})")
    if f_hat.ndim != 4 or f_hat.shape[1] != 1:
        raise FormaIncompativelError(f"synth_measurement_path: esperado (B,1,r,r), recebido {f_hat.shape}")
    nivel = nivel_de_resolucao(f_hat.shape[-1])
    if nivel > nivel_max:
        raise ResolucaoIncompativelError(f"Imagem no nível {nivel} acima de L_max={nivel_max}")

    if modo == "resolucao_total":
        passos, sigma = nivel_max - nivel, nm.sigma_k
    else:
        passos, sigma = 0, nm.sigma_k * 2.0 ** (nivel - nivel_max)

    x = f_hat
    for _ in range(passos):
        x = tc.upsample_nearest_2x(x)
    k = dft2_tensor(x)
    if sigma > 0:
        k = tc.add(k, _ruido_kspace(k.shape, sigma, rng, k.dtype))
    y = idft2_real_tensor(k)
    for _ in range(passos):
        y = tc.avgpool_2x(y)
    return y


def _como_lote(reconstrucoes: np.ndarray) -> np.ndarray:
    arr = np.asarray(reconstrucoes)
    if arr.ndim == 3:
        arr = arr[:, None]
    if arr.ndim != 4 or arr.shape[1] != 1 or arr.shape[2] != arr.shape[3]:
        raise FormaIncompativelError(f"Reconstruções com forma {arr.shape}; esperado (N,n,n) ou (N,1,n,n)")
    return arr


def real_pyramid(reconstrucoes: np.ndarray, nivel: int) -> np.ndarray:
    """Reduz (N,n,n) ou (N,1,n,n) ao nível pedido por avgpool_2x repetido; devolve (N,1,r,r)."""
    arr = _como_lote(reconstrucoes)
    nivel_max = nivel_de_resolucao(arr.shape[-1])
    if not 0 <= nivel <= nivel_max:
        raise ResolucaoIncompativelError(f"Nível {nivel} fora de 0..{nivel_max}")
    for _ in range(nivel_max - nivel):
        arr = tc.avgpool_2x_array(arr)
    return arr


class PiramideReal:
    """Pirâmide das reconstruções reais com cache por nível."""

    def __init__(self, reconstrucoes: np.ndarray):
        self.base = _como_lote(reconstrucoes)
        self.nivel_max = nivel_de_resolucao(self.base.shape[-1])
        self._cache: Dict[int, np.ndarray] = {self.nivel_max: self.base}

    def nivel(self, nivel: int) -> np.ndarray:
        if nivel not in self._cache:
            if not 0 <= nivel <= self.nivel_max:
                raise ResolucaoIncompativelError(f"Nível {nivel} fora de 0..{self.nivel_max}")
            self._cache[nivel] = tc.avgpool_2x_array(self.nivel(nivel + 1))
        return self._cache[nivel]

    def __len__(self) -> int:
        return int(self.base.shape[0])


# ---------------------------------------------------------------------------
# Perdas
# ---------------------------------------------------------------------------

def _checar_variante(variante: str) -> None:
    if variante not in VARIANTES_PERDA:
        raise ConfiguracaoError(f"Variante de perda desconhecida: '{variante}' (use {VARIANTES_PERDA})")


def loss_discriminator(real_scores: Tensor, fake_scores: Tensor, variante: str) -> Tensor:
    """wgan_clip: mean(fake) − mean(real). logistic_ns: mean softplus(−real) + mean softplus(fake)."""
    _checar_variante(variante)
    if variante == "wgan_clip":
        return tc.add(tc.reduce_mean(fake_scores), tc.scale_by_constant(tc.reduce_mean(real_scores), -1.0))
    return tc.add(tc.reduce_mean(tc.softplus(tc.scale_by_constant(real_scores, -1.0))),
                  tc.reduce_mean(tc.softplus(fake_scores)))


def loss_generator(fake_scores: Tensor, variante: str) -> Tensor:
    """wgan_clip: −mean(fake). logistic_ns: mean softplus(−fake)."""
    _checar_variante(variante)
    if variante == "wgan_clip":
        return tc.scale_by_constant(tc.reduce_mean(fake_scores), -1.0)
    return tc.reduce_mean(tc.softplus(tc.scale_by_constant(fake_scores, -1.0)))
