"""
Motor de tensores densos com diferenciação automática em modo reverso.

Este módulo implementa o mínimo necessário para treinar GANs convolucionais
pequenas em CPU: tensores imutáveis sobre arrays numpy, uma fita (Tape) que
registra as primitivas aplicadas, a retropropagação sobre a fita e o
otimizador Adam.

Uso típico:
    with Tape() as fita:
        y = leaky_relu(conv2d(x, w))
        perda = reduce_mean(y)
    grads = backward(fita, perda)
    grads.de(w)  # gradiente de perda em relação a w
"""
import itertools
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.exceptions import (
    FormaIncompativelError,
    GradienteNaoFinitoError,
    NumericoError,
    PrimitivaDesconhecidaError,
    TipoDadoIncompativelError,
)
from src.logger import logger

DTYPES_VALIDOS = (np.dtype(np.float32), np.dtype(np.float64))
MAX_DIMENSOES = 4

_contador_ids = itertools.count(1)
_pilha_fitas: List["Tape"] = []
_modo_deterministico = False


def definir_modo_deterministico(ativo: bool) -> None:
    """Ativa/desativa o acúmulo sequencial (ordem row-major) nas reduções."""
    global _modo_deterministico
    _modo_deterministico = bool(ativo)
    logger.debug(f"Modo determinístico: {_modo_deterministico}")


def modo_deterministico() -> bool:
    return _modo_deterministico


def _soma_total(arr: np.ndarray) -> np.ndarray:
    plano = np.ascontiguousarray(arr).ravel()
    if _modo_deterministico:
        return np.cumsum(plano, dtype=arr.dtype)[-1]
    return np.sum(plano, dtype=arr.dtype)


def _soma_eixos(arr: np.ndarray, eixos: Tuple[int, ...]) -> np.ndarray:
    if not _modo_deterministico:
        return np.sum(arr, axis=eixos, dtype=arr.dtype)
    # eixos reduzidos vão para o fim e são acumulados sequencialmente
    mantidos = [i for i in range(arr.ndim) if i not in eixos]
    movido = np.ascontiguousarray(np.transpose(arr, mantidos + list(eixos)))
    plano = movido.reshape([arr.shape[i] for i in mantidos] + [-1])
    return np.cumsum(plano, axis=-1, dtype=arr.dtype)[..., -1]


class Tensor:
    """
    Valor imutável: array numpy float32/float64 com até 4 dimensões.

    Cada tensor recebe um identificador único (`id`), usado como chave do
    mapa de gradientes devolvido por `backward`.
    """
    __slots__ = ("data", "id", "nome")

    def __init__(self, dados: Any, dtype: Any = None, nome: Optional[str] = None):
        arr = np.array(dados, copy=True)
        if dtype is None:
            dtype = arr.dtype if arr.dtype in DTYPES_VALIDOS else np.float64
        arr = arr.astype(dtype, copy=False)
        self._inicializar(arr, nome)

    def _inicializar(self, arr: np.ndarray, nome: Optional[str]) -> None:
        if arr.dtype not in DTYPES_VALIDOS:
            raise TipoDadoIncompativelError(f"dtype não suportado: {arr.dtype} (use float32 ou float64)")
        if arr.ndim > MAX_DIMENSOES:
            raise FormaIncompativelError(f"Tensor com {arr.ndim} dimensões; máximo é {MAX_DIMENSOES}")
        arr.setflags(write=False)
        self.data = arr
        self.id = next(_contador_ids)
        self.nome = nome

    @classmethod
    def _envolver(cls, arr: np.ndarray, nome: Optional[str] = None) -> "Tensor":
        """Cria o tensor sem copiar (uso interno: arrays recém-alocados)."""
        t = cls.__new__(cls)
        t._inicializar(arr, nome)
        return t

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        rotulo = f" '{self.nome}'" if self.nome else ""
        return f"Tensor#{self.id}{rotulo}(shape={self.shape}, dtype={self.dtype})"


@dataclass
class EntradaFita:
    """Aplicação registrada de uma primitiva."""
    op: str
    entradas: Tuple[int, ...]
    saida: int
    formas_entrada: Tuple[Tuple[int, ...], ...]
    forma_saida: Tuple[int, ...]
    dtype: np.dtype
    salvos: Dict[str, Any]
    attrs: Dict[str, Any]


class Tape:
    """
    Fita de gravação. Enquanto ativa (bloco `with`), toda primitiva aplicada é
    registrada em ordem topológica.
    """

    def __init__(self):
        self.entradas: List[EntradaFita] = []
        self._saidas: set = set()

    def __enter__(self) -> "Tape":
        _pilha_fitas.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _pilha_fitas.pop()

    def registrar(self, entrada: EntradaFita) -> None:
        self.entradas.append(entrada)
        self._saidas.add(entrada.saida)

    def contem(self, tensor: Tensor) -> bool:
        return tensor.id in self._saidas

    def __len__(self) -> int:
        return len(self.entradas)


def fita_ativa() -> Optional[Tape]:
    return _pilha_fitas[-1] if _pilha_fitas else None


@dataclass(frozen=True)
class Primitiva:
    """forward(arrays, attrs) -> (saida, salvos); backward(grad, salvos, attrs) -> grads por entrada."""
    nome: str
    aridade: int
    forward: Callable[..., Tuple[np.ndarray, Dict[str, Any]]]
    backward: Callable[..., Tuple[Optional[np.ndarray], ...]]
    validar: Optional[Callable[[Sequence[Tuple[int, ...]], Dict[str, Any]], Optional[str]]] = None


_REGISTRO: Dict[str, Primitiva] = {}


def registrar_primitiva(nome: str, aridade: int, forward, backward, validar=None) -> None:
    """Registra (ou substitui) uma primitiva diferenciável."""
    _REGISTRO[nome] = Primitiva(nome, aridade, forward, backward, validar)


def primitivas_registradas() -> List[str]:
    return sorted(_REGISTRO)


def forward_primitive(op: str, entradas: Sequence[Tensor], attrs: Optional[Dict[str, Any]] = None) -> Tensor:
    """
    Aplica uma primitiva e, se houver fita ativa, registra a aplicação.

    Args:
        op: Identificador da primitiva (ex.: 'conv2d', 'leaky_relu').
        entradas: Tensores de entrada (mesmo dtype).
        attrs: Atributos da primitiva (ex.: {'inclinacao': 0.2}).

    Returns:
        Tensor de saída.

    Raises:
        PrimitivaDesconhecidaError: Se `op` não estiver registrada.
        TipoDadoIncompativelError: Se os dtypes das entradas diferirem.
        FormaIncompativelError: Se as formas forem incompatíveis.
    """
    prim = _REGISTRO.get(op)
    if prim is None:
        raise PrimitivaDesconhecidaError(f"Primitiva desconhecida: '{op}'")
    attrs = dict(attrs or {})
    if len(entradas) != prim.aridade:
        raise FormaIncompativelError(f"{op}: espera {prim.aridade} entrada(s), recebeu {len(entradas)}")
    dtypes = {t.dtype for t in entradas}
    if len(dtypes) != 1:
        raise TipoDadoIncompativelError(f"{op}: dtypes diferentes {sorted(str(d) for d in dtypes)}")
    formas = [t.shape for t in entradas]
    if prim.validar is not None:
        problema = prim.validar(formas, attrs)
        if problema:
            detalhe = " e ".join(str(f) for f in formas)
            raise FormaIncompativelError(f"{op}: formas incompatíveis {detalhe} ({problema})")

    dtype = entradas[0].dtype
    saida, salvos = prim.forward(*(t.data for t in entradas), **attrs)
    saida = np.asarray(saida).astype(dtype, copy=False)
    if not saida.flags.owndata or not saida.flags.writeable:
        saida = saida.copy()
    resultado = Tensor._envolver(saida)

    fita = fita_ativa()
    if fita is not None:
        fita.registrar(EntradaFita(
            op=op,
            entradas=tuple(t.id for t in entradas),
            saida=resultado.id,
            formas_entrada=tuple(formas),
            forma_saida=resultado.shape,
            dtype=dtype,
            salvos=salvos,
            attrs=attrs,
        ))
    return resultado


class MapaGradientes(dict):
    """Mapa id do nó -> Tensor gradiente."""

    def de(self, tensor: Tensor) -> Tensor:
        try:
            return self[tensor.id]
        except KeyError:
            raise NumericoError(f"{tensor!r} não participa da fita") from None


def _retropropagar(fita: Tape, id_saida: int, grad_saida: np.ndarray) -> Dict[int, np.ndarray]:
    grads: Dict[int, np.ndarray] = {id_saida: grad_saida}
    for entrada in reversed(fita.entradas):
        g = grads.get(entrada.saida)
        if g is None:
            continue
        prim = _REGISTRO[entrada.op]
        grads_entrada = prim.backward(g, entrada.salvos, entrada.attrs)
        for id_in, forma, gi in zip(entrada.entradas, entrada.formas_entrada, grads_entrada):
            if gi is None:
                continue
            gi = np.asarray(gi).astype(entrada.dtype, copy=False)
            if gi.shape != forma:
                raise FormaIncompativelError(f"{entrada.op}.backward: gradiente {gi.shape} para entrada {forma}")
            grads[id_in] = grads[id_in] + gi if id_in in grads else gi

    # nós fora de qualquer caminho até a perda recebem gradiente zero
    for entrada in fita.entradas:
        for id_in, forma in zip(entrada.entradas, entrada.formas_entrada):
            if id_in not in grads:
                grads[id_in] = np.zeros(forma, dtype=entrada.dtype)
        if entrada.saida not in grads:
            grads[entrada.saida] = np.zeros(entrada.forma_saida, dtype=entrada.dtype)
    return grads


def backward(fita: Tape, perda: Tensor) -> MapaGradientes:
    """
    Retropropaga a partir de uma perda escalar gravada na fita.

    Returns:
        MapaGradientes com uma entrada para cada nó da fita (entradas e saídas).

    Raises:
        NumericoError: Se a perda não for escalar ou não tiver sido produzida na fita.
    """
    if perda.size != 1:
        raise NumericoError(f"A perda deve ser escalar; forma recebida {perda.shape}")
    if not fita.contem(perda):
        raise NumericoError("A perda não foi produzida nesta fita")
    brutos = _retropropagar(fita, perda.id, np.ones(perda.shape, dtype=perda.dtype))
    return MapaGradientes({k: Tensor._envolver(np.array(v)) for k, v in brutos.items()})


# ---------------------------------------------------------------------------
# Núcleos numpy (reutilizados fora da fita para manter igualdade exata)
# ---------------------------------------------------------------------------

def upsample_2x_array(x: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(x, 2, axis=-2), 2, axis=-1)


def avgpool_2x_array(x: np.ndarray) -> np.ndarray:
    # soma em pares: ((a+b)+(c+d)) * 0.25 inverte a replicação sem arredondamento
    a = x[..., 0::2, 0::2]
    b = x[..., 0::2, 1::2]
    c = x[..., 1::2, 0::2]
    d = x[..., 1::2, 1::2]
    return ((a + b) + (c + d)) * x.dtype.type(0.25)


def _soma_blocos_2x(g: np.ndarray) -> np.ndarray:
    return (g[..., 0::2, 0::2] + g[..., 0::2, 1::2]) + (g[..., 1::2, 0::2] + g[..., 1::2, 1::2])


def _janelas(xp: np.ndarray, k: int) -> np.ndarray:
    """(B,C,H+2p,W+2p) -> matriz (B,H,W,C*k*k) de vizinhanças."""
    b, c = xp.shape[:2]
    v = sliding_window_view(xp, (k, k), axis=(2, 3))
    h, w = v.shape[2], v.shape[3]
    return v.transpose(0, 2, 3, 1, 4, 5).reshape(b, h, w, c * k * k)


def _pad(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


# ---------------------------------------------------------------------------
# Primitivas
# ---------------------------------------------------------------------------

def _validar_conv2d(formas, attrs):
    fx, fw = formas
    if len(fx) != 4 or len(fw) != 4:
        return "esperado x (B,C,H,W) e w (Co,Ci,k,k)"
    if fx[1] != fw[1]:
        return f"canais de entrada {fx[1]} != {fw[1]}"
    if fw[2] != fw[3] or fw[2] % 2 == 0:
        return "kernel deve ser quadrado e de lado ímpar"
    return None


def _conv2d_fwd(x, w):
    k = w.shape[2]
    col = _janelas(_pad(x, k // 2), k)
    saida = (col @ w.reshape(w.shape[0], -1).T).transpose(0, 3, 1, 2)
    return saida, {"col": col, "w": w}


def _conv2d_bwd(g, salvos, attrs):
    col, w = salvos["col"], salvos["w"]
    co, ci, k, _ = w.shape
    g_lin = g.transpose(0, 2, 3, 1).reshape(-1, co)
    dw = (g_lin.T @ col.reshape(-1, ci * k * k)).reshape(w.shape)
    colg = _janelas(_pad(g, k // 2), k)
    w_inv = w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(ci, co * k * k)
    dx = (colg @ w_inv.T).transpose(0, 3, 1, 2)
    return dx, dw


def _validar_dense(formas, attrs):
    fx, fw = formas
    if len(fx) != 2 or len(fw) != 2 or fx[1] != fw[0]:
        return "esperado x (B,I) e w (I,O)"
    return None


def _dense_fwd(x, w):
    return x @ w, {"x": x, "w": w}


def _dense_bwd(g, salvos, attrs):
    return g @ salvos["w"].T, salvos["x"].T @ g


def _leaky_fwd(x, inclinacao=0.2):
    return np.where(x > 0, x, x * inclinacao), {"x": x}


def _leaky_bwd(g, salvos, attrs):
    inclinacao = attrs.get("inclinacao", 0.2)
    return (np.where(salvos["x"] > 0, g, g * inclinacao),)


def _validar_imagem(formas, attrs):
    return None if len(formas[0]) == 4 else "esperado (B,C,H,W)"


def _validar_pool(formas, attrs):
    f = formas[0]
    if len(f) != 4:
        return "esperado (B,C,H,W)"
    if f[2] % 2 or f[3] % 2:
        return "altura e largura devem ser pares"
    return None


def _upsample_fwd(x):
    return upsample_2x_array(x), {}


def _upsample_bwd(g, salvos, attrs):
    return (_soma_blocos_2x(g),)


def _avgpool_fwd(x):
    return avgpool_2x_array(x), {}


def _avgpool_bwd(g, salvos, attrs):
    return (upsample_2x_array(g) * g.dtype.type(0.25),)


def _validar_mesma_forma(formas, attrs):
    return None if formas[0] == formas[1] else "formas devem ser idênticas (sem broadcasting)"


def _add_fwd(a, b):
    return a + b, {}


def _add_bwd(g, salvos, attrs):
    return g, g


def _scale_fwd(x, c=1.0):
    return x * c, {}


def _scale_bwd(g, salvos, attrs):
    return (g * attrs.get("c", 1.0),)


def _validar_pixel_norm(formas, attrs):
    return None if len(formas[0]) in (2, 4) else "esperado (B,C) ou (B,C,H,W)"


def _pixel_norm_fwd(x, eps=1e-8):
    m = _soma_eixos(x * x, (1,)) / x.shape[1]
    r = 1.0 / np.sqrt(np.expand_dims(m, 1) + eps)
    return x * r, {"x": x, "r": r}


def _pixel_norm_bwd(g, salvos, attrs):
    x, r = salvos["x"], salvos["r"]
    media_gx = np.expand_dims(_soma_eixos(g * x, (1,)), 1) / x.shape[1]
    return (r * g - (r ** 3) * x * media_gx,)


def _validar_reduce(formas, attrs):
    return None if int(np.prod(formas[0])) > 0 else "tensor vazio"


def _reduce_mean_fwd(x):
    return _soma_total(x) / x.size, {"forma": x.shape, "n": x.size}


def _reduce_mean_bwd(g, salvos, attrs):
    return (np.full(salvos["forma"], g / salvos["n"], dtype=g.dtype),)


def _tanh_fwd(x):
    y = np.tanh(x)
    return y, {"y": y}


def _tanh_bwd(g, salvos, attrs):
    y = salvos["y"]
    return (g * (1 - y * y),)


def _validar_bias(formas, attrs):
    fx, fb = formas
    if len(fx) not in (2, 4) or len(fb) != 1 or fb[0] != fx[1]:
        return "bias (C,) deve casar com o eixo de canais de x"
    return None


def _bias_fwd(x, b):
    forma = (1, -1) + (1,) * (x.ndim - 2)
    return x + b.reshape(forma), {"ndim": x.ndim}


def _bias_bwd(g, salvos, attrs):
    eixos = (0,) + tuple(range(2, salvos["ndim"]))
    return g, _soma_eixos(g, eixos)


def _validar_reshape(formas, attrs):
    destino = tuple(attrs.get("forma", ()))
    if int(np.prod(formas[0])) != int(np.prod(destino)) or len(destino) > MAX_DIMENSOES:
        return f"não é possível remodelar para {destino}"
    return None


def _reshape_fwd(x, forma=()):
    return x.reshape(tuple(forma)), {"original": x.shape}


def _reshape_bwd(g, salvos, attrs):
    return (g.reshape(salvos["original"]),)


def _softplus_fwd(x):
    return np.logaddexp(0, x), {"x": x}


def _softplus_bwd(g, salvos, attrs):
    sigmoide = 0.5 * (1 + np.tanh(0.5 * salvos["x"]))
    return (g * sigmoide,)


def _mbstd_fwd(x, eps=1e-8):
    b, c, h, w = x.shape
    media = _soma_eixos(x, (0,)) / b
    desvio = x - media
    std = np.sqrt(_soma_eixos(desvio * desvio, (0,)) / b + eps)
    s = _soma_total(std) / std.size
    extra = np.full((b, 1, h, w), s, dtype=x.dtype)
    return np.concatenate([x, extra], axis=1), {"desvio": desvio, "std": std}


def _mbstd_bwd(g, salvos, attrs):
    desvio, std = salvos["desvio"], salvos["std"]
    b = desvio.shape[0]
    c = desvio.shape[1]
    g_total = _soma_total(g[:, c])
    return (g[:, :c] + g_total * desvio / (b * std * std.size),)


registrar_primitiva("conv2d", 2, _conv2d_fwd, _conv2d_bwd, _validar_conv2d)
registrar_primitiva("dense", 2, _dense_fwd, _dense_bwd, _validar_dense)
registrar_primitiva("leaky_relu", 1, _leaky_fwd, _leaky_bwd)
registrar_primitiva("upsample_nearest_2x", 1, _upsample_fwd, _upsample_bwd, _validar_imagem)
registrar_primitiva("avgpool_2x", 1, _avgpool_fwd, _avgpool_bwd, _validar_pool)
registrar_primitiva("add", 2, _add_fwd, _add_bwd, _validar_mesma_forma)
registrar_primitiva("scale_by_constant", 1, _scale_fwd, _scale_bwd)
registrar_primitiva("pixel_norm", 1, _pixel_norm_fwd, _pixel_norm_bwd, _validar_pixel_norm)
registrar_primitiva("reduce_mean", 1, _reduce_mean_fwd, _reduce_mean_bwd, _validar_reduce)
registrar_primitiva("tanh", 1, _tanh_fwd, _tanh_bwd)
registrar_primitiva("bias_add", 2, _bias_fwd, _bias_bwd, _validar_bias)
registrar_primitiva("reshape", 1, _reshape_fwd, _reshape_bwd, _validar_reshape)
registrar_primitiva("softplus", 1, _softplus_fwd, _softplus_bwd)
registrar_primitiva("minibatch_stddev", 1, _mbstd_fwd, _mbstd_bwd, _validar_imagem)


# Atalhos funcionais
def conv2d(x: Tensor, w: Tensor) -> Tensor:
    return forward_primitive("conv2d", [x, w])


def dense(x: Tensor, w: Tensor) -> Tensor:
    return forward_primitive("dense", [x, w])


def leaky_relu(x: Tensor, inclinacao: float = 0.2) -> Tensor:
    return forward_primitive("leaky_relu", [x], {"inclinacao": inclinacao})


def upsample_nearest_2x(x: Tensor) -> Tensor:
    return forward_primitive("upsample_nearest_2x", [x])


def avgpool_2x(x: Tensor) -> Tensor:
    return forward_primitive("avgpool_2x", [x])


def add(a: Tensor, b: Tensor) -> Tensor:
    return forward_primitive("add", [a, b])


def scale_by_constant(x: Tensor, c: float) -> Tensor:
    return forward_primitive("scale_by_constant", [x], {"c": float(c)})


def pixel_norm(x: Tensor, eps: float = 1e-8) -> Tensor:
    return forward_primitive("pixel_norm", [x], {"eps": eps})


def reduce_mean(x: Tensor) -> Tensor:
    return forward_primitive("reduce_mean", [x])


def tanh(x: Tensor) -> Tensor:
    return forward_primitive("tanh", [x])


def bias_add(x: Tensor, b: Tensor) -> Tensor:
    return forward_primitive("bias_add", [x, b])


def reshape(x: Tensor, forma: Sequence[int]) -> Tensor:
    return forward_primitive("reshape", [x], {"forma": tuple(int(d) for d in forma)})


def softplus(x: Tensor) -> Tensor:
    return forward_primitive("softplus", [x])


def minibatch_stddev(x: Tensor) -> Tensor:
    return forward_primitive("minibatch_stddev", [x])


# ---------------------------------------------------------------------------
# Verificação por diferenças finitas
# ---------------------------------------------------------------------------

def verificar_gradiente(op: str,
                        entradas: Sequence[np.ndarray],
                        attrs: Optional[Dict[str, Any]] = None,
                        h: float = 1e-5,
                        rng: Optional[np.random.Generator] = None) -> float:
    """
    Compara o backward de uma primitiva com diferenças centrais (float64).

    A saída é projetada em uma direção aleatória R, de modo que o escalar
    verificado é sum(R * op(entradas)).

    Returns:
        Maior erro relativo |analítico - numérico| / max(1, |numérico|).
    """
    rng = rng or np.random.default_rng(0)
    bases = [np.array(a, dtype=np.float64) for a in entradas]
    tensores = [Tensor(a, dtype=np.float64) for a in bases]
    with Tape() as fita:
        saida = forward_primitive(op, tensores, attrs)
    direcao = rng.standard_normal(saida.shape)
    grads = _retropropagar(fita, saida.id, direcao)

    def projetar(args: List[np.ndarray]) -> float:
        y = forward_primitive(op, [Tensor._envolver(a) for a in args], attrs).data
        return float(np.sum(y * direcao))

    erro_max = 0.0
    for k, base in enumerate(bases):
        analitico = grads[tensores[k].id]
        for idx in np.ndindex(base.shape):
            mais, menos = base.copy(), base.copy()
            mais[idx] += h
            menos[idx] -= h
            args_mais = [mais if j == k else bases[j].copy() for j in range(len(bases))]
            args_menos = [menos if j == k else bases[j].copy() for j in range(len(bases))]
            numerico = (projetar(args_mais) - projetar(args_menos)) / (2 * h)
            erro = abs(float(analitico[idx]) - numerico) / max(1.0, abs(numerico))
            erro_max = max(erro_max, erro)
    logger.debug(f"Verificação de gradiente '{op}': erro relativo máximo {erro_max:.3e}")
    return erro_max


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """Momentos por parâmetro e contador de passos do Adam."""
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def inicial(cls, params: Dict[str, Tensor], **hiper: float) -> "AdamState":
        m = {k: np.zeros(p.shape, dtype=p.dtype) for k, p in params.items()}
        v = {k: np.zeros(p.shape, dtype=p.dtype) for k, p in params.items()}
        return cls(m=m, v=v, t=0, **hiper)

    def estender(self, params: Dict[str, Tensor]) -> "AdamState":
        """Novo estado com momentos zerados para parâmetros ainda sem momento."""
        m = dict(self.m)
        v = dict(self.v)
        for k, p in params.items():
            if k not in m:
                m[k] = np.zeros(p.shape, dtype=p.dtype)
                v[k] = np.zeros(p.shape, dtype=p.dtype)
        return AdamState(m=m, v=v, t=self.t, lr=self.lr, beta1=self.beta1,
                         beta2=self.beta2, epsilon=self.epsilon)


def adam_step(params: Dict[str, Tensor],
              grads: Dict[str, Union[Tensor, np.ndarray]],
              estado: AdamState) -> Tuple[Dict[str, Tensor], AdamState]:
    """
    Um passo do Adam com correção de viés (usa t já incrementado).

    Returns:
        (novos parâmetros, novo estado). As entradas não são modificadas.

    Raises:
        FormaIncompativelError: Se formas de parâmetros, gradientes e momentos divergirem.
        GradienteNaoFinitoError: Se algum gradiente tiver NaN/inf.
    """
    t = estado.t + 1
    corr1 = 1.0 - estado.beta1 ** t
    corr2 = 1.0 - estado.beta2 ** t
    novos_params: Dict[str, Tensor] = {}
    novo_m: Dict[str, np.ndarray] = {}
    novo_v: Dict[str, np.ndarray] = {}

    for nome, p in params.items():
        if nome not in grads:
            raise FormaIncompativelError(f"adam_step: gradiente ausente para '{nome}'")
        g = grads[nome]
        g = g.data if isinstance(g, Tensor) else np.asarray(g)
        m, v = estado.m.get(nome), estado.v.get(nome)
        if m is None or v is None:
            raise FormaIncompativelError(f"adam_step: estado sem momentos para '{nome}'")
        if not (g.shape == p.shape == m.shape == v.shape):
            raise FormaIncompativelError(
                f"adam_step: '{nome}' com formas param {p.shape}, grad {g.shape}, m {m.shape}, v {v.shape}")
        if not np.all(np.isfinite(g)):
            raise GradienteNaoFinitoError(nome)
        g = g.astype(p.dtype, copy=False)

        m_t = estado.beta1 * m + (1.0 - estado.beta1) * g
        v_t = estado.beta2 * v + (1.0 - estado.beta2) * (g * g)
        m_hat = m_t / corr1
        v_hat = v_t / corr2
        novo = p.data - estado.lr * m_hat / (np.sqrt(v_hat) + estado.epsilon)
        novos_params[nome] = Tensor._envolver(novo.astype(p.dtype, copy=False), nome=nome)
        novo_m[nome] = m_t.astype(p.dtype, copy=False)
        novo_v[nome] = v_t.astype(p.dtype, copy=False)

    novo_estado = AdamState(m={**estado.m, **novo_m}, v={**estado.v, **novo_v}, t=t,
                            lr=estado.lr, beta1=estado.beta1, beta2=estado.beta2,
                            epsilon=estado.epsilon)
    return novos_params, novo_estado
