"""
Laço de treinamento progressivo da ProAGAN.

Cada passo: d_steps atualizações de D (lotes reais novos, z novo, ruído de
medição novo), depois uma atualização de G. O orçamento é contado em imagens
mostradas; alpha avança linearmente durante o fade. Todos os números
aleatórios de um passo vêm de default_rng([seed, 2, passo]) e o crescimento
da fase p usa default_rng([seed, 3, p]), de modo que a retomada a partir de
qualquer checkpoint reproduz o treinamento sem interrupção bit a bit.
"""
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

# Adiciona o diretório raiz ao path para encontrar 'config.py'
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
import config

from src.exceptions import (
    ArmazenamentoError,
    ArquivoNaoEncontradoError,
    ConfiguracaoError,
    CronogramaInvalidoError,
    DadosInvalidosError,
    FormatoArquivoInvalidoError,
    GradienteNaoFinitoError,
    PerdaNaoFinitaError,
    ResolucaoIncompativelError,
)
from src.formato_somt import ler_somt, save_tensors
from src.gerador_rasters import escrever_csv, escrever_grade_pgm
from src.imaging import NoiseModel
from src.logger import logger
from src.objects import carregar_dataset
from src.proagan import (
    MODOS_MEDICAO,
    VARIANTES_PERDA,
    DiscriminatorNet,
    FadeState,
    Fase,
    GeneratorNet,
    OpcoesRede,
    PiramideReal,
    ProgressiveSchedule,
    build_networks,
    clip_weights,
    contar_parametros,
    disc_forward,
    gen_forward,
    grow,
    loss_discriminator,
    loss_generator,
    nivel_de_resolucao,
    resolucao,
    synth_measurement_path,
)
from src import tensor_core as tc
from src.tensor_core import AdamState, Tape, Tensor, adam_step, backward
from src.utils.debug_tools import debug_tracker

FLUXO_PASSO = 2
FLUXO_CRESCIMENTO = 3
COLUNAS_LOG = ["step", "level", "alpha", "loss_d", "loss_g", "images_shown", "seconds"]
CAMPOS_MANIFESTO = ["fase", "nivel", "alpha", "passo", "imagens_mostradas", "imagens_fase",
                    "t_g", "t_d", "lo", "hi", "nivel_max", "latent_dim"]
NOME_LOG = "treino_log.csv"


@dataclass
class TrainConfig:
    """Configuração completa de um treinamento (todos os campos têm padrão em config.py)."""
    schedule: ProgressiveSchedule
    caminho_dataset: str
    pasta_saida: str
    batch_por_nivel: Dict[int, int] = field(default_factory=lambda: dict(config.BATCH_POR_NIVEL))
    d_steps: Optional[int] = None
    variante: str = config.LOSS_VARIANT
    lr: float = config.ADAM_LR
    beta1: float = config.ADAM_BETA1
    beta2: float = config.ADAM_BETA2
    epsilon: float = config.ADAM_EPSILON
    clip_c: float = config.CLIP_C
    seed: int = config.TRAIN_SEED
    checkpoint_interval: int = config.CHECKPOINT_INTERVAL
    log_interval: int = config.LOG_INTERVAL
    latent_dim: int = config.LATENT_DIM
    c0: int = config.CANAIS_C0
    c_max: int = config.CANAIS_CMAX
    inclinacao: float = config.LEAKY_SLOPE
    equalized_lr: bool = False
    minibatch_stddev: bool = False
    modo_medicao: str = config.MEASUREMENT_MODE
    deterministico: bool = False
    eco_config: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.variante not in VARIANTES_PERDA:
            raise ConfiguracaoError(f"Variante de perda desconhecida: '{self.variante}' (use {VARIANTES_PERDA})")
        if self.modo_medicao not in MODOS_MEDICAO:
            raise ConfiguracaoError(f"Modo de medição desconhecido: '{self.modo_medicao}' (use {MODOS_MEDICAO})")
        if self.d_steps is None:
            self.d_steps = config.D_STEPS_POR_VARIANTE[self.variante]
        if self.d_steps < 1:
            raise ConfiguracaoError(f"d_steps deve ser >= 1; recebido {self.d_steps}")
        for fase in self.schedule.fases:
            if self.batch(fase.nivel) < 1:
                raise ConfiguracaoError(f"Batch do nível {fase.nivel} deve ser >= 1")
        if self.clip_c <= 0:
            raise ConfiguracaoError(f"clip_c deve ser > 0; recebido {self.clip_c}")
        if self.lr <= 0 or not (0 <= self.beta1 < 1) or not (0 <= self.beta2 < 1) or self.epsilon <= 0:
            raise ConfiguracaoError("Hiperparâmetros do Adam fora do domínio (lr>0, 0<=beta<1, epsilon>0)")
        if self.checkpoint_interval < 0 or self.log_interval < 1:
            raise ConfiguracaoError("checkpoint_interval deve ser >= 0 e log_interval >= 1")

    def batch(self, nivel: int) -> int:
        if nivel not in self.batch_por_nivel:
            raise ConfiguracaoError(f"Batch não configurado para o nível {nivel}")
        return int(self.batch_por_nivel[nivel])

    def hiper_adam(self) -> Dict[str, float]:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "epsilon": self.epsilon}

    def validar_caminhos(self) -> None:
        """Garante, antes do primeiro passo, que o conjunto existe e a saída é gravável."""
        if not os.path.isfile(self.caminho_dataset):
            raise ArquivoNaoEncontradoError(f"Conjunto de dados não encontrado: {self.caminho_dataset}")
        try:
            os.makedirs(self.pasta_saida, exist_ok=True)
        except OSError as e:
            raise ArmazenamentoError(f"Não foi possível criar '{self.pasta_saida}': {e}") from e


@dataclass(frozen=True)
class RegistroTreino:
    step: int
    level: int
    alpha: float
    loss_d: float
    loss_g: float
    images_shown: int
    seconds: float


@dataclass(frozen=True)
class EstadoTreino:
    """Tudo o que um checkpoint precisa para retomar o treinamento."""
    gen: GeneratorNet
    disc: DiscriminatorNet
    adam_g: AdamState
    adam_d: AdamState
    fase_indice: int = 0
    passo: int = 0
    imagens_mostradas: int = 0
    imagens_fase: int = 0
    alpha: float = 1.0


@dataclass
class Checkpoint:
    estado: EstadoTreino
    schedule: ProgressiveSchedule
    sigma_k: float
    metadados: Dict[str, Any]


@dataclass
class ResultadoTreino:
    caminho_final: str
    caminho_log: str
    estado: EstadoTreino
    registros: List[RegistroTreino]
    checkpoints_fase: List[str]


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def _tensores_checkpoint(estado: EstadoTreino) -> Dict[str, np.ndarray]:
    op = estado.gen.opcoes
    lo, hi = op.faixa
    manifesto = np.array([
        estado.fase_indice, estado.gen.nivel, estado.alpha, estado.passo, estado.imagens_mostradas,
        estado.imagens_fase, estado.adam_g.t, estado.adam_d.t, lo, hi, op.nivel_max, op.latent_dim,
    ], dtype=np.float64)
    tensores: Dict[str, np.ndarray] = {"manifesto": manifesto}
    for prefixo, net, adam in (("g", estado.gen, estado.adam_g), ("d", estado.disc, estado.adam_d)):
        for nome, p in net.params.items():
            tensores[f"{prefixo}/{nome}"] = p.data.astype(np.float64)
        for nome in net.params:
            tensores[f"adam_{prefixo}/m/{nome}"] = adam.m[nome].astype(np.float64)
            tensores[f"adam_{prefixo}/v/{nome}"] = adam.v[nome].astype(np.float64)
    return tensores


def salvar_checkpoint(caminho: str, estado: EstadoTreino, schedule: ProgressiveSchedule,
                      sigma_k: float, hiper_adam: Dict[str, float],
                      eco_config: Optional[Dict[str, Any]] = None) -> str:
    """Grava o estado em SOMT float64 (parâmetros float32 convertidos sem perda)."""
    opcoes = asdict(estado.gen.opcoes)
    metadados = {
        "tipo": "checkpoint",
        "campos_manifesto": CAMPOS_MANIFESTO,
        "opcoes": opcoes,
        "cronograma": schedule.como_lista(),
        "sigma_k": sigma_k,
        "adam": hiper_adam,
        "config": eco_config or {},
    }
    return save_tensors(caminho, _tensores_checkpoint(estado), metadados, dtype=np.float64)


def carregar_checkpoint(caminho: str) -> Checkpoint:
    """
    Lê um checkpoint gravado por `salvar_checkpoint`.

    Raises:
        FormatoArquivoInvalidoError: Arquivo SOMT que não é um checkpoint ou está incompleto.
    """
    conteudo = ler_somt(caminho)
    meta = conteudo.metadados
    tensores = conteudo.tensores
    if meta.get("tipo") != "checkpoint" or "manifesto" not in tensores:
        raise FormatoArquivoInvalidoError(f"'{caminho}' não é um checkpoint de treinamento")
    try:
        man = dict(zip(CAMPOS_MANIFESTO, tensores["manifesto"].tolist()))
        bruto = dict(meta["opcoes"])
        bruto["faixa"] = (man["lo"], man["hi"])
        opcoes = OpcoesRede(**bruto)
        schedule = ProgressiveSchedule(tuple(Fase(*f) for f in meta["cronograma"]))
        hiper = meta["adam"]
        nivel = int(man["nivel"])

        redes = {}
        adams = {}
        for prefixo in ("g", "d"):
            marcador = f"{prefixo}/"
            params = {k[len(marcador):]: Tensor(v, dtype=opcoes.dtype, nome=k[len(marcador):])
                      for k, v in tensores.items() if k.startswith(marcador)}
            m = {nome: tensores[f"adam_{prefixo}/m/{nome}"].astype(opcoes.dtype) for nome in params}
            v = {nome: tensores[f"adam_{prefixo}/v/{nome}"].astype(opcoes.dtype) for nome in params}
            redes[prefixo] = params
            adams[prefixo] = AdamState(m=m, v=v, t=int(man[f"t_{prefixo}"]), **hiper)
    except (KeyError, TypeError, ValueError) as e:
        raise FormatoArquivoInvalidoError(f"Checkpoint '{caminho}' corrompido: {e}") from e

    estado = EstadoTreino(
        gen=GeneratorNet(redes["g"], nivel, opcoes),
        disc=DiscriminatorNet(redes["d"], nivel, opcoes),
        adam_g=adams["g"],
        adam_d=adams["d"],
        fase_indice=int(man["fase"]),
        passo=int(man["passo"]),
        imagens_mostradas=int(man["imagens_mostradas"]),
        imagens_fase=int(man["imagens_fase"]),
        alpha=float(man["alpha"]),
    )
    return Checkpoint(estado, schedule, float(meta.get("sigma_k", 0.0)), meta)


# ---------------------------------------------------------------------------
# Log
# ---------------------------------------------------------------------------

def _gravar_log(caminho: str, registros: List[RegistroTreino], eco: Dict[str, Any]) -> str:
    tabela = pd.DataFrame([asdict(r) for r in registros], columns=COLUNAS_LOG)
    return escrever_csv(caminho, tabela, {"config": eco})


def carregar_log(caminho: str, ate_passo: Optional[int] = None) -> List[RegistroTreino]:
    """Lê o TrainLog CSV; com `ate_passo`, descarta registros posteriores."""
    if not os.path.isfile(caminho):
        return []
    tabela = pd.read_csv(caminho, float_precision="round_trip")
    if ate_passo is not None:
        tabela = tabela[tabela["step"] <= ate_passo]
    return [RegistroTreino(int(r.step), int(r.level), float(r.alpha), float(r.loss_d), float(r.loss_g),
                           int(r.images_shown), float(r.seconds))
            for r in tabela.itertuples(index=False)]


# ---------------------------------------------------------------------------
# Passo de treinamento
# ---------------------------------------------------------------------------

def _grads_por_nome(grads, params: Dict[str, Tensor]) -> Dict[str, np.ndarray]:
    # parâmetros fora do grafo deste passo (ex.: toRGB antigos) recebem zero
    return {nome: grads[p.id].data if p.id in grads else np.zeros(p.shape, dtype=p.dtype)
            for nome, p in params.items()}


def _lote_e_alpha(fase: Fase, imagens_fase: int, batch: int) -> Tuple[int, float]:
    if imagens_fase < fase.fade_images:
        b = min(batch, fase.fade_images - imagens_fase)
        return b, min(1.0, (imagens_fase + b) / fase.fade_images)
    return min(batch, fase.total_images - imagens_fase), 1.0


def _z(rng: np.random.Generator, b: int, op: OpcoesRede) -> Tensor:
    return Tensor(rng.standard_normal((b, op.latent_dim)), dtype=op.dtype)


class _Treinador:
    """Estado fixo de um treinamento (dados, ruído, configuração) e o passo."""

    def __init__(self, cfg: TrainConfig, piramide: PiramideReal, nm: NoiseModel):
        self.cfg = cfg
        self.piramide = piramide
        self.nm = nm

    def salvar(self, caminho: str, estado: EstadoTreino) -> str:
        return salvar_checkpoint(caminho, estado, self.cfg.schedule, self.nm.sigma_k,
                                 self.cfg.hiper_adam(), self.cfg.eco_config)

    def abortar(self, estado: EstadoTreino, passo: int, motivo: str) -> None:
        caminho = os.path.join(self.cfg.pasta_saida, f"falha_passo_{passo}.somt")
        self.salvar(caminho, estado)
        logger.error(f"Treinamento abortado no passo {passo}: {motivo}. Checkpoint de falha: {caminho}")
        raise PerdaNaoFinitaError(f"Passo {passo}: {motivo}", caminho)

    def passo(self, estado: EstadoTreino) -> Tuple[EstadoTreino, RegistroTreino]:
        cfg = self.cfg
        fase = cfg.schedule.fases[estado.fase_indice]
        b, alpha = _lote_e_alpha(fase, estado.imagens_fase, cfg.batch(fase.nivel))
        fs = FadeState(alpha, fase.nivel)
        numero = estado.passo + 1
        rng = np.random.default_rng([cfg.seed, FLUXO_PASSO, numero])
        inicio = time.perf_counter()

        reais = self.piramide.nivel(fase.nivel)
        op = estado.gen.opcoes
        gen, disc, adam_g, adam_d = estado.gen, estado.disc, estado.adam_g, estado.adam_d
        perda_d = math.nan
        for _ in range(cfg.d_steps):
            indices = rng.integers(0, len(self.piramide), size=b)
            x_real = Tensor(reais[indices], dtype=op.dtype)
            f_hat = gen_forward(_z(rng, b, op), gen, fs)
            x_fake = synth_measurement_path(f_hat, self.nm, rng, op.nivel_max, cfg.modo_medicao)
            with Tape() as fita:
                perda = loss_discriminator(disc_forward(x_real, disc, fs), disc_forward(x_fake, disc, fs),
                                           cfg.variante)
            perda_d = perda.item()
            if not math.isfinite(perda_d):
                self.abortar(estado, numero, f"perda do discriminador não finita ({perda_d})")
            try:
                novos, adam_d = adam_step(disc.params, _grads_por_nome(backward(fita, perda), disc.params), adam_d)
            except GradienteNaoFinitoError as e:
                self.abortar(estado, numero, str(e))
            if cfg.variante == "wgan_clip":
                novos = clip_weights(novos, cfg.clip_c)
            disc = replace(disc, params=novos)

        with Tape() as fita:
            f_hat = gen_forward(_z(rng, b, op), gen, fs)
            x_fake = synth_measurement_path(f_hat, self.nm, rng, op.nivel_max, cfg.modo_medicao)
            perda = loss_generator(disc_forward(x_fake, disc, fs), cfg.variante)
        perda_g = perda.item()
        if not math.isfinite(perda_g):
            self.abortar(estado, numero, f"perda do gerador não finita ({perda_g})")
        try:
            novos, adam_g = adam_step(gen.params, _grads_por_nome(backward(fita, perda), gen.params), adam_g)
        except GradienteNaoFinitoError as e:
            self.abortar(estado, numero, str(e))
        gen = replace(gen, params=novos)

        novo_estado = replace(estado, gen=gen, disc=disc, adam_g=adam_g, adam_d=adam_d, passo=numero,
                              imagens_mostradas=estado.imagens_mostradas + b,
                              imagens_fase=estado.imagens_fase + b, alpha=alpha)
        segundos = 0.0 if cfg.deterministico else time.perf_counter() - inicio
        registro = RegistroTreino(numero, fase.nivel, alpha, perda_d, perda_g, novo_estado.imagens_mostradas, segundos)
        return novo_estado, registro

    def avancar_fase(self, estado: EstadoTreino) -> EstadoTreino:
        indice = estado.fase_indice + 1
        rng = np.random.default_rng([self.cfg.seed, FLUXO_CRESCIMENTO, indice])
        gen, disc = grow(estado.gen, estado.disc, self.cfg.schedule, indice, rng)
        logger.info(f"Parâmetros: G={contar_parametros(gen)}, D={contar_parametros(disc)}")
        return replace(estado, gen=gen, disc=disc, adam_g=estado.adam_g.estender(gen.params),
                       adam_d=estado.adam_d.estender(disc.params), fase_indice=indice, imagens_fase=0,
                       alpha=0.0 if self.cfg.schedule.fases[indice].fade_images > 0 else 1.0)


def _estado_inicial(cfg: TrainConfig, nivel_max: int, faixa: Tuple[float, float]) -> EstadoTreino:
    op = OpcoesRede(nivel_max=nivel_max, latent_dim=cfg.latent_dim, c0=cfg.c0, c_max=cfg.c_max,
                    inclinacao=cfg.inclinacao, equalized_lr=cfg.equalized_lr,
                    minibatch_stddev=cfg.minibatch_stddev, faixa=faixa)
    rng = np.random.default_rng([cfg.seed, FLUXO_CRESCIMENTO, 0])
    gen, disc = build_networks(op, rng, nivel=cfg.schedule.fases[0].nivel)
    return EstadoTreino(gen=gen, disc=disc,
                        adam_g=AdamState.inicial(gen.params, **cfg.hiper_adam()),
                        adam_d=AdamState.inicial(disc.params, **cfg.hiper_adam()))


@debug_tracker
def train(cfg: TrainConfig, retomar_de: Optional[str] = None) -> ResultadoTreino:
    """
    Executa o cronograma progressivo completo (ou o restante, ao retomar).

    Returns:
        ResultadoTreino com o checkpoint final, o TrainLog e os checkpoints de fase.

    Raises:
        ResolucaoIncompativelError: Cronograma acima da resolução do conjunto.
        CronogramaInvalidoError: Checkpoint de retomada com outro cronograma.
        PerdaNaoFinitaError: Perda ou gradiente NaN (após gravar o checkpoint de falha).
    """
    cfg.validar_caminhos()
    tc.definir_modo_deterministico(cfg.deterministico)
    ds = carregar_dataset(cfg.caminho_dataset)
    nivel_max = nivel_de_resolucao(ds.n)
    if cfg.schedule.nivel_final > nivel_max:
        raise ResolucaoIncompativelError(
            f"Cronograma termina no nível {cfg.schedule.nivel_final} ({resolucao(cfg.schedule.nivel_final)}px), "
            f"mas o conjunto tem {ds.n}px (nível {nivel_max})")

    nm = NoiseModel(ds.sigma_k)
    treinador = _Treinador(cfg, PiramideReal(ds.reconstrucoes), nm)
    caminho_log = os.path.join(cfg.pasta_saida, NOME_LOG)

    if retomar_de:
        ck = carregar_checkpoint(retomar_de)
        if ck.schedule != cfg.schedule:
            raise CronogramaInvalidoError(
                f"Checkpoint '{retomar_de}' usa o cronograma {ck.schedule.como_lista()}, "
                f"diferente do configurado {cfg.schedule.como_lista()}")
        if ck.estado.gen.opcoes.nivel_max != nivel_max:
            raise ResolucaoIncompativelError("Checkpoint treinado para outra resolução de conjunto")
        estado = ck.estado
        registros = carregar_log(caminho_log, estado.passo)
        logger.info(f"Retomando de {retomar_de}: passo {estado.passo}, fase {estado.fase_indice}, "
                    f"imagens mostradas {estado.imagens_mostradas}")
    else:
        # faixa das reconstruções ruidosas: os objetos limpos nunca entram no treinamento
        faixa = (float(np.min(ds.reconstrucoes)), float(np.max(ds.reconstrucoes)))
        estado = _estado_inicial(cfg, nivel_max, faixa)
        registros = []
        logger.info(f"Treinamento novo: {len(cfg.schedule.fases)} fases, variante {cfg.variante}, "
                    f"d_steps={cfg.d_steps}, faixa de saída [{faixa[0]:.4g}, {faixa[1]:.4g}]")

    checkpoints_fase: List[str] = []
    fases = cfg.schedule.fases
    while True:
        fase = fases[estado.fase_indice]
        if estado.imagens_fase >= fase.total_images:
            caminho_fase = treinador.salvar(os.path.join(cfg.pasta_saida, f"fase_{estado.fase_indice}.somt"), estado)
            checkpoints_fase.append(caminho_fase)
            logger.info(f"Fase {estado.fase_indice} concluída (nível {fase.nivel}, passo {estado.passo}, "
                        f"imagens {estado.imagens_mostradas})")
            if estado.fase_indice + 1 == len(fases):
                break
            estado = treinador.avancar_fase(estado)
            continue

        estado, registro = treinador.passo(estado)
        registros.append(registro)
        if registro.step % cfg.log_interval == 0 or estado.imagens_fase >= fase.total_images:
            logger.info(f"passo {registro.step} | nível {registro.level} | alpha {registro.alpha:.3f} | "
                        f"L_D {registro.loss_d:.5f} | L_G {registro.loss_g:.5f} | imagens {registro.images_shown}")
        if cfg.checkpoint_interval and registro.step % cfg.checkpoint_interval == 0:
            treinador.salvar(os.path.join(cfg.pasta_saida, f"passo_{registro.step}.somt"), estado)
            _gravar_log(caminho_log, registros, cfg.eco_config)

    caminho_final = treinador.salvar(os.path.join(cfg.pasta_saida, "final.somt"), estado)
    _gravar_log(caminho_log, registros, cfg.eco_config)
    logger.info(f"Treinamento concluído: {estado.passo} passos, {estado.imagens_mostradas} imagens; "
                f"checkpoint final em {caminho_final}")
    return ResultadoTreino(caminho_final, caminho_log, estado, registros, checkpoints_fase)


# ---------------------------------------------------------------------------
# Amostragem
# ---------------------------------------------------------------------------

def sample(caminho_checkpoint: str, count: int, seed: int, lote: int = 256) -> np.ndarray:
    """
    Gera `count` imagens (count, r, r) float32 no nível do checkpoint com alpha = 1.

    Todos os vetores latentes são sorteados de uma vez, portanto o resultado
    não depende do tamanho do lote.
    """
    if count < 1:
        raise DadosInvalidosError(f"count deve ser >= 1; recebido {count}")
    gen = carregar_checkpoint(caminho_checkpoint).estado.gen
    op = gen.opcoes
    fs = FadeState(1.0, gen.nivel)
    latentes = np.random.default_rng(seed).standard_normal((count, op.latent_dim))
    partes = []
    for inicio in range(0, count, lote):
        z = Tensor(latentes[inicio:inicio + lote], dtype=op.dtype)
        partes.append(gen_forward(z, gen, fs).data[:, 0])
    return np.concatenate(partes).astype(np.float32)


def snapshot_growth(caminhos_checkpoint: List[str], pasta: str, count: int = 16, seed: int = 0,
                    eco_config: Optional[Dict[str, Any]] = None) -> List[str]:
    """Uma grade PGM de amostras por checkpoint de fase (crescimento_nivel<ℓ>_<r>x<r>.pgm)."""
    gerados = []
    for caminho in caminhos_checkpoint:
        imagens = sample(caminho, count, seed)
        r = imagens.shape[-1]
        nivel = nivel_de_resolucao(r)
        destino = os.path.join(pasta, f"crescimento_nivel{nivel}_{r}x{r}.pgm")
        meta = {"checkpoint": os.path.basename(caminho), "seed": seed, "count": count, "config": eco_config or {}}
        gerados.append(escrever_grade_pgm(destino, imagens, meta))
        logger.info(f"Instantâneo de crescimento: {destino}")
    return gerados
