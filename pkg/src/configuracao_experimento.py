"""
Leitura do arquivo de experimento (key=value em seções [dataset], [train],
[task] e [eval]). Chaves ausentes recebem os padrões de config.py; chaves ou
seções desconhecidas são rejeitadas.
"""
import configparser
import os
import re
import sys
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, Optional, Tuple, Union

# Adiciona o diretório raiz ao path para encontrar 'config.py'
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
import config

from src.exceptions import ConfiguracaoError
from src.imaging import NoiseModel
from src.logger import logger
from src.objects import GaussianBlobSignal, LumpyParams
from src.proagan import ProgressiveSchedule, nivel_de_resolucao
from src.trainer import TrainConfig

_PADRAO_SINAL = re.compile(r"^signal(\d+)$")
_VERDADEIROS = {"1", "true", "yes", "on", "sim"}
_FALSOS = {"0", "false", "no", "off", "nao", "não"}


def _inteiro(texto: str) -> int:
    return int(texto.replace("_", ""))


def _real(texto: str) -> float:
    return float(texto.replace("_", ""))


def _booleano(texto: str) -> bool:
    valor = texto.strip().lower()
    if valor in _VERDADEIROS:
        return True
    if valor in _FALSOS:
        return False
    raise ValueError(f"'{texto}' não é booleano")


def _lista_inteiros(texto: str) -> Tuple[int, ...]:
    return tuple(_inteiro(v.strip()) for v in texto.split(",") if v.strip())


def _inteiro_ou_auto(texto: str) -> Optional[int]:
    return None if texto.strip().lower() == "auto" else _inteiro(texto)


def _real_ou_auto(texto: str) -> Union[float, str]:
    return "auto" if texto.strip().lower() == "auto" else _real(texto)


def _real_opcional(texto: str) -> Optional[float]:
    return None if texto.strip().lower() in ("", "auto", "none") else _real(texto)


@dataclass(frozen=True)
class SecaoDataset:
    size: int = config.DATASET_SIZE
    count: int = config.DATASET_COUNT
    nbar: float = config.LUMPY_NBAR
    amplitude: float = config.LUMPY_AMPLITUDE
    width: float = config.LUMPY_WIDTH
    noise_factor: float = config.NOISE_FACTOR
    sigma_k: Optional[float] = None
    seed: int = config.DATASET_SEED
    normalize: bool = True

    def lumpy(self) -> LumpyParams:
        return LumpyParams(nbar=self.nbar, amplitude=self.amplitude, width=self.width, n=self.size)

    def modelo_ruido(self) -> Optional[NoiseModel]:
        """NoiseModel explícito ou None (sigma_k derivado de noise_factor)."""
        return None if self.sigma_k is None else NoiseModel(self.sigma_k)


@dataclass(frozen=True)
class SecaoTrain:
    final_level: Optional[int] = None
    fade_images: int = config.FADE_IMAGES
    stabilize_images: int = config.STABILIZE_IMAGES
    batch: Tuple[int, ...] = tuple(config.BATCH_POR_NIVEL[l] for l in sorted(config.BATCH_POR_NIVEL))
    d_steps: Optional[int] = None
    loss: str = config.LOSS_VARIANT
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
    leaky_slope: float = config.LEAKY_SLOPE
    equalized_lr: bool = False
    minibatch_stddev: bool = False
    measurement_mode: str = config.MEASUREMENT_MODE
    snapshot_count: int = 16


@dataclass(frozen=True)
class SecaoTask:
    roi_size: int = config.ROI_SIZE
    sigma: Union[float, str] = config.TASK_SIGMA
    target_auc: float = config.AUC_ALVO
    sinais: Tuple[GaussianBlobSignal, ...] = tuple(GaussianBlobSignal(*v) for v in config.SINAIS_PADRAO)


@dataclass(frozen=True)
class SecaoEval:
    n_pairs: int = config.N_PAIRS
    seed: int = config.EVAL_SEED
    sample_count: int = config.DATASET_COUNT
    delta_auc_max: float = config.LIMIAR_DELTA_AUC
    cosine_min: float = config.LIMIAR_COSSENO


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: SecaoDataset = field(default_factory=SecaoDataset)
    train: SecaoTrain = field(default_factory=SecaoTrain)
    task: SecaoTask = field(default_factory=SecaoTask)
    eval: SecaoEval = field(default_factory=SecaoEval)
    origem: Optional[str] = None

    def eco(self) -> Dict[str, Any]:
        """Configuração resolvida, ecoada em todo artefato de saída."""
        return {
            "origem": self.origem,
            "dataset": asdict(self.dataset),
            "train": {**asdict(self.train), "batch": list(self.train.batch)},
            "task": {
                "roi_size": self.task.roi_size,
                "sigma": self.task.sigma,
                "target_auc": self.task.target_auc,
                "sinais": [asdict(s) for s in self.task.sinais],
            },
            "eval": asdict(self.eval),
        }

    def com_dataset(self, **alteracoes: Any) -> "ExperimentConfig":
        """Cópia com campos de [dataset] sobrescritos (opções de linha de comando)."""
        validos = {k: v for k, v in alteracoes.items() if v is not None}
        dataset = SecaoDataset(**{**asdict(self.dataset), **validos})
        novo = ExperimentConfig(dataset, self.train, self.task, self.eval, self.origem)
        _validar(novo)
        return novo


_CONVERSORES: Dict[str, Dict[str, Callable[[str], Any]]] = {
    "dataset": {
        "size": _inteiro, "count": _inteiro, "nbar": _real, "amplitude": _real, "width": _real,
        "noise_factor": _real, "sigma_k": _real_opcional, "seed": _inteiro, "normalize": _booleano,
    },
    "train": {
        "final_level": _inteiro, "fade_images": _inteiro, "stabilize_images": _inteiro,
        "batch": _lista_inteiros, "d_steps": _inteiro_ou_auto, "loss": str.strip, "lr": _real,
        "beta1": _real, "beta2": _real, "epsilon": _real, "clip_c": _real, "seed": _inteiro,
        "checkpoint_interval": _inteiro, "log_interval": _inteiro, "latent_dim": _inteiro,
        "c0": _inteiro, "c_max": _inteiro, "leaky_slope": _real, "equalized_lr": _booleano,
        "minibatch_stddev": _booleano, "measurement_mode": str.strip, "snapshot_count": _inteiro,
    },
    "task": {"roi_size": _inteiro, "sigma": _real_ou_auto, "target_auc": _real},
    "eval": {
        "n_pairs": _inteiro, "seed": _inteiro, "sample_count": _inteiro,
        "delta_auc_max": _real, "cosine_min": _real,
    },
}


def _ler_secao(parser: configparser.ConfigParser, secao: str, origem: str) -> Dict[str, Any]:
    valores: Dict[str, Any] = {}
    if not parser.has_section(secao):
        return valores
    conversores = _CONVERSORES[secao]
    for chave, texto in parser.items(secao):
        if secao == "task" and _PADRAO_SINAL.match(chave):
            continue
        if chave not in conversores:
            raise ConfiguracaoError(f"{origem}: chave desconhecida '{chave}' na seção [{secao}]")
        try:
            valores[chave] = conversores[chave](texto)
        except ValueError as e:
            raise ConfiguracaoError(f"{origem}: valor inválido para [{secao}] {chave} = '{texto}' ({e})") from e
    return valores


def _ler_sinais(parser: configparser.ConfigParser, origem: str) -> Optional[Tuple[GaussianBlobSignal, ...]]:
    if not parser.has_section("task"):
        return None
    encontrados = []
    for chave, texto in parser.items("task"):
        m = _PADRAO_SINAL.match(chave)
        if m:
            try:
                encontrados.append((int(m.group(1)), GaussianBlobSignal.de_texto(texto)))
            except Exception as e:
                raise ConfiguracaoError(f"{origem}: [task] {chave}: {e}") from e
    if not encontrados:
        return None
    return tuple(sinal for _, sinal in sorted(encontrados, key=lambda par: par[0]))


def _validar(exp: ExperimentConfig) -> None:
    t, k, e = exp.train, exp.task, exp.eval
    if exp.dataset.size not in config.TAMANHOS_VALIDOS:
        raise ConfiguracaoError(f"[dataset] size = {exp.dataset.size}; use um de {config.TAMANHOS_VALIDOS}")
    if t.final_level is not None and t.final_level > nivel_de_resolucao(exp.dataset.size):
        raise ConfiguracaoError(
            f"[train] final_level = {t.final_level} excede a resolução do conjunto ({exp.dataset.size}px)")
    if not t.batch:
        raise ConfiguracaoError("[train] batch vazio")
    if t.snapshot_count < 1:
        raise ConfiguracaoError("[train] snapshot_count deve ser >= 1")
    if k.roi_size < 1 or k.roi_size > exp.dataset.size:
        raise ConfiguracaoError(f"[task] roi_size = {k.roi_size} fora de 1..{exp.dataset.size}")
    if k.sigma != "auto" and not k.sigma > 0:
        raise ConfiguracaoError(f"[task] sigma deve ser > 0 ou 'auto'; recebido {k.sigma}")
    if not 0.5 < k.target_auc < 1.0:
        raise ConfiguracaoError(f"[task] target_auc deve estar em (0.5, 1); recebido {k.target_auc}")
    if e.n_pairs < 1 or e.sample_count < 2:
        raise ConfiguracaoError("[eval] n_pairs deve ser >= 1 e sample_count >= 2")


def carregar_experimento(caminho: Optional[str] = None) -> ExperimentConfig:
    """
    Lê um arquivo de experimento; sem caminho, devolve os padrões de config.py.

    Raises:
        ConfiguracaoError: Arquivo ausente, sintaxe inválida, seção/chave desconhecida ou valor fora do domínio.
    """
    if caminho is None:
        return ExperimentConfig()
    if not os.path.isfile(caminho):
        raise ConfiguracaoError(f"Arquivo de configuração não encontrado: {caminho}")

    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                       comment_prefixes=("#",), strict=True)
    parser.optionxform = str
    try:
        with open(caminho, encoding="utf-8") as f:
            parser.read_file(f, source=caminho)
    except configparser.Error as e:
        raise ConfiguracaoError(f"{caminho}: sintaxe inválida ({e})") from e

    desconhecidas = [s for s in parser.sections() if s not in _CONVERSORES]
    if desconhecidas or parser.defaults():
        raise ConfiguracaoError(f"{caminho}: seções desconhecidas {desconhecidas or ['DEFAULT']}")

    dataset = SecaoDataset(**_ler_secao(parser, "dataset", caminho))
    train = SecaoTrain(**_ler_secao(parser, "train", caminho))
    task_valores = _ler_secao(parser, "task", caminho)
    sinais = _ler_sinais(parser, caminho)
    if sinais is not None:
        task_valores["sinais"] = sinais
    task = SecaoTask(**task_valores)
    avaliacao = SecaoEval(**_ler_secao(parser, "eval", caminho))

    exp = ExperimentConfig(dataset, train, task, avaliacao, os.path.abspath(caminho))
    _validar(exp)
    logger.debug(f"Experimento carregado de {caminho}: {len(task.sinais)} sinal(is), n={dataset.size}")
    return exp


def para_train_config(exp: ExperimentConfig, caminho_dados: str, pasta_saida: str,
                      deterministico: bool = False, n_dados: Optional[int] = None) -> TrainConfig:
    """
    Monta o TrainConfig; sem final_level, o cronograma vai até a resolução do
    conjunto (n_dados, ou [dataset] size).
    """
    t = exp.train
    nivel_final = t.final_level if t.final_level is not None else nivel_de_resolucao(n_dados or exp.dataset.size)
    schedule = ProgressiveSchedule.padrao(nivel_final, t.fade_images, t.stabilize_images)
    batch = {nivel: t.batch[min(nivel, len(t.batch) - 1)] for nivel in range(nivel_final + 1)}
    return TrainConfig(
        schedule=schedule,
        caminho_dataset=caminho_dados,
        pasta_saida=pasta_saida,
        batch_por_nivel=batch,
        d_steps=t.d_steps,
        variante=t.loss,
        lr=t.lr, beta1=t.beta1, beta2=t.beta2, epsilon=t.epsilon,
        clip_c=t.clip_c,
        seed=t.seed,
        checkpoint_interval=t.checkpoint_interval,
        log_interval=t.log_interval,
        latent_dim=t.latent_dim, c0=t.c0, c_max=t.c_max,
        inclinacao=t.leaky_slope,
        equalized_lr=t.equalized_lr,
        minibatch_stddev=t.minibatch_stddev,
        modo_medicao=t.measurement_mode,
        deterministico=deterministico,
        eco_config=exp.eco(),
    )
