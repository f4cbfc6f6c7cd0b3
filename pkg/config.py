"""
Configurações globais do somforge.

Valores padrão em escala de mesa (CPU). Todos podem ser sobrescritos pelo
arquivo de experimento (key=value) lido em src/configuracao_experimento.py.
"""
import os

from dotenv import load_dotenv

# Carrega variáveis de um .env local, se existir
load_dotenv()

# Caminho da pasta base do projeto
BASE_DIR = os.path.dirname(os.path.abspath(__file__))

# Pasta de saída padrão
OUTPUT_DIR = os.path.join(BASE_DIR, "output")

# Configuração de experimento de exemplo
EXPERIMENTO_PADRAO = os.path.join(BASE_DIR, "dados", "experimento_desk.cfg")

# Configuração de log
LOG_DIR = os.getenv("SOMFORGE_LOG_DIR", os.path.join(BASE_DIR, "logs"))
LOG_LEVEL = os.getenv("SOMFORGE_LOG_LEVEL", "INFO").upper()  # DEBUG, INFO, WARNING, ERROR, CRITICAL
LOG_FILE = os.path.join(LOG_DIR, "somforge.log")


def _ler_threads() -> int:
    valor = os.getenv("SOMFORGE_THREADS", "1")
    try:
        n = int(valor)
    except ValueError:
        n = 0
    if n < 1:
        # logger ainda não existe aqui (config é importado antes de tudo)
        print(f"AVISO: SOMFORGE_THREADS inválido ({valor!r}); usando 1.")
        return 1
    return n


# Limite de paralelismo. Precisa ser aplicado antes do primeiro import do numpy.
THREADS = _ler_threads()
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, str(THREADS))

# --- [dataset] ---
DATASET_SIZE = 32           # n (potência de 2)
DATASET_COUNT = 2000
LUMPY_NBAR = 20.0           # média de Poisson do número de lumps
LUMPY_AMPLITUDE = 1.0
LUMPY_WIDTH = 2.0           # desvio padrão do lump, em pixels
NOISE_FACTOR = 0.1          # sigma_k = NOISE_FACTOR * RMS das imagens normalizadas
DATASET_SEED = 2020
TAMANHOS_VALIDOS = (4, 8, 16, 32, 64, 128)

# --- [train] ---
LATENT_DIM = 64
CANAIS_C0 = 16
CANAIS_CMAX = 128
FADE_IMAGES = 200_000
STABILIZE_IMAGES = 200_000
BATCH_POR_NIVEL = {0: 64, 1: 64, 2: 64, 3: 32, 4: 16, 5: 8}
LOSS_VARIANT = "wgan_clip"
D_STEPS_POR_VARIANTE = {"wgan_clip": 5, "logistic_ns": 1}
ADAM_LR = 1e-3
ADAM_BETA1 = 0.0
ADAM_BETA2 = 0.99
ADAM_EPSILON = 1e-8
CLIP_C = 0.01
TRAIN_SEED = 2021
CHECKPOINT_INTERVAL = 1000   # passos
LOG_INTERVAL = 100           # passos
MEASUREMENT_MODE = "resolucao_total"   # ou "por_nivel"
LEAKY_SLOPE = 0.2

# --- [task] ---
ROI_SIZE = 16
TASK_SIGMA = "auto"
AUC_ALVO = 0.85
SINAIS_PADRAO = (
    (1.0, 1.5, 0.0, 0.0),    # amplitude, largura, deslocamento linha, deslocamento coluna
    (0.6, 3.0, 2.0, -2.0),
)

# --- [eval] ---
N_PAIRS = 500
EVAL_SEED = 7
LIMIAR_DELTA_AUC = 0.05
LIMIAR_COSSENO = 0.8
