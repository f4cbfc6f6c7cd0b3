import pytest

import config
from src.configuracao_experimento import ExperimentConfig, carregar_experimento, para_train_config
from src.exceptions import ConfiguracaoError
from src.objects import GaussianBlobSignal


def _escrever(tmp_path, texto, nome="exp.cfg"):
    caminho = tmp_path / nome
    caminho.write_text(texto, encoding="utf-8")
    return str(caminho)


def test_sem_arquivo_usa_padroes():
    exp = carregar_experimento(None)
    assert exp == ExperimentConfig()
    assert exp.dataset.size == config.DATASET_SIZE
    assert exp.task.sigma == "auto"
    assert len(exp.task.sinais) == len(config.SINAIS_PADRAO)


def test_arquivo_de_exemplo_do_repositorio_e_valido():
    exp = carregar_experimento(config.EXPERIMENTO_PADRAO)
    assert exp.train.final_level == 3
    assert exp.train.batch == (64, 64, 64, 32)
    assert exp.train.d_steps is None
    assert exp.train.fade_images == 200_000
    assert exp.task.sinais[1] == GaussianBlobSignal(0.6, 3.0, 2.0, -2.0)


def test_chaves_ausentes_recebem_padrao(tmp_path):
    exp = carregar_experimento(_escrever(tmp_path, "[dataset]\nsize = 16  # comentário\n"))
    assert exp.dataset.size == 16
    assert exp.dataset.count == config.DATASET_COUNT
    assert exp.origem.endswith("exp.cfg")


def test_arquivo_inexistente(tmp_path):
    with pytest.raises(ConfiguracaoError) as exc:
        carregar_experimento(str(tmp_path / "nada.cfg"))
    assert "nada.cfg" in str(exc.value)


@pytest.mark.parametrize("texto", [
    "[dataset]\ntamanho = 8\n",
    "[outra]\nx = 1\n",
    "[dataset]\nsize = 12\n",
    "[dataset]\nsize = oito\n",
    "[dataset]\nsize = 8\n[train]\nfinal_level = 2\n[task]\nroi_size = 4\n",
    "[train]\nbatch =\n",
    "[task]\nsigma = -1\n",
    "[task]\ntarget_auc = 0.4\n",
    "[task]\nsignal1 = 1.0\n",
    "[eval]\nsample_count = 1\n",
    "[dataset]\nnormalize = talvez\n",
    "sem secao = 1\n",
])
def test_configuracoes_invalidas(tmp_path, texto):
    with pytest.raises(ConfiguracaoError):
        carregar_experimento(_escrever(tmp_path, texto))


def test_sinais_ordenados_pelo_indice(tmp_path):
    texto = "[task]\nsignal10 = 0.5, 1.0, 0, 0\nsignal2 = 2.0, 1.0, 1, 1\n"
    exp = carregar_experimento(_escrever(tmp_path, texto))
    assert [s.amplitude for s in exp.task.sinais] == [2.0, 0.5]


def test_sigma_numerico_e_d_steps_explicito(tmp_path):
    exp = carregar_experimento(_escrever(tmp_path, "[task]\nsigma = 0.25\n[train]\nd_steps = 3\n"))
    assert exp.task.sigma == 0.25
    assert exp.train.d_steps == 3


def test_com_dataset_ignora_none_e_revalida():
    exp = ExperimentConfig()
    novo = exp.com_dataset(count=10, size=None, seed=4)
    assert novo.dataset.count == 10 and novo.dataset.seed == 4
    assert novo.dataset.size == exp.dataset.size
    with pytest.raises(ConfiguracaoError):
        exp.com_dataset(size=12)


def test_eco_e_serializavel():
    eco = ExperimentConfig().eco()
    assert set(eco) == {"origem", "dataset", "train", "task", "eval"}
    assert isinstance(eco["train"]["batch"], list)
    assert eco["task"]["sinais"][0]["amplitude"] == 1.0


def test_para_train_config_segue_a_resolucao_dos_dados(tmp_path):
    texto = "[dataset]\nsize = 8\n[train]\nbatch = 16, 8\nfade_images = 10\nstabilize_images = 20\nloss = logistic_ns\n"
    texto += "[task]\nroi_size = 4\n"
    exp = carregar_experimento(_escrever(tmp_path, texto))
    cfg = para_train_config(exp, "dados.somt", str(tmp_path / "saida"), n_dados=8)
    assert cfg.schedule.nivel_final == 1
    assert cfg.batch_por_nivel == {0: 16, 1: 8}
    assert cfg.d_steps == 1
    assert cfg.schedule.como_lista() == [[0, 0, 20], [1, 10, 20]]
    assert cfg.eco_config["dataset"]["size"] == 8


def test_para_train_config_repete_ultimo_batch():
    exp = ExperimentConfig()
    cfg = para_train_config(exp, "d.somt", "saida", n_dados=128)
    assert cfg.schedule.nivel_final == 5
    assert cfg.batch(5) == config.BATCH_POR_NIVEL[5]
