"""
Fixtures compartilhadas: geradores semeados, um conjunto lumpy minúsculo
(8×8) e a configuração de treinamento em miniatura usada nos testes de
integração.
"""
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.imaging import NoiseModel
from src.objects import LumpyParams, gen_dataset
from src.proagan import ProgressiveSchedule
from src.trainer import TrainConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def lumpy_8():
    return LumpyParams(nbar=6.0, amplitude=1.0, width=1.5, n=8)


@pytest.fixture
def dataset_8(tmp_path, lumpy_8):
    """40 imagens 8×8 com sigma_k derivado de noise_factor."""
    caminho = str(tmp_path / "dataset_8.somt")
    return gen_dataset(lumpy_8, 40, None, 99, caminho, fator_ruido=0.1, threads=1)


@pytest.fixture
def dataset_8_sem_ruido(tmp_path, lumpy_8):
    caminho = str(tmp_path / "dataset_8_limpo.somt")
    return gen_dataset(lumpy_8, 12, NoiseModel(0.0), 5, caminho, threads=1)


@pytest.fixture
def config_treino_mini(tmp_path, dataset_8):
    """Cronograma 4 -> 8 com poucos passos e redes estreitas."""
    def construir(pasta="treino", **alteracoes):
        base = dict(
            schedule=ProgressiveSchedule.padrao(1, fade_images=8, stabilize_images=8),
            caminho_dataset=dataset_8.caminho,
            pasta_saida=str(tmp_path / pasta),
            batch_por_nivel={0: 4, 1: 4},
            d_steps=1,
            variante="wgan_clip",
            seed=3,
            checkpoint_interval=2,
            log_interval=1,
            latent_dim=8,
            c0=4,
            c_max=8,
            deterministico=True,
        )
        base.update(alteracoes)
        return TrainConfig(**base)
    return construir
