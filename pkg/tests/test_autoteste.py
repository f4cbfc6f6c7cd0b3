import numpy as np

from src.autoteste import executar_autoteste
from src.imaging import dft2


def test_autoteste_aprovado():
    resultado = executar_autoteste()
    assert resultado.aprovado, [c.nome for c in resultado.falhas()]
    assert len(resultado.casos) >= 20


def test_autoteste_aceita_kspace_ou_array():
    assert executar_autoteste(dft2_fn=dft2).aprovado
    assert executar_autoteste(dft2_fn=lambda f: dft2(f).complexo).aprovado


def test_dft_com_escala_errada_falha_so_em_parseval():
    resultado = executar_autoteste(dft2_fn=lambda f: np.fft.fft2(f))
    assert not resultado.aprovado
    assert [c.nome for c in resultado.falhas()] == ["Parseval (f64)"]
