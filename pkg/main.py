#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Script principal do somforge.

Orquestra geração do conjunto de dados, treinamento ProAGAN, amostragem e a
validação por observador de Hotelling.
Uso:
    python main.py gen-data --config dados/experimento_desk.cfg --out output/dataset.somt
    python main.py train --config <cfg> --data output/dataset.somt --out output/treino
    python main.py sample --ckpt output/treino/final.somt --count 25 --seed 1 --out output/amostras.somt
    python main.py eval-ho --config <cfg> --real output/dataset.somt --synth output/amostras.somt --out output/ho
    python main.py self-test
    python main.py inspect-data --data output/dataset.somt --index 0 --out output/inspecao

Códigos de saída: 0 sucesso, 1 erro inesperado, 2 configuração/dados,
3 arquivo/armazenamento, 4 aborto numérico (NaN), 5 falha de validação.
"""

import argparse
import glob
import os
import re
import sys
from typing import Any, Dict, List, Optional

# Garante que o diretório do script seja o primeiro no sys.path para priorizar módulos locais.
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import numpy as np

import config  # Carrega as configurações globais do projeto
from src.autoteste import executar_autoteste
from src.configuracao_experimento import ExperimentConfig, carregar_experimento, para_train_config
from src.exceptions import (
    ArmazenamentoError,
    ArquivoNaoEncontradoError,
    ConfiguracaoError,
    DadosInvalidosError,
    FormatoArquivoInvalidoError,
    PerdaNaoFinitaError,
    ResolucaoIncompativelError,
    ValidacaoError,
)
from src.formato_somt import ler_somt, save_tensors
from src.gerador_rasters import escrever_grade_pgm, escrever_json, escrever_pgm, escrever_roc_csv
from src.imaging import log_magnitude
from src.logger import configurar_logger, logger
from src.objects import carregar_dataset, gen_dataset, verificar_medicoes
from src.observer import (
    ROISpec,
    acceptance_check,
    calibrate_task_sigma,
    compare_ensembles,
    extract_rois,
    white_noise_like,
)
from src import tensor_core as tc
from src.trainer import carregar_checkpoint, sample, snapshot_growth, train

SAIDA_OK = 0
SAIDA_INESPERADA = 1
SAIDA_CONFIGURACAO = 2
SAIDA_ARQUIVO = 3
SAIDA_NUMERICA = 4
SAIDA_VALIDACAO = 5

_PADRAO_FASE = re.compile(r"^fase_(\d+)\.somt$")


def _carregar_imagens(caminho: str) -> np.ndarray:
    """Imagens de um SOMT de amostras ('amostras') ou de um conjunto de dados ('objetos')."""
    tensores = ler_somt(caminho).tensores
    for nome in ("amostras", "objetos"):
        if nome in tensores:
            return tensores[nome]
    raise FormatoArquivoInvalidoError(f"'{caminho}' não contém 'amostras' nem 'objetos'")


def _checkpoints_de_fase(pasta: str) -> List[str]:
    encontrados = []
    for caminho in glob.glob(os.path.join(pasta, "fase_*.somt")):
        m = _PADRAO_FASE.match(os.path.basename(caminho))
        if m:
            encontrados.append((int(m.group(1)), caminho))
    return [c for _, c in sorted(encontrados)]


def comando_gen_data(args: argparse.Namespace, exp: ExperimentConfig) -> int:
    exp = exp.com_dataset(count=args.count, size=args.size, seed=args.seed)
    d = exp.dataset
    ds = gen_dataset(d.lumpy(), d.count, d.modelo_ruido(), d.seed, args.out,
                     fator_ruido=d.noise_factor, normalizar=d.normalize, eco_config=exp.eco())
    print(f"\nConjunto gerado: {os.path.abspath(args.out)}")
    print(f"  imagens: {ds.count} | resolução: {ds.n}x{ds.n} | sigma_k: {ds.sigma_k:.6g} | seed: {d.seed}")
    return SAIDA_OK


def comando_train(args: argparse.Namespace, exp: ExperimentConfig) -> int:
    n_dados = int(ler_somt(args.data).metadados.get("n", exp.dataset.size))
    cfg = para_train_config(exp, args.data, args.out, deterministico=args.deterministic, n_dados=n_dados)
    resultado = train(cfg, retomar_de=args.resume)
    instantaneos = snapshot_growth(_checkpoints_de_fase(args.out), args.out,
                                   count=exp.train.snapshot_count, seed=exp.train.seed, eco_config=exp.eco())
    print(f"\nTreinamento concluído: {resultado.estado.passo} passos, "
          f"{resultado.estado.imagens_mostradas} imagens mostradas")
    print(f"  checkpoint final: {os.path.abspath(resultado.caminho_final)}")
    print(f"  log: {os.path.abspath(resultado.caminho_log)}")
    print(f"  instantâneos de crescimento: {len(instantaneos)}")
    return SAIDA_OK


def comando_sample(args: argparse.Namespace, exp: ExperimentConfig) -> int:
    count = args.count if args.count is not None else exp.eval.sample_count
    imagens = sample(args.ckpt, count, args.seed)
    meta_ck = carregar_checkpoint(args.ckpt).metadados
    metadados = {
        "tipo": "amostras",
        "checkpoint": os.path.basename(args.ckpt),
        "count": count,
        "seed": args.seed,
        "config": meta_ck.get("config", {}),
    }
    save_tensors(args.out, {"amostras": imagens}, metadados)
    caminho_grade = os.path.splitext(args.out)[0] + ".pgm"
    escrever_grade_pgm(caminho_grade, imagens, metadados)
    print(f"\n{count} amostras {imagens.shape[-1]}x{imagens.shape[-1]} gravadas em {os.path.abspath(args.out)}")
    print(f"  grade: {os.path.abspath(caminho_grade)}")
    return SAIDA_OK


def _gravar_relatorio(pasta: str, rotulo: str, relatorio, aceitacao) -> Dict[str, Any]:
    dados = relatorio.para_dict()
    dados["aceitacao"] = {"aprovado": aceitacao.aprovado, "motivos": aceitacao.motivos}
    escrever_json(os.path.join(pasta, f"relatorio_{rotulo}.json"), dados)
    escrever_roc_csv(os.path.join(pasta, f"roc_real_{rotulo}.csv"), relatorio.real.roc, dados["config"])
    escrever_roc_csv(os.path.join(pasta, f"roc_synth_{rotulo}.csv"), relatorio.sintetico.roc, dados["config"])
    p = int(round(np.sqrt(relatorio.real.template.size)))
    for nome, resultado in (("real", relatorio.real), ("synth", relatorio.sintetico)):
        escrever_pgm(os.path.join(pasta, f"template_{nome}_{rotulo}.pgm"),
                     resultado.template.reshape(p, p), dados["config"])
    return dados


def _gravar_exemplos_sinal(pasta: str, rotulo: str, s: np.ndarray, rois_real: np.ndarray,
                           rois_synth: np.ndarray, eco: Dict[str, Any]) -> None:
    """Sinal p×p e uma ROI real e uma sintética com o sinal presente (sem ruído da tarefa)."""
    p = int(round(np.sqrt(s.size)))
    escrever_pgm(os.path.join(pasta, f"sinal_{rotulo}.pgm"), s.reshape(p, p), eco)
    escrever_pgm(os.path.join(pasta, f"exemplo_real_{rotulo}.pgm"), (rois_real[0] + s).reshape(p, p), eco)
    escrever_pgm(os.path.join(pasta, f"exemplo_synth_{rotulo}.pgm"), (rois_synth[0] + s).reshape(p, p), eco)


def comando_eval_ho(args: argparse.Namespace, exp: ExperimentConfig) -> int:
    reais = _carregar_imagens(args.real)
    sinteticas = _carregar_imagens(args.synth)
    if reais.shape[-1] != sinteticas.shape[-1]:
        raise ResolucaoIncompativelError(
            f"Resoluções diferentes: reais {reais.shape[-1]}px e sintéticas {sinteticas.shape[-1]}px")
    os.makedirs(args.out, exist_ok=True)
    n = reais.shape[-1]
    roi = ROISpec.central(n, exp.task.roi_size)
    n_estimacao = reais.shape[0] - exp.eval.n_pairs
    if n_estimacao < 2:
        raise DadosInvalidosError(
            f"{reais.shape[0]} imagens reais não bastam para {exp.eval.n_pairs} pares de ensaio")
    rois_estimacao = extract_rois(reais[:n_estimacao], roi)

    falhas: List[str] = []
    for i, sinal in enumerate(exp.task.sinais, start=1):
        s = sinal.rasterizar(roi.p).reshape(-1)
        if exp.task.sigma == "auto":
            sigma = calibrate_task_sigma(rois_estimacao, s, exp.task.target_auc)
        else:
            sigma = float(exp.task.sigma)
        eco = {**exp.eco(), "sinal": i, "sigma_tarefa": sigma, "real": args.real, "synth": args.synth}
        relatorio = compare_ensembles(reais, sinteticas, roi, s, sigma ** 2, exp.eval.n_pairs,
                                      exp.eval.seed, eco)
        aceitacao = acceptance_check(relatorio, exp.eval.delta_auc_max, exp.eval.cosine_min)
        _gravar_relatorio(args.out, f"sinal{i}", relatorio, aceitacao)
        _gravar_exemplos_sinal(args.out, f"sinal{i}", s, extract_rois(reais[n_estimacao:n_estimacao + 1], roi),
                               extract_rois(sinteticas[:1], roi), eco)
        print(f"\nSinal {i}: AUC real {relatorio.real.auc:.4f} | AUC sintética {relatorio.sintetico.auc:.4f} | "
              f"|ΔAUC| {relatorio.delta_auc:.4f} | cosseno {relatorio.cosseno_template:.4f} | "
              f"{'APROVADO' if aceitacao.aprovado else 'REPROVADO'}")
        falhas += [f"sinal {i}: {m}" for m in aceitacao.motivos]

        if args.negative_control:
            ruido = white_noise_like(reais, np.random.default_rng([exp.eval.seed, i]))
            controle = compare_ensembles(reais, ruido, roi, s, sigma ** 2, exp.eval.n_pairs,
                                         exp.eval.seed, {**eco, "controle_negativo": True})
            aceitacao_controle = acceptance_check(controle, exp.eval.delta_auc_max, exp.eval.cosine_min)
            _gravar_relatorio(args.out, f"controle_sinal{i}", controle, aceitacao_controle)
            print(f"  controle negativo: |ΔAUC| {controle.delta_auc:.4f} | cosseno {controle.cosseno_template:.4f} | "
                  f"{'APROVADO (inesperado)' if aceitacao_controle.aprovado else 'REPROVADO (esperado)'}")
            if aceitacao_controle.aprovado:
                falhas.append(f"sinal {i}: controle negativo de ruído branco passou nos limiares")

    if falhas:
        for f in falhas:
            logger.warning(f"Aceitação: {f}")
        if args.require_pass:
            raise ValidacaoError("Critério de aceitação não atendido: " + "; ".join(falhas))
    print(f"\nRelatórios gravados em {os.path.abspath(args.out)}")
    return SAIDA_OK


def comando_self_test(args: argparse.Namespace, exp: ExperimentConfig) -> int:
    resultado = executar_autoteste()
    print("")
    for caso in resultado.casos:
        print(f"  [{'OK' if caso.aprovado else 'FALHA'}] {caso.nome}: {caso.erro:.3e} (tol {caso.tolerancia:.0e})")
    if not resultado.aprovado:
        raise ValidacaoError(f"{len(resultado.falhas())} caso(s) do autoteste falharam: "
                             + ", ".join(c.nome for c in resultado.falhas()))
    print(f"\nAutoteste aprovado ({len(resultado.casos)} casos).")
    return SAIDA_OK


def comando_inspect_data(args: argparse.Namespace, exp: ExperimentConfig) -> int:
    ds = carregar_dataset(args.data)
    i = args.index
    if not 0 <= i < ds.count:
        raise DadosInvalidosError(f"Índice {i} fora de 0..{ds.count - 1}")
    desvio = verificar_medicoes(ds, [i])
    logger.info(f"Medição {i} refeita a partir do cabeçalho: desvio máximo {desvio:.3e}")
    os.makedirs(args.out, exist_ok=True)
    meta = {"dataset": os.path.basename(args.data), "indice": i, "config": ds.metadados.get("config", {})}
    kspace = np.fft.fftshift(log_magnitude(ds.kspace_de(i)))
    gerados = [
        escrever_pgm(os.path.join(args.out, f"objeto_{i}.pgm"), ds.objetos[i], meta),
        escrever_pgm(os.path.join(args.out, f"kspace_logmag_{i}.pgm"), kspace, meta),
        escrever_pgm(os.path.join(args.out, f"reconstrucao_{i}.pgm"), ds.reconstrucoes[i], meta),
    ]
    print(f"\nElemento {i} de {args.data} (n={ds.n}, sigma_k={ds.sigma_k:.6g}):")
    for g in gerados:
        print(f"  {os.path.abspath(g)}")
    return SAIDA_OK


COMANDOS = {
    "gen-data": comando_gen_data,
    "train": comando_train,
    "sample": comando_sample,
    "eval-ho": comando_eval_ho,
    "self-test": comando_self_test,
    "inspect-data": comando_inspect_data,
}


def criar_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="ProAGAN: modelo de objeto estocástico aprendido de k-space ruidoso.")
    parser.add_argument("--deterministic", action="store_true",
                        help="Acumulação sequencial nas reduções e log sem tempos de relógio (saídas idênticas byte a byte).")
    parser.add_argument("--debug", action="store_true", help="Ativa logs em nível DEBUG.")
    parser.add_argument("--log-file", default=None, help="Grava também os logs neste arquivo (com rotação).")
    sub = parser.add_subparsers(dest="comando", required=True)

    p = sub.add_parser("gen-data", help="Gera o conjunto de treinamento (objetos, k-space ruidoso, reconstruções).")
    p.add_argument("--config", default=config.EXPERIMENTO_PADRAO, help="Arquivo de experimento (key=value).")
    p.add_argument("--out", default=os.path.join(config.OUTPUT_DIR, "dataset.somt"))
    p.add_argument("--count", type=int, default=None, help="Sobrescreve [dataset] count.")
    p.add_argument("--size", type=int, default=None, help="Sobrescreve [dataset] size.")
    p.add_argument("--seed", type=int, default=None, help="Sobrescreve [dataset] seed.")

    p = sub.add_parser("train", help="Treina o ProAGAN pelo cronograma progressivo.")
    p.add_argument("--config", default=config.EXPERIMENTO_PADRAO)
    p.add_argument("--data", required=True, help="Conjunto SOMT gerado por gen-data.")
    p.add_argument("--out", default=os.path.join(config.OUTPUT_DIR, "treino"))
    p.add_argument("--resume", default=None, help="Checkpoint a partir do qual continuar.")

    p = sub.add_parser("sample", help="Amostra imagens de um checkpoint.")
    p.add_argument("--config", default=config.EXPERIMENTO_PADRAO)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--count", type=int, default=None, help="Sobrescreve [eval] sample_count.")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=os.path.join(config.OUTPUT_DIR, "amostras.somt"))

    p = sub.add_parser("eval-ho", help="Compara conjuntos real e sintético com o observador de Hotelling.")
    p.add_argument("--config", default=config.EXPERIMENTO_PADRAO)
    p.add_argument("--real", required=True, help="Conjunto SOMT real (usa os objetos).")
    p.add_argument("--synth", required=True, help="SOMT de amostras (ou outro conjunto).")
    p.add_argument("--out", default=os.path.join(config.OUTPUT_DIR, "ho"))
    p.add_argument("--negative-control", action="store_true",
                   help="Repete a comparação contra ruído branco com média e variância casadas.")
    p.add_argument("--require-pass", action="store_true",
                   help="Sai com código 5 se os limiares de aceitação não forem atendidos.")

    sub.add_parser("self-test", help="Executa a bateria rápida de invariantes numéricos.")

    p = sub.add_parser("inspect-data", help="Grava objeto, k-space e reconstrução de um elemento do conjunto.")
    p.add_argument("--data", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--out", default=os.path.join(config.OUTPUT_DIR, "inspecao"))
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Função principal do script.

    Returns:
        Código de saída (ver docstring do módulo).
    """
    args = criar_parser().parse_args(argv)
    configurar_logger("DEBUG" if args.debug else config.LOG_LEVEL, arquivo_log=args.log_file)
    tc.definir_modo_deterministico(args.deterministic)
    logger.info(f"somforge: comando '{args.comando}'")
    logger.debug(f"Argumentos recebidos: {args}")

    try:
        caminho_config = getattr(args, "config", None)
        exp = carregar_experimento(caminho_config) if caminho_config else ExperimentConfig()
        return COMANDOS[args.comando](args, exp)

    except PerdaNaoFinitaError as e:
        logger.error(f"Treinamento abortado: {str(e)}")
        print(f"\nERRO NUMÉRICO: {str(e)}")
        if e.caminho_checkpoint:
            print(f"Checkpoint de falha: {e.caminho_checkpoint}")
        return SAIDA_NUMERICA
    except (ConfiguracaoError, DadosInvalidosError, ResolucaoIncompativelError) as e:
        logger.error(f"Configuração ou dados inválidos: {str(e)}")
        print(f"\nERRO: {str(e)}")
        return SAIDA_CONFIGURACAO
    except ArquivoNaoEncontradoError as e:
        logger.error(f"Arquivo não encontrado: {str(e)}")
        print(f"\nERRO: {str(e)}")
        return SAIDA_ARQUIVO
    except FormatoArquivoInvalidoError as e:
        logger.error(f"Formato de arquivo inválido: {str(e)}")
        print(f"\nERRO: {str(e)}")
        return SAIDA_ARQUIVO
    except ArmazenamentoError as e:
        logger.error(f"Erro de armazenamento: {str(e)}")
        print(f"\nERRO: {str(e)}")
        return SAIDA_ARQUIVO
    except ValidacaoError as e:
        logger.error(f"Validação falhou: {str(e)}")
        print(f"\nFALHA DE VALIDAÇÃO: {str(e)}")
        return SAIDA_VALIDACAO
    except Exception as e:
        logger.exception(f"Erro inesperado: {str(e)}")
        print(f"\nERRO INESPERADO: {str(e)}")
        return SAIDA_INESPERADA


if __name__ == "__main__":
    sys.exit(main())
