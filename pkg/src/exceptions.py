"""
Exceções customizadas do somforge.
"""

class BaseError(Exception):
    """Classe base para exceções do sistema."""
    pass

# Exceções de arquivo / armazenamento
class ArquivoNaoEncontradoError(BaseError):
    """Arquivo não encontrado."""
    pass

class ArmazenamentoError(BaseError):
    """Erro de armazenamento (escrita impossível, caminho inválido, estouro de contagem)."""
    pass

class FormatoArquivoInvalidoError(BaseError):
    """Erro levantado quando o formato de um arquivo é inválido."""
    pass

class MagicInvalidoError(FormatoArquivoInvalidoError):
    """Os quatro primeiros bytes não correspondem ao magic 'SOMT'."""
    pass

class VersaoIncompativelError(FormatoArquivoInvalidoError):
    """Versão do contêiner SOMT não suportada."""
    pass

class ArquivoTruncadoError(FormatoArquivoInvalidoError):
    """Cabeçalho ou payload terminou antes do esperado."""
    pass

# Exceções de configuração e dados
class ConfiguracaoError(BaseError):
    """Erro base para problemas relacionados a configuração."""
    pass

class DadosInvalidosError(BaseError):
    """Dados inválidos."""
    pass

class CronogramaInvalidoError(ConfiguracaoError):
    """Cronograma progressivo inconsistente (níveis fora de ordem, fade inicial não nulo)."""
    pass

# Exceções numéricas
class NumericoError(BaseError):
    """Erro base para problemas numéricos."""
    pass

class FormaIncompativelError(NumericoError):
    """Formas de tensores incompatíveis para uma primitiva."""
    pass

class TipoDadoIncompativelError(NumericoError):
    """Tensores com dtypes diferentes na mesma operação."""
    pass

class PrimitivaDesconhecidaError(NumericoError):
    """Primitiva não registrada no motor de tensores."""
    pass

class GradienteNaoFinitoError(NumericoError):
    """Gradiente com NaN ou infinito."""

    def __init__(self, nome_parametro: str):
        super().__init__(f"Gradiente não finito no parâmetro '{nome_parametro}'")
        self.nome_parametro = nome_parametro

class PerdaNaoFinitaError(NumericoError):
    """Perda NaN/infinita durante o treinamento (aborto com checkpoint de falha)."""

    def __init__(self, mensagem: str, caminho_checkpoint: str = ""):
        super().__init__(mensagem)
        self.caminho_checkpoint = caminho_checkpoint

class CovarianciaSingularError(NumericoError):
    """Matriz de covariância singular."""
    pass

class ResolucaoIncompativelError(NumericoError):
    """Nível ou resolução incompatível com a rede/conjunto de dados."""
    pass

# Exceções de validação
class ValidacaoError(BaseError):
    """Falha em verificação de invariantes (autoteste ou critério de aceitação)."""
    pass
