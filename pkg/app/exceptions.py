"""Erros do domínio (instâncias, desenhos, estimadores e algoritmos)."""


class BanditError(Exception):
    """Base de todos os erros levantados pelo pacote."""


class InvalidInstance(BanditError, ValueError):
    """Instância de bandit inconsistente (dimensões, esparsidade, índices)."""


class NonUniqueBestArm(BanditError):
    """Dois ou mais braços empatam na maior média."""


class InvalidDistribution(BanditError, ValueError):
    """Vetor de pesos não é uma distribuição de probabilidade."""


class RankDeficientArms(BanditError):
    """Os braços não geram o espaço em que o desenho é resolvido."""


class InfeasibleBudget(BanditError):
    """Orçamento insuficiente para o cronograma de rodadas."""


class EnumerationLimitExceeded(BanditError):
    """Conjunto grande demais para a enumeração de sinais/subconjuntos."""


class CrossValidationError(BanditError, ValueError):
    """Partição de validação cruzada inválida (fold vazio, grade vazia)."""
