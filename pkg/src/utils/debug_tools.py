# src/utils/debug_tools.py
"""
Ferramentas de depuração: rastreamento de chamadas com tempo de execução.
"""
import time
from datetime import datetime
from functools import wraps

from src.logger import logger


def _resumir(valor, limite: int = 200) -> str:
    """Representação curta de argumentos/resultados (arrays viram forma e dtype)."""
    forma = getattr(valor, "shape", None)
    if forma is not None:
        return f"<{type(valor).__name__} shape={tuple(forma)} dtype={getattr(valor, 'dtype', '?')}>"
    if isinstance(valor, (list, tuple)):
        return type(valor).__name__ + "(" + ", ".join(_resumir(v, 40) for v in valor[:5]) + ")"
    return repr(valor)[:limite]


def debug_tracker(func):
    """Loga início, fim e duração da chamada em nível DEBUG."""
    @wraps(func)
    def wrapper(*args, **kwargs):
        func_qualname = f"{func.__module__}.{func.__name__}"
        call_id = f"{func_qualname}_{datetime.now().strftime('%H%M%S%f')}"
        logger.debug({
            "event_type": "function_call_start", "call_id": call_id,
            "args_preview": _resumir(args), "kwargs_preview": _resumir(kwargs),
        })
        start_time = time.perf_counter()
        try:
            result = func(*args, **kwargs)
        except Exception as e:
            logger.debug({
                "event_type": "function_call_error", "call_id": call_id,
                "execution_time_seconds": round(time.perf_counter() - start_time, 6),
                "error_type": type(e).__name__, "error_message": str(e),
            })
            raise
        logger.debug({
            "event_type": "function_call_success", "call_id": call_id,
            "execution_time_seconds": round(time.perf_counter() - start_time, 6),
            "result_preview": _resumir(result),
        })
        return result
    return wrapper
