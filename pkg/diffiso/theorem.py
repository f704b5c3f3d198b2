"""
Численная проверка смещения поверхности: при сдвиге уровня на eps точка
нулевого уровня v переходит в v + eps * n(v) с точностью O(eps^2).
"""
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.optimize import bisect

from utils.errors import ContractError

PointFunction = Callable[[np.ndarray], float]

SURFACE_TOLERANCE = 1e-9
BISECT_XTOL = 1e-12
NORMAL_STEP = 1e-6
# Скобка поиска корня: t в [0, 4 eps / |n|^2]
BRACKET_FACTOR = 4.0


def _scalar(evaluator: PointFunction, point: np.ndarray) -> float:
    return float(np.asarray(evaluator(point), dtype=np.float64).reshape(-1)[0])


def central_normal(evaluator: PointFunction, v: np.ndarray, step: float = NORMAL_STEP) -> np.ndarray:
    """Градиент поля центральными разностями."""
    normal = np.zeros(3)
    for axis in range(3):
        offset = np.zeros(3)
        offset[axis] = step
        normal[axis] = (_scalar(evaluator, v + offset) - _scalar(evaluator, v - offset)) / (2 * step)
    return normal


def theorem1_check(evaluator: PointFunction, v, eps: float,
                   gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
                   ) -> Tuple[np.ndarray, np.ndarray]:
    """
    Сравнивает предсказанное смещение eps * n(v) с наблюдаемым.

    Наблюдаемое смещение t * n(v), где t - корень evaluator(v + t n) - eps,
    найденный бисекцией.

    Args:
        evaluator: Поле в точке (3,) -> число
        v: Точка нулевого уровня
        eps: Сдвиг уровня
        gradient: Точный градиент поля; иначе центральные разности

    Returns:
        (predicted, observed), оба (3,)
    """
    v = np.asarray(v, dtype=np.float64).reshape(3)
    value = _scalar(evaluator, v)
    if abs(value) >= SURFACE_TOLERANCE:
        raise ContractError(f"Точка не на поверхности: f(v)={value:.3e}")

    normal = np.asarray(gradient(v), dtype=np.float64).reshape(3) if gradient else central_normal(evaluator, v)
    predicted = eps * normal
    if eps == 0:
        return predicted, np.zeros(3)

    norm2 = float(normal @ normal)
    if not norm2 > 0:
        raise ContractError("Нулевой градиент поля в точке поверхности")

    def residual(t: float) -> float:
        return _scalar(evaluator, v + t * normal) - eps

    bound = BRACKET_FACTOR * eps / norm2
    lo, hi = sorted((0.0, bound))
    if residual(lo) * residual(hi) > 0:
        raise ContractError(f"Нет корня в скобке [{lo:.3e}, {hi:.3e}]: слишком большое eps={eps}")
    t = bisect(residual, lo, hi, xtol=BISECT_XTOL)
    return predicted, t * normal
