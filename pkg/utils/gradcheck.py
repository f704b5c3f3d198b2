"""
Конечные разности для проверки аналитических градиентов.
Используется тестами и командой gradcheck.
"""
from typing import Callable

import numpy as np


def central_difference(fn: Callable[[np.ndarray], float], x: np.ndarray,
                       step: float = 1e-5) -> np.ndarray:
    """
    Центральная разность скалярной функции по всем координатам x.

    Args:
        fn: Скалярная функция массива
        x: Точка (любой формы)
        step: Шаг

    Returns:
        Массив той же формы, что x
    """
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + step
        f_plus = float(fn(x))
        flat[i] = saved - step
        f_minus = float(fn(x))
        flat[i] = saved
        out[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def relative_error(analytic, numeric, floor: float = 1e-12) -> float:
    """
    ‖a - n‖ / max(‖a‖, ‖n‖, floor); inf если что-то не конечно.
    """
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(n))):
        return float("inf")
    scale = max(np.linalg.norm(a), np.linalg.norm(n), floor)
    return float(np.linalg.norm(a - n) / scale)
