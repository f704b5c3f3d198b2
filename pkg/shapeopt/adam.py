"""
Adam: состояние оптимизатора для списков массивов и цикл оптимизации
латентного кода, общий для всех приложений.
"""
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from tqdm import tqdm

from utils.logger import get_logger

logger = get_logger(__name__)

LatentObjectiveFn = Callable[[np.ndarray], Tuple[float, np.ndarray]]


class AdamConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    learning_rate: float = Field(1e-2, gt=0)
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = Field(1e-8, gt=0)
    iterations: int = Field(400, ge=0)

    @field_validator("beta1", "beta2")
    @classmethod
    def _check_beta(cls, value: float) -> float:
        if not 0.0 <= value < 1.0:
            raise ValueError(f"beta должен лежать в [0, 1), получено {value}")
        return value


class Adam:
    """
    Состояние Adam для набора массивов параметров.
    Шаг обновляет массивы на месте.
    """

    def __init__(self, params: List[np.ndarray], learning_rate: float, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        self.params = params
        self.learning_rates = [learning_rate] * len(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    @classmethod
    def from_config(cls, params: List[np.ndarray], cfg: AdamConfig) -> "Adam":
        return cls(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)

    def set_learning_rate(self, learning_rate: float, indices: Optional[List[int]] = None) -> None:
        for i in (range(len(self.params)) if indices is None else indices):
            self.learning_rates[i] = learning_rate

    def step(self, grads: List[np.ndarray]) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for i, (param, grad) in enumerate(zip(self.params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad * grad
            m_hat = self.m[i] / correction1
            v_hat = self.v[i] / correction2
            param -= self.learning_rates[i] * m_hat / (np.sqrt(v_hat) + self.epsilon)


@dataclass
class OptimizationResult:
    """Траектория оптимизации и лучшая итерация."""

    trajectory: List[Tuple[np.ndarray, float]] = field(default_factory=list)
    best_index: int = 0
    stopped_nonfinite: bool = False

    @property
    def best_z(self) -> np.ndarray:
        return self.trajectory[self.best_index][0]

    @property
    def best_value(self) -> float:
        return self.trajectory[self.best_index][1]

    @property
    def initial_value(self) -> float:
        return self.trajectory[0][1]

    @property
    def relative_objective(self) -> float:
        """L% = лучшее значение / начальное."""
        initial = self.initial_value
        if initial == 0.0:
            return 1.0 if self.best_value == 0.0 else float("inf")
        return self.best_value / initial


def optimize_latent(objective: LatentObjectiveFn, z0, adam: AdamConfig,
                    callback: Optional[Callable[[int, np.ndarray, float, np.ndarray], None]] = None,
                    progress: bool = False) -> OptimizationResult:
    """
    Минимизирует objective по z методом Adam.

    Записывается каждая итерация z_0..z_T (T = adam.iterations), возвращается
    итерация с наименьшим значением. Если значение стало нечисловым,
    оптимизация останавливается с флагом stopped_nonfinite.

    Args:
        objective: z -> (значение, градиент)
        z0: Начальный латентный код
        adam: Параметры Adam и число итераций
        callback: Вызывается после каждой оценки (итерация, z, значение, градиент)
        progress: Показывать ли прогресс tqdm

    Returns:
        OptimizationResult
    """
    z = np.array(z0, dtype=np.float64)
    optimizer = Adam.from_config([z], adam)
    result = OptimizationResult()

    steps = range(adam.iterations + 1)
    if progress:
        steps = tqdm(steps, desc="latent", unit="it")

    for it in steps:
        value, grad = objective(z.copy())
        value = float(value)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            logger.warning(f"Нечисловое значение цели на итерации {it}: {value!r}, остановка")
            result.stopped_nonfinite = True
            if not result.trajectory:
                result.trajectory.append((z.copy(), value))
            break

        result.trajectory.append((z.copy(), value))
        if value < result.best_value or it == 0:
            result.best_index = len(result.trajectory) - 1
        if callback is not None:
            callback(it, z.copy(), value, np.asarray(grad))
        logger.debug(f"Итерация {it}: цель={value:.6g}, |grad|={np.linalg.norm(grad):.3g}")

        if it < adam.iterations:
            optimizer.step([np.asarray(grad, dtype=np.float64)])

    if result.trajectory:
        logger.info(
            f"Оптимизация завершена: лучшая итерация {result.best_index}, "
            f"цель {result.best_value:.6g} (начало {result.initial_value:.6g})"
        )
    return result
