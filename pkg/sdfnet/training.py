"""
Совместное обучение параметров сети и таблицы латентных кодов:

    L = sum_S 1/|X_S| sum_{x in X_S} |f(x, z_S) - s(x)| + lambda_reg * sum_S |z_S|^2
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from geometry.sampling import SampleSet
from sdfnet.network import NetworkConfig, SdfNetwork, init_network
from shapeopt.adam import Adam
from utils.errors import ContractError, TrainingDivergedError
from utils.logger import get_logger
from utils.rng import module_rng

logger = get_logger(__name__)

LATENT_INIT_STD = 0.01


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    lambda_reg: float = Field(1e-4, ge=0)
    learning_rate: float = Field(1e-3, gt=0)
    latent_learning_rate: Optional[float] = Field(None, gt=0)
    batch_size: int = Field(2048, ge=1)
    steps: int = Field(2000, ge=1)
    lr_decay_every: int = Field(0, ge=0)
    lr_decay_factor: float = Field(0.5, gt=0, le=1)
    seed: int = 0

    def learning_rates_at(self, step: int):
        """(lr сети, lr латентов) с учетом ступенчатого расписания."""
        factor = 1.0
        if self.lr_decay_every:
            factor = self.lr_decay_factor ** (step // self.lr_decay_every)
        latent_lr = self.latent_learning_rate or self.learning_rate
        return self.learning_rate * factor, latent_lr * factor


@dataclass
class TrainResult:
    network: SdfNetwork
    latents: np.ndarray
    loss_trace: List[float] = field(default_factory=list)


@dataclass
class _PooledData:
    points: np.ndarray
    targets: np.ndarray
    shape_ids: np.ndarray
    weights: np.ndarray


def _pool(dataset: Sequence[SampleSet], num_shapes: int) -> _PooledData:
    """
    Склеивает выборки; вес точки 1/|X_S| делает равномерную выборку из общего
    пула несмещенной оценкой суммы средних по фигурам.
    """
    points = np.concatenate([s.points for s in dataset])
    targets = np.concatenate([s.signed_distance for s in dataset])
    shape_ids = np.concatenate([np.full(len(s), s.shape_id, dtype=np.int64) for s in dataset])
    counts = np.bincount(shape_ids, minlength=num_shapes).astype(np.float64)
    weights = 1.0 / counts[shape_ids]
    return _PooledData(points, targets, shape_ids, weights)


def _check_dataset(dataset: Sequence[SampleSet], num_shapes: int) -> None:
    if not dataset:
        raise ContractError("Пустой набор данных")
    for sample_set in dataset:
        if not 0 <= sample_set.shape_id < num_shapes:
            raise ContractError(
                f"shape_id={sample_set.shape_id} не имеет слота в таблице из {num_shapes} кодов"
            )
        if len(sample_set) == 0:
            raise ContractError(f"Пустая выборка для фигуры {sample_set.shape_id}")


def sdf_objective(net: SdfNetwork, latents: np.ndarray, dataset: Sequence[SampleSet],
                  lambda_reg: float) -> float:
    """
    Точное значение функции потерь обучения на всем наборе.

    Args:
        net: Сеть
        latents: Таблица латентных кодов (num_shapes, Z)
        dataset: Выборки
        lambda_reg: Вес регуляризатора

    Returns:
        Значение функции потерь
    """
    latents = np.asarray(latents, dtype=np.float64).reshape(-1, net.latent_dim)
    _check_dataset(dataset, len(latents))
    data_term = 0.0
    for sample_set in dataset:
        values, _ = net.forward_batch(latents[sample_set.shape_id], sample_set.points)
        data_term += float(np.mean(np.abs(values - sample_set.signed_distance)))
    return data_term + lambda_reg * float(np.sum(latents ** 2))


def train_sdf(dataset: Sequence[SampleSet], cfg: TrainConfig,
              network_config: NetworkConfig = None, num_shapes: int = None,
              init: Optional[SdfNetwork] = None, init_latents: Optional[np.ndarray] = None,
              progress: bool = False) -> TrainResult:
    """
    Adam по параметрам сети и всем латентным кодам одновременно.

    Args:
        dataset: Выборки по фигурам
        cfg: Параметры обучения
        network_config: Архитектура (если init не задан)
        num_shapes: Размер таблицы кодов (по умолчанию max shape_id + 1)
        init: Начальная сеть (иначе инициализация Xavier)
        init_latents: Начальная таблица кодов (иначе N(0, 0.01^2))
        progress: Показывать ли прогресс tqdm

    Returns:
        Сеть, таблица кодов и история функции потерь по шагам
    """
    if num_shapes is None:
        num_shapes = max(s.shape_id for s in dataset) + 1 if dataset else 0
    _check_dataset(dataset, num_shapes)

    net = init.copy() if init is not None else init_network(network_config or NetworkConfig(), cfg.seed)
    rng = module_rng(cfg.seed, "sdfnet.train")
    if init_latents is not None:
        latents = np.array(init_latents, dtype=np.float64).reshape(num_shapes, net.latent_dim)
    else:
        latents = rng.normal(scale=LATENT_INIT_STD, size=(num_shapes, net.latent_dim))

    pool = _pool(dataset, num_shapes)
    total = len(pool.points)
    batch = min(cfg.batch_size, total)

    params = net.parameters()
    optimizer = Adam(params + [latents], cfg.learning_rate)
    net_indices = list(range(len(params)))
    latent_index = [len(params)]

    logger.info(
        f"Обучение SDF: {num_shapes} фигур, {total} точек, {cfg.steps} шагов, батч {batch}"
    )
    trace: List[float] = []
    steps = range(cfg.steps)
    if progress:
        steps = tqdm(steps, desc="train", unit="step")

    for step in steps:
        idx = rng.choice(total, size=batch, replace=False) if batch < total else np.arange(total)
        ids = pool.shape_ids[idx]
        # Несмещенная оценка суммы средних по фигурам
        w = pool.weights[idx] * (total / batch)

        values, cache = net.forward_batch(latents[ids], pool.points[idx])
        residual = values - pool.targets[idx]
        loss = float(np.sum(w * np.abs(residual))) + cfg.lambda_reg * float(np.sum(latents ** 2))
        if not np.isfinite(loss):
            raise TrainingDivergedError(step, loss)
        trace.append(loss)

        d_inputs, grad = net.backward_batch(cache, w * np.sign(residual))
        latent_grad = np.zeros_like(latents)
        np.add.at(latent_grad, ids, d_inputs[:, 3:])
        latent_grad += 2.0 * cfg.lambda_reg * latents

        net_lr, latent_lr = cfg.learning_rates_at(step)
        optimizer.set_learning_rate(net_lr, net_indices)
        optimizer.set_learning_rate(latent_lr, latent_index)
        optimizer.step(grad.arrays() + [latent_grad])

        if step % 500 == 0:
            logger.debug(f"Шаг {step}: loss={loss:.6g}")

    logger.info(f"Обучение завершено, последний loss={trace[-1]:.6g}")
    return TrainResult(net, latents, trace)


def mean_abs_error(net: SdfNetwork, latents: np.ndarray, dataset: Sequence[SampleSet]) -> float:
    """Средняя |f - s| по всем точкам всех выборок (для отложенных данных)."""
    errors = []
    for sample_set in dataset:
        values, _ = net.forward_batch(latents[sample_set.shape_id], sample_set.points)
        errors.append(np.abs(values - sample_set.signed_distance))
    return float(np.mean(np.concatenate(errors)))
