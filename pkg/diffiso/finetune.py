"""
Дообучение параметров сети напрямую по Чамферу между извлеченными сетками
и эталонными облаками; градиент идет через backward_params.
"""
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from diffiso.backward import backward_params
from geometry.grid import Grid3D, sample_field
from losses.chamfer import chamfer_l2
from marching.cubes import marching_cubes
from sdfnet.network import SdfNetwork
from shapeopt.adam import Adam
from utils.errors import ContractError
from utils.logger import get_logger

logger = get_logger(__name__)


class FinetuneConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    learning_rate: float = Field(1e-4, gt=0)
    epochs: int = Field(10, ge=1)
    workers: int = Field(1, ge=1)


@dataclass
class FinetuneResult:
    network: SdfNetwork
    chamfer_trace: List[float] = field(default_factory=list)


def training_chamfer(net: SdfNetwork, latents: np.ndarray, targets: Sequence[np.ndarray],
                     grid: Grid3D, workers: int = 1, with_grad: bool = False):
    """
    Средний Чамфер по фигурам (вершины сетки против эталона) и, при with_grad,
    градиент по параметрам сети. Фигуры с пустой сеткой пропускаются.
    """
    total = 0.0
    counted = 0
    grad = net.zero_grad() if with_grad else None
    for index, target in enumerate(targets):
        z = latents[index]
        mesh = marching_cubes(sample_field(net.evaluator(z), grid, workers=workers))
        if mesh.is_empty:
            logger.warning(f"Пустая сетка для фигуры {index}, пропуск")
            continue
        value, upstream = chamfer_l2(mesh.vertices, target, reduction="mean")
        total += value
        counted += 1
        if with_grad:
            grad = grad + backward_params(net, z, mesh, upstream)
    if counted == 0:
        return float("inf"), grad
    if with_grad:
        grad = grad.scale(1.0 / counted)
    return total / counted, grad


def finetune_parameters(net: SdfNetwork, latents: np.ndarray, targets: Sequence[np.ndarray],
                        cfg: FinetuneConfig, grid: Grid3D = None,
                        progress: bool = False) -> FinetuneResult:
    """
    Adam по параметрам сети при фиксированных латентных кодах.

    Args:
        net: Обученная сеть (не изменяется, дообучается копия)
        latents: Таблица кодов (num_shapes, Z)
        targets: Эталонные облака по фигурам, в порядке таблицы
        cfg: Параметры дообучения
        grid: Сетка извлечения
        progress: Показывать ли прогресс tqdm

    Returns:
        Дообученная сеть и средний Чамфер в начале каждой эпохи и после последней
    """
    latents = np.asarray(latents, dtype=np.float64).reshape(-1, net.latent_dim)
    if len(targets) == 0 or len(targets) > len(latents):
        raise ContractError(f"Нужно от 1 до {len(latents)} эталонов, получено {len(targets)}")
    grid = grid or Grid3D()
    tuned = net.copy()
    optimizer = Adam(tuned.parameters(), cfg.learning_rate)

    trace: List[float] = []
    epochs = range(cfg.epochs)
    if progress:
        epochs = tqdm(epochs, desc="finetune", unit="epoch")
    for epoch in epochs:
        value, grad = training_chamfer(tuned, latents, targets, grid, cfg.workers, with_grad=True)
        trace.append(value)
        logger.debug(f"Эпоха {epoch}: Чамфер={value:.6g}")
        if not np.isfinite(value):
            logger.warning("Все сетки пусты, дообучение остановлено")
            break
        optimizer.step(grad.arrays())

    final, _ = training_chamfer(tuned, latents, targets, grid, cfg.workers)
    trace.append(final)
    logger.info(f"Дообучение завершено: Чамфер {trace[0]:.6g} -> {final:.6g}")
    return FinetuneResult(tuned, trace)
