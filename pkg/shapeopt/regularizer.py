"""
Регуляризаторы латентного кода: среднее квадратов расстояний до k ближайших
кодов обучающей таблицы (по умолчанию) или alpha |z|^2.
"""
from typing import Literal, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from utils.errors import ContractError

RegularizerMode = Literal["knn", "l2"]


class RegularizerConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    alpha: float = Field(0.2, ge=0)
    k: int = Field(10, ge=1)
    latent_table: Tuple[Tuple[float, ...], ...] = ()
    mode: RegularizerMode = "knn"

    @model_validator(mode="after")
    def _check_k(self) -> "RegularizerConfig":
        if self.mode == "knn" and self.latent_table and self.k > len(self.latent_table):
            raise ValueError(f"k={self.k} больше размера таблицы кодов {len(self.latent_table)}")
        return self

    def with_table(self, table: Sequence[Sequence[float]]) -> "RegularizerConfig":
        """Новая конфигурация с таблицей кодов; k ограничивается размером таблицы."""
        rows = tuple(tuple(float(v) for v in row) for row in np.asarray(table, dtype=np.float64))
        data = self.model_dump()
        data.update(latent_table=rows, k=min(self.k, max(len(rows), 1)))
        return RegularizerConfig(**data)


def latent_knn_regularizer(z, cfg: RegularizerConfig) -> Tuple[float, np.ndarray]:
    """
    alpha * mean_{z' in kNN(z)} |z - z'|^2 и градиент 2 alpha sum (z - z') / k.
    """
    z = np.asarray(z, dtype=np.float64)
    if cfg.alpha == 0:
        return 0.0, np.zeros_like(z)
    table = np.asarray(cfg.latent_table, dtype=np.float64)
    if len(table) == 0:
        raise ContractError("Пустая таблица кодов для k-NN регуляризатора")
    if table.shape[1] != len(z):
        raise ContractError(f"Длина кода {len(z)} не совпадает с таблицей (Z={table.shape[1]})")
    if cfg.k > len(table):
        raise ContractError(f"k={cfg.k} больше размера таблицы кодов {len(table)}")

    diffs = z[None, :] - table
    dist2 = np.einsum("ij,ij->i", diffs, diffs)
    nearest = np.argsort(dist2, kind="stable")[:cfg.k]
    value = cfg.alpha * float(np.mean(dist2[nearest]))
    grad = 2.0 * cfg.alpha * diffs[nearest].sum(axis=0) / cfg.k
    return value, grad


def latent_l2_regularizer(z, cfg: RegularizerConfig) -> Tuple[float, np.ndarray]:
    z = np.asarray(z, dtype=np.float64)
    return cfg.alpha * float(z @ z), 2.0 * cfg.alpha * z


def latent_regularizer(z, cfg: RegularizerConfig) -> Tuple[float, np.ndarray]:
    if cfg.mode == "l2":
        return latent_l2_regularizer(z, cfg)
    return latent_knn_regularizer(z, cfg)
