"""
Конфигурация запуска: один JSON файл плюс переопределения из флагов.
Приоритет: флаги > файл > значения по умолчанию. Неизвестные ключи отклоняются.
"""
import json
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from diffiso.finetune import FinetuneConfig
from geometry.grid import Grid3D
from raster.camera import Camera
from raster.soft import RasterConfig
from sdfnet.network import NetworkConfig
from sdfnet.training import TrainConfig
from shapeopt.adam import AdamConfig
from shapeopt.constraints import ConstraintBox
from shapeopt.drag import DragConfig
from shapeopt.regularizer import RegularizerConfig
from utils.logger import get_logger

logger = get_logger(__name__)


class DataConfig(BaseModel):
    """Семейство фигур и выборка обучающих точек."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_spheres: int = Field(6, ge=0)
    n_tori: int = Field(6, ge=0)
    n_surface: int = Field(2000, ge=0)
    n_uniform: int = Field(500, ge=0)
    sigmas: Tuple[float, ...] = (0.005, 0.05)


class SparseConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    enabled: bool = True
    lipschitz: float = Field(1.2, gt=0)
    dense_every: int = Field(0, ge=0)


class PathsConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    checkpoint: str = "checkpoint.json"
    out_dir: str = "out"
    target: Optional[str] = None
    camera: Optional[str] = None
    latent: Optional[str] = None
    snapshot_every: int = Field(50, ge=0)


def _default_workers() -> int:
    return os.cpu_count() or 1


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int = 0
    workers: int = Field(default_factory=_default_workers, ge=1)
    grid: Grid3D = Grid3D()
    network: NetworkConfig = NetworkConfig()
    data: DataConfig = DataConfig()
    train: TrainConfig = TrainConfig()
    finetune: FinetuneConfig = FinetuneConfig()
    camera: Camera = Camera()
    raster: RasterConfig = RasterConfig()
    drag: DragConfig = DragConfig()
    boxes: Tuple[ConstraintBox, ...] = ()
    regularizer: RegularizerConfig = RegularizerConfig()
    adam: AdamConfig = AdamConfig()
    sparse: SparseConfig = SparseConfig()
    paths: PathsConfig = PathsConfig()

    @field_validator("camera", mode="before")
    @classmethod
    def _camera_degrees(cls, value: Any) -> Any:
        if isinstance(value, dict) and "fov_deg" in value:
            return Camera.from_json(value)
        return value


def merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Рекурсивно накладывает overrides на base (новый словарь)."""
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def flag_overrides(seed: Optional[int] = None, res: Optional[int] = None,
                   iters: Optional[int] = None, workers: Optional[int] = None,
                   out: Optional[str] = None, train_steps: bool = False) -> Dict[str, Any]:
    """
    Переводит общие флаги командной строки в словарь переопределений.

    Args:
        train_steps: Если True, --iters задает число шагов обучения, иначе итерации Adam
    """
    overrides: Dict[str, Any] = {}
    if seed is not None:
        overrides["seed"] = seed
    if res is not None:
        overrides["grid"] = {"resolution": res}
    if iters is not None:
        overrides.update({"train": {"steps": iters}} if train_steps else {"adam": {"iterations": iters}})
    if workers is not None:
        overrides["workers"] = workers
    if out is not None:
        overrides["paths"] = {"out_dir": out}
    return overrides


def load_run_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Загружает конфигурацию.

    Args:
        path: JSON файл конфигурации (необязателен)
        overrides: Переопределения из флагов

    Returns:
        Проверенный RunConfig

    Raises:
        ValueError: файл не читается или значения не проходят проверку
    """
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as e:
            raise ValueError(f"Не удалось прочитать конфигурацию {path}: {e}")
        except json.JSONDecodeError as e:
            raise ValueError(f"Конфигурация {path} не является JSON: {e}")
        if not isinstance(data, dict):
            raise ValueError(f"Конфигурация {path} должна быть JSON объектом")
    config = RunConfig.model_validate(merge(data, overrides or {}))
    logger.debug(f"Конфигурация: seed={config.seed}, N={config.grid.resolution}, workers={config.workers}")
    return config


def validation_messages(error: Exception) -> List[str]:
    """По одной строке на каждую проблему конфигурации."""
    errors = getattr(error, "errors", None)
    if callable(errors):
        return [
            f"{'.'.join(str(p) for p in item.get('loc', ())) or 'config'}: {item.get('msg')}"
            for item in errors()
        ]
    return [str(error)]
