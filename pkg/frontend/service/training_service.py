import csv
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from diffiso.finetune import finetune_parameters
from geometry.sampling import build_dataset
from geometry.shapes import AnalyticShape, sample_surface, shape_family
from sdfnet.checkpoint import load_checkpoint, save_checkpoint
from sdfnet.training import train_sdf
from utils.config import RunConfig
from utils.errors import ContractError
from utils.logger import get_logger
from utils.rng import module_rng

logger = get_logger(__name__)

FINETUNE_TARGET_POINTS = 2048


def require_dir(path) -> Path:
    directory = Path(path)
    if not directory.is_dir():
        raise ContractError(f"Каталог вывода не существует: {directory}")
    return directory


def write_trace(path: Path, column: str, values: List[float]) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["step", column])
        for step, value in enumerate(values):
            writer.writerow([step, repr(float(value))])
    return path


class TrainingService:
    """Обучение сети на семействе аналитических фигур и дообучение по Чамферу."""

    def __init__(self, config: RunConfig):
        self.config = config

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        pass

    def family(self) -> List[AnalyticShape]:
        data = self.config.data
        shapes = shape_family(data.n_spheres, data.n_tori, self.config.seed)
        if not shapes:
            raise ContractError("Пустое семейство фигур: n_spheres + n_tori должно быть > 0")
        return shapes

    def train(self) -> Dict[str, Path]:
        """
        Обучает сеть и пишет checkpoint.json и loss.csv в каталог вывода.

        Returns:
            Пути записанных файлов
        """
        cfg = self.config
        out_dir = require_dir(cfg.paths.out_dir)
        shapes = self.family()
        dataset = build_dataset(shapes, cfg.data.n_surface, cfg.data.n_uniform,
                                cfg.data.sigmas, cfg.seed)
        train_cfg = cfg.train.model_copy(update={"seed": cfg.seed})
        result = train_sdf(dataset, train_cfg, network_config=cfg.network,
                           num_shapes=len(shapes), progress=True)

        extra = {
            "train": train_cfg.model_dump(),
            "shapes": [s.model_dump() for s in shapes],
        }
        checkpoint = save_checkpoint(out_dir / "checkpoint.json", result.network, result.latents, extra)
        loss = write_trace(out_dir / "loss.csv", "loss", result.loss_trace)
        return {"checkpoint": checkpoint, "loss": loss}

    def finetune(self, checkpoint_path) -> Dict[str, Path]:
        """
        Дообучает параметры сети по Чамферу к поверхностям обучающих фигур.
        Фигуры берутся из раздела shapes чекпоинта.
        """
        cfg = self.config
        out_dir = require_dir(cfg.paths.out_dir)
        net, latents, raw_config = load_checkpoint(checkpoint_path)
        shapes, targets = self.surface_targets(raw_config)

        result = finetune_parameters(net, latents[:len(targets)], targets, cfg.finetune,
                                     cfg.grid, progress=True)
        extra = {key: raw_config[key] for key in ("train", "shapes") if key in raw_config}
        extra["finetune"] = cfg.finetune.model_dump()
        checkpoint = save_checkpoint(out_dir / "checkpoint.json", result.network, latents, extra)
        trace = write_trace(out_dir / "finetune.csv", "chamfer", result.chamfer_trace)
        return {"checkpoint": checkpoint, "trace": trace}

    def surface_targets(self, raw_config: dict) -> Tuple[List[AnalyticShape], List[np.ndarray]]:
        raw_shapes = raw_config.get("shapes")
        if not raw_shapes:
            raise ContractError("В чекпоинте нет раздела shapes: эталоны для дообучения неизвестны")
        shapes = [AnalyticShape(**item) for item in raw_shapes]
        rng = module_rng(self.config.seed, "frontend.finetune")
        targets = [sample_surface(shape, FINETUNE_TARGET_POINTS, rng) for shape in shapes]
        return shapes, targets
