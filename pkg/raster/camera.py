"""
Камера-обскура: проекция точек мира в пиксели и точный якобиан проекции.

Пиксель (col, row) занимает квадрат [col, col+1) x [row, row+1), начало
координат в левом верхнем углу, центр пикселя (col + 0.5, row + 0.5).
"""
import json
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

Vec3 = Tuple[float, float, float]

# Точки ближе этой глубины считаются лежащими за камерой
NEAR_DEPTH = 1e-6


class Camera(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    eye: Vec3 = (0.0, 0.0, 2.5)
    look_at: Vec3 = (0.0, 0.0, 0.0)
    up: Vec3 = (0.0, 1.0, 0.0)
    fov: float = Field(float(np.deg2rad(40.0)), gt=0, lt=float(np.pi))
    width: int = Field(64, ge=1)
    height: int = Field(64, ge=1)

    @model_validator(mode="after")
    def _check_pose(self) -> "Camera":
        forward = np.subtract(self.look_at, self.eye)
        if not np.linalg.norm(forward) > 0:
            raise ValueError("eye и look_at совпадают")
        if not np.linalg.norm(np.cross(forward, self.up)) > 0:
            raise ValueError("Вектор up параллелен направлению взгляда")
        return self

    @property
    def focal(self) -> float:
        """Фокусное расстояние в пикселях по вертикальному углу обзора."""
        return 0.5 * self.height / np.tan(0.5 * self.fov)

    def basis(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(right, true_up, forward), ортонормированные."""
        forward = np.subtract(self.look_at, self.eye).astype(np.float64)
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(self.up, dtype=np.float64))
        right /= np.linalg.norm(right)
        true_up = np.cross(right, forward)
        return right, true_up, forward

    @classmethod
    def from_json(cls, source: Union[str, Path, Dict[str, Any]]) -> "Camera":
        """JSON {eye, look_at, up, fov_deg, width, height}."""
        if isinstance(source, dict):
            data = dict(source)
        else:
            data = json.loads(Path(source).read_text(encoding="utf-8"))
        if "fov_deg" in data:
            data["fov"] = float(np.deg2rad(data.pop("fov_deg")))
        return cls(**data)

    def to_json(self) -> Dict[str, Any]:
        data = self.model_dump()
        data["fov_deg"] = float(np.rad2deg(data.pop("fov")))
        for key in ("eye", "look_at", "up"):
            data[key] = list(data[key])
        return data


def project(camera: Camera, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Перспективная проекция.

    Args:
        camera: Камера
        v: Точки (M, 3)

    Returns:
        pixels (M, 2) как (x, y); якобиан d(pixel)/dv (M, 3, 2);
        маска точек перед камерой (M,)
    """
    points = np.asarray(v, dtype=np.float64).reshape(-1, 3)
    right, true_up, forward = camera.basis()
    rel = points - np.asarray(camera.eye, dtype=np.float64)
    xc = rel @ right
    yc = rel @ true_up
    zc = rel @ forward
    valid = zc > NEAR_DEPTH
    depth = np.where(valid, zc, 1.0)

    f = camera.focal
    pixels = np.stack([0.5 * camera.width + f * xc / depth,
                       0.5 * camera.height - f * yc / depth], axis=1)

    jac = np.empty((len(points), 3, 2))
    jac[:, :, 0] = f * (right[None, :] / depth[:, None] - (xc / depth ** 2)[:, None] * forward[None, :])
    jac[:, :, 1] = -f * (true_up[None, :] / depth[:, None] - (yc / depth ** 2)[:, None] * forward[None, :])
    return pixels, jac, valid
