"""
Чекпоинт сети: JSON {config, layer_weights, layer_biases, latent_table}.
Числа пишутся как десятичные литералы float64 (repr), чтение восстанавливает их бит в бит.
"""
import json
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np

from sdfnet.network import NetworkConfig, SdfNetwork
from utils.errors import ContractError
from utils.logger import get_logger

logger = get_logger(__name__)


def checkpoint_dict(net: SdfNetwork, latents: np.ndarray,
                    extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    config = net.config.model_dump()
    config["hidden_dims"] = list(config["hidden_dims"])
    if extra:
        config.update(extra)
    return {
        "config": config,
        "layer_weights": [w.tolist() for w in net.weights],
        "layer_biases": [b.tolist() for b in net.biases],
        "latent_table": np.asarray(latents, dtype=np.float64).reshape(-1, net.latent_dim).tolist(),
    }


def save_checkpoint(path, net: SdfNetwork, latents: np.ndarray,
                    extra: Optional[Dict[str, Any]] = None) -> Path:
    """
    Сохраняет сеть и таблицу латентных кодов.

    Args:
        path: Путь к файлу
        net: Сеть
        latents: Таблица кодов (num_shapes, Z)
        extra: Дополнительные поля раздела config (например, параметры обучения)

    Returns:
        Путь к записанному файлу
    """
    path = Path(path)
    payload = checkpoint_dict(net, latents, extra)
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    logger.info(f"Чекпоинт сохранен: {path}")
    return path


def load_checkpoint(path) -> Tuple[SdfNetwork, np.ndarray, Dict[str, Any]]:
    """
    Загружает чекпоинт.

    Returns:
        Сеть, таблица кодов (num_shapes, Z), исходный раздел config
    """
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ContractError(f"Чекпоинт {path} не является JSON: {e}")

    for key in ("config", "layer_weights", "layer_biases", "latent_table"):
        if key not in payload:
            raise ContractError(f"В чекпоинте {path} нет поля {key!r}")

    raw_config = payload["config"]
    fields = {k: raw_config[k] for k in NetworkConfig.model_fields if k in raw_config}
    config = NetworkConfig(**fields)
    net = SdfNetwork(config, payload["layer_weights"], payload["layer_biases"])
    latents = np.asarray(payload["latent_table"], dtype=np.float64).reshape(-1, config.latent_dim)
    logger.info(f"Чекпоинт загружен: {path} ({len(latents)} кодов, Z={config.latent_dim})")
    return net, latents, raw_config
