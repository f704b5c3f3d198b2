import zlib

import numpy as np


def module_rng(seed: int, name: str) -> np.random.Generator:
    """
    Возвращает генератор для модуля, однозначно выведенный из seed запуска.

    Args:
        seed: Seed запуска
        name: Имя модуля ("sdfnet", "geometry", ...)

    Returns:
        Независимый numpy Generator
    """
    return np.random.default_rng([int(seed), zlib.crc32(name.encode("utf-8"))])


def module_seed(seed: int, name: str) -> int:
    """То же, что module_rng, но в виде целого seed для API, принимающих int."""
    return int(module_rng(seed, name).integers(0, 2**31 - 1))
