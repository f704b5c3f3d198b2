"""
MLP f_theta(x, z), обусловленная латентным кодом, с точными производными
обратного прохода по точке, латентному коду и параметрам.

Соглашения:
    - вход сети u = (x, z), размер 3 + Z;
    - слои хранятся как W (out, in), b (out,); строки батча - точки;
    - на слое skip_layer на вход снова подклеивается u;
    - последний слой линейный, выход размерности 1.
"""
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import expit

from utils.errors import ContractError
from utils.logger import get_logger
from utils.rng import module_rng

logger = get_logger(__name__)

Activation = Literal["softplus", "identity"]


class NetworkConfig(BaseModel):
    """Архитектура сети."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    latent_dim: int = Field(4, ge=1)
    hidden_dims: Tuple[int, ...] = (128, 128, 128, 128)
    skip_layer: Optional[int] = 2
    activation: Activation = "softplus"

    @model_validator(mode="after")
    def _check_skip(self) -> "NetworkConfig":
        if any(d < 1 for d in self.hidden_dims):
            raise ValueError(f"Ширина слоев должна быть >= 1: {self.hidden_dims}")
        if self.skip_layer is not None and not 0 < self.skip_layer <= len(self.hidden_dims):
            raise ValueError(
                f"skip_layer={self.skip_layer} вне диапазона 1..{len(self.hidden_dims)}"
            )
        return self

    @property
    def input_dim(self) -> int:
        return 3 + self.latent_dim

    def layer_shapes(self) -> List[Tuple[int, int]]:
        """Формы (out, in) матриц весов по слоям, с учетом skip-подклейки."""
        shapes = []
        previous = self.input_dim
        outputs = list(self.hidden_dims) + [1]
        for layer, width in enumerate(outputs):
            fan_in = previous + (self.input_dim if layer == self.skip_layer else 0)
            shapes.append((width, fan_in))
            previous = width
        return shapes


def _activate(kind: str, pre: np.ndarray) -> np.ndarray:
    if kind == "softplus":
        return np.logaddexp(0.0, pre)
    return pre


def _activate_grad(kind: str, pre: np.ndarray) -> np.ndarray:
    if kind == "softplus":
        return expit(pre)
    return np.ones_like(pre)


@dataclass
class NetworkGrad:
    """Градиент той же формы, что параметры сети."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def arrays(self) -> List[np.ndarray]:
        return [a for pair in zip(self.weights, self.biases) for a in pair]

    def __add__(self, other: "NetworkGrad") -> "NetworkGrad":
        return NetworkGrad(
            [a + b for a, b in zip(self.weights, other.weights)],
            [a + b for a, b in zip(self.biases, other.biases)],
        )

    def scale(self, factor: float) -> "NetworkGrad":
        return NetworkGrad([w * factor for w in self.weights], [b * factor for b in self.biases])

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def norm(self) -> float:
        return float(np.linalg.norm(self.flatten()))


@dataclass
class ForwardCache:
    """Промежуточные значения прямого прохода, нужные обратному."""

    inputs: np.ndarray
    layer_inputs: List[np.ndarray] = field(default_factory=list)
    pre_activations: List[np.ndarray] = field(default_factory=list)


@dataclass
class SdfNetwork:
    config: NetworkConfig
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64).reshape(-1) for b in self.biases]
        self.validate()

    # ============ Структура ============

    @property
    def latent_dim(self) -> int:
        return self.config.latent_dim

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    def validate(self) -> None:
        """Проверяет, что размеры слоев согласованы и все параметры конечны."""
        shapes = self.config.layer_shapes()
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise ContractError(
                f"Ожидалось {len(shapes)} слоев, получено {len(self.weights)} матриц "
                f"и {len(self.biases)} смещений"
            )
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != shapes[layer] or b.shape != (shapes[layer][0],):
                raise ContractError(
                    f"Слой {layer}: W{w.shape}, b{b.shape}, ожидалось "
                    f"W{shapes[layer]}, b({shapes[layer][0]},)"
                )
        if not self.is_finite():
            bad = [i for i, p in enumerate(self.parameters()) if not np.all(np.isfinite(p))]
            raise ContractError(f"Нечисловые параметры сети (массивы W/b с номерами {bad})")

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.parameters())

    def parameters(self) -> List[np.ndarray]:
        """Параметры в порядке W0, b0, W1, b1, ... (ссылки, не копии)."""
        return [a for pair in zip(self.weights, self.biases) for a in pair]

    def copy(self) -> "SdfNetwork":
        return SdfNetwork(self.config, [w.copy() for w in self.weights],
                          [b.copy() for b in self.biases])

    def zero_grad(self) -> NetworkGrad:
        return NetworkGrad([np.zeros_like(w) for w in self.weights],
                           [np.zeros_like(b) for b in self.biases])

    # ============ Прямой и обратный проходы ============

    def _inputs(self, z, x) -> Tuple[np.ndarray, bool]:
        points = np.asarray(x, dtype=np.float64)
        single = points.ndim == 1
        points = np.atleast_2d(points)
        if points.shape[1] != 3:
            raise ContractError(f"Точки должны иметь форму (M, 3), получено {points.shape}")
        latent = np.asarray(z, dtype=np.float64)
        if latent.shape[-1:] != (self.latent_dim,):
            raise ContractError(
                f"Длина латентного кода {latent.shape[-1:]} не совпадает с Z={self.latent_dim}"
            )
        if latent.ndim == 1:
            latent = np.broadcast_to(latent.reshape(1, -1), (len(points), self.latent_dim))
        elif latent.shape != (len(points), self.latent_dim):
            raise ContractError(
                f"Латентные коды формы {latent.shape} не соответствуют {len(points)} точкам"
            )
        return np.concatenate([points, latent], axis=1), single

    def forward_batch(self, z, x) -> Tuple[np.ndarray, ForwardCache]:
        """
        Прямой проход по батчу.

        Args:
            z: Латентный код (Z,) или по коду на точку (M, Z)
            x: Точки (M, 3)

        Returns:
            Значения (M,) и кэш для обратного прохода
        """
        u, _ = self._inputs(z, x)
        cache = ForwardCache(inputs=u)
        act = self.config.activation
        a = u
        last = self.num_layers - 1
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            if layer == self.config.skip_layer:
                a = np.concatenate([a, u], axis=1)
            cache.layer_inputs.append(a)
            pre = a @ w.T + b
            cache.pre_activations.append(pre)
            a = pre if layer == last else _activate(act, pre)
        return a[:, 0], cache

    def backward_batch(self, cache: ForwardCache, upstream: np.ndarray,
                       need_params: bool = True) -> Tuple[np.ndarray, Optional[NetworkGrad]]:
        """
        Обратный проход: градиент sum_i upstream_i * f(u_i).

        Args:
            cache: Кэш forward_batch
            upstream: Веса по точкам (M,)
            need_params: Считать ли градиент по параметрам

        Returns:
            Градиент по входам u (M, 3+Z) и (опционально) по параметрам
        """
        upstream = np.asarray(upstream, dtype=np.float64).reshape(-1)
        act = self.config.activation
        input_dim = self.config.input_dim
        d_inputs = np.zeros_like(cache.inputs)
        grad = self.zero_grad() if need_params else None

        d_pre = upstream[:, None]
        for layer in range(self.num_layers - 1, -1, -1):
            a_in = cache.layer_inputs[layer]
            if need_params:
                grad.weights[layer] = d_pre.T @ a_in
                grad.biases[layer] = d_pre.sum(axis=0)
            d_a = d_pre @ self.weights[layer]
            if layer == self.config.skip_layer:
                d_inputs += d_a[:, -input_dim:]
                d_a = d_a[:, :-input_dim]
            if layer == 0:
                d_inputs += d_a
            else:
                d_pre = d_a * _activate_grad(act, cache.pre_activations[layer - 1])
        return d_inputs, grad

    def value_and_input_grads(self, z, x) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Значения, grad_x (M, 3) и grad_z (M, Z) за один проход."""
        values, cache = self.forward_batch(z, x)
        d_inputs, _ = self.backward_batch(cache, np.ones_like(values), need_params=False)
        return values, d_inputs[:, :3], d_inputs[:, 3:]

    def evaluator(self, z):
        """Векторизованная функция точек для выборки поля при фиксированном z."""
        latent = np.array(z, dtype=np.float64)

        def evaluate(points: np.ndarray) -> np.ndarray:
            return self.forward_batch(latent, points)[0]

        return evaluate


# ============ Операции модуля ============

def init_network(config: NetworkConfig, seed: int = 0) -> SdfNetwork:
    """
    Равномерная инициализация Xavier, нулевые смещения.

    Args:
        config: Архитектура
        seed: Seed запуска

    Returns:
        Новая сеть
    """
    rng = module_rng(seed, "sdfnet.init")
    weights, biases = [], []
    for fan_out, fan_in in config.layer_shapes():
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return SdfNetwork(config, weights, biases)


def forward(net: SdfNetwork, z, x) -> float:
    """f_theta(x, z) для одной точки."""
    values, _ = net.forward_batch(z, np.asarray(x, dtype=np.float64).reshape(1, 3))
    return float(values[0])


def grad_x(net: SdfNetwork, z, x) -> np.ndarray:
    """Точный градиент df/dx в точке x."""
    _, gx, _ = net.value_and_input_grads(z, np.asarray(x, dtype=np.float64).reshape(1, 3))
    return gx[0]


def grad_z(net: SdfNetwork, z, x) -> np.ndarray:
    """Точный градиент df/dz в точке x."""
    _, _, gz = net.value_and_input_grads(z, np.asarray(x, dtype=np.float64).reshape(1, 3))
    return gz[0]


def grad_params(net: SdfNetwork, z, x, upstream: float = 1.0) -> NetworkGrad:
    """
    Точный градиент d(upstream * f)/d(theta).

    Args:
        net: Сеть
        z: Латентный код
        x: Точка (3,) или точки (M, 3); для набора градиенты суммируются
        upstream: Скаляр или веса по точкам

    Returns:
        NetworkGrad
    """
    if not np.all(np.isfinite(upstream)):
        raise ContractError(f"upstream должен быть конечным, получено {upstream!r}")
    points = np.atleast_2d(np.asarray(x, dtype=np.float64))
    values, cache = net.forward_batch(z, points)
    weights = np.broadcast_to(np.asarray(upstream, dtype=np.float64), values.shape)
    _, grad = net.backward_batch(cache, weights)
    return grad
